#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "avdf/audio.hpp"
#include "avdf/mfcc.hpp"
#include "oracles/naive_mfcc.hpp"
#include "oracles/temp_dir.hpp"

using namespace avdf;

namespace {

AudioClip noise_clip(std::size_t n, unsigned seed, std::uint32_t rate = 16000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioClip c;
  c.sample_rate = rate;
  for (std::size_t i = 0; i < n; ++i) c.samples.push_back(u(rng));
  return c;
}

InputErrorCode wav_error(const std::string& bytes) {
  try {
    parse_wav(bytes);
  } catch (const InputError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return InputErrorCode::Io;
}

}  // namespace

TEST(Mfcc, MatchesNaiveDftOracle) {
  for (unsigned seed = 0; seed < 3; ++seed) {
    const AudioClip clip = noise_clip(8000, seed);
    const auto expect = oracle::naive_mfcc(clip.samples, {});
    const Tensor got = mfcc(clip).frames;
    ASSERT_EQ(got.dim(0), expect.cepstra.size());
    ASSERT_EQ(got.dim(1), 13u);
    for (std::size_t t = 0; t < got.dim(0); ++t)
      for (std::size_t k = 0; k < 13; ++k) ASSERT_NEAR(got.at(t, k), expect.cepstra[t][k], 1e-6) << t << "," << k;
  }
}

TEST(Mfcc, SineEnergiesMatchOracle) {
  AudioClip clip;
  clip.sample_rate = 16000;
  for (std::size_t i = 0; i < 16000; ++i) clip.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * 1000.0 * i / 16000.0));
  const auto expect = oracle::naive_mfcc(clip.samples, {});
  const Tensor e = mel_energies(clip, {});
  ASSERT_EQ(e.dim(0), 98u);
  for (std::size_t t = 0; t < e.dim(0); ++t)
    for (std::size_t m = 0; m < 26; ++m) ASSERT_NEAR(e.at(t, m), expect.energies[t][m], 1e-6);
}

TEST(Mfcc, NonDefaultConfigMatchesOracle) {
  MfccConfig cfg;
  cfg.fft_size = 1024;
  cfg.mel_filters = 40;
  cfg.low_hz = 100.0;
  cfg.high_hz = 3800.0;
  cfg.pre_emphasis = 0.9;
  const AudioClip clip = noise_clip(4000, 11, 8000);
  oracle::NaiveMfccParams p;
  p.frame = 200;
  p.hop = 80;
  p.nfft = 1024;
  p.mels = 40;
  p.preemph = 0.9;
  p.rate = 8000;
  p.f_lo = 100;
  p.f_hi = 3800;
  const auto expect = oracle::naive_mfcc(clip.samples, p);
  const Tensor got = mfcc(clip, cfg).frames;
  ASSERT_EQ(got.dim(0), expect.cepstra.size());
  for (std::size_t t = 0; t < got.dim(0); ++t)
    for (std::size_t k = 0; k < 13; ++k) ASSERT_NEAR(got.at(t, k), expect.cepstra[t][k], 1e-6);
}

TEST(Mfcc, FrameCountAndShape) {
  EXPECT_EQ(mfcc(noise_clip(8000, 1)).frames.shape(), (Shape{48, 13}));
  EXPECT_EQ(mfcc(noise_clip(400, 1)).frames.shape(), (Shape{1, 13}));
  EXPECT_EQ(mfcc(noise_clip(8000, 1)).hop, 0.010);
}

TEST(Mfcc, SilenceIsDctOfLogFloor) {
  AudioClip clip{std::vector<double>(4000, 0.0), 16000};
  const Tensor c = mfcc(clip).frames;
  for (std::size_t t = 0; t < c.dim(0); ++t) {
    EXPECT_NEAR(c.at(t, 0), std::sqrt(26.0) * std::log(1e-10), 1e-9);
    for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(c.at(t, k), 0.0, 1e-9);
  }
}

TEST(Mfcc, ConstantSignalGivesIdenticalFrames) {
  AudioClip clip{std::vector<double>(4000, 0.3), 16000};
  const Tensor c = mfcc(clip).frames;
  // Frame 0 sees the unfiltered first sample; all later frames are identical.
  for (std::size_t t = 2; t < c.dim(0); ++t)
    for (std::size_t k = 0; k < 13; ++k) EXPECT_EQ(c.at(t, k), c.at(1, k));
}

TEST(Mfcc, ShiftByOneHopShiftsFrames) {
  const AudioClip clip = noise_clip(8000, 3);
  AudioClip shifted = noise_clip(160, 4);
  shifted.samples.insert(shifted.samples.end(), clip.samples.begin(), clip.samples.end());
  const Tensor a = mfcc(clip).frames, b = mfcc(shifted).frames;
  ASSERT_EQ(b.dim(0), a.dim(0) + 1);
  for (std::size_t t = 1; t < a.dim(0); ++t)
    for (std::size_t k = 0; k < 13; ++k) EXPECT_NEAR(b.at(t + 1, k), a.at(t, k), 1e-9);
}

TEST(Mfcc, Errors) {
  try {
    mfcc(noise_clip(399, 1));
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.code(), InputErrorCode::TooShort);
  }
  AudioClip bad = noise_clip(1000, 1);
  bad.samples[10] = std::nan("");
  try {
    mfcc(bad);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.code(), InputErrorCode::NonFinite);
  }
  MfccConfig cfg;
  cfg.fft_size = 256;
  EXPECT_THROW(mfcc(noise_clip(1000, 1), cfg), ConfigError);
  cfg = {};
  cfg.coefficients = 27;
  EXPECT_THROW(mfcc(noise_clip(1000, 1), cfg), ConfigError);
  cfg = {};
  cfg.high_hz = 9000;
  EXPECT_THROW(mfcc(noise_clip(1000, 1), cfg), ConfigError);
}

TEST(Mfcc, WindowShapes) {
  const auto hann = analysis_window(WindowType::Hann, 5);
  EXPECT_NEAR(hann[0], 0.0, 1e-15);
  EXPECT_NEAR(hann[2], 1.0, 1e-15);
  const auto hamming = analysis_window(WindowType::Hamming, 5);
  EXPECT_NEAR(hamming[0], 0.08, 1e-15);
  for (double v : analysis_window(WindowType::Rectangular, 5)) EXPECT_EQ(v, 1.0);
}

TEST(Mfcc, MelScaleRoundTrip) {
  EXPECT_NEAR(hz_to_mel(1000.0), 999.98553, 1e-4);
  for (double f : {0.0, 100.0, 4000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
}

TEST(Wav, SilenceAndScaling) {
  const AudioClip silence = parse_wav(encode_wav(std::vector<double>(16000, 0.0), 16000));
  EXPECT_EQ(silence.sample_rate, 16000u);
  ASSERT_EQ(silence.samples.size(), 16000u);
  for (double s : silence.samples) EXPECT_EQ(s, 0.0);

  std::vector<double> square;
  for (int i = 0; i < 100; ++i) square.push_back(i % 20 < 10 ? 1.0 : -1.0);
  const AudioClip sq = parse_wav(encode_wav(square, 8000));
  EXPECT_EQ(sq.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(sq.samples[10], -32767.0 / 32768.0);
}

TEST(Wav, StereoIsAveraged) {
  // Interleaved L/R.
  const AudioClip c = parse_wav(encode_wav({0.5, -0.5, 1.0, 0.0}, 16000, 2));
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_EQ(c.samples[0], 0.0);
  EXPECT_NEAR(c.samples[1], 0.5, 1e-4);
}

TEST(Wav, DistinctErrors) {
  const std::string good = encode_wav({0.1, 0.2}, 16000);
  EXPECT_EQ(wav_error(good.substr(0, 20)), InputErrorCode::UnsupportedEncoding);
  EXPECT_EQ(wav_error("hello"), InputErrorCode::UnsupportedEncoding);
  std::string eight_bit = good;
  eight_bit[34] = 8;
  EXPECT_EQ(wav_error(eight_bit), InputErrorCode::UnsupportedEncoding);
  EXPECT_EQ(wav_error(encode_wav({}, 16000)), InputErrorCode::EmptyAudio);
  try {
    read_wav("/nonexistent/x.wav");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.code(), InputErrorCode::MissingFile);
  }
}

TEST(Wav, FileRoundTrip) {
  oracle::TempDir dir;
  write_wav(dir / "a.wav", {0.25, -0.25}, 22050);
  const AudioClip c = read_wav(dir / "a.wav");
  EXPECT_EQ(c.sample_rate, 22050u);
  EXPECT_NEAR(c.samples[0], 0.25, 1e-4);
}
