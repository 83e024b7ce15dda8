#include <gtest/gtest.h>

#include <random>
#include <string>

#include "avdf/features.hpp"
#include "oracles/random.hpp"
#include "oracles/temp_dir.hpp"

using namespace avdf;

namespace {

std::string rows_of(std::size_t rows, std::size_t cols, double v = 0.5) {
  std::string s;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) s += (c ? "," : "") + std::to_string(v + r);
    s += "\n";
  }
  return s;
}

InputErrorCode load_error(const std::filesystem::path& p) {
  try {
    load_face_features(p);
  } catch (const InputError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for " << p;
  return InputErrorCode::Io;
}

}  // namespace

TEST(FaceFeatures, LoadsRowsAndFrameRate) {
  oracle::TempDir dir;
  oracle::write_text(dir / "f.csv", "avdf_face_v1,30\n" + rows_of(10, 430));
  const auto seq = load_face_features(dir / "f.csv");
  EXPECT_EQ(seq.length(), 10u);
  EXPECT_EQ(seq.frame_rate, 30.0);
  EXPECT_EQ(seq.frames.at(9, 429), 9.5);
}

TEST(FaceFeatures, CrlfAndBlankLinesAreTolerated) {
  oracle::TempDir dir;
  std::string body = rows_of(2, 430);
  std::string crlf;
  for (char c : body) crlf += c == '\n' ? std::string("\r\n") : std::string(1, c);
  oracle::write_text(dir / "f.csv", "avdf_face_v1,25\r\n" + crlf + "\n");
  EXPECT_EQ(load_face_features(dir / "f.csv").length(), 2u);
}

TEST(FaceFeatures, DistinctErrors) {
  oracle::TempDir dir;
  oracle::write_text(dir / "cols.csv", "avdf_face_v1,25\n" + rows_of(3, 429));
  try {
    load_face_features(dir / "cols.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.code(), InputErrorCode::WrongColumnCount);
    EXPECT_NE(std::string(e.what()).find("expected 430"), std::string::npos);
  }
  std::string nan_rows = rows_of(3, 430);
  nan_rows.replace(nan_rows.find("1.500000"), 8, "nan");
  oracle::write_text(dir / "nan.csv", "avdf_face_v1,25\n" + nan_rows);
  try {
    load_face_features(dir / "nan.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.code(), InputErrorCode::NonFinite);
    EXPECT_NE(std::string(e.what()).find("row 2, column 1"), std::string::npos);
  }
  oracle::write_text(dir / "empty.csv", "");
  oracle::write_text(dir / "header_only.csv", "avdf_face_v1,25\n");
  oracle::write_text(dir / "bad_header.csv", "avdf_mfcc_v1,0.01\n" + rows_of(1, 430));
  oracle::write_text(dir / "text.csv", "avdf_face_v1,25\n" + rows_of(1, 429) + ",abc\n");
  EXPECT_EQ(load_error(dir / "empty.csv"), InputErrorCode::EmptyFile);
  EXPECT_EQ(load_error(dir / "header_only.csv"), InputErrorCode::EmptyFile);
  EXPECT_EQ(load_error(dir / "bad_header.csv"), InputErrorCode::Malformed);
  EXPECT_EQ(load_error(dir / "missing.csv"), InputErrorCode::MissingFile);
}

TEST(FeatureFiles, RoundTripAtFullPrecision) {
  oracle::TempDir dir;
  std::mt19937_64 rng(5);
  FaceFeatureSequence face{oracle::random_tensor(Shape{4, 430}, rng, -1e3, 1e3), 29.97};
  SpeechFeatureSequence speech{oracle::random_tensor(Shape{7, 13}, rng, -50, 50), 0.01};
  save_face_features(dir / "f.csv", face);
  save_speech_features(dir / "s.csv", speech);
  const auto f = load_face_features(dir / "f.csv");
  const auto s = load_speech_features(dir / "s.csv");
  EXPECT_EQ(f.frames, face.frames);
  EXPECT_EQ(f.frame_rate, 29.97);
  EXPECT_EQ(s.frames, speech.frames);
  EXPECT_EQ(s.hop, 0.01);
  EXPECT_THROW(save_speech_features(dir / "x.csv", SpeechFeatureSequence{Tensor(Shape{2, 12}), 0.01}), ShapeError);
}

TEST(WindowFixed, CenterCrop) {
  Tensor seq(Shape{100, 2});
  for (std::size_t r = 0; r < 100; ++r) seq.at(r, 0) = seq.at(r, 1) = static_cast<double>(r);
  const Tensor w = window_fixed(seq, 64);
  ASSERT_EQ(w.shape(), (Shape{64, 2}));
  EXPECT_EQ(w.at(0, 0), 18.0);
  EXPECT_EQ(w.at(63, 1), 81.0);
}

TEST(WindowFixed, SymmetricPad) {
  Tensor seq(Shape{10, 3}, 1.0);
  const Tensor w = window_fixed(seq, 64);
  ASSERT_EQ(w.shape(), (Shape{64, 3}));
  for (std::size_t r = 0; r < 64; ++r) {
    const double expect = (r >= 27 && r < 37) ? 1.0 : 0.0;
    EXPECT_EQ(w.at(r, 2), expect) << r;
  }
  // Odd padding: 1 row before, 2 after.
  const Tensor odd = window_fixed(Tensor(Shape{1, 1}, 7.0), 4);
  EXPECT_EQ(odd, Tensor(Shape{4, 1}, std::vector<double>{0, 7, 0, 0}));
}

TEST(WindowFixed, IdentityAndErrors) {
  std::mt19937_64 rng(1);
  const Tensor seq = oracle::random_tensor(Shape{64, 5}, rng);
  EXPECT_EQ(window_fixed(seq, 64), seq);
  EXPECT_THROW(window_fixed(Tensor(Shape{0, 5}), 64), ShapeError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  std::mt19937_64 rng(2);
  Tensor a = oracle::random_tensor(Shape{30, 4}, rng, 5, 9);
  Tensor b = oracle::random_tensor(Shape{20, 4}, rng, -3, 1);
  for (std::size_t r = 0; r < 30; ++r) a.at(r, 3) = 2.0;
  for (std::size_t r = 0; r < 20; ++r) b.at(r, 3) = 2.0;
  const Standardizer s = Standardizer::fit({&a, &b});
  const Tensor sa = s.apply(a), sb = s.apply(b);
  for (std::size_t d = 0; d < 3; ++d) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 30; ++r) m += sa.at(r, d);
    for (std::size_t r = 0; r < 20; ++r) m += sb.at(r, d);
    m /= 50;
    for (std::size_t r = 0; r < 30; ++r) v += (sa.at(r, d) - m) * (sa.at(r, d) - m);
    for (std::size_t r = 0; r < 20; ++r) v += (sb.at(r, d) - m) * (sb.at(r, d) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 50, 1.0, 1e-12);
  }
  // Constant column: centred, not scaled.
  EXPECT_EQ(s.stddev()[3], 1.0);
  EXPECT_EQ(sa.at(0, 3), 0.0);
  EXPECT_THROW(s.apply(Tensor(Shape{2, 3})), ShapeError);
}
