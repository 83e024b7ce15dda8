#pragma once

#include <algorithm>
#include <charconv>
#include <iterator>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "avdf/error.hpp"
#include "avdf/tensor.hpp"

namespace avdf {

inline constexpr std::size_t kFaceFeatureDim = 430;
inline constexpr std::size_t kMfccDim = 13;

// T x 430 facial features (landmarks, head pose, gaze), stored opaquely.
struct FaceFeatureSequence {
  Tensor frames;  // [T, 430]
  double frame_rate = 25.0;

  std::size_t length() const { return frames.rank() == 2 ? frames.dim(0) : 0; }
};

// T x 13 MFCC frames.
struct SpeechFeatureSequence {
  Tensor frames;  // [T, 13]
  double hop = 0.010;

  std::size_t length() const { return frames.rank() == 2 ? frames.dim(0) : 0; }
};

namespace detail {

inline std::string_view trim_line(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

struct FeatureTable {
  double header_value = 0.0;
  Tensor frames;
};

// Reads "<magic>,<value>" followed by rows of exactly `columns` reals.
inline FeatureTable read_feature_table(const std::filesystem::path& path, std::string_view magic, std::size_t columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(InputErrorCode::MissingFile, path.string() + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw InputError(InputErrorCode::EmptyFile, path.string() + ": empty file");

  std::string_view rest(text);
  auto next_line = [&rest]() {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    return trim_line(line);
  };

  FeatureTable table;
  const std::string_view header = next_line();
  const auto comma = header.find(',');
  if (comma == std::string_view::npos || header.substr(0, comma) != magic ||
      !parse_double(header.substr(comma + 1), table.header_value) || !std::isfinite(table.header_value) ||
      table.header_value <= 0.0) {
    throw InputError(InputErrorCode::Malformed,
                     path.string() + ": expected header '" + std::string(magic) + ",<positive number>'");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (!rest.empty()) {
    const std::string_view line = next_line();
    if (line.empty()) continue;
    ++rows;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const auto end = line.find(',', start);
      const std::string_view field = line.substr(start, end == std::string_view::npos ? end : end - start);
      ++col;
      if (col <= columns) {
        double v = 0.0;
        if (!parse_double(field, v)) {
          throw InputError(InputErrorCode::Malformed, path.string() + ": row " + std::to_string(rows) + ", column " +
                                                          std::to_string(col) + ": not a number");
        }
        if (!std::isfinite(v)) {
          throw InputError(InputErrorCode::NonFinite, path.string() + ": non-finite value at row " +
                                                          std::to_string(rows) + ", column " + std::to_string(col));
        }
        values.push_back(v);
      }
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
    if (col != columns) {
      throw InputError(InputErrorCode::WrongColumnCount, path.string() + ": row " + std::to_string(rows) +
                                                             " has " + std::to_string(col) + " columns, expected " +
                                                             std::to_string(columns));
    }
  }
  if (rows == 0) throw InputError(InputErrorCode::EmptyFile, path.string() + ": no frames");
  table.frames = Tensor(Shape{rows, columns}, std::move(values));
  return table;
}

inline void append_number(std::string& out, double v, int precision) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
  out.append(buf, ptr);
}

inline void write_feature_table(const std::filesystem::path& path, std::string_view magic, double header_value,
                                const Tensor& frames, int precision) {
  std::string out;
  out.reserve(frames.size() * (precision + 8) + 64);
  out.append(magic);
  out.push_back(',');
  append_number(out, header_value, 17);
  out.push_back('\n');
  const std::size_t rows = frames.dim(0), cols = frames.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out.push_back(',');
      append_number(out, frames.at(r, c), precision);
    }
    out.push_back('\n');
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": cannot write");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": write failed");
}

}  // namespace detail

inline constexpr std::string_view kFaceMagic = "avdf_face_v1";
inline constexpr std::string_view kMfccMagic = "avdf_mfcc_v1";

inline FaceFeatureSequence load_face_features(const std::filesystem::path& path) {
  auto t = detail::read_feature_table(path, kFaceMagic, kFaceFeatureDim);
  return FaceFeatureSequence{std::move(t.frames), t.header_value};
}

inline SpeechFeatureSequence load_speech_features(const std::filesystem::path& path) {
  auto t = detail::read_feature_table(path, kMfccMagic, kMfccDim);
  return SpeechFeatureSequence{std::move(t.frames), t.header_value};
}

// `precision` is significant digits; 17 round-trips every double.
inline void save_face_features(const std::filesystem::path& path, const FaceFeatureSequence& seq, int precision = 17) {
  if (seq.frames.rank() != 2 || seq.frames.dim(1) != kFaceFeatureDim) {
    throw ShapeError("save_face_features: expected [T,430], got " + shape_string(seq.frames.shape()));
  }
  detail::write_feature_table(path, kFaceMagic, seq.frame_rate, seq.frames, precision);
}

inline void save_speech_features(const std::filesystem::path& path, const SpeechFeatureSequence& seq,
                                 int precision = 17) {
  if (seq.frames.rank() != 2 || seq.frames.dim(1) != kMfccDim) {
    throw ShapeError("save_speech_features: expected [T,13], got " + shape_string(seq.frames.shape()));
  }
  detail::write_feature_table(path, kMfccMagic, seq.hop, seq.frames, precision);
}

// Center-crops (T >= target) or symmetrically zero-pads (T < target) a
// [T, D] sequence to [target, D]. An odd pad puts the extra row at the end.
inline Tensor window_fixed(const Tensor& sequence, std::size_t target) {
  if (sequence.rank() != 2 || sequence.dim(0) == 0) {
    throw ShapeError("window_fixed: expected non-empty [T,D], got " + shape_string(sequence.shape()));
  }
  if (target == 0) throw ShapeError("window_fixed: target must be positive");
  const std::size_t T = sequence.dim(0), D = sequence.dim(1);
  Tensor out(Shape{target, D});
  if (T >= target) {
    const std::size_t start = (T - target) / 2;
    std::copy_n(sequence.data() + start * D, target * D, out.data());
  } else {
    const std::size_t before = (target - T) / 2;
    std::copy_n(sequence.data(), T * D, out.data() + before * D);
  }
  return out;
}

// Per-dimension affine standardization to zero mean and unit variance.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {
    if (mean_.size() != std_.size()) throw ShapeError("Standardizer: mean and std sizes differ");
  }

  // Population statistics over every row of every sequence. Dimensions with
  // std below 1e-8 are left unscaled.
  static Standardizer fit(const std::vector<const Tensor*>& sequences) {
    if (sequences.empty()) throw InputError(InputErrorCode::EmptyFile, "Standardizer: no sequences");
    const std::size_t D = sequences.front()->dim(1);
    std::vector<double> sum(D, 0.0), sq(D, 0.0);
    std::size_t rows = 0;
    for (const Tensor* s : sequences) {
      if (s->rank() != 2 || s->dim(1) != D) {
        throw ShapeError("Standardizer: inconsistent feature width " + shape_string(s->shape()));
      }
      for (std::size_t r = 0; r < s->dim(0); ++r)
        for (std::size_t d = 0; d < D; ++d) sum[d] += s->at(r, d);
      rows += s->dim(0);
    }
    std::vector<double> mean(D), sd(D);
    for (std::size_t d = 0; d < D; ++d) mean[d] = sum[d] / static_cast<double>(rows);
    for (const Tensor* s : sequences)
      for (std::size_t r = 0; r < s->dim(0); ++r)
        for (std::size_t d = 0; d < D; ++d) {
          const double c = s->at(r, d) - mean[d];
          sq[d] += c * c;
        }
    for (std::size_t d = 0; d < D; ++d) {
      const double v = std::sqrt(sq[d] / static_cast<double>(rows));
      sd[d] = v < 1e-8 ? 1.0 : v;
    }
    return Standardizer(std::move(mean), std::move(sd));
  }

  static Standardizer identity(std::size_t dim) {
    return Standardizer(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }

  Tensor apply(const Tensor& sequence) const {
    if (sequence.rank() != 2 || sequence.dim(1) != dim()) {
      throw ShapeError("Standardizer: expected [T," + std::to_string(dim()) + "], got " +
                       shape_string(sequence.shape()));
    }
    Tensor out = sequence;
    const std::size_t D = dim();
    for (std::size_t r = 0; r < out.dim(0); ++r)
      for (std::size_t d = 0; d < D; ++d) out.at(r, d) = (out.at(r, d) - mean_[d]) / std_[d];
    return out;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

}  // namespace avdf
