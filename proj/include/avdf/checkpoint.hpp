#pragma once

// Checkpoint layout:
//   "AVDF-CKPT"            9 bytes
//   version                1 byte
//   metadata length        u64 little-endian
//   metadata               UTF-8 JSON (configs, seed, standardization, tau, parameter manifest)
//   parameter blob         f64 little-endian, manifest order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avdf/config.hpp"
#include "avdf/error.hpp"
#include "avdf/model.hpp"

namespace avdf {

inline constexpr std::string_view kCheckpointMagic = "AVDF-CKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline nlohmann::json standardizer_json(const Standardizer& s) { return {{"mean", s.mean()}, {"std", s.stddev()}}; }

inline Standardizer standardizer_from(const nlohmann::json& j) {
  return Standardizer(j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>());
}

}  // namespace detail

// Extra metadata carried alongside the model (training config, notes).
struct CheckpointExtras {
  nlohmann::json train;
};

inline std::string encode_checkpoint(const Detector& det, const CheckpointExtras& extras = {}) {
  nlohmann::json params = nlohmann::json::array();
  std::vector<const Parameter*> order;
  for (const ParameterStore* store : det.stores()) {
    for (const auto& p : *store) {
      params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
      order.push_back(p.get());
    }
  }
  nlohmann::json meta{{"model", to_json_value(det.config())},
                      {"seed", det.seed()},
                      {"standardization",
                       {{"face", detail::standardizer_json(det.face_standardizer())},
                        {"speech", detail::standardizer_json(det.speech_standardizer())}}},
                      {"tau", det.threshold() ? nlohmann::json(*det.threshold()) : nlohmann::json(nullptr)},
                      {"parameters", params}};
  if (!extras.train.is_null()) meta["train"] = extras.train;
  const std::string text = meta.dump();

  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  detail::put_u64le(out, text.size());
  out += text;
  for (const Parameter* p : order) {
    for (double v : p->value.values()) detail::put_u64le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

struct LoadedCheckpoint {
  Detector detector;
  nlohmann::json metadata;
};

inline LoadedCheckpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
  auto bad = [&](const std::string& why) { return InputError(InputErrorCode::Malformed, origin + ": " + why); };
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t head = kCheckpointMagic.size() + 1 + 8;
  if (bytes.size() < head || std::string_view(bytes.data(), kCheckpointMagic.size()) != kCheckpointMagic) {
    throw bad("not an AVDF checkpoint");
  }
  if (b[kCheckpointMagic.size()] != kCheckpointVersion) {
    throw bad("unsupported checkpoint version " + std::to_string(b[kCheckpointMagic.size()]));
  }
  const std::uint64_t meta_len = detail::get_u64le(b + kCheckpointMagic.size() + 1);
  if (meta_len > bytes.size() - head) throw bad("truncated metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(head),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(head + meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("metadata: ") + e.what());
  }

  try {
    ModelConfig config;
    read_into(detail::ObjectReader(meta.at("model"), "model"), config);
    Detector det(config, meta.at("seed").get<std::uint64_t>());
    det.set_standardizers(detail::standardizer_from(meta.at("standardization").at("face")),
                          detail::standardizer_from(meta.at("standardization").at("speech")));
    if (!meta.at("tau").is_null()) det.set_threshold(meta.at("tau").get<double>());

    const auto& manifest = meta.at("parameters");
    std::size_t pos = head + meta_len, index = 0;
    for (ParameterStore* store : det.stores()) {
      for (auto& p : *store) {
        if (index >= manifest.size()) throw bad("parameter manifest is shorter than the model");
        const auto& entry = manifest[index++];
        if (entry.at("name").get<std::string>() != p->name || entry.at("shape").get<Shape>() != p->value.shape()) {
          throw bad("parameter " + std::to_string(index - 1) + " is " + entry.dump() + ", model expects " + p->name +
                    " " + shape_string(p->value.shape()));
        }
        const std::size_t n = p->value.size();
        if (bytes.size() - pos < n * 8) throw bad("truncated parameter blob at " + p->name);
        for (double& v : p->value.values()) {
          v = std::bit_cast<double>(detail::get_u64le(b + pos));
          pos += 8;
        }
      }
    }
    if (index != manifest.size()) throw bad("parameter manifest is longer than the model");
    if (pos != bytes.size()) throw bad("trailing bytes after parameter blob");
    return LoadedCheckpoint{std::move(det), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw bad(std::string("model config: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Detector& det, const CheckpointExtras& extras = {}) {
  const std::string bytes = encode_checkpoint(det, extras);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": cannot write checkpoint");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": checkpoint write failed");
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::MissingFile, path.string() + ": cannot open checkpoint");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace avdf
