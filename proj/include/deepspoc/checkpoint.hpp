#pragma once

// Model checkpoints: a JSON header plus a raw little-endian float64 blob.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepspoc/adam.hpp"
#include "deepspoc/density_model.hpp"
#include "deepspoc/error.hpp"

namespace deepspoc {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  int version = kCheckpointVersion;
  std::string kind;
  std::size_t dim = 0;
  std::size_t num_params = 0;
  std::size_t outer = 0;
  std::size_t epoch = 0;
  std::uint64_t adam_step = 0;
};

namespace detail {

inline void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::ifstream& in, std::size_t n) {
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw ConfigError("checkpoint blob is truncated");
  }
  return v;
}

}  // namespace detail

/// Writes <stem>.json and <stem>.bin (params, then Adam m and v when present).
inline void save_checkpoint(const std::filesystem::path& stem, const DensityModel& model, const AdamState& adam,
                            std::size_t outer, std::size_t epoch) {
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(model.kind());
  j["dim"] = model.dim();
  j["num_params"] = model.num_params();
  j["outer"] = outer;
  j["epoch"] = epoch;
  j["adam_step"] = adam.step;
  j["has_adam"] = !adam.m.empty();
  j["domain"] = {{"lo", model.domain().lo}, {"hi", model.domain().hi}};
  std::filesystem::path meta = stem;
  meta += ".json";
  std::filesystem::path blob = stem;
  blob += ".bin";
  std::ofstream mo(meta);
  mo << j.dump(2) << '\n';
  std::ofstream bo(blob, std::ios::binary);
  const auto p = model.params();
  detail::write_doubles(bo, std::vector<double>(p.begin(), p.end()));
  if (!adam.m.empty()) {
    detail::write_doubles(bo, adam.m);
    detail::write_doubles(bo, adam.v);
  }
  if (!mo || !bo) throw Error("failed to write checkpoint '" + stem.string() + "'");
}

/// Restores parameters (and the optimizer state when `adam` is non-null)
/// into a model built from the same configuration.
inline CheckpointInfo load_checkpoint(const std::filesystem::path& stem, DensityModel& model,
                                      AdamState* adam = nullptr) {
  std::filesystem::path meta = stem;
  meta += ".json";
  std::filesystem::path blob = stem;
  blob += ".bin";
  std::ifstream mi(meta);
  if (!mi) throw ConfigError("cannot open checkpoint '" + meta.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mi);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  CheckpointInfo info;
  info.version = j.at("version").get<int>();
  if (info.version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(info.version));
  }
  info.kind = j.at("kind").get<std::string>();
  info.dim = j.at("dim").get<std::size_t>();
  info.num_params = j.at("num_params").get<std::size_t>();
  info.outer = j.at("outer").get<std::size_t>();
  info.epoch = j.at("epoch").get<std::size_t>();
  info.adam_step = j.at("adam_step").get<std::uint64_t>();
  if (info.kind != to_string(model.kind()) || info.dim != model.dim() || info.num_params != model.num_params()) {
    throw ConfigError("checkpoint does not match the configured model");
  }
  std::ifstream bi(blob, std::ios::binary);
  if (!bi) throw ConfigError("cannot open checkpoint blob '" + blob.string() + "'");
  model.set_params(detail::read_doubles(bi, info.num_params));
  if (adam && j.at("has_adam").get<bool>()) {
    adam->m = detail::read_doubles(bi, info.num_params);
    adam->v = detail::read_doubles(bi, info.num_params);
    adam->step = info.adam_step;
  }
  return info;
}

}  // namespace deepspoc
