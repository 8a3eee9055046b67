#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entdiff/errors.hpp"
#include "entdiff/mlp.hpp"

namespace entdiff {

// Model checkpoints are a fixed binary container:
//   bytes 0..7   magic "EDDPMCK1"
//   bytes 8..11  u32 little-endian length of the JSON metadata blob
//   metadata     UTF-8 JSON (version, kind, shapes, schedule, seed)
//   payload      f32 little-endian parameters, per layer: weight matrix in
//                row-major order, then the bias vector
inline constexpr char kCheckpointMagic[8] = {'E', 'D', 'D', 'P', 'M', 'C', 'K', '1'};
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Kind {
    BadMagic,
    UnsupportedVersion,
    Truncated,
    ShapeMismatch,
    KindMismatch,
    Parse,
  };

  CheckpointError(Kind kind, const std::string& msg)
      : Error("checkpoint", msg), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ScheduleMeta {
  std::size_t t_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::string sigma_variant = "beta_tilde";
};

struct CheckpointMeta {
  int version = kCheckpointVersion;
  std::string kind;  // "epsilon" or "classifier"
  std::vector<std::size_t> layer_dims;
  std::string activation = "silu";
  std::string time_encoding = "frac_sin_cos";
  ScheduleMeta schedule;
  std::uint64_t train_seed = 0;
  std::size_t param_count = 0;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = get_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline nlohmann::json meta_to_json(const CheckpointMeta& meta) {
  nlohmann::json j;
  j["version"] = meta.version;
  j["kind"] = meta.kind;
  j["layer_dims"] = meta.layer_dims;
  j["activation"] = meta.activation;
  j["time_encoding"] = meta.time_encoding;
  j["schedule"] = {{"t_steps", meta.schedule.t_steps},
                   {"beta_start", meta.schedule.beta_start},
                   {"beta_end", meta.schedule.beta_end},
                   {"sigma_variant", meta.schedule.sigma_variant}};
  j["train_seed"] = meta.train_seed;
  j["param_count"] = meta.param_count;
  return j;
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  try {
    CheckpointMeta meta;
    meta.version = j.at("version").get<int>();
    meta.kind = j.at("kind").get<std::string>();
    meta.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    meta.activation = j.at("activation").get<std::string>();
    meta.time_encoding = j.at("time_encoding").get<std::string>();
    const auto& s = j.at("schedule");
    meta.schedule.t_steps = s.at("t_steps").get<std::size_t>();
    meta.schedule.beta_start = s.at("beta_start").get<double>();
    meta.schedule.beta_end = s.at("beta_end").get<double>();
    meta.schedule.sigma_variant = s.at("sigma_variant").get<std::string>();
    meta.train_seed = j.at("train_seed").get<std::uint64_t>();
    meta.param_count = j.at("param_count").get<std::size_t>();
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Parse,
                          std::string("bad checkpoint metadata: ") + e.what());
  }
}

}  // namespace detail

inline std::string encode_checkpoint(const MlpModel& model, CheckpointMeta meta) {
  if (meta.kind != "epsilon" && meta.kind != "classifier")
    throw CheckpointError(CheckpointError::Kind::Parse,
                          "checkpoint kind must be epsilon or classifier");
  meta.version = kCheckpointVersion;
  meta.layer_dims = model.layer_dims;
  meta.activation = activation_name(model.activation);
  meta.param_count = model.param_count();

  const std::string meta_json = detail::meta_to_json(meta).dump();
  std::string out;
  out.reserve(12 + meta_json.size() + 4 * meta.param_count);
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32_le(out, static_cast<std::uint32_t>(meta_json.size()));
  out += meta_json;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (double w : model.weights[l].data)
      detail::put_f32_le(out, static_cast<float>(w));
    for (double b : model.biases[l]) detail::put_f32_le(out, static_cast<float>(b));
  }
  return out;
}

struct LoadedCheckpoint {
  MlpModel model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof(kCheckpointMagic))
    throw CheckpointError(Kind::Truncated, "checkpoint shorter than its magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError(Kind::BadMagic, "not a checkpoint file (magic mismatch)");
  if (bytes.size() < 12)
    throw CheckpointError(Kind::Truncated, "checkpoint missing metadata length");

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t meta_len = detail::get_u32_le(p + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(meta_len))
    throw CheckpointError(Kind::Truncated, "checkpoint metadata truncated");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(12, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Parse,
                          std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  CheckpointMeta meta = detail::meta_from_json(j);
  if (meta.version != kCheckpointVersion)
    throw CheckpointError(Kind::UnsupportedVersion,
                          "unsupported checkpoint version " + std::to_string(meta.version));
  if (meta.kind != "epsilon" && meta.kind != "classifier")
    throw CheckpointError(Kind::Parse, "unknown checkpoint kind: " + meta.kind);

  MlpModel model;
  try {
    model = make_mlp(meta.layer_dims, parse_activation(meta.activation));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::Parse, e.what());
  }
  if (model.param_count() != meta.param_count)
    throw CheckpointError(Kind::ShapeMismatch,
                          "param_count does not match layer_dims");

  const std::size_t payload_off = 12 + meta_len;
  const std::size_t need = 4 * meta.param_count;
  if (bytes.size() < payload_off + need)
    throw CheckpointError(Kind::Truncated, "checkpoint payload truncated");
  if (bytes.size() > payload_off + need)
    throw CheckpointError(Kind::ShapeMismatch, "checkpoint has trailing bytes");

  const auto* q = reinterpret_cast<const unsigned char*>(bytes.data()) + payload_off;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (double& w : model.weights[l].data) {
      w = static_cast<double>(detail::get_f32_le(q));
      q += 4;
    }
    for (double& b : model.biases[l]) {
      b = static_cast<double>(detail::get_f32_le(q));
      q += 4;
    }
  }
  return {std::move(model), std::move(meta)};
}

inline void save_checkpoint(const std::string& path, const MlpModel& model,
                            const CheckpointMeta& meta) {
  const std::string bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed writing " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("failed reading " + path);
  return decode_checkpoint(bytes);
}

// Guard used by consumers that need a specific model role.
inline void require_kind(const CheckpointMeta& meta, const std::string& expected) {
  if (meta.kind != expected)
    throw CheckpointError(CheckpointError::Kind::KindMismatch,
                          "expected a " + expected + " checkpoint, found " + meta.kind);
}

}  // namespace entdiff
