#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "entdiff/dataset.hpp"
#include "entdiff/errors.hpp"
#include "entdiff/guidance.hpp"
#include "entdiff/mlp.hpp"
#include "entdiff/samplers.hpp"
#include "entdiff/schedule.hpp"
#include "entdiff/training.hpp"

namespace entdiff {

struct ScheduleConfig {
  std::size_t t_steps = 1000;
  std::optional<double> beta_start;  // resolved from t_steps when omitted
  std::optional<double> beta_end;
  SigmaVariant sigma_variant = SigmaVariant::BetaTilde;
};

struct ModelsConfig {
  std::vector<std::size_t> eps_hidden = {128, 128};
  std::vector<std::size_t> clf_hidden = {128, 64};
  Activation activation = Activation::SiLU;
};

struct SamplerSection {
  SamplerMethod method = SamplerMethod::Ddpm;
  std::size_t ddim_steps = 25;
  double ddim_sigma = 0.0;
  std::uint64_t seed = 99;
  std::size_t batch = 2000;
  std::size_t threads = 1;
};

// All scale-scheme knobs live side by side; the active scheme reads the ones
// it needs and the rest keep their defaults, so an echoed config always
// carries every key.
struct GuidanceConfig {
  std::string scheme = "none";
  double s = 1.0;
  double c = 10.0;
  std::size_t t_cut = 700;
  double m = 0.2;
  double gamma = 1.0;
  double entropy_floor = 1e-8;
  std::optional<double> s_max;  // resolved to 1e4 * gamma when omitted
};

struct MetricsConfig {
  std::size_t k_nn = 3;
  std::size_t n_real = 2000;
  std::size_t n_gen = 2000;
  double threshold_fraction = 0.05;
  std::size_t bins = 20;
  std::uint64_t eval_seed = 1234;
};

struct Config {
  MixtureSpec dataset;
  ScheduleConfig schedule;
  ModelsConfig models;
  TrainConfig training;
  SamplerSection sampler;
  GuidanceConfig guidance;
  MetricsConfig metrics;
};

namespace detail {

// Strict section reader: every key must be consumed, every value must
// convert, and failures name the full path like "schedule.beta_start".
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw config_error(path_ + "." + key + ": wrong value type");
    }
  }

  template <typename T>
  void read_unsigned(const char* key, T& out) {
    static_assert(std::is_unsigned_v<T>);
    read_nonneg(key, out);
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    T v{};
    read(key, v);
    out = v;
  }

  template <typename Parser, typename T>
  void read_parsed(const char* key, Parser parser, T& out) {
    if (!j_.contains(key)) return;
    std::string s;
    read(key, s);
    try {
      out = parser(s);
    } catch (const std::invalid_argument& e) {
      throw config_error(path_ + "." + key + ": " + e.what());
    }
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (seen_.count(it.key()) == 0)
        throw config_error("unknown key: " + path_ + "." + it.key());
  }

 private:
  template <typename T>
  void read_nonneg(const char* key, T& out) {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number_integer() && v.get<long long>() < 0)
      throw config_error(path_ + "." + key + ": must be nonnegative");
    read(key, out);
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline const nlohmann::json& section(const nlohmann::json& j, const char* name) {
  static const nlohmann::json empty = nlohmann::json::object();
  return j.contains(name) ? j.at(name) : empty;
}

}  // namespace detail

inline const std::set<std::string>& known_schemes() {
  static const std::set<std::string> names = {"none",       "fixed",     "range_constant",
                                              "time_aware", "grad_norm", "eds"};
  return names;
}

// Fill the derived defaults so every consumer sees concrete values and the
// echoed config reparses to the identical state. Called after any CLI flag
// overrides, so e.g. an overridden gamma still derives its own s_max.
inline void finalize(Config& cfg) {
  if (!cfg.schedule.beta_start) cfg.schedule.beta_start = default_beta_start(cfg.schedule.t_steps);
  if (!cfg.schedule.beta_end) cfg.schedule.beta_end = default_beta_end(cfg.schedule.t_steps);
  if (!cfg.guidance.s_max) cfg.guidance.s_max = 1e4 * cfg.guidance.gamma;
  if (cfg.schedule.beta_start.value() > cfg.schedule.beta_end.value())
    throw config_error("schedule.beta_start: must not exceed schedule.beta_end");
}

inline Config parse_config_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config root: expected an object");
  static const std::set<std::string> sections = {"dataset",  "schedule", "models",
                                                 "training", "sampler",  "guidance",
                                                 "metrics"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (sections.count(it.key()) == 0)
      throw config_error("unknown section: " + it.key());

  Config cfg;
  {
    detail::SectionReader r(detail::section(j, "dataset"), "dataset");
    r.read_unsigned("num_classes", cfg.dataset.num_classes);
    r.read_unsigned("dim", cfg.dataset.dim);
    r.read("radius", cfg.dataset.radius);
    r.read("std_dev", cfg.dataset.std_dev);
    r.read_unsigned("per_class", cfg.dataset.per_class);
    r.read_unsigned("seed", cfg.dataset.seed);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "schedule"), "schedule");
    r.read_unsigned("t_steps", cfg.schedule.t_steps);
    r.read_optional("beta_start", cfg.schedule.beta_start);
    r.read_optional("beta_end", cfg.schedule.beta_end);
    r.read_parsed("sigma_variant", parse_sigma_variant, cfg.schedule.sigma_variant);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "models"), "models");
    r.read("eps_hidden", cfg.models.eps_hidden);
    r.read("clf_hidden", cfg.models.clf_hidden);
    r.read_parsed("activation", parse_activation, cfg.models.activation);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "training"), "training");
    r.read("eta", cfg.training.eta);
    r.read("learning_rate", cfg.training.learning_rate);
    r.read_unsigned("batch_size", cfg.training.batch_size);
    r.read_unsigned("total_steps", cfg.training.total_steps);
    r.read_unsigned("seed", cfg.training.seed);
    r.read_unsigned("eval_interval", cfg.training.eval_interval);
    r.read("val_fraction", cfg.training.val_fraction);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "sampler"), "sampler");
    r.read_parsed("method", parse_sampler_method, cfg.sampler.method);
    r.read_unsigned("ddim_steps", cfg.sampler.ddim_steps);
    r.read("ddim_sigma", cfg.sampler.ddim_sigma);
    r.read_unsigned("seed", cfg.sampler.seed);
    r.read_unsigned("batch", cfg.sampler.batch);
    r.read_unsigned("threads", cfg.sampler.threads);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "guidance"), "guidance");
    r.read("scheme", cfg.guidance.scheme);
    if (known_schemes().count(cfg.guidance.scheme) == 0)
      throw config_error("guidance.scheme: unknown scheme " + cfg.guidance.scheme);
    r.read("s", cfg.guidance.s);
    r.read("c", cfg.guidance.c);
    r.read_unsigned("t_cut", cfg.guidance.t_cut);
    r.read("m", cfg.guidance.m);
    r.read("gamma", cfg.guidance.gamma);
    r.read("entropy_floor", cfg.guidance.entropy_floor);
    r.read_optional("s_max", cfg.guidance.s_max);
    r.done();
  }
  {
    detail::SectionReader r(detail::section(j, "metrics"), "metrics");
    r.read_unsigned("k_nn", cfg.metrics.k_nn);
    r.read_unsigned("n_real", cfg.metrics.n_real);
    r.read_unsigned("n_gen", cfg.metrics.n_gen);
    r.read("threshold_fraction", cfg.metrics.threshold_fraction);
    r.read_unsigned("bins", cfg.metrics.bins);
    r.read_unsigned("eval_seed", cfg.metrics.eval_seed);
    r.done();
  }
  return cfg;
}

// Parse without filling defaults, so callers can layer flag overrides on top
// of what the file explicitly set before finalize() resolves the rest.
inline Config load_config_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": invalid JSON: " + e.what());
  }
  return parse_config_json(j);
}

inline Config load_config(const std::string& path) {
  Config cfg = load_config_raw(path);
  finalize(cfg);
  return cfg;
}

inline nlohmann::json config_to_json(const Config& cfg) {
  nlohmann::json j;
  j["dataset"] = {{"num_classes", cfg.dataset.num_classes},
                  {"dim", cfg.dataset.dim},
                  {"radius", cfg.dataset.radius},
                  {"std_dev", cfg.dataset.std_dev},
                  {"per_class", cfg.dataset.per_class},
                  {"seed", cfg.dataset.seed}};
  j["schedule"] = {{"t_steps", cfg.schedule.t_steps},
                   {"beta_start", cfg.schedule.beta_start.value()},
                   {"beta_end", cfg.schedule.beta_end.value()},
                   {"sigma_variant", sigma_variant_name(cfg.schedule.sigma_variant)}};
  j["models"] = {{"eps_hidden", cfg.models.eps_hidden},
                 {"clf_hidden", cfg.models.clf_hidden},
                 {"activation", activation_name(cfg.models.activation)}};
  j["training"] = {{"eta", cfg.training.eta},
                   {"learning_rate", cfg.training.learning_rate},
                   {"batch_size", cfg.training.batch_size},
                   {"total_steps", cfg.training.total_steps},
                   {"seed", cfg.training.seed},
                   {"eval_interval", cfg.training.eval_interval},
                   {"val_fraction", cfg.training.val_fraction}};
  j["sampler"] = {{"method", sampler_method_name(cfg.sampler.method)},
                  {"ddim_steps", cfg.sampler.ddim_steps},
                  {"ddim_sigma", cfg.sampler.ddim_sigma},
                  {"seed", cfg.sampler.seed},
                  {"batch", cfg.sampler.batch},
                  {"threads", cfg.sampler.threads}};
  j["guidance"] = {{"scheme", cfg.guidance.scheme},
                   {"s", cfg.guidance.s},
                   {"c", cfg.guidance.c},
                   {"t_cut", cfg.guidance.t_cut},
                   {"m", cfg.guidance.m},
                   {"gamma", cfg.guidance.gamma},
                   {"entropy_floor", cfg.guidance.entropy_floor},
                   {"s_max", cfg.guidance.s_max.value()}};
  j["metrics"] = {{"k_nn", cfg.metrics.k_nn},
                  {"n_real", cfg.metrics.n_real},
                  {"n_gen", cfg.metrics.n_gen},
                  {"threshold_fraction", cfg.metrics.threshold_fraction},
                  {"bins", cfg.metrics.bins},
                  {"eval_seed", cfg.metrics.eval_seed}};
  return j;
}

inline NoiseSchedule make_schedule(const ScheduleConfig& sc) {
  return build_linear(sc.t_steps, sc.beta_start.value(), sc.beta_end.value());
}

inline GuidanceScheme make_scheme(const GuidanceConfig& g) {
  if (g.scheme == "none") return NoGuidance{};
  if (g.scheme == "fixed") return FixedScale{g.s};
  if (g.scheme == "range_constant") return RangeConstant{g.c, g.t_cut};
  if (g.scheme == "time_aware") return TimeAware{g.c};
  if (g.scheme == "grad_norm") return GradNorm{g.c, g.m};
  if (g.scheme == "eds") return EntropyDriven{g.gamma, g.entropy_floor, g.s_max.value()};
  throw config_error("guidance.scheme: unknown scheme " + g.scheme);
}

}  // namespace entdiff
