// entdiff: class-conditional diffusion on 2-D mixtures with entropy-driven
// classifier guidance. Subcommands cover the full pipeline: data generation,
// training both networks, guided sampling, evaluation, trajectory analysis,
// and guidance-scale sweeps.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "entdiff/entdiff.hpp"

namespace fs = std::filesystem;
using namespace entdiff;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

Config load_base_config(const CommonOpts& c) {
  if (c.config_path.empty()) return Config{};
  return load_config_raw(c.config_path);
}

// A run directory is "used" once its effective-config echo exists; refuse to
// write into one again unless forced.
void prepare_run_dir(const std::string& out, bool force, const Config& cfg) {
  fs::create_directories(out);
  const fs::path marker = fs::path(out) / "effective_config.json";
  if (fs::exists(marker) && !force)
    throw io_error(out + " already contains a run; pass --force to redo it");
  std::ofstream f(marker);
  if (!f) throw io_error("cannot write " + marker.string());
  f << config_to_json(cfg).dump(2) << "\n";
  if (!f.flush()) throw io_error("failed writing " + marker.string());
}

ScheduleMeta schedule_meta_of(const Config& cfg) {
  ScheduleMeta m;
  m.t_steps = cfg.schedule.t_steps;
  m.beta_start = cfg.schedule.beta_start.value();
  m.beta_end = cfg.schedule.beta_end.value();
  m.sigma_variant = sigma_variant_name(cfg.schedule.sigma_variant);
  return m;
}

void check_schedule_meta(const CheckpointMeta& meta, const Config& cfg,
                         const std::string& path) {
  const auto& s = meta.schedule;
  if (s.t_steps != cfg.schedule.t_steps || s.beta_start != cfg.schedule.beta_start.value() ||
      s.beta_end != cfg.schedule.beta_end.value())
    throw mismatch_error(path + ": checkpoint schedule (T=" + std::to_string(s.t_steps) +
                         ") does not match the configured schedule (T=" +
                         std::to_string(cfg.schedule.t_steps) + ")");
}

void cmd_gen_data(const CommonOpts& common) {
  Config cfg = load_base_config(common);
  if (common.seed) cfg.dataset.seed = *common.seed;
  finalize(cfg);
  prepare_run_dir(common.out, common.force, cfg);

  const LabeledDataset ds = make_mixture(cfg.dataset);
  const std::string path = (fs::path(common.out) / "dataset.csv").string();
  write_file(path, [&](std::ostream& o) { write_samples_csv(o, ds.points, ds.labels); });
  std::cout << "gen-data: wrote " << ds.size() << " samples to " << path << "\n";
}

void write_training_outputs(const std::string& out, const TrainResult& result,
                            const std::string& kind, const Config& cfg) {
  CheckpointMeta meta;
  meta.kind = kind;
  meta.schedule = schedule_meta_of(cfg);
  meta.train_seed = cfg.training.seed;
  const std::string ckpt =
      (fs::path(out) / (kind == "epsilon" ? "eps.ckpt" : "clf.ckpt")).string();
  save_checkpoint(ckpt, result.model, meta);
  write_file((fs::path(out) / "telemetry.csv").string(),
             [&](std::ostream& o) { write_telemetry_csv(o, result.telemetry); });
  const TelemetryRow& last = result.telemetry.back();
  std::cout << "trained " << kind << ": " << cfg.training.total_steps
            << " steps, final loss " << last.total;
  if (kind == "classifier")
    std::cout << ", val accuracy " << last.val_accuracy << ", val entropy "
              << last.val_mean_entropy;
  std::cout << "; checkpoint " << ckpt << "\n";
}

void cmd_train_eps(const CommonOpts& common) {
  Config cfg = load_base_config(common);
  if (common.seed) cfg.training.seed = *common.seed;
  finalize(cfg);
  prepare_run_dir(common.out, common.force, cfg);

  const LabeledDataset ds = make_mixture(cfg.dataset);
  const NoiseSchedule schedule = make_schedule(cfg.schedule);
  const TrainResult result = train_epsilon(ds, schedule, cfg.training,
                                           cfg.models.eps_hidden, cfg.models.activation);
  write_training_outputs(common.out, result, "epsilon", cfg);
}

void cmd_train_clf(const CommonOpts& common, const std::optional<double>& eta) {
  Config cfg = load_base_config(common);
  if (common.seed) cfg.training.seed = *common.seed;
  if (eta) cfg.training.eta = *eta;
  finalize(cfg);
  prepare_run_dir(common.out, common.force, cfg);

  const LabeledDataset ds = make_mixture(cfg.dataset);
  const NoiseSchedule schedule = make_schedule(cfg.schedule);
  const TrainResult result = train_classifier(ds, schedule, cfg.training,
                                              cfg.models.clf_hidden, cfg.models.activation);
  write_training_outputs(common.out, result, "classifier", cfg);
}

struct SampleOpts {
  std::string eps_path;
  std::string clf_path;
  std::string scheme;
  std::optional<double> gamma;
  std::optional<double> s;
  std::string method;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> batch;
};

void apply_sample_overrides(Config& cfg, const SampleOpts& o) {
  if (!o.scheme.empty()) {
    if (known_schemes().count(o.scheme) == 0)
      throw config_error("--scheme: unknown scheme " + o.scheme);
    cfg.guidance.scheme = o.scheme;
  }
  if (o.gamma) {
    cfg.guidance.gamma = *o.gamma;
    cfg.guidance.s_max.reset();  // rederive the cap from the new gamma
  }
  if (o.s) cfg.guidance.s = *o.s;
  if (!o.method.empty()) cfg.sampler.method = parse_sampler_method(o.method);
  if (o.steps) cfg.sampler.ddim_steps = *o.steps;
  if (o.batch) cfg.sampler.batch = *o.batch;
}

struct LoadedModels {
  MlpModel eps;
  std::optional<MlpModel> clf;
};

LoadedModels load_models(const Config& cfg, const std::string& eps_path,
                         const std::string& clf_path) {
  LoadedModels m;
  LoadedCheckpoint eps = load_checkpoint(eps_path);
  require_kind(eps.meta, "epsilon");
  check_schedule_meta(eps.meta, cfg, eps_path);
  if (eps.model.output_dim() != cfg.dataset.dim)
    throw mismatch_error(eps_path + ": model dimension " +
                         std::to_string(eps.model.output_dim()) +
                         " does not match dataset.dim");
  m.eps = std::move(eps.model);

  if (!clf_path.empty()) {
    LoadedCheckpoint clf = load_checkpoint(clf_path);
    require_kind(clf.meta, "classifier");
    check_schedule_meta(clf.meta, cfg, clf_path);
    if (clf.model.output_dim() != cfg.dataset.num_classes)
      throw mismatch_error(clf_path + ": classifier has " +
                           std::to_string(clf.model.output_dim()) +
                           " outputs, dataset has " +
                           std::to_string(cfg.dataset.num_classes) + " classes");
    m.clf = std::move(clf.model);
  }
  return m;
}

std::vector<Trajectory> run_sampler(const Config& cfg, const LoadedModels& models) {
  if (cfg.guidance.scheme != "none" && !models.clf)
    throw config_error("guidance scheme '" + cfg.guidance.scheme + "' needs --clf");
  SamplerConfig sc;
  sc.method = cfg.sampler.method;
  sc.ddim_steps = cfg.sampler.ddim_steps;
  sc.ddim_sigma = cfg.sampler.ddim_sigma;
  sc.sigma_variant = cfg.schedule.sigma_variant;
  sc.scheme = make_scheme(cfg.guidance);
  sc.seed = cfg.sampler.seed;
  sc.batch = cfg.sampler.batch;
  sc.threads = cfg.sampler.threads;
  const NoiseSchedule schedule = make_schedule(cfg.schedule);
  const MlpModel* clf = models.clf ? &*models.clf : nullptr;
  return sample_batch(models.eps, clf, schedule, sc, cfg.dataset.num_classes);
}

void write_sample_outputs(const std::string& out, const std::vector<Trajectory>& trajs) {
  std::vector<DenseVector> points;
  std::vector<std::size_t> labels;
  points.reserve(trajs.size());
  labels.reserve(trajs.size());
  for (const auto& t : trajs) {
    points.push_back(t.final_x);
    labels.push_back(t.label);
  }
  write_file((fs::path(out) / "samples.csv").string(),
             [&](std::ostream& o) { write_samples_csv(o, points, labels); });
  write_file((fs::path(out) / "trajectories.csv").string(),
             [&](std::ostream& o) { write_trajectories_csv(o, trajs); });
}

void cmd_sample(const CommonOpts& common, const SampleOpts& opts) {
  Config cfg = load_base_config(common);
  if (common.seed) cfg.sampler.seed = *common.seed;
  apply_sample_overrides(cfg, opts);
  finalize(cfg);

  const LoadedModels models = load_models(cfg, opts.eps_path, opts.clf_path);
  prepare_run_dir(common.out, common.force, cfg);
  const std::vector<Trajectory> trajs = run_sampler(cfg, models);
  write_sample_outputs(common.out, trajs);
  std::cout << "sample: " << trajs.size() << " samples (scheme " << cfg.guidance.scheme
            << ", " << sampler_method_name(cfg.sampler.method) << ") -> " << common.out
            << "\n";
}

// The real set for evaluation is a fresh draw from the configured mixture
// under the metrics seed, sized to n_real rounded down to a class multiple.
LabeledDataset draw_real_set(const Config& cfg) {
  MixtureSpec spec = cfg.dataset;
  spec.seed = cfg.metrics.eval_seed;
  spec.per_class = cfg.metrics.n_real / cfg.dataset.num_classes;
  if (spec.per_class == 0)
    throw config_error("metrics.n_real: too small for " +
                       std::to_string(cfg.dataset.num_classes) + " classes");
  return make_mixture(spec);
}

MetricsReport evaluate_samples(const Config& cfg, std::vector<DenseVector> gen_points,
                               std::vector<std::size_t> gen_labels) {
  for (std::size_t l : gen_labels)
    if (l >= cfg.dataset.num_classes)
      throw mismatch_error("generated label " + std::to_string(l) +
                           " exceeds dataset.num_classes");
  if (gen_points.size() > cfg.metrics.n_gen) {
    gen_points.resize(cfg.metrics.n_gen);
    gen_labels.resize(cfg.metrics.n_gen);
  }
  const LabeledDataset real = draw_real_set(cfg);
  return compute_metrics(real.points, real.labels, gen_points, gen_labels,
                         mixture_means(cfg.dataset), cfg.metrics.k_nn);
}

nlohmann::json report_to_json(const MetricsReport& rep) {
  return {{"frechet", rep.frechet},
          {"per_class_frechet", rep.per_class_frechet},
          {"mean_per_class_frechet", rep.mean_per_class_frechet},
          {"precision", rep.precision},
          {"recall", rep.recall},
          {"conditional_accuracy", rep.conditional_accuracy},
          {"n_real", rep.n_real},
          {"n_gen", rep.n_gen}};
}

constexpr const char* kReportCsvHeader =
    "frechet,mean_per_class_frechet,precision,recall,conditional_accuracy,n_real,n_gen";

void report_csv_row(std::ostream& o, const MetricsReport& rep) {
  o << detail::fmt_double(rep.frechet) << ","
    << detail::fmt_double(rep.mean_per_class_frechet) << ","
    << detail::fmt_double(rep.precision) << "," << detail::fmt_double(rep.recall) << ","
    << detail::fmt_double(rep.conditional_accuracy) << "," << rep.n_real << ","
    << rep.n_gen;
}

void write_report(const std::string& out, const MetricsReport& rep) {
  write_file((fs::path(out) / "metrics.json").string(),
             [&](std::ostream& o) { o << report_to_json(rep).dump(2) << "\n"; });
  write_file((fs::path(out) / "metrics.csv").string(), [&](std::ostream& o) {
    o << kReportCsvHeader << "\n";
    report_csv_row(o, rep);
    o << "\n";
  });
}

void cmd_eval(const CommonOpts& common, const std::string& samples_path) {
  Config cfg = load_base_config(common);
  if (common.seed) cfg.metrics.eval_seed = *common.seed;
  finalize(cfg);

  const SamplesFile samples =
      read_file(samples_path, [](std::istream& in) { return read_samples_csv(in); });
  prepare_run_dir(common.out, common.force, cfg);
  const MetricsReport rep =
      evaluate_samples(cfg, samples.points, samples.labels);
  write_report(common.out, rep);
  std::cout << "eval: frechet " << rep.frechet << ", mean per-class "
            << rep.mean_per_class_frechet << ", precision " << rep.precision
            << ", recall " << rep.recall << ", conditional accuracy "
            << rep.conditional_accuracy << "\n";
}

void cmd_analyze(const CommonOpts& common, const std::string& traj_path,
                 const std::optional<double>& threshold_fraction, bool first_touch) {
  Config cfg = load_base_config(common);
  if (threshold_fraction) cfg.metrics.threshold_fraction = *threshold_fraction;
  finalize(cfg);

  const std::vector<Trajectory> trajs =
      read_file(traj_path, [](std::istream& in) { return read_trajectories_csv(in); });
  prepare_run_dir(common.out, common.force, cfg);
  const VanishingAnalysis va =
      vanishing_analysis(trajs, cfg.metrics.threshold_fraction, cfg.dataset.num_classes,
                         cfg.schedule.t_steps, cfg.metrics.bins, !first_touch);

  nlohmann::json j{{"threshold", va.threshold},
                   {"num_trajectories", trajs.size()},
                   {"crossed_count", va.crossed_count},
                   {"mean_crossing_t", va.mean_crossing_t},
                   {"crossing_variance", va.crossing_variance},
                   {"crossing_times", va.crossing_times}};
  write_file((fs::path(common.out) / "analysis.json").string(),
             [&](std::ostream& o) { o << j.dump(2) << "\n"; });

  const std::size_t bins = va.crossing_hist.size();
  const std::size_t t_steps = cfg.schedule.t_steps;
  write_file((fs::path(common.out) / "analysis.csv").string(), [&](std::ostream& o) {
    o << "bin_lo,bin_hi,crossings,mean_entropy,mean_grad_norm,records\n";
    for (std::size_t b = 0; b < bins; ++b) {
      o << (b * t_steps / bins + 1) << "," << ((b + 1) * t_steps / bins) << ","
        << va.crossing_hist[b] << "," << detail::fmt_double(va.mean_entropy_by_bin[b])
        << "," << detail::fmt_double(va.mean_grad_norm_by_bin[b]) << ","
        << va.bin_counts[b] << "\n";
    }
  });
  std::cout << "analyze: " << va.crossed_count << "/" << trajs.size()
            << " trajectories crossed " << va.threshold << "; mean crossing t "
            << va.mean_crossing_t << ", variance " << va.crossing_variance << "\n";
}

struct SweepOpts {
  std::string param;
  std::vector<double> grid;
  std::string eps_path;
  std::string clf_path;
  std::size_t jobs = 1;
};

void apply_sweep_param(Config& cfg, const std::string& param, double value) {
  if (param == "gamma") {
    cfg.guidance.scheme = "eds";
    cfg.guidance.gamma = value;
    cfg.guidance.s_max.reset();
  } else if (param == "s") {
    cfg.guidance.scheme = "fixed";
    cfg.guidance.s = value;
  } else if (param == "c") {
    if (cfg.guidance.scheme != "range_constant" && cfg.guidance.scheme != "time_aware" &&
        cfg.guidance.scheme != "grad_norm")
      throw config_error("--param c needs guidance.scheme range_constant, time_aware, or grad_norm");
    cfg.guidance.c = value;
  } else if (param == "m") {
    if (cfg.guidance.scheme != "grad_norm")
      throw config_error("--param m needs guidance.scheme grad_norm");
    cfg.guidance.m = value;
  } else {
    throw config_error("--param: unknown parameter " + param);
  }
}

void cmd_sweep(const CommonOpts& common, const SweepOpts& opts) {
  const Config raw = load_base_config(common);
  Config base = raw;
  if (common.seed) base.sampler.seed = *common.seed;
  finalize(base);
  prepare_run_dir(common.out, common.force, base);

  struct PointResult {
    double value = 0.0;
    std::uint64_t seed = 0;
    MetricsReport report;
  };
  std::vector<PointResult> results(opts.grid.size());

  // Grid points run independently; per-point seeds derive from (base seed,
  // grid index), so bounded parallelism cannot change any number.
  auto run_point = [&](std::size_t i) {
    Config cfg = raw;
    if (common.seed) cfg.sampler.seed = *common.seed;
    apply_sweep_param(cfg, opts.param, opts.grid[i]);
    cfg.sampler.seed = derive_seed(base.sampler.seed, i);
    cfg.sampler.threads = 1;
    finalize(cfg);

    const std::string dir = (fs::path(common.out) / ("point_" + std::to_string(i))).string();
    const LoadedModels models = load_models(cfg, opts.eps_path, opts.clf_path);
    prepare_run_dir(dir, common.force, cfg);
    const std::vector<Trajectory> trajs = run_sampler(cfg, models);
    write_sample_outputs(dir, trajs);

    std::vector<DenseVector> points;
    std::vector<std::size_t> labels;
    for (const auto& t : trajs) {
      points.push_back(t.final_x);
      labels.push_back(t.label);
    }
    const MetricsReport rep = evaluate_samples(cfg, std::move(points), std::move(labels));
    write_report(dir, rep);
    results[i] = {opts.grid[i], cfg.sampler.seed, rep};
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, opts.grid.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < opts.grid.size(); ++i) run_point(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < opts.grid.size(); i += jobs) run_point(i);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<std::size_t> order(results.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].report.frechet < results[b].report.frechet;
  });

  const std::string sweep_csv = (fs::path(common.out) / "sweep.csv").string();
  write_file(sweep_csv, [&](std::ostream& o) {
    o << "param,value,seed," << kReportCsvHeader << "\n";
    for (std::size_t i : order) {
      o << opts.param << "," << detail::fmt_double(results[i].value) << ","
        << results[i].seed << ",";
      report_csv_row(o, results[i].report);
      o << "\n";
    }
  });
  const PointResult& best = results[order.front()];
  std::cout << "sweep: best " << opts.param << " = " << best.value << " (frechet "
            << best.report.frechet << ") -> " << sweep_csv << "\n";
}

void add_common(CLI::App* cmd, CommonOpts& c, bool needs_out = true) {
  cmd->add_option("--config", c.config_path, "JSON experiment config; defaults used if omitted")
      ->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "run output directory");
  if (needs_out) out->required();
  cmd->add_flag("--force", c.force, "redo an already-written run directory");
  cmd->add_option("--seed", c.seed, "override the subcommand's primary seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropy-guided diffusion on 2-D class-conditional mixtures"};
  app.require_subcommand(1);

  CommonOpts gen_common;
  add_common(app.add_subcommand("gen-data", "draw the mixture dataset to CSV")
                 ->callback([&] { cmd_gen_data(gen_common); }),
             gen_common);

  CommonOpts eps_common;
  add_common(app.add_subcommand("train-eps", "train the noise predictor")
                 ->callback([&] { cmd_train_eps(eps_common); }),
             eps_common);

  CommonOpts clf_common;
  std::optional<double> clf_eta;
  {
    auto* cmd = app.add_subcommand("train-clf", "train the noise-aware classifier");
    add_common(cmd, clf_common);
    cmd->add_option("--eta", clf_eta, "entropy-constraint weight (0 disables it)");
    cmd->callback([&] { cmd_train_clf(clf_common, clf_eta); });
  }

  CommonOpts sample_common;
  SampleOpts sample_opts;
  {
    auto* cmd = app.add_subcommand("sample", "run the guided reverse process");
    add_common(cmd, sample_common);
    cmd->add_option("--eps", sample_opts.eps_path, "epsilon-model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--clf", sample_opts.clf_path, "classifier checkpoint")
        ->check(CLI::ExistingFile);
    cmd->add_option("--scheme", sample_opts.scheme,
                    "guidance scheme: none|fixed|range_constant|time_aware|grad_norm|eds");
    cmd->add_option("--gamma", sample_opts.gamma, "entropy-driven scale gamma");
    cmd->add_option("--s", sample_opts.s, "fixed guidance scale");
    cmd->add_option("--method", sample_opts.method, "sampler: ddpm|ddim");
    cmd->add_option("--steps", sample_opts.steps, "ddim step count");
    cmd->add_option("--batch", sample_opts.batch, "number of samples");
    cmd->callback([&] { cmd_sample(sample_common, sample_opts); });
  }

  CommonOpts eval_common;
  std::string eval_samples;
  {
    auto* cmd = app.add_subcommand("eval", "score a samples CSV against a fresh real draw");
    add_common(cmd, eval_common);
    cmd->add_option("--samples", eval_samples, "samples CSV to score")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->callback([&] { cmd_eval(eval_common, eval_samples); });
  }

  CommonOpts an_common;
  std::string an_traj;
  std::optional<double> an_threshold;
  bool an_first_touch = false;
  {
    auto* cmd = app.add_subcommand("analyze", "vanishing-point analysis of a trajectory CSV");
    add_common(cmd, an_common);
    cmd->add_option("--trajectories", an_traj, "trajectory CSV from a sample run")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--threshold-fraction", an_threshold,
                    "entropy threshold as a fraction of ln K");
    cmd->add_flag("--first-touch", an_first_touch,
                  "report the first dip below threshold instead of the sustained crossing");
    cmd->callback([&] { cmd_analyze(an_common, an_traj, an_threshold, an_first_touch); });
  }

  CommonOpts sweep_common;
  SweepOpts sweep_opts;
  {
    auto* cmd = app.add_subcommand("sweep", "sample + eval across a guidance-parameter grid");
    add_common(cmd, sweep_common);
    cmd->add_option("--param", sweep_opts.param, "swept parameter: gamma|s|c|m")
        ->required()
        ->check(CLI::IsMember({"gamma", "s", "c", "m"}));
    cmd->add_option("--grid", sweep_opts.grid, "comma-separated values")
        ->required()
        ->delimiter(',');
    cmd->add_option("--eps", sweep_opts.eps_path, "epsilon-model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--clf", sweep_opts.clf_path, "classifier checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--jobs", sweep_opts.jobs, "grid points to run in parallel");
    cmd->callback([&] { cmd_sweep(sweep_common, sweep_opts); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error:usage: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error:" << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error:config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
