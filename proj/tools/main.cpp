#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tactfl/tactfl.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tactfl;

std::string g10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override, e.g. --set training.rounds=5")
      ->take_all()
      ->expected(-1);
  cmd->add_option("--out", o.out_dir, "output directory (default: out)");
  cmd->add_option("--seed", o.seed, "master seed for data, partition, model and run");
  cmd->add_option("--workers", o.workers, "client training threads");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    cfg = parse_config(detail::read_file(o.config_path));
  }
  for (const auto& s : o.sets) apply_override(cfg, s);
  if (o.seed) {
    cfg.data.seed = *o.seed;
    cfg.partition.seed = *o.seed;
    cfg.model_seed = *o.seed;
    cfg.run_seed = *o.seed;
  }
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

std::string metrics_header() { return "round,train_loss,head_loss,accuracy,macro_f1,weights\n"; }

std::string metrics_row(const RoundRecord& r) {
  std::string line = std::to_string(r.round);
  line += ',' + g10(r.train_loss);
  line += ',' + g10(r.head_loss);
  line += ',' + g10(r.accuracy);
  line += ',' + g10(r.macro_f1);
  line += ',';
  for (std::size_t i = 0; i < r.weights.size(); ++i) {
    if (i) line += ';';
    line += g10(r.weights[i]);
  }
  line += '\n';
  return line;
}

struct RunArtifacts {
  ExperimentResult result;
  std::string metrics_csv;
  std::string timings_csv;
};

RunArtifacts run_once(const ExperimentConfig& cfg, bool echo) {
  RunArtifacts art;
  art.metrics_csv = metrics_header();
  art.timings_csv = "round,wall_ms\n";
  auto last = std::chrono::steady_clock::now();
  art.result = run_experiment(cfg, [&](const RoundRecord& rec) {
    const auto now = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration_cast<std::chrono::microseconds>(now - last).count() / 1000.0;
    last = now;
    art.metrics_csv += metrics_row(rec);
    art.timings_csv += std::to_string(rec.round) + ',' + g10(ms) + '\n';
    if (echo) {
      std::printf("round %3zu  loss %-12s acc %-8s f1 %s\n", rec.round,
                  g10(rec.train_loss).c_str(), g10(rec.accuracy).c_str(),
                  g10(rec.macro_f1).c_str());
      std::fflush(stdout);
    }
  });
  return art;
}

std::string summarize(const ExperimentConfig& cfg, const ExperimentResult& res) {
  double best_acc = 0.0;
  for (const auto& r : res.rounds) best_acc = std::max(best_acc, r.accuracy);
  std::string s;
  s += "mode:              " + to_string(cfg.mode) + "\n";
  s += "aggregator:        " + to_string(cfg.aggregation.method) + "\n";
  s += "clients:           " + std::to_string(res.num_clients) + "\n";
  s += "rounds:            " + std::to_string(res.rounds.size()) + "\n";
  s += "split fingerprint: " + hex64(res.split_fingerprint) + "\n";
  if (!res.rounds.empty()) {
    s += "final accuracy:    " + g10(res.rounds.back().accuracy) + "\n";
    s += "final macro F1:    " + g10(res.rounds.back().macro_f1) + "\n";
    s += "best accuracy:     " + g10(best_acc) + "\n";
  }
  return s;
}

int do_run(const CommonOpts& opts, const std::string& save_model_path) {
  const ExperimentConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  const RunArtifacts art = run_once(cfg, true);
  detail::write_file(opts.out_dir + "/metrics.csv", art.metrics_csv);
  detail::write_file(opts.out_dir + "/timings.csv", art.timings_csv);
  detail::write_file(opts.out_dir + "/summary.txt", summarize(cfg, art.result));
  detail::write_file(opts.out_dir + "/manifest.txt", run_manifest(cfg, art.result));
  if (!save_model_path.empty()) save_model(save_model_path, art.result.model);
  std::printf("%s", summarize(cfg, art.result).c_str());
  return 0;
}

int do_ablate(const CommonOpts& opts) {
  const ExperimentConfig base = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  const AblationMode modes[] = {AblationMode::kFull, AblationMode::kTctOnly,
                                AblationMode::kSsflOnly, AblationMode::kSupervised};
  std::string table = "mode,final_accuracy,final_macro_f1,best_accuracy,split_fingerprint\n";
  std::optional<std::uint64_t> fingerprint;
  for (AblationMode m : modes) {
    ExperimentConfig cfg = base;
    cfg.mode = m;
    std::printf("== %s ==\n", to_string(m).c_str());
    const RunArtifacts art = run_once(cfg, true);
    if (!fingerprint) {
      fingerprint = art.result.split_fingerprint;
    } else if (*fingerprint != art.result.split_fingerprint) {
      throw protocol_error("ablation arms diverged: split fingerprint " +
                           hex64(art.result.split_fingerprint) + " != " +
                           hex64(*fingerprint));
    }
    detail::write_file(opts.out_dir + "/metrics_" + to_string(m) + ".csv", art.metrics_csv);
    double best = 0.0;
    for (const auto& r : art.result.rounds) best = std::max(best, r.accuracy);
    table += to_string(m) + ',' + g10(art.result.rounds.back().accuracy) + ',' +
             g10(art.result.rounds.back().macro_f1) + ',' + g10(best) + ',' +
             hex64(art.result.split_fingerprint) + '\n';
  }
  detail::write_file(opts.out_dir + "/ablation.csv", table);
  std::printf("%s", table.c_str());
  return 0;
}

void sweep_assign(ExperimentConfig& cfg, const std::string& param, double value) {
  if (param == "window" || param == "window_fraction") cfg.training.window = value;
  else if (param == "tau") cfg.training.tau = value;
  else if (param == "alpha") cfg.partition.alpha = value;
  else if (param == "r_l") cfg.partition.label_missing_rate = value;
  else if (param == "r_m") cfg.partition.modality_missing_rate = value;
  else
    throw config_error("unknown sweep parameter '" + param +
                       "' (window_fraction, tau, alpha, r_l, r_m)");
}

int do_sweep(const CommonOpts& opts, const std::string& param,
             const std::vector<double>& values) {
  if (values.empty()) throw config_error("sweep: no values given");
  const ExperimentConfig base = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  std::string table = "param,value,final_accuracy,final_macro_f1,split_fingerprint\n";
  for (double v : values) {
    ExperimentConfig cfg = base;
    sweep_assign(cfg, param, v);
    cfg.validate();
    std::printf("== %s = %s ==\n", param.c_str(), g10(v).c_str());
    const RunArtifacts art = run_once(cfg, true);
    detail::write_file(opts.out_dir + "/metrics_" + param + "_" + g10(v) + ".csv",
                       art.metrics_csv);
    table += param + ',' + g10(v) + ',' + g10(art.result.rounds.back().accuracy) + ',' +
             g10(art.result.rounds.back().macro_f1) + ',' +
             hex64(art.result.split_fingerprint) + '\n';
  }
  detail::write_file(opts.out_dir + "/sweep.csv", table);
  std::printf("%s", table.c_str());
  return 0;
}

int do_partition_inspect(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve_config(opts);
  fs::create_directories(opts.out_dir);
  const std::vector<MultiModalSample> source = generate(cfg.data);
  std::map<std::uint32_t, int> label_of;
  for (const auto& s : source) label_of[s.sample_id] = s.label;
  const FederatedSplit split = build_split(source, cfg.partition);

  std::string report;
  report += "samples:           " + std::to_string(source.size()) + "\n";
  report += "server labelled:   " + std::to_string(split.server_labelled.size()) + "\n";
  report += "test:              " + std::to_string(split.test.size()) + "\n";
  report += "clients:           " + std::to_string(split.clients.size()) + "\n";
  report += "split fingerprint: " + hex64(split_fingerprint(split)) + "\n\n";
  for (const auto& c : split.clients) {
    std::vector<std::size_t> hist(cfg.data.num_classes, 0);
    for (const auto& s : c.samples) ++hist[static_cast<std::size_t>(label_of.at(s.sample_id))];
    report += "client " + std::to_string(c.client_id) + ": " +
              std::to_string(c.samples.size()) + " samples, classes [";
    for (std::size_t k = 0; k < hist.size(); ++k) {
      if (k) report += ' ';
      report += std::to_string(hist[k]);
    }
    report += "], modalities [";
    bool first = true;
    for (const auto& [id, on] : c.modality_present) {
      if (!first) report += ' ';
      first = false;
      report += std::to_string(id) + (on ? ":on" : ":off");
    }
    report += "]\n";
  }
  detail::write_file(opts.out_dir + "/partition_report.txt", report);
  detail::write_file(opts.out_dir + "/split_manifest.csv", split_manifest(split));
  std::printf("%s", report.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic multi-modal federated learning testbed"};
  app.require_subcommand(1);

  CommonOpts run_opts, ablate_opts, sweep_opts, inspect_opts;
  std::string save_model_path;
  std::string sweep_param;
  std::vector<double> sweep_values;

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_opts);
  run->add_option("--save-model", save_model_path, "write the final model checkpoint");

  CLI::App* ablate = app.add_subcommand("ablate", "run all four ablation arms");
  add_common(ablate, ablate_opts);

  CLI::App* sweep = app.add_subcommand("sweep", "sweep one parameter");
  add_common(sweep, sweep_opts);
  sweep->add_option("--param", sweep_param, "window, tau, alpha, r_l or r_m")->required();
  sweep->add_option("--values", sweep_values, "comma separated values")
      ->required()
      ->delimiter(',');

  CLI::App* inspect = app.add_subcommand("partition-inspect", "report the federated split");
  add_common(inspect, inspect_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return do_run(run_opts, save_model_path);
    if (*ablate) return do_ablate(ablate_opts);
    if (*sweep) return do_sweep(sweep_opts, sweep_param, sweep_values);
    if (*inspect) return do_partition_inspect(inspect_opts);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
