// gitloss command-line runner: train | sweep | curves | scatter | verify | gradcheck

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gitloss/csv.hpp"
#include "gitloss/experiment.hpp"
#include "gitloss/gradcheck.hpp"
#include "gitloss/log.hpp"
#include "gitloss/metrics.hpp"
#include "gitloss/plot.hpp"

namespace fs = std::filesystem;
using namespace gitloss;

namespace {

// String-valued flags applied after the config file, so that flags win.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* app, const std::string& name, const std::string& help) {
    options.emplace_back(name, app->add_option("--" + name, values[name], help));
  }

  std::vector<std::pair<std::string, std::string>> given() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) out.emplace_back(name, values.at(name));
    return out;
  }
};

// Settings for the lightweight commands: file entries first, then flags.
std::map<std::string, std::string> merged_settings(const std::string& config_path, const FlagSet& flags) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) {
    for (auto& [k, v] : parse_config_text(csv::read_text(config_path), config_path)) {
      kv[detail::normalize_key(k)] = v;
    }
  }
  for (auto& [k, v] : flags.given()) kv[k] = v;
  return kv;
}

double get_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : csv::parse_double(it->second, key);
}
std::uint64_t get_count(const std::map<std::string, std::string>& kv, const std::string& key,
                        std::uint64_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : csv::parse_index(it->second, key);
}
std::string get_string(const std::map<std::string, std::string>& kv, const std::string& key,
                       std::string fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? std::move(fallback) : it->second;
}

RunConfig resolve_run_config(const std::string& config_path, const FlagSet& flags) {
  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  for (const auto& [k, v] : flags.given()) apply_setting(cfg, k, v);
  validate(cfg);
  return cfg;
}

void add_run_flags(CLI::App* app, FlagSet& flags) {
  flags.add(app, "seed", "base random seed");
  flags.add(app, "out", "output directory");
  flags.add(app, "lambda-c", "center loss weight");
  flags.add(app, "lambda-g", "git term weight");
  flags.add(app, "alpha", "center update rate in (0, 1]");
  flags.add(app, "epochs", "training epochs");
  flags.add(app, "batch-size", "mini-batch size");
  flags.add(app, "lr", "initial learning rate");
  flags.add(app, "lr-decay-epochs", "comma list of epochs at which lr is divided by the decay factor");
  flags.add(app, "lr-decay-factor", "learning-rate decay factor");
  flags.add(app, "momentum", "sgd momentum");
  flags.add(app, "optimizer", "sgd | adam");
  flags.add(app, "feature-dim", "feature (embedding) dimension");
  flags.add(app, "hidden-dims", "comma list of hidden layer widths");
  flags.add(app, "activation", "relu | leaky-relu");
  flags.add(app, "runs", "seeded repeats per configuration");
  flags.add(app, "mnist-dir", "directory holding the four canonical MNIST IDX files (.gz accepted)");
  flags.add(app, "mnist-images", "training images (IDX, optionally .gz)");
  flags.add(app, "mnist-labels", "training labels (IDX, optionally .gz)");
  flags.add(app, "mnist-val-images", "evaluation images (IDX, optionally .gz)");
  flags.add(app, "mnist-val-labels", "evaluation labels (IDX, optionally .gz)");
  flags.add(app, "train-limit", "use only the first N training samples (0 = all)");
  flags.add(app, "val-limit", "use only the first N evaluation samples (0 = all)");
}

int cmd_train(const RunConfig& cfg) {
  log::info("loading data");
  const DataSplits data = load_splits(cfg);
  log::info("train {} samples, eval {} samples", data.train.size(), data.val.size());
  const RunResult run = train_run(cfg, data, cfg.seed);
  write_run_artifacts(cfg, run);
  fmt::print("val_acc={:.4f} train_acc={:.4f} inter_dist={:.4f} intra_dist={:.4f}\n", run.val.accuracy,
             run.train_acc, run.val.inter_dist, run.val.intra_dist);
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const DataSplits data = load_splits(cfg);
  const auto records = run_sweep(cfg, data);
  fs::create_directories(cfg.out_dir);
  csv::write_text((fs::path(cfg.out_dir) / "config.snapshot").string(), config_snapshot(cfg));
  const std::string table = format_sweep(records);
  csv::write_text((fs::path(cfg.out_dir) / "sweep.csv").string(), table);
  fmt::print("{}", table);
  return 0;
}

int cmd_curves(const std::map<std::string, std::string>& kv, bool svg) {
  const double lc = get_double(kv, "lambda-c", 1.0);
  const double lg = get_double(kv, "lambda-g", 1.0);
  const double range = get_double(kv, "range", 2.0);
  const auto steps = get_count(kv, "steps", 401);
  const fs::path out(get_string(kv, "out", "curves"));
  const auto rows = loss_curves(lc, lg, range, steps);
  fs::create_directories(out);
  csv::write_text((out / "curves.csv").string(), format_curves(rows));
  if (svg) {
    fs::create_directories(out / "figures");
    csv::write_text((out / "figures" / "curves.svg").string(), curves_svg(rows, lc, lg));
  }
  fmt::print("wrote {} rows to {}\n", rows.size(), (out / "curves.csv").string());
  return 0;
}

int cmd_scatter(const std::map<std::string, std::string>& kv) {
  const std::string input = get_string(kv, "embeddings", "");
  if (input.empty()) throw ParameterError("--embeddings is required");
  const fs::path out(get_string(kv, "out", "."));
  const EmbeddingSet emb = csv::read_embeddings(input);
  const std::string doc = scatter_svg(emb, get_string(kv, "title", fs::path(input).filename().string()));
  fs::create_directories(out / "figures");
  const auto path = (out / "figures" / "scatter.svg").string();
  csv::write_text(path, doc);
  fmt::print("wrote {} points to {}\n", emb.labels.size(), path);
  return 0;
}

int cmd_verify(const std::map<std::string, std::string>& kv) {
  const std::string input = get_string(kv, "embeddings", "");
  if (input.empty()) throw ParameterError("--embeddings is required");
  const auto n_pairs = get_count(kv, "pairs", 6000);
  const auto seed = get_count(kv, "seed", 1);
  const fs::path out(get_string(kv, "out", "."));
  const EmbeddingSet emb = csv::read_embeddings(input);
  const auto pairs = sample_verification_pairs(emb, n_pairs, seed);
  const VerificationResult res = verify_10fold(pairs);

  std::string table = "fold,threshold,accuracy\n";
  for (std::size_t f = 0; f < kFolds; ++f) {
    table += fmt::format("{},{},{}\n", f + 1, csv::num(res.threshold[f]), csv::num(res.fold_accuracy[f]));
  }
  table += fmt::format("mean,,{}\n", csv::num(res.accuracy));
  fs::create_directories(out);
  csv::write_text((out / "verify.csv").string(), table);
  fmt::print("{}", table);
  fmt::print("verification accuracy {:.4f} over {} pairs\n", res.accuracy, pairs.size());
  return 0;
}

int cmd_gradcheck(const std::map<std::string, std::string>& kv) {
  const auto seed = get_count(kv, "seed", 1);
  const auto repeat = get_count(kv, "repeat", 1);
  GradcheckOptions opt;
  opt.threshold = get_double(kv, "threshold", 1e-5);
  std::string table = "seed,check,max_rel_error,status\n";
  bool ok = true;
  for (std::uint64_t s = seed; s < seed + repeat; ++s) {
    const GradcheckReport rep = run_gradcheck(s, opt);
    for (const auto& c : rep.checks) {
      table += fmt::format("{},{},{},{}\n", s, c.name, csv::num(c.max_rel_error), c.passed ? "pass" : "FAIL");
    }
    ok = ok && rep.all_passed();
  }
  if (kv.contains("out")) {
    const fs::path out(kv.at("out"));
    fs::create_directories(out);
    csv::write_text((out / "gradcheck.csv").string(), table);
  }
  fmt::print("{}", table);
  fmt::print("{} (threshold {})\n", ok ? "all gradient checks passed" : "gradient check FAILED",
             csv::num(opt.threshold));
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Softmax + center + git loss: training, sweeps, curves, plots, verification, gradient checks"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress logging");

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value settings file (flags take precedence)")
        ->check(CLI::ExistingFile);
  };

  auto* train = app.add_subcommand("train", "train one model and write its artifacts");
  FlagSet train_flags;
  add_run_flags(train, train_flags);
  add_config(train);

  auto* sweep = app.add_subcommand("sweep", "lambda_c x lambda_g grid, R seeded runs per cell");
  FlagSet sweep_flags;
  add_run_flags(sweep, sweep_flags);
  sweep_flags.add(sweep, "lambda-c-grid", "comma list of lambda_c values");
  sweep_flags.add(sweep, "lambda-g-grid", "comma list of lambda_g values");
  sweep_flags.add(sweep, "jobs", "parallel worker threads");
  add_config(sweep);

  auto* curves = app.add_subcommand("curves", "L_C and L_G as functions of the offset x - c");
  FlagSet curve_flags;
  curve_flags.add(curves, "lambda-c", "center loss weight (default 1)");
  curve_flags.add(curves, "lambda-g", "git term weight (default 1)");
  curve_flags.add(curves, "range", "half-width of the offset range (default 2)");
  curve_flags.add(curves, "steps", "number of samples (default 401)");
  curve_flags.add(curves, "seed", "unused; accepted for uniformity");
  curve_flags.add(curves, "out", "output directory (default ./curves)");
  bool no_svg = false;
  curves->add_flag("--no-svg", no_svg, "skip the SVG figure");
  add_config(curves);

  auto* scatter = app.add_subcommand("scatter", "SVG scatter of 2-D features colored by class");
  FlagSet scatter_flags;
  scatter_flags.add(scatter, "embeddings", "embedding CSV (label,f1,f2)");
  scatter_flags.add(scatter, "title", "figure title");
  scatter_flags.add(scatter, "seed", "unused; accepted for uniformity");
  scatter_flags.add(scatter, "out", "output directory (figure goes to OUT/figures/scatter.svg)");
  add_config(scatter);

  auto* verify = app.add_subcommand("verify", "10-fold Euclidean-distance verification on sampled pairs");
  FlagSet verify_flags;
  verify_flags.add(verify, "embeddings", "embedding CSV (label,f1,...,fd)");
  verify_flags.add(verify, "pairs", "number of pairs, half same-class (default 6000)");
  verify_flags.add(verify, "seed", "pair sampling seed (default 1)");
  verify_flags.add(verify, "out", "output directory for verify.csv");
  add_config(verify);

  auto* gradcheck = app.add_subcommand("gradcheck", "analytic gradients vs central differences");
  FlagSet grad_flags;
  grad_flags.add(gradcheck, "seed", "first seed (default 1)");
  grad_flags.add(gradcheck, "repeat", "number of consecutive seeds (default 1)");
  grad_flags.add(gradcheck, "threshold", "max relative error allowed (default 1e-5)");
  grad_flags.add(gradcheck, "out", "optional output directory for gradcheck.csv");
  add_config(gradcheck);

  CLI11_PARSE(app, argc, argv);
  log::quiet() = quiet;

  try {
    if (train->parsed()) return cmd_train(resolve_run_config(config_path, train_flags));
    if (sweep->parsed()) return cmd_sweep(resolve_run_config(config_path, sweep_flags));
    if (curves->parsed()) return cmd_curves(merged_settings(config_path, curve_flags), !no_svg);
    if (scatter->parsed()) return cmd_scatter(merged_settings(config_path, scatter_flags));
    if (verify->parsed()) return cmd_verify(merged_settings(config_path, verify_flags));
    if (gradcheck->parsed()) return cmd_gradcheck(merged_settings(config_path, grad_flags));
  } catch (const Error& e) {
    log::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    log::error("unexpected failure: {}", e.what());
    return 1;
  }
  return 0;
}
