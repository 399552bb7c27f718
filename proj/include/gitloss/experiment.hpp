#pragma once

// Training runs and lambda sweeps: the machinery behind the `train` and
// `sweep` commands.
//
// Run directory layout:
//   out/config.snapshot   resolved settings, key = value
//   out/epochs.csv        per-epoch metrics
//   out/embeddings.csv    evaluation-split features of the final model
//   out/model.ckpt        network + centers
//   out/sweep.csv         sweep results (sweep only)
//   out/figures/*.svg

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "gitloss/csv.hpp"
#include "gitloss/data.hpp"
#include "gitloss/errors.hpp"
#include "gitloss/log.hpp"
#include "gitloss/losses.hpp"
#include "gitloss/metrics.hpp"
#include "gitloss/network.hpp"
#include "gitloss/optim.hpp"
#include "gitloss/plot.hpp"

namespace gitloss {

enum class OptimizerKind { sgd, adam };

struct RunConfig {
  std::string train_images;
  std::string train_labels;
  std::string val_images;
  std::string val_labels;
  std::size_t train_limit = 0;  // 0 = whole file
  std::size_t val_limit = 0;

  MlpConfig model = [] {
    MlpConfig m;
    m.feature_dim = 2;
    return m;
  }();
  LossWeights weights{0.0001, 0.0, 0.5};

  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 0.001;
  double momentum = 0.9;
  double lr_decay_factor = 10.0;
  std::vector<std::size_t> lr_decay_epochs{10, 15};

  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  std::size_t runs = 3;
  std::size_t jobs = 1;
  std::string out_dir = "run";

  std::vector<double> lambda_c_grid{0.0001, 0.001, 0.01, 0.1, 1};
  std::vector<double> lambda_g_grid{0, 0.0001, 0.001, 0.01, 0.1, 1, 1.5, 2};

  LrSchedule schedule() const { return {lr, lr_decay_factor, lr_decay_epochs}; }
};

// ---------------------------------------------------------------------------
// Settings: built-in defaults < config file < command-line flags. Every
// source goes through apply_setting so all three validate the same way.

namespace detail {

template <typename T>
std::vector<T> parse_list(const std::string& value, const std::string& key) {
  std::vector<T> out;
  if (csv::trim(value).empty()) return out;
  for (auto field : csv::split(value)) {
    if constexpr (std::is_floating_point_v<T>) {
      out.push_back(csv::parse_double(field, key));
    } else {
      out.push_back(static_cast<T>(csv::parse_index(field, key)));
    }
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += csv::num(items[k]);
    } else {
      out += std::to_string(items[k]);
    }
  }
  return out;
}

inline std::string normalize_key(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

}  // namespace detail

inline void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = detail::normalize_key(std::string(csv::trim(raw_key)));
  const std::string value(csv::trim(raw_value));
  auto num = [&] { return csv::parse_double(value, key); };
  auto count = [&] { return csv::parse_index(value, key); };

  if (key == "seed") cfg.seed = count();
  else if (key == "out") cfg.out_dir = value;
  else if (key == "lambda-c") cfg.weights.lambda_c = num();
  else if (key == "lambda-g") cfg.weights.lambda_g = num();
  else if (key == "alpha") cfg.weights.alpha = num();
  else if (key == "epochs") cfg.epochs = count();
  else if (key == "batch-size") cfg.batch_size = count();
  else if (key == "lr") cfg.lr = num();
  else if (key == "momentum") cfg.momentum = num();
  else if (key == "lr-decay-factor") cfg.lr_decay_factor = num();
  else if (key == "lr-decay-epochs") cfg.lr_decay_epochs = detail::parse_list<std::size_t>(value, key);
  else if (key == "optimizer") {
    if (value == "sgd") cfg.optimizer = OptimizerKind::sgd;
    else if (value == "adam") cfg.optimizer = OptimizerKind::adam;
    else throw ParameterError("optimizer must be sgd or adam, got '" + value + "'");
  } else if (key == "feature-dim") cfg.model.feature_dim = count();
  else if (key == "hidden-dims") cfg.model.hidden_dims = detail::parse_list<std::size_t>(value, key);
  else if (key == "activation") {
    if (value == "relu") cfg.model.activation.kind = ActivationKind::relu;
    else if (value == "leaky-relu" || value == "leaky_relu") cfg.model.activation.kind = ActivationKind::leaky_relu;
    else throw ParameterError("activation must be relu or leaky-relu, got '" + value + "'");
  } else if (key == "leaky-slope") cfg.model.activation.slope = num();
  else if (key == "runs") cfg.runs = count();
  else if (key == "jobs") cfg.jobs = count();
  else if (key == "mnist-images") cfg.train_images = value;
  else if (key == "mnist-labels") cfg.train_labels = value;
  else if (key == "mnist-val-images") cfg.val_images = value;
  else if (key == "mnist-val-labels") cfg.val_labels = value;
  else if (key == "mnist-dir") {
    auto pick = [&](const std::string& stem) {
      const auto plain = (std::filesystem::path(value) / stem).string();
      if (std::filesystem::exists(plain)) return plain;
      if (std::filesystem::exists(plain + ".gz")) return plain + ".gz";
      return plain;
    };
    cfg.train_images = pick("train-images-idx3-ubyte");
    cfg.train_labels = pick("train-labels-idx1-ubyte");
    cfg.val_images = pick("t10k-images-idx3-ubyte");
    cfg.val_labels = pick("t10k-labels-idx1-ubyte");
  } else if (key == "train-limit") cfg.train_limit = count();
  else if (key == "val-limit") cfg.val_limit = count();
  else if (key == "lambda-c-grid") cfg.lambda_c_grid = detail::parse_list<double>(value, key);
  else if (key == "lambda-g-grid") cfg.lambda_g_grid = detail::parse_list<double>(value, key);
  else throw ParameterError("unknown setting '" + raw_key + "'");
}

/// `key = value` lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                          const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t start = 0, line_no = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = csv::trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw FormatError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      out.emplace_back(std::string(csv::trim(line.substr(0, eq))),
                       std::string(csv::trim(line.substr(eq + 1))));
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  for (const auto& [k, v] : parse_config_text(csv::read_text(path), path)) apply_setting(cfg, k, v);
}

inline std::string config_snapshot(const RunConfig& c) {
  std::map<std::string, std::string> kv{
      {"seed", std::to_string(c.seed)},
      {"out", c.out_dir},
      {"lambda-c", csv::num(c.weights.lambda_c)},
      {"lambda-g", csv::num(c.weights.lambda_g)},
      {"alpha", csv::num(c.weights.alpha)},
      {"epochs", std::to_string(c.epochs)},
      {"batch-size", std::to_string(c.batch_size)},
      {"lr", csv::num(c.lr)},
      {"momentum", csv::num(c.momentum)},
      {"lr-decay-factor", csv::num(c.lr_decay_factor)},
      {"lr-decay-epochs", detail::join(c.lr_decay_epochs)},
      {"optimizer", c.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
      {"feature-dim", std::to_string(c.model.feature_dim)},
      {"hidden-dims", detail::join(c.model.hidden_dims)},
      {"activation", c.model.activation.kind == ActivationKind::relu ? "relu" : "leaky-relu"},
      {"leaky-slope", csv::num(c.model.activation.slope)},
      {"runs", std::to_string(c.runs)},
      {"jobs", std::to_string(c.jobs)},
      {"mnist-images", c.train_images},
      {"mnist-labels", c.train_labels},
      {"mnist-val-images", c.val_images},
      {"mnist-val-labels", c.val_labels},
      {"train-limit", std::to_string(c.train_limit)},
      {"val-limit", std::to_string(c.val_limit)},
      {"lambda-c-grid", detail::join(c.lambda_c_grid)},
      {"lambda-g-grid", detail::join(c.lambda_g_grid)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline void validate(const RunConfig& c) {
  c.model.validate();
  c.weights.validate();
  if (c.runs < 1) throw ParameterError("runs must be >= 1");
  if (c.batch_size < 1) throw ParameterError("batch-size must be >= 1");
  if (c.jobs < 1) throw ParameterError("jobs must be >= 1");
  if (c.optimizer == OptimizerKind::sgd) {
    SgdConfig{c.lr, c.momentum}.validate();
  } else {
    AdamConfig a;
    a.lr = c.lr;
    a.validate();
  }
  if (!(c.lr_decay_factor > 0.0)) throw ParameterError("lr-decay-factor must be > 0");
  for (const auto* path : {&c.train_images, &c.train_labels, &c.val_images, &c.val_labels}) {
    if (path->empty()) {
      throw ParameterError("dataset paths are required (--mnist-dir, or --mnist-images/--mnist-labels "
                           "and --mnist-val-images/--mnist-val-labels)");
    }
    if (!std::filesystem::exists(*path)) throw IoError("dataset file not found: " + *path);
  }
}

struct DataSplits {
  Dataset train;
  Dataset val;
};

inline DataSplits load_splits(const RunConfig& c) {
  DataSplits s;
  s.train = take(load_idx(c.train_images, c.train_labels), c.train_limit);
  s.val = take(load_idx(c.val_images, c.val_labels), c.val_limit);
  return s;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;       // mean per-sample joint loss over the epoch
  double train_acc = 0.0;  // running accuracy over the epoch's batches
  double val_acc = 0.0;
  double inter_dist = 0.0;
  double intra_dist = 0.0;
};

struct Evaluation {
  EmbeddingSet embeddings;
  double accuracy = 0.0;
  double inter_dist = 0.0;
  double intra_dist = 0.0;
};

/// Forward pass over a whole split in chunks. Also reports the inter/intra
/// distances of the feature layer.
inline Evaluation evaluate(const MlpState& state, const Dataset& ds, std::size_t chunk = 2000) {
  Evaluation ev;
  ev.embeddings.features = Matrix(ds.size(), state.config.feature_dim);
  ev.embeddings.labels = ds.labels;
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t stop = std::min(ds.size(), start + chunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = gather(ds, idx);
    const ForwardCache fc = forward(state, b.inputs);
    const auto pred = argmax_rows(fc.logits);
    for (std::size_t r = 0; r < pred.size(); ++r) {
      hits += pred[r] == b.labels[r];
      auto src = fc.features.row(r);
      std::copy(src.begin(), src.end(), ev.embeddings.features.row(start + r).begin());
    }
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(ds.size());
  if (!ev.embeddings.features.all_finite()) {
    ev.inter_dist = ev.intra_dist = std::nan("");
    return ev;
  }
  const DistanceReport rep = distance_report(ev.embeddings);
  ev.inter_dist = rep.inter_dist;
  ev.intra_dist = rep.intra_dist;
  return ev;
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  MlpState state;
  CenterBank bank;
  double final_loss = 0.0;  // last epoch's mean loss (0 if no epochs)
  double train_acc = 0.0;   // full pass over the training split
  Evaluation val;
};

/// One seeded training run. Centers are updated after each optimizer step.
/// WithGitTerm = false compiles the git term out of the loss.
template <bool WithGitTerm = true>
RunResult train_run(const RunConfig& cfg, const DataSplits& data, std::uint64_t seed) {
  cfg.model.validate();
  cfg.weights.validate();
  MlpConfig model = cfg.model;
  model.input_dim = data.train.images.cols();
  model.n_classes = data.train.n_classes;

  const SeededRng root(seed);
  SeededRng init_rng = root.split(0);
  RunResult res;
  res.seed = seed;
  res.state = init(model, init_rng);
  res.bank = CenterBank(model.n_classes, model.feature_dim);
  const std::uint64_t shuffle_seed = root.split(1).next_u64();

  SgdState sgd;
  AdamState adam;
  const LrSchedule schedule = cfg.schedule();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule_lr(schedule, epoch);
    const auto plan = batch_indices(data.train.size(), {cfg.batch_size, shuffle_seed, epoch});
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      try {
        const Batch batch = gather(data.train, plan[bi]);
        const ForwardCache fc = forward(res.state, batch.inputs);
        const LossOutput loss =
            joint_loss<WithGitTerm>(fc.features, batch.labels, fc.logits, res.bank, cfg.weights);
        if (!std::isfinite(loss.value)) throw NumericError("loss is not finite");
        loss_sum += loss.value;
        const auto pred = argmax_rows(fc.logits);
        for (std::size_t r = 0; r < pred.size(); ++r) hits += pred[r] == batch.labels[r];

        ParamGrads grads = backward(res.state, fc, loss.grad_logits, loss.grad_features);
        if (cfg.optimizer == OptimizerKind::sgd) {
          sgd_step(res.state.params, grads, SgdConfig{lr, cfg.momentum}, sgd);
        } else {
          AdamConfig ac;
          ac.lr = lr;
          adam_step(res.state.params, grads, ac, adam);
        }
        res.bank = update_centers(res.bank, fc.features, batch.labels, cfg.weights.alpha);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("training diverged at epoch {} batch {} (seed {}): {}", epoch + 1,
                                       bi, seed, e.what()));
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.loss = loss_sum / static_cast<double>(data.train.size());
    rec.train_acc = static_cast<double>(hits) / static_cast<double>(data.train.size());
    const Evaluation ev = evaluate(res.state, data.val);
    rec.val_acc = ev.accuracy;
    rec.inter_dist = ev.inter_dist;
    rec.intra_dist = ev.intra_dist;
    log::info("seed {} epoch {}/{}: loss {:.4f} train {:.2f}% val {:.2f}% inter {:.3f} intra {:.3f}",
              seed, rec.epoch, cfg.epochs, rec.loss, 100 * rec.train_acc, 100 * rec.val_acc,
              rec.inter_dist, rec.intra_dist);
    res.epochs.push_back(rec);
  }
  res.final_loss = res.epochs.empty() ? 0.0 : res.epochs.back().loss;
  res.train_acc = evaluate(res.state, data.train).accuracy;
  res.val = evaluate(res.state, data.val);
  return res;
}

inline std::string format_epochs(const std::vector<EpochRecord>& epochs) {
  std::string out = "epoch,lr,loss,train_acc,val_acc,inter_dist,intra_dist\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{},{},{},{},{},{}\n", e.epoch, csv::num(e.lr), csv::num(e.loss),
                       csv::num(e.train_acc), csv::num(e.val_acc), csv::num(e.inter_dist),
                       csv::num(e.intra_dist));
  }
  return out;
}

/// Writes every artifact of a finished run into cfg.out_dir.
inline void write_run_artifacts(const RunConfig& cfg, const RunResult& run) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "figures");
  csv::write_text((out / "config.snapshot").string(), config_snapshot(cfg));
  csv::write_text((out / "epochs.csv").string(), format_epochs(run.epochs));
  csv::write_embeddings((out / "embeddings.csv").string(), run.val.embeddings);
  save_checkpoint((out / "model.ckpt").string(), run.state, run.bank);
  if (run.state.config.feature_dim == 2) {
    csv::write_text((out / "figures" / "scatter.svg").string(),
                    scatter_svg(run.val.embeddings,
                                fmt::format("Evaluation features (lambda_c={}, lambda_g={})",
                                            csv::num(cfg.weights.lambda_c),
                                            csv::num(cfg.weights.lambda_g))));
  }
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRecord {
  double lambda_c = 0.0;
  double lambda_g = 0.0;
  double loss = 0.0;
  double train_acc_pct = 0.0;
  double val_acc_pct = 0.0;
  double inter_dist = 0.0;
  double intra_dist = 0.0;
  std::size_t runs = 0;
  std::vector<std::uint64_t> seeds;
  bool failed = false;
  std::string failure;
};

inline std::vector<std::uint64_t> run_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < cfg.runs; ++r) seeds.push_back(cfg.seed + r);
  return seeds;
}

/// R seeded runs of one (lambda_c, lambda_g) cell, averaged.
template <bool WithGitTerm = true>
SweepRecord run_cell(const RunConfig& base, const DataSplits& data, double lambda_c, double lambda_g) {
  RunConfig cfg = base;
  cfg.weights.lambda_c = lambda_c;
  cfg.weights.lambda_g = lambda_g;
  SweepRecord rec;
  rec.lambda_c = lambda_c;
  rec.lambda_g = lambda_g;
  rec.seeds = run_seeds(cfg);
  rec.runs = rec.seeds.size();
  try {
    for (auto seed : rec.seeds) {
      const RunResult r = train_run<WithGitTerm>(cfg, data, seed);
      rec.loss += r.final_loss;
      rec.train_acc_pct += 100.0 * r.train_acc;
      rec.val_acc_pct += 100.0 * r.val.accuracy;
      rec.inter_dist += r.val.inter_dist;
      rec.intra_dist += r.val.intra_dist;
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.failure = e.what();
    return rec;
  }
  const double n = static_cast<double>(rec.runs);
  rec.loss /= n;
  rec.train_acc_pct /= n;
  rec.val_acc_pct /= n;
  rec.inter_dist /= n;
  rec.intra_dist /= n;
  return rec;
}

/// Metric columns first, then run bookkeeping.
inline std::string format_sweep(const std::vector<SweepRecord>& records) {
  std::string out =
      "lambda_c,lambda_g,loss,train_acc_pct,val_acc_pct,inter_dist,intra_dist,runs,seeds,status\n";
  for (const auto& r : records) {
    std::string seeds;
    for (std::size_t k = 0; k < r.seeds.size(); ++k) seeds += (k ? ";" : "") + std::to_string(r.seeds[k]);
    if (r.failed) {
      std::string why = r.failure;
      for (char& c : why)
        if (c == ',' || c == '\n') c = ' ';
      out += fmt::format("{},{},,,,,,{},{},failed: {}\n", csv::num(r.lambda_c), csv::num(r.lambda_g),
                         r.runs, seeds, why);
    } else {
      out += fmt::format("{},{},{},{},{},{},{},{},{},ok\n", csv::num(r.lambda_c), csv::num(r.lambda_g),
                         csv::num(r.loss), csv::num(r.train_acc_pct), csv::num(r.val_acc_pct),
                         csv::num(r.inter_dist), csv::num(r.intra_dist), r.runs, seeds);
    }
  }
  return out;
}

/// Every cell of lambda_c_grid x lambda_g_grid (lambda_c outer). Cells run
/// on up to cfg.jobs worker threads; the returned records and the CSV are
/// in grid order regardless of completion order.
template <bool WithGitTerm = true>
std::vector<SweepRecord> run_sweep(const RunConfig& cfg, const DataSplits& data) {
  if (cfg.lambda_c_grid.empty() || cfg.lambda_g_grid.empty()) {
    throw ParameterError("sweep grid must be non-empty");
  }
  std::vector<std::pair<double, double>> cells;
  for (double lc : cfg.lambda_c_grid)
    for (double lg : cfg.lambda_g_grid) cells.emplace_back(lc, lg);

  std::vector<SweepRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink;
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      SweepRecord rec = run_cell<WithGitTerm>(cfg, data, cells[k].first, cells[k].second);
      std::lock_guard lock(sink);
      if (rec.failed) {
        log::warn("cell lambda_c={} lambda_g={} failed: {}", rec.lambda_c, rec.lambda_g, rec.failure);
      } else {
        log::info("cell lambda_c={} lambda_g={}: val {:.2f}% inter {:.3f} intra {:.3f}", rec.lambda_c,
                  rec.lambda_g, rec.val_acc_pct, rec.inter_dist, rec.intra_dist);
      }
      records[k] = std::move(rec);
    }
  };
  const std::size_t n_workers = std::min(cfg.jobs, cells.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  return records;
}

}  // namespace gitloss
