#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gitloss/errors.hpp"
#include "gitloss/losses.hpp"
#include "gitloss/matrix.hpp"
#include "gitloss/rng.hpp"

namespace gitloss {

/// Row-wise argmax; ties go to the lowest index.
inline std::vector<Label> argmax_rows(const Matrix& scores) {
  std::vector<Label> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto row = scores.row(i);
    out[i] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline double accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.empty()) throw ParameterError("accuracy: empty input");
  if (predictions.size() != labels.size()) {
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double accuracy(const Matrix& logits, std::span<const Label> labels) {
  if (logits.empty()) throw ParameterError("accuracy: empty input");
  return accuracy(argmax_rows(logits), labels);
}

struct EmbeddingSet {
  Matrix features;
  std::vector<Label> labels;
};

struct DistanceReport {
  double inter_dist = 0.0;
  double intra_dist = 0.0;
  std::vector<Label> classes;  // class of each centroid row, ascending
  Matrix centroids;
};

/// intra: mean distance of each sample to its own class centroid.
/// inter: mean distance over unordered pairs of class centroids.
/// Only classes that occur in the set take part.
inline DistanceReport distance_report(const EmbeddingSet& emb) {
  const auto& x = emb.features;
  if (x.rows() != emb.labels.size()) {
    throw DimensionError("distance_report: " + std::to_string(x.rows()) + " rows vs " +
                         std::to_string(emb.labels.size()) + " labels");
  }
  if (!x.all_finite()) throw NumericError("distance_report: non-finite feature");

  std::map<Label, std::size_t> slot;
  for (Label y : emb.labels) slot.emplace(y, 0);
  if (slot.size() < 2) {
    throw ParameterError("distance_report: inter-class distance needs at least 2 classes, got " +
                         std::to_string(slot.size()));
  }
  DistanceReport rep;
  for (auto& [label, idx] : slot) {
    idx = rep.classes.size();
    rep.classes.push_back(label);
  }
  const std::size_t d = x.cols();
  rep.centroids = Matrix(rep.classes.size(), d);
  std::vector<std::size_t> count(rep.classes.size(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t k = slot[emb.labels[i]];
    auto c = rep.centroids.row(k);
    auto xi = x.row(i);
    for (std::size_t t = 0; t < d; ++t) c[t] += xi[t];
    ++count[k];
  }
  for (std::size_t k = 0; k < count.size(); ++k)
    for (double& v : rep.centroids.row(k)) v /= static_cast<double>(count[k]);

  double intra = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    intra += std::sqrt(squared_distance(x.row(i), rep.centroids.row(slot[emb.labels[i]])));
  }
  rep.intra_dist = intra / static_cast<double>(x.rows());

  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < rep.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < rep.classes.size(); ++b) {
      inter += std::sqrt(squared_distance(rep.centroids.row(a), rep.centroids.row(b)));
      ++pairs;
    }
  }
  rep.inter_dist = inter / static_cast<double>(pairs);
  return rep;
}

// ---------------------------------------------------------------------------
// Verification: same/different decision by thresholding Euclidean distance.

inline constexpr std::size_t kFolds = 10;

struct VerificationPair {
  std::vector<double> a;
  std::vector<double> b;
  bool same = false;
};

struct VerificationResult {
  double accuracy = 0.0;
  std::array<double, kFolds> fold_accuracy{};
  std::array<double, kFolds> threshold{};
};

namespace detail {

// Accuracy-maximizing threshold for "same <=> distance < threshold" over
// the given training pairs. Candidates are the midpoints between
// consecutive distinct sorted distances, plus one point below the minimum
// and one above the maximum; the first best candidate wins.
inline double best_threshold(std::vector<std::pair<double, bool>> train) {
  std::sort(train.begin(), train.end());
  const std::size_t n = train.size();
  std::size_t total_diff = 0;
  for (const auto& [dist, same] : train) total_diff += !same;

  // Threshold below everything: all predicted "different".
  std::size_t best_correct = total_diff;
  double best = train.front().first - 1.0;
  std::size_t same_below = 0, diff_below = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (train[k].second ? same_below : diff_below) += 1;
    const bool boundary = k + 1 == n || train[k + 1].first > train[k].first;
    if (!boundary) continue;
    const std::size_t correct = same_below + (total_diff - diff_below);
    if (correct > best_correct) {
      best_correct = correct;
      best = k + 1 == n ? train[k].first + 1.0 : 0.5 * (train[k].first + train[k + 1].first);
    }
  }
  return best;
}

}  // namespace detail

/// 10-fold cross-validated verification accuracy from precomputed pair
/// distances. Folds are contiguous slices; callers shuffle beforehand.
inline VerificationResult verify_10fold_distances(std::span<const double> distances,
                                                  const std::vector<bool>& same) {
  const std::size_t n = distances.size();
  if (n != same.size()) throw DimensionError("verify_10fold: distance/label count mismatch");
  if (n < kFolds) {
    throw ParameterError("verify_10fold: need at least 10 pairs, got " + std::to_string(n));
  }
  const auto n_same = static_cast<std::size_t>(std::count(same.begin(), same.end(), true));
  if (n_same == 0 || n_same == n) {
    throw ParameterError("verify_10fold: both same and different pairs are required");
  }
  VerificationResult res;
  for (std::size_t f = 0; f < kFolds; ++f) {
    const std::size_t lo = f * n / kFolds;
    const std::size_t hi = (f + 1) * n / kFolds;
    std::vector<std::pair<double, bool>> train;
    train.reserve(n - (hi - lo));
    for (std::size_t k = 0; k < n; ++k)
      if (k < lo || k >= hi) train.emplace_back(distances[k], same[k]);
    const double threshold = detail::best_threshold(std::move(train));
    std::size_t correct = 0;
    for (std::size_t k = lo; k < hi; ++k) correct += (distances[k] < threshold) == same[k];
    res.threshold[f] = threshold;
    res.fold_accuracy[f] = static_cast<double>(correct) / static_cast<double>(hi - lo);
  }
  res.accuracy = std::accumulate(res.fold_accuracy.begin(), res.fold_accuracy.end(), 0.0) /
                 static_cast<double>(kFolds);
  return res;
}

inline VerificationResult verify_10fold(std::span<const VerificationPair> pairs) {
  std::vector<double> distances;
  std::vector<bool> same;
  distances.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.a.size() != p.b.size()) throw DimensionError("verify_10fold: pair feature sizes differ");
    distances.push_back(std::sqrt(squared_distance(p.a, p.b)));
    same.push_back(p.same);
  }
  return verify_10fold_distances(distances, same);
}

/// Draws n_pairs / 2 same-class and n_pairs - n_pairs / 2 different-class
/// pairs (with replacement) from an embedding set, then shuffles them.
inline std::vector<VerificationPair> sample_verification_pairs(const EmbeddingSet& emb,
                                                               std::size_t n_pairs,
                                                               std::uint64_t seed) {
  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < emb.labels.size(); ++i) by_class[emb.labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw ParameterError("verification needs at least 2 classes, got " +
                         std::to_string(by_class.size()));
  }
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [label, members] : by_class) groups.push_back(&members);

  SeededRng rng(seed);
  auto feature = [&](std::size_t i) {
    auto r = emb.features.row(i);
    return std::vector<double>(r.begin(), r.end());
  };
  std::vector<VerificationPair> pairs;
  pairs.reserve(n_pairs);
  const std::size_t n_same = n_pairs / 2;
  for (std::size_t k = 0; k < n_same; ++k) {
    const auto& g = *groups[rng.below(groups.size())];
    const std::size_t i = g[rng.below(g.size())];
    const std::size_t j = g[rng.below(g.size())];
    pairs.push_back({feature(i), feature(j), true});
  }
  for (std::size_t k = n_same; k < n_pairs; ++k) {
    const std::size_t ga = rng.below(groups.size());
    std::size_t gb = rng.below(groups.size() - 1);
    if (gb >= ga) ++gb;
    const auto& a = *groups[ga];
    const auto& b = *groups[gb];
    pairs.push_back({feature(a[rng.below(a.size())]), feature(b[rng.below(b.size())]), false});
  }
  rng.shuffle(pairs);
  return pairs;
}

}  // namespace gitloss
