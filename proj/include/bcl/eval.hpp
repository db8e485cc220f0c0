#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "bcl/error.hpp"
#include "bcl/geometry.hpp"

namespace bcl {

enum class EvalProtocol { knn, linear };

struct EvalReport {
  EvalProtocol protocol = EvalProtocol::knn;
  double top1_accuracy = 0.0;
  std::size_t n_test = 0;
  std::size_t k_or_epochs = 0;
};

struct LabeledReps {
  std::vector<UnitRep> reps;
  std::vector<std::size_t> labels;

  std::size_t size() const { return reps.size(); }
  void validate() const {
    if (reps.size() != labels.size()) {
      throw Error(ErrorCode::dimension_mismatch, "reps and labels differ in length");
    }
  }
};

inline std::size_t class_count(const LabeledReps& a, const LabeledReps& b) {
  std::size_t n = 0;
  for (std::size_t y : a.labels) n = std::max(n, y + 1);
  for (std::size_t y : b.labels) n = std::max(n, y + 1);
  return n;
}

/// Majority vote over the k most similar training reps. Neighbour ranking
/// breaks equal similarity by smaller label; vote ties go to the larger
/// summed similarity, then the smaller class index. Both rules ignore the
/// order of the training set.
inline std::size_t knn_predict(const LabeledReps& train, const UnitRep& query, std::size_t k,
                               std::size_t n_classes) {
  std::vector<std::pair<double, std::size_t>> scored;  // (similarity, label)
  scored.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    scored.emplace_back(similarity(query, train.reps[i]), train.labels[i]);
  }
  auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    better);
  std::vector<std::size_t> votes(n_classes, 0);
  std::vector<double> mass(n_classes, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    ++votes[scored[i].second];
    mass[scored[i].second] += scored[i].first;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < n_classes; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best])) best = c;
  }
  return best;
}

inline EvalReport knn_eval(const LabeledReps& train, const LabeledReps& test, std::size_t k) {
  train.validate();
  test.validate();
  if (k < 1) throw Error(ErrorCode::precondition_violated, "k must be >= 1");
  if (k > train.size()) {
    throw Error(ErrorCode::k_too_large, "k=" + std::to_string(k) + " exceeds training size " +
                                            std::to_string(train.size()));
  }
  const std::size_t n_classes = class_count(train, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (knn_predict(train, test.reps[i], k, n_classes) == test.labels[i]) ++correct;
  }
  const double acc = test.size() ? static_cast<double>(correct) / test.size() : 0.0;
  return {EvalProtocol::knn, acc, test.size(), k};
}

// ---------------------------------------------------------------------------
// Linear probe: multinomial logistic regression on frozen reps.

struct LinearProbe {
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  Vec w;  // n_classes x dim, row-major
  Vec b;
  std::vector<double> loss_history;  // training loss before each epoch's step

  std::size_t predict(const UnitRep& r) const {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < n_classes; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < dim; ++j) s += w[c * dim + j] * r[j];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    return best;
  }
};

struct ProbeGradient {
  double loss = 0.0;
  Vec d_w;
  Vec d_b;
};

/// Mean softmax cross-entropy and its gradient.
inline ProbeGradient probe_loss_and_grad(const LinearProbe& probe, const LabeledReps& data) {
  const std::size_t nc = probe.n_classes;
  const std::size_t d = probe.dim;
  ProbeGradient g{0.0, Vec(nc * d, 0.0), Vec(nc, 0.0)};
  Vec logits(nc);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.reps[i];
    for (std::size_t c = 0; c < nc; ++c) {
      double s = probe.b[c];
      for (std::size_t j = 0; j < d; ++j) s += probe.w[c * d + j] * x[j];
      logits[c] = s;
    }
    const double lse = lse_scaled(1.0, logits);
    g.loss += (lse - logits[data.labels[i]]) * inv_n;
    for (std::size_t c = 0; c < nc; ++c) {
      const double p = std::exp(logits[c] - lse) - (c == data.labels[i] ? 1.0 : 0.0);
      g.d_b[c] += p * inv_n;
      for (std::size_t j = 0; j < d; ++j) g.d_w[c * d + j] += p * x[j] * inv_n;
    }
  }
  return g;
}

/// Full-batch gradient descent from zero weights.
inline LinearProbe train_linear_probe(const LabeledReps& train, std::size_t n_classes,
                                      std::size_t epochs, double lr) {
  train.validate();
  if (n_classes < 2) throw Error(ErrorCode::precondition_violated, "probe needs >= 2 classes");
  if (epochs < 1) throw Error(ErrorCode::precondition_violated, "probe needs epochs >= 1");
  if (train.size() == 0) throw Error(ErrorCode::empty_input, "empty probe training set");
  LinearProbe probe;
  probe.n_classes = n_classes;
  probe.dim = train.reps.front().dim();
  probe.w.assign(n_classes * probe.dim, 0.0);
  probe.b.assign(n_classes, 0.0);
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto g = probe_loss_and_grad(probe, train);
    probe.loss_history.push_back(g.loss);
    for (std::size_t i = 0; i < probe.w.size(); ++i) probe.w[i] -= lr * g.d_w[i];
    for (std::size_t c = 0; c < n_classes; ++c) probe.b[c] -= lr * g.d_b[c];
  }
  return probe;
}

inline EvalReport linear_probe(const LabeledReps& train, const LabeledReps& test,
                               std::size_t epochs, double lr) {
  test.validate();
  const auto probe = train_linear_probe(train, class_count(train, test), epochs, lr);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (probe.predict(test.reps[i]) == test.labels[i]) ++correct;
  }
  const double acc = test.size() ? static_cast<double>(correct) / test.size() : 0.0;
  return {EvalProtocol::linear, acc, test.size(), epochs};
}

}  // namespace bcl
