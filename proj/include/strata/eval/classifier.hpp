#pragma once

// Downstream recognizer: two convolution blocks and two fully connected
// layers, trained with Adam under stratified k-fold cross-validation.

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "strata/core/rng.hpp"
#include "strata/dataio/dataset.hpp"
#include "strata/dataio/folds.hpp"
#include "strata/nn/layers.hpp"

namespace strata::eval {

using dataio::Dataset;

/// What a classifier predicts: the activity, or the named attribute.
struct Target {
  std::string attribute;  // empty selects the activity label

  static Target activity() { return {}; }
  static Target attr(std::string name) { return {std::move(name)}; }
  bool is_activity() const { return attribute.empty(); }
  std::string name() const { return is_activity() ? "activity" : attribute; }
};

inline std::vector<int> labels_for(const Dataset& ds, const Target& t) {
  return t.is_activity() ? ds.activity_labels() : ds.attribute_labels(t.attribute);
}

inline int class_count(const Dataset& ds, const Target& t) {
  if (t.is_activity()) return static_cast<int>(ds.activity_names.size());
  const auto it = ds.attribute_values.find(t.attribute);
  if (it == ds.attribute_values.end()) throw LabelError("eval", "dataset has no attribute '" + t.attribute + "'");
  return static_cast<int>(it->second.size());
}

struct ClassifierConfig {
  int epochs = 30;
  int batch_size = 32;
  float learning_rate = 5e-3f;
  int conv1_width = 16;
  int conv1_kernel = 9;
  int conv2_width = 32;
  int conv2_kernel = 9;
  int hidden = 64;
  bool average_pooling = false;
  /// Time-averages the second block before the dense layers instead of
  /// flattening it.
  bool global_pooling = true;
  int folds = 5;

  /// Stable digest of the architecture and training budget.
  std::uint64_t hash() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "cls|e%d|b%d|lr%.9g|c%d/%d|c%d/%d|h%d|p%d|g%d|k%d", epochs, batch_size,
                  static_cast<double>(learning_rate), conv1_width, conv1_kernel, conv2_width, conv2_kernel, hidden,
                  average_pooling ? 1 : 0, global_pooling ? 1 : 0, folds);
    return fnv1a(buf);
  }
};

struct Classifier {
  nn::Conv1d conv1, conv2;
  nn::Linear fc1, fc2;
  std::vector<dataio::ChannelStats> input_stats;
  int length = 0;
  int classes = 0;
  bool average_pooling = false;
  bool global_pooling = true;

  Classifier() = default;
  Classifier(int channels, int len, int n_classes, const ClassifierConfig& cfg, Rng& rng)
      : conv1("cls.conv1", channels, cfg.conv1_width, cfg.conv1_kernel, rng),
        conv2("cls.conv2", cfg.conv1_width, cfg.conv2_width, cfg.conv2_kernel, rng),
        fc1("cls.fc1", cfg.global_pooling ? cfg.conv2_width : cfg.conv2_width * (len / 2 / 2), cfg.hidden, rng),
        fc2("cls.fc2", cfg.hidden, n_classes, rng),
        length(len),
        classes(n_classes),
        average_pooling(cfg.average_pooling),
        global_pooling(cfg.global_pooling) {}

  nn::Var pool(nn::Tape& tape, nn::Var x) const { return average_pooling ? tape.avgpool2(x) : tape.maxpool2(x); }

  nn::Var logits(nn::Tape& tape, nn::Var x) const {
    nn::Var h = pool(tape, tape.relu(conv1(tape, x)));
    h = tape.relu(conv2(tape, h));
    h = global_pooling ? tape.time_mean(h) : tape.flatten(pool(tape, h));
    return fc2(tape, tape.relu(fc1(tape, h)));
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p;
    conv1.collect(p);
    conv2.collect(p);
    fc1.collect(p);
    fc2.collect(p);
    return p;
  }

  /// Packs windows (z-scored with the training statistics) into a batch.
  nn::Mat pack(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t s, std::size_t e) const {
    const int C = static_cast<int>(input_stats.size());
    nn::Mat X(C, static_cast<Eigen::Index>(e - s) * length);
    for (std::size_t j = s; j < e; ++j) {
      Eigen::MatrixXd w = ds.windows[idx[j]].samples;
      dataio::apply_normalization(w, input_stats);
      X.middleCols(static_cast<Eigen::Index>(j - s) * length, length) = w.transpose().cast<float>();
    }
    return X;
  }

  std::vector<int> predict(const Dataset& ds, const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t s = 0; s < idx.size(); s += 128) {
      const std::size_t e = std::min(idx.size(), s + 128);
      nn::Tape tape(false);
      const nn::Mat& Z = tape.value(logits(tape, tape.input(pack(ds, idx, s, e), length, static_cast<int>(e - s))));
      for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        Eigen::Index arg = 0;
        Z.col(j).maxCoeff(&arg);
        out.push_back(static_cast<int>(arg));
      }
    }
    return out;
  }
};

/// Trains on `idx` of `ds` against `labels` (indexed like ds.windows).
inline Classifier train_classifier(const Dataset& ds, const std::vector<int>& labels, int n_classes,
                                   const std::vector<std::size_t>& idx, const ClassifierConfig& cfg,
                                   std::uint64_t seed) {
  if (idx.empty()) throw EmptyDatasetError("eval", "cannot train a classifier on zero windows");
  Rng rng(derive_seed(seed, "classifier"));
  Classifier clf(ds.channels(), ds.window_length(), n_classes, cfg, rng);
  clf.input_stats = dataio::fit_normalization(ds, idx);
  auto params = clf.parameters();
  nn::Adam opt(params, nn::AdamConfig{cfg.learning_rate});
  std::vector<std::size_t> perm = idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (std::size_t s = 0; s < perm.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(perm.size(), s + cfg.batch_size);
      std::vector<int> y;
      for (std::size_t j = s; j < e; ++j) y.push_back(labels[perm[j]]);
      nn::Tape tape;
      const nn::Var x = tape.input(clf.pack(ds, perm, s, e), clf.length, static_cast<int>(e - s));
      const nn::Var loss = tape.cross_entropy(clf.logits(tape, x), y);
      if (!std::isfinite(tape.scalar(loss)))
        throw DivergenceError("eval", "classifier loss diverged at epoch " + std::to_string(epoch + 1));
      tape.backward(loss);
      opt.step();
    }
  }
  return clf;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct CvResult {
  std::string target;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  int folds = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  /// Confusion counts [truth][prediction] summed over folds.
  std::vector<std::vector<int>> confusion;
};

/// k-fold evaluation that trains on folds of `train_ds` and tests on the
/// same fold indices of `test_ds`. Both datasets must be index-aligned
/// variants of one corpus; passing the same dataset twice is the ordinary
/// within-dataset protocol.
inline CvResult cross_validate(const Dataset& train_ds, const Dataset& test_ds, const Target& target,
                               const std::vector<dataio::Fold>& folds, const ClassifierConfig& cfg,
                               std::uint64_t seed) {
  if (train_ds.size() != test_ds.size()) throw SchemaError("eval", "train and test variants differ in size");
  const auto y_train = labels_for(train_ds, target);
  const auto y_test = labels_for(test_ds, target);
  const int K = class_count(train_ds, target);
  CvResult r;
  r.target = target.name();
  r.folds = static_cast<int>(folds.size());
  r.seed = seed;
  r.config_hash = cfg.hash();
  r.confusion.assign(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(K), 0));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Classifier clf = train_classifier(train_ds, y_train, K, folds[f].train, cfg, derive_seed(seed, f));
    const auto pred = clf.predict(test_ds, folds[f].test);
    std::vector<int> truth;
    for (auto i : folds[f].test) truth.push_back(y_test[i]);
    for (std::size_t j = 0; j < pred.size(); ++j) ++r.confusion[truth[j]][pred[j]];
    r.fold_accuracy.push_back(accuracy(pred, truth));
  }
  r.mean_accuracy = r.fold_accuracy.empty()
                        ? 0.0
                        : std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) /
                              static_cast<double>(r.fold_accuracy.size());
  return r;
}

/// Within-dataset k-fold evaluation with folds stratified by activity.
inline CvResult cross_validate(const Dataset& ds, const Target& target, const ClassifierConfig& cfg,
                               std::uint64_t seed) {
  if (!target.is_activity()) (void)ds.attribute_labels(target.attribute);
  const auto folds = dataio::kfold_split(ds, cfg.folds, derive_seed(seed, "folds"));
  return cross_validate(ds, ds, target, folds, cfg, seed);
}

}  // namespace strata::eval
