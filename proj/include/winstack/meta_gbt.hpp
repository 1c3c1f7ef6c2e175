#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "winstack/corpus.hpp"
#include "winstack/encodings.hpp"

namespace winstack {

struct GbtConfig {
  int rounds = 200;
  double learning_rate = 0.1;      // shrinkage eta
  int max_depth = 5;
  double min_child_weight = 1.0;   // minimum hessian sum per child
  double lambda = 1.0;             // leaf L2 regularisation
  std::vector<int> depth_grid = {5, 10, 15, 20, 25};
  int cv_folds = 3;
  double feature_subsample = 1.0;  // per-round column subsample, seed-derived
  std::uint64_t seed = 0;

  void validate() const;
};

struct GbtNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct GbtTree {
  std::vector<GbtNode> nodes;  // nodes[0] is the root

  double value(std::span<const double> x) const;
  /// Index of the leaf an input routes to.
  int leaf_index(std::span<const double> x) const;
  bool has_split() const;
};

struct GbtModel {
  double base_score = 0.0;  // weighted prior log-odds
  GbtConfig config;
  EncodingSpec encoding;
  int input_len = 0;
  std::vector<GbtTree> trees;
  std::vector<double> train_loss;  // [0] = prior-only loss, then one entry per round
  bool reduced_to_prior = false;   // no tree found a usable split

  double margin(std::span<const double> x) const;
};

/// Second-order boosting on weighted logistic loss. Each round fits one
/// regression tree to gradients g = a(p - y) and hessians h = a p(1-p);
/// split gain is the usual second-order criterion with lambda and leaves are
/// -sum(g)/(sum(h)+lambda). Exact greedy split search over sorted unique
/// feature values; deterministic given config.seed (ties break toward the
/// lowest feature index, then the lowest threshold).
GbtModel train_gbt(const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
                   const ClassWeights& weights, const GbtConfig& config,
                   const EncodingSpec& encoding);

double predict_gbt(const GbtModel& model, std::span<const double> input);

struct DepthCvRow {
  int depth = 0;
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
};

struct DepthCvResult {
  std::vector<DepthCvRow> table;  // ascending depth
  int best_depth = 0;
  GbtModel model;  // retrained on the full data at best_depth
};

/// K-fold selection of max_depth over config.depth_grid. Folds split by
/// patient when group ids are given, else by sample; ties break toward the
/// smaller depth. Per-fold class weights are recomputed from the fold's
/// training side.
DepthCvResult cv_select_depth(const std::vector<std::vector<double>>& inputs,
                              const std::vector<Label>& labels, const GbtConfig& config,
                              const EncodingSpec& encoding,
                              const std::vector<std::string>* groups = nullptr);

}  // namespace winstack
