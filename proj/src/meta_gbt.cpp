#include "winstack/meta_gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "winstack/rng.hpp"

namespace winstack {

void GbtConfig::validate() const {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw std::invalid_argument("learning_rate must lie in (0,1]");
  }
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (min_child_weight < 0.0) throw std::invalid_argument("min_child_weight must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (depth_grid.empty()) throw std::invalid_argument("depth_grid must be non-empty");
  if (cv_folds < 2) throw std::invalid_argument("cv_folds must be >= 2");
  if (!(feature_subsample > 0.0 && feature_subsample <= 1.0)) {
    throw std::invalid_argument("feature_subsample must lie in (0,1]");
  }
}

double GbtTree::value(std::span<const double> x) const {
  return nodes[static_cast<std::size_t>(leaf_index(x))].leaf_value;
}

int GbtTree::leaf_index(std::span<const double> x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return i;
}

bool GbtTree::has_split() const {
  return !nodes.empty() && !nodes[0].is_leaf();
}

double GbtModel::margin(std::span<const double> x) const {
  double m = base_score;
  for (const auto& t : trees) m += config.learning_rate * t.value(x);
  return m;
}

double predict_gbt(const GbtModel& model, std::span<const double> input) {
  if (static_cast<int>(input.size()) != model.input_len) {
    throw std::invalid_argument("input length " + std::to_string(input.size()) +
                                " does not match model input length " +
                                std::to_string(model.input_len));
  }
  return 1.0 / (1.0 + std::exp(-model.margin(input)));
}

namespace {

constexpr double kPClamp = 1e-15;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Samples with identical (features, label) are exchangeable: they always
// route to the same leaf, so they can be collapsed into one group whose
// weight is multiplicity * class weight. Grouping also fixes the
// accumulation order, making training invariant to input row order and
// making duplicate-rows-vs-doubled-weight produce identical trees.
struct TrainGroup {
  const std::vector<double>* x = nullptr;
  int y = 0;        // 1 = abnormal
  double weight = 0.0;
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<TrainGroup>& groups, const std::vector<double>& grad,
              const std::vector<double>& hess, const GbtConfig& config,
              const std::vector<int>& features)
      : groups_(groups), grad_(grad), hess_(hess), config_(config), features_(features) {}

  GbtTree build(const std::vector<std::vector<int>>& sorted_by_feature) {
    GbtTree tree;
    grow(tree, sorted_by_feature, 0);
    return tree;
  }

 private:
  // Appends the subtree for one node; index lists are per candidate feature,
  // each sorted ascending by that feature's value.
  int grow(GbtTree& tree, const std::vector<std::vector<int>>& lists, int depth) {
    double g_total = 0.0, h_total = 0.0;
    for (int i : lists[0]) {
      g_total += grad_[static_cast<std::size_t>(i)];
      h_total += hess_[static_cast<std::size_t>(i)];
    }

    SplitCandidate best;
    if (depth < config_.max_depth && lists[0].size() > 1) {
      best = find_best_split(lists, g_total, h_total);
    }

    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best.feature < 0) {
      const double denom = h_total + config_.lambda;
      tree.nodes[static_cast<std::size_t>(node_index)].leaf_value =
          denom > 0.0 ? -g_total / denom : 0.0;
      return node_index;
    }

    // Partition every feature list by the chosen predicate, preserving order.
    std::vector<std::vector<int>> left_lists(lists.size()), right_lists(lists.size());
    for (std::size_t f = 0; f < lists.size(); ++f) {
      for (int i : lists[f]) {
        const double v = (*groups_[static_cast<std::size_t>(i)].x)[static_cast<std::size_t>(best.feature)];
        (v < best.threshold ? left_lists[f] : right_lists[f]).push_back(i);
      }
    }

    tree.nodes[static_cast<std::size_t>(node_index)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(node_index)].threshold = best.threshold;
    const int left = grow(tree, left_lists, depth + 1);
    const int right = grow(tree, right_lists, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_index)].left = left;
    tree.nodes[static_cast<std::size_t>(node_index)].right = right;
    return node_index;
  }

  SplitCandidate find_best_split(const std::vector<std::vector<int>>& lists, double g_total,
                                 double h_total) const {
    SplitCandidate best;
    const double parent_score = g_total * g_total / (h_total + config_.lambda);
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      const int feature = features_[fi];
      const auto& order = lists[fi];
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const int i = order[k];
        gl += grad_[static_cast<std::size_t>(i)];
        hl += hess_[static_cast<std::size_t>(i)];
        const double v = (*groups_[static_cast<std::size_t>(i)].x)[static_cast<std::size_t>(feature)];
        const double v_next =
            (*groups_[static_cast<std::size_t>(order[k + 1])].x)[static_cast<std::size_t>(feature)];
        if (!(v < v_next)) continue;  // cannot split between equal values
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        if (hl < config_.min_child_weight || hr < config_.min_child_weight) continue;
        const double gain = 0.5 * (gl * gl / (hl + config_.lambda) + gr * gr / (hr + config_.lambda) -
                                   parent_score);
        if (gain > best.gain + 1e-12) {  // strict improvement; first (lowest feature) wins ties
          best.gain = gain;
          best.feature = feature;
          double threshold = v + 0.5 * (v_next - v);
          if (!(threshold > v)) threshold = v_next;  // guard against midpoint rounding down
          best.threshold = threshold;
        }
      }
    }
    return best;
  }

  const std::vector<TrainGroup>& groups_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const GbtConfig& config_;
  const std::vector<int>& features_;
};

std::vector<TrainGroup> make_groups(const std::vector<std::vector<double>>& inputs,
                                    const std::vector<Label>& labels, const ClassWeights& weights) {
  std::vector<int> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& xa = inputs[static_cast<std::size_t>(a)];
    const auto& xb = inputs[static_cast<std::size_t>(b)];
    if (xa != xb) return std::lexicographical_compare(xa.begin(), xa.end(), xb.begin(), xb.end());
    return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
  });

  std::vector<TrainGroup> groups;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const auto& x = inputs[static_cast<std::size_t>(order[i])];
    const Label y = labels[static_cast<std::size_t>(order[i])];
    while (j < order.size() && inputs[static_cast<std::size_t>(order[j])] == x &&
           labels[static_cast<std::size_t>(order[j])] == y) {
      ++j;
    }
    TrainGroup group;
    group.x = &inputs[static_cast<std::size_t>(order[i])];
    group.y = y == Label::Abnormal ? 1 : 0;
    group.weight = static_cast<double>(j - i) * weights.weight(y);
    groups.push_back(group);
    i = j;
  }
  return groups;
}

double weighted_logistic_loss(const std::vector<TrainGroup>& groups,
                              const std::vector<double>& margins) {
  double loss = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double p = std::clamp(sigmoid(margins[i]), kPClamp, 1.0 - kPClamp);
    loss -= groups[i].weight * (groups[i].y == 1 ? std::log(p) : std::log1p(-p));
    wsum += groups[i].weight;
  }
  return loss / wsum;
}

}  // namespace

GbtModel train_gbt(const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
                   const ClassWeights& weights, const GbtConfig& config,
                   const EncodingSpec& encoding) {
  config.validate();
  if (inputs.size() != labels.size()) throw std::invalid_argument("inputs/labels length mismatch");
  if (inputs.empty()) throw std::invalid_argument("empty training set");
  const std::size_t dim = inputs[0].size();
  for (const auto& x : inputs) {
    if (x.size() != dim) throw std::invalid_argument("inputs must have uniform length");
  }
  bool has_normal = false, has_abnormal = false;
  for (Label l : labels) (l == Label::Normal ? has_normal : has_abnormal) = true;
  if (!has_normal || !has_abnormal) {
    throw std::runtime_error("training set contains a single class");
  }

  std::vector<TrainGroup> groups = make_groups(inputs, labels, weights);

  GbtModel model;
  model.config = config;
  model.encoding = encoding;
  model.input_len = static_cast<int>(dim);

  double w_pos = 0.0, w_neg = 0.0;
  for (const auto& g : groups) (g.y == 1 ? w_pos : w_neg) += g.weight;
  model.base_score = std::log(w_pos / w_neg);

  // Global per-feature sort of group indices, reused by every round.
  std::vector<std::vector<int>> sorted_by_feature(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    auto& order = sorted_by_feature[f];
    order.resize(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return (*groups[static_cast<std::size_t>(a)].x)[f] < (*groups[static_cast<std::size_t>(b)].x)[f];
    });
  }

  std::vector<double> margins(groups.size(), model.base_score);
  std::vector<double> grad(groups.size()), hess(groups.size());
  model.train_loss.push_back(weighted_logistic_loss(groups, margins));

  const int n_sub = std::max(1, static_cast<int>(std::ceil(config.feature_subsample *
                                                           static_cast<double>(dim))));
  std::vector<int> all_features(dim);
  std::iota(all_features.begin(), all_features.end(), 0);

  for (int round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const double p = sigmoid(margins[i]);
      grad[i] = groups[i].weight * (p - static_cast<double>(groups[i].y));
      hess[i] = groups[i].weight * p * (1.0 - p);
    }

    std::vector<int> features = all_features;
    if (n_sub < static_cast<int>(dim)) {
      Rng rng(derive_seed(config.seed, "colsample/" + std::to_string(round)));
      rng.shuffle(features);
      features.resize(static_cast<std::size_t>(n_sub));
      std::sort(features.begin(), features.end());
    }
    std::vector<std::vector<int>> lists;
    lists.reserve(features.size());
    for (int f : features) lists.push_back(sorted_by_feature[static_cast<std::size_t>(f)]);

    TreeBuilder builder(groups, grad, hess, config, features);
    GbtTree tree = builder.build(lists);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      margins[i] += config.learning_rate * tree.value(*groups[i].x);
    }
    model.trees.push_back(std::move(tree));
    model.train_loss.push_back(weighted_logistic_loss(groups, margins));
  }

  model.reduced_to_prior =
      std::none_of(model.trees.begin(), model.trees.end(), [](const GbtTree& t) { return t.has_split(); });
  return model;
}

DepthCvResult cv_select_depth(const std::vector<std::vector<double>>& inputs,
                              const std::vector<Label>& labels, const GbtConfig& config,
                              const EncodingSpec& encoding,
                              const std::vector<std::string>* groups) {
  config.validate();
  if (inputs.size() != labels.size()) throw std::invalid_argument("inputs/labels length mismatch");
  long n_normal = 0, n_abnormal = 0;
  for (Label l : labels) (l == Label::Normal ? n_normal : n_abnormal)++;
  if (n_normal < config.cv_folds || n_abnormal < config.cv_folds) {
    throw std::invalid_argument("cross-validation needs at least cv_folds samples per class");
  }

  // Fold assignment: shuffled patients (or samples) dealt round-robin.
  std::vector<int> fold_of(inputs.size(), 0);
  Rng rng(derive_seed(config.seed, "cv_folds"));
  if (groups && groups->size() == inputs.size()) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups->size(); ++i) {
      auto [it, fresh] = members.try_emplace((*groups)[i]);
      if (fresh) order.push_back((*groups)[i]);
      it->second.push_back(i);
    }
    rng.shuffle(order);
    for (std::size_t g = 0; g < order.size(); ++g) {
      for (std::size_t i : members[order[g]]) {
        fold_of[i] = static_cast<int>(g % static_cast<std::size_t>(config.cv_folds));
      }
    }
  } else {
    std::vector<std::size_t> idx(inputs.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      fold_of[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(config.cv_folds));
    }
  }

  std::vector<int> grid = config.depth_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  DepthCvResult result;
  double best_acc = -1.0;
  int best_depth = grid.front();
  for (int depth : grid) {
    DepthCvRow row;
    row.depth = depth;
    for (int fold = 0; fold < config.cv_folds; ++fold) {
      std::vector<std::vector<double>> tr_x, va_x;
      std::vector<Label> tr_y, va_y;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (fold_of[i] == fold) {
          va_x.push_back(inputs[i]);
          va_y.push_back(labels[i]);
        } else {
          tr_x.push_back(inputs[i]);
          tr_y.push_back(labels[i]);
        }
      }
      GbtConfig fold_config = config;
      fold_config.max_depth = depth;
      fold_config.seed = derive_seed(config.seed, "cv/" + std::to_string(depth) + "/" +
                                                      std::to_string(fold));
      GbtModel m = train_gbt(tr_x, tr_y, class_weights(tr_y), fold_config, encoding);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < va_x.size(); ++i) {
        const Label pred = predict_gbt(m, va_x[i]) >= 0.5 ? Label::Abnormal : Label::Normal;
        if (pred == va_y[i]) ++correct;
      }
      row.fold_accuracy.push_back(va_x.empty() ? 0.0
                                               : static_cast<double>(correct) /
                                                     static_cast<double>(va_x.size()));
    }
    row.mean_accuracy =
        std::accumulate(row.fold_accuracy.begin(), row.fold_accuracy.end(), 0.0) /
        static_cast<double>(row.fold_accuracy.size());
    if (row.mean_accuracy > best_acc) {  // ties keep the smaller (earlier) depth
      best_acc = row.mean_accuracy;
      best_depth = depth;
    }
    result.table.push_back(std::move(row));
  }

  GbtConfig final_config = config;
  final_config.max_depth = best_depth;
  result.best_depth = best_depth;
  result.model = train_gbt(inputs, labels, class_weights(labels), final_config, encoding);
  return result;
}

}  // namespace winstack
