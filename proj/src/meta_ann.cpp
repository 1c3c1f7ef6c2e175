#include "winstack/meta_ann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace winstack {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::GELU: return "gelu";
    case Activation::ELU: return "elu";
    case Activation::None: return "none";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "gelu") return Activation::GELU;
  if (s == "elu") return Activation::ELU;
  if (s == "none") return Activation::None;
  throw std::runtime_error("unknown activation '" + s + "'");
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double activate(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::GELU: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    case Activation::ELU: return x > 0.0 ? x : std::expm1(x);
    case Activation::None: return x;
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::GELU:
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    case Activation::ELU: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::None: return 1.0;
  }
  return 1.0;
}

std::array<double, 2> softmax2(double z0, double z1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m);
  const double e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

}  // namespace

void AnnArchitecture::validate() const {
  if (input_len < 1) throw std::invalid_argument("input_len must be >= 1");
  if (hidden_layers < 0 || hidden_layers > 3) {
    throw std::invalid_argument("hidden_layers must lie in 0..3");
  }
  if (hidden_layers > 0 && (hidden_width < 1)) {
    throw std::invalid_argument("hidden_width must be >= 1 when hidden layers are present");
  }
}

std::vector<std::pair<int, int>> AnnArchitecture::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int in = input_len;
  for (int l = 0; l < hidden_layers; ++l) {
    shapes.emplace_back(hidden_width, in);
    in = hidden_width;
  }
  shapes.emplace_back(2, in);
  return shapes;
}

long AnnArchitecture::param_count() const {
  long n = 0;
  for (auto [rows, cols] : layer_shapes()) n += static_cast<long>(rows) * cols + rows;
  return n;
}

AnnNet::AnnNet(const AnnArchitecture& arch) : arch_(arch) {
  arch.validate();
  shapes_ = arch.layer_shapes();
  for (auto [rows, cols] : shapes_) {
    weights_.emplace_back(static_cast<std::size_t>(rows) * cols, 0.0);
    biases_.emplace_back(static_cast<std::size_t>(rows), 0.0);
    n_params_ += static_cast<std::size_t>(rows) * cols + rows;
  }
}

void AnnNet::init(Rng& rng) {
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shapes_[l].second));
    for (double& w : weights_[l]) w = rng.uniform(-bound, bound);
    for (double& b : biases_[l]) b = rng.uniform(-bound, bound);
  }
}

std::vector<double> AnnNet::flat_params() const {
  std::vector<double> out;
  out.reserve(n_params_);
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    out.insert(out.end(), weights_[l].begin(), weights_[l].end());
    out.insert(out.end(), biases_[l].begin(), biases_[l].end());
  }
  return out;
}

void AnnNet::set_flat_params(std::span<const double> params) {
  if (params.size() != n_params_) throw std::invalid_argument("parameter vector size mismatch");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    std::copy_n(params.begin() + pos, weights_[l].size(), weights_[l].begin());
    pos += weights_[l].size();
    std::copy_n(params.begin() + pos, biases_[l].size(), biases_[l].begin());
    pos += biases_[l].size();
  }
}

std::array<double, 2> AnnNet::predict(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != arch_.input_len) {
    throw std::invalid_argument("input length " + std::to_string(input.size()) +
                                " does not match model input length " +
                                std::to_string(arch_.input_len));
  }
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const auto [rows, cols] = shapes_[l];
    next.assign(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double z = biases_[l][static_cast<std::size_t>(r)];
      const double* wrow = weights_[l].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) z += wrow[c] * cur[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] =
          (l + 1 < shapes_.size()) ? activate(arch_.activation, z) : z;
    }
    cur.swap(next);
  }
  return softmax2(cur[0], cur[1]);
}

double AnnNet::loss_and_gradient(const std::vector<std::vector<double>>& inputs,
                                 const std::vector<Label>& labels,
                                 const std::vector<double>& sample_weights,
                                 std::vector<double>* grad) const {
  if (inputs.size() != labels.size() || inputs.size() != sample_weights.size()) {
    throw std::invalid_argument("inputs, labels and weights must have equal length");
  }
  if (inputs.empty()) throw std::invalid_argument("empty batch");

  const std::size_t n_layers = shapes_.size();
  std::vector<double> flat_grad;
  if (grad) {
    grad->assign(n_params_, 0.0);
  }
  // Per-layer slices into the flat gradient.
  std::vector<std::size_t> w_off(n_layers), b_off(n_layers);
  {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      w_off[l] = pos;
      pos += weights_[l].size();
      b_off[l] = pos;
      pos += biases_[l].size();
    }
  }

  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;

  std::vector<std::vector<double>> pre(n_layers);   // z per layer
  std::vector<std::vector<double>> post(n_layers);  // act(z) per hidden layer
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const auto& x = inputs[s];
    if (static_cast<int>(x.size()) != arch_.input_len) {
      throw std::invalid_argument("sample " + std::to_string(s) + " has wrong input length");
    }
    // Forward.
    const std::vector<double>* cur = &x;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto [rows, cols] = shapes_[l];
      pre[l].assign(static_cast<std::size_t>(rows), 0.0);
      for (int r = 0; r < rows; ++r) {
        double z = biases_[l][static_cast<std::size_t>(r)];
        const double* wrow = weights_[l].data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) z += wrow[c] * (*cur)[static_cast<std::size_t>(c)];
        pre[l][static_cast<std::size_t>(r)] = z;
      }
      if (l + 1 < n_layers) {
        post[l].assign(pre[l].size(), 0.0);
        for (std::size_t r = 0; r < pre[l].size(); ++r) {
          post[l][r] = activate(arch_.activation, pre[l][r]);
        }
        cur = &post[l];
      }
    }
    const auto p = softmax2(pre[n_layers - 1][0], pre[n_layers - 1][1]);
    const int y = labels[s] == Label::Abnormal ? 1 : 0;
    const double a = sample_weights[s];
    const double py = std::max(p[static_cast<std::size_t>(y)], 1e-300);
    loss -= a * inv_n * std::log(py);

    if (!grad) continue;

    // Backward.
    std::vector<double> delta = {a * inv_n * (p[0] - (y == 0 ? 1.0 : 0.0)),
                                 a * inv_n * (p[1] - (y == 1 ? 1.0 : 0.0))};
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto [rows, cols] = shapes_[l];
      const std::vector<double>& below = (l == 0) ? x : post[l - 1];
      double* gw = grad->data() + w_off[l];
      double* gb = grad->data() + b_off[l];
      for (int r = 0; r < rows; ++r) {
        const double d = delta[static_cast<std::size_t>(r)];
        gb[r] += d;
        double* gwrow = gw + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) gwrow[c] += d * below[static_cast<std::size_t>(c)];
      }
      if (l == 0) break;
      std::vector<double> prev(static_cast<std::size_t>(cols), 0.0);
      for (int c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < rows; ++r) {
          acc += weights_[l][static_cast<std::size_t>(r) * cols + c] *
                 delta[static_cast<std::size_t>(r)];
        }
        prev[static_cast<std::size_t>(c)] = acc * activate_grad(arch_.activation, pre[l - 1][static_cast<std::size_t>(c)]);
      }
      delta.swap(prev);
    }
  }
  return loss;
}

namespace {

std::vector<double> weights_for(const std::vector<Label>& labels, const ClassWeights& cw) {
  std::vector<double> out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(cw.weight(l));
  return out;
}

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Deterministic validation carve-out; group-disjoint when group ids are given.
IndexSplit carve_validation(std::size_t n, const std::vector<std::string>* groups, double fraction,
                            std::uint64_t seed) {
  IndexSplit split;
  if (fraction <= 0.0) {
    split.train.resize(n);
    for (std::size_t i = 0; i < n; ++i) split.train[i] = i;
    return split;
  }
  Rng rng(derive_seed(seed, "validation_split"));
  const auto target = static_cast<double>(n) * fraction;
  if (groups && groups->size() == n) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = members.try_emplace((*groups)[i]);
      if (fresh) order.push_back((*groups)[i]);
      it->second.push_back(i);
    }
    rng.shuffle(order);
    std::size_t taken = 0;
    std::size_t g = 0;
    for (; g < order.size() && static_cast<double>(taken) < target; ++g) {
      if (g + 1 == order.size()) break;  // keep at least one group in train
      for (std::size_t i : members[order[g]]) split.val.push_back(i);
      taken += members[order[g]].size();
    }
    for (; g < order.size(); ++g) {
      for (std::size_t i : members[order[g]]) split.train.push_back(i);
    }
  } else {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    std::size_t n_val = std::min(n - 1, static_cast<std::size_t>(std::ceil(target)));
    split.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

void require_both_classes(const std::vector<Label>& labels) {
  bool has_normal = false, has_abnormal = false;
  for (Label l : labels) (l == Label::Normal ? has_normal : has_abnormal) = true;
  if (!has_normal || !has_abnormal) {
    throw std::runtime_error("training set contains a single class");
  }
}

}  // namespace

AnnModel train_ann(const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
                   const ClassWeights& weights, const AnnArchitecture& arch,
                   const AnnTrainOptions& options, const EncodingSpec& encoding,
                   const std::vector<std::string>* groups) {
  arch.validate();
  if (inputs.size() != labels.size()) throw std::invalid_argument("inputs/labels length mismatch");
  if (inputs.empty()) throw std::invalid_argument("empty training set");
  require_both_classes(labels);
  if (options.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");

  const IndexSplit split =
      carve_validation(inputs.size(), groups, options.validation_fraction, options.seed);
  auto train_x = gather(inputs, split.train);
  auto train_y = gather(labels, split.train);
  auto val_x = gather(inputs, split.val);
  auto val_y = gather(labels, split.val);
  require_both_classes(train_y);
  const auto train_w = weights_for(train_y, weights);
  const auto val_w = weights_for(val_y, weights);

  AnnModel model(arch);
  model.encoding = encoding;
  Rng init_rng(derive_seed(options.seed, "ann_init"));
  model.net.init(init_rng);

  Rng shuffle_rng(derive_seed(options.seed, "ann_shuffle"));
  std::vector<std::size_t> order(train_x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> params = model.net.flat_params();
  std::vector<double> grad;
  std::vector<double> best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  double best_train = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
  int epochs_run = 0;

  std::vector<std::vector<double>> batch_x;
  std::vector<Label> batch_y;
  std::vector<double> batch_w;
  const bool use_val = !val_x.empty();

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      batch_x.clear();
      batch_y.clear();
      batch_w.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_x.push_back(train_x[order[i]]);
        batch_y.push_back(train_y[order[i]]);
        batch_w.push_back(train_w[order[i]]);
      }
      const double batch_loss = model.net.loss_and_gradient(batch_x, batch_y, batch_w, &grad);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      params = model.net.flat_params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= options.learning_rate * grad[i];
      }
      model.net.set_flat_params(params);
    }
    ++epochs_run;

    if (use_val) {
      const double val_loss = model.net.loss_and_gradient(val_x, val_y, val_w, nullptr);
      if (!std::isfinite(val_loss)) {
        throw std::runtime_error("training diverged: non-finite validation loss at epoch " +
                                 std::to_string(epoch));
      }
      if (val_loss < best_val - 1e-12) {
        best_val = val_loss;
        best_params = model.net.flat_params();
        best_train = model.net.loss_and_gradient(train_x, train_y, train_w, nullptr);
        best_epoch = epoch;
      } else if (epoch - best_epoch >= options.patience) {
        break;  // validation loss plateau
      }
    }
  }

  if (use_val) {
    model.net.set_flat_params(best_params);
    model.meta.final_val_loss = best_val;
    model.meta.final_train_loss = best_train;
  } else {
    model.meta.final_val_loss = std::numeric_limits<double>::quiet_NaN();
    model.meta.final_train_loss =
        model.net.loss_and_gradient(train_x, train_y, train_w, nullptr);
  }
  model.meta.seed = options.seed;
  model.meta.epochs_run = epochs_run;
  model.meta.learning_rate = options.learning_rate;
  return model;
}

std::array<double, 2> predict_ann(const AnnModel& model, std::span<const double> input) {
  return model.net.predict(input);
}

std::pair<AnnModel, AnnGridReport> grid_search_ann(
    const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
    const ClassWeights& weights, const AnnGrid& grid, const AnnTrainOptions& options,
    const EncodingSpec& encoding, const std::vector<std::string>* groups) {
  if (grid.depths.empty()) throw std::invalid_argument("empty architecture grid");
  if (inputs.empty()) throw std::invalid_argument("empty training set");

  // Selection split is carved once; cells train on its train side and are
  // scored on its validation side.
  const double sel_fraction = options.validation_fraction > 0 ? options.validation_fraction : 0.1;
  const IndexSplit sel = carve_validation(inputs.size(), groups, sel_fraction,
                                          derive_seed(options.seed, "grid_selection"));
  auto train_x = gather(inputs, sel.train);
  auto train_y = gather(labels, sel.train);
  auto val_x = gather(inputs, sel.val);
  auto val_y = gather(labels, sel.val);
  std::vector<std::string> train_groups;
  if (groups) train_groups = gather(*groups, sel.train);

  struct CellSpec {
    AnnArchitecture arch;
    AnnGridCell cell;
  };
  std::vector<CellSpec> cells;
  const int input_len = static_cast<int>(inputs[0].size());
  for (int depth : grid.depths) {
    if (depth == 0) {
      AnnArchitecture a{input_len, 0, 0, Activation::None};
      cells.push_back({a, {0, 0, Activation::None, 0.0, a.param_count(), 0}});
      continue;
    }
    for (int width : grid.widths) {
      for (Activation act : grid.activations) {
        AnnArchitecture a{input_len, depth, width, act};
        cells.push_back({a, {depth, width, act, 0.0, a.param_count(), 0}});
      }
    }
  }

  AnnGridReport report;
  std::vector<AnnModel> models;
  models.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    AnnTrainOptions cell_opts = options;
    cell_opts.seed = derive_seed(options.seed, "grid_cell/" + std::to_string(i));
    cells[i].cell.seed = cell_opts.seed;
    AnnModel m = train_ann(train_x, train_y, weights, cells[i].arch, cell_opts, encoding,
                           groups ? &train_groups : nullptr);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < val_x.size(); ++s) {
      const auto p = m.net.predict(val_x[s]);
      const Label pred = p[1] >= 0.5 ? Label::Abnormal : Label::Normal;
      if (pred == val_y[s]) ++correct;
    }
    cells[i].cell.val_accuracy =
        val_x.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(val_x.size());
    report.cells.push_back(cells[i].cell);
    models.push_back(std::move(m));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < report.cells.size(); ++i) {
    const auto& a = report.cells[i];
    const auto& b = report.cells[best];
    if (a.val_accuracy > b.val_accuracy ||
        (a.val_accuracy == b.val_accuracy &&
         (a.param_count < b.param_count ||
          (a.param_count == b.param_count && a.depth < b.depth)))) {
      best = i;
    }
  }
  report.best_index = best;

  // Refit the winning cell on the full training data.
  AnnTrainOptions final_opts = options;
  final_opts.seed = report.cells[best].seed;
  AnnModel final_model =
      train_ann(inputs, labels, weights, cells[best].arch, final_opts, encoding, groups);
  return {std::move(final_model), std::move(report)};
}

std::vector<double> window_importance(const AnnModel& model) {
  const auto& arch = model.net.architecture();
  if (arch.hidden_layers != 0) {
    throw std::runtime_error("window importance is defined only for linear (depth-0) models");
  }
  if (model.encoding.kind != EncodingKind::RawProb) {
    throw std::runtime_error("window importance is defined only for the raw probability encoding");
  }
  const auto& w = model.net.weights()[0];  // 2 x T row-major
  const int t = arch.input_len;
  std::vector<double> importance(static_cast<std::size_t>(t), 0.0);
  for (int j = 0; j < t; ++j) {
    const double w0 = w[static_cast<std::size_t>(j)];
    const double w1 = w[static_cast<std::size_t>(t + j)];
    importance[static_cast<std::size_t>(j)] = 0.5 * (w0 * w0 + w1 * w1);
  }
  return importance;
}

}  // namespace winstack
