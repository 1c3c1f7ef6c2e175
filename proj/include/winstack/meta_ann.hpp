#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "winstack/corpus.hpp"
#include "winstack/encodings.hpp"
#include "winstack/rng.hpp"

namespace winstack {

enum class Activation { ReLU, GELU, ELU, None };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct AnnArchitecture {
  int input_len = 0;
  int hidden_layers = 0;  // 0..3; 0 = linear classifier + softmax
  int hidden_width = 0;   // 5..20 when hidden_layers > 0, unused otherwise
  Activation activation = Activation::None;

  void validate() const;
  long param_count() const;
  /// (rows, cols) of each weight matrix, input to output.
  std::vector<std::pair<int, int>> layer_shapes() const;
};

/// Dense network with softmax head. Holds the parameters; training and the
/// gradient check both go through loss_and_gradient.
class AnnNet {
 public:
  explicit AnnNet(const AnnArchitecture& arch);

  const AnnArchitecture& architecture() const { return arch_; }

  /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  void init(Rng& rng);

  std::size_t param_count() const { return n_params_; }
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> params);

  std::array<double, 2> predict(std::span<const double> input) const;

  /// Weighted mean cross-entropy over the batch:
  ///   L = -(1/N) sum_n a_{y_n} log p_{y_n}
  /// If grad is non-null it receives dL/dtheta in flat_params() order.
  double loss_and_gradient(const std::vector<std::vector<double>>& inputs,
                           const std::vector<Label>& labels,
                           const std::vector<double>& sample_weights,
                           std::vector<double>* grad) const;

  // Layer access (weights row-major, rows x cols).
  const std::vector<std::vector<double>>& weights() const { return weights_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }
  std::vector<std::vector<double>>& mutable_weights() { return weights_; }
  std::vector<std::vector<double>>& mutable_biases() { return biases_; }

 private:
  AnnArchitecture arch_;
  std::vector<std::pair<int, int>> shapes_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
  std::size_t n_params_ = 0;
};

struct AnnTrainOptions {
  double learning_rate = 0.01;
  int epochs = 500;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  // 0 disables early stopping
  int patience = 20;
};

struct AnnTrainingMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double learning_rate = 0.0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;  // NaN when no validation split
};

struct AnnModel {
  AnnNet net;
  EncodingSpec encoding;
  AnnTrainingMeta meta;

  explicit AnnModel(const AnnArchitecture& arch) : net(arch) {}
};

/// Plain SGD on the weighted cross-entropy with early stopping on validation
/// loss plateau. Deterministic given options.seed. When group ids (patient
/// ids) are supplied, the validation split is carved group-disjoint.
AnnModel train_ann(const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
                   const ClassWeights& weights, const AnnArchitecture& arch,
                   const AnnTrainOptions& options, const EncodingSpec& encoding,
                   const std::vector<std::string>* groups = nullptr);

std::array<double, 2> predict_ann(const AnnModel& model, std::span<const double> input);

struct AnnGrid {
  std::vector<int> depths = {0, 1, 2, 3};
  std::vector<int> widths = {5, 10, 15, 20};
  std::vector<Activation> activations = {Activation::ReLU, Activation::GELU, Activation::ELU,
                                         Activation::None};
};

struct AnnGridCell {
  int depth = 0;
  int width = 0;           // 0 for depth 0
  Activation activation = Activation::None;
  double val_accuracy = 0.0;
  long param_count = 0;
  std::uint64_t seed = 0;
};

struct AnnGridReport {
  std::vector<AnnGridCell> cells;
  std::size_t best_index = 0;
};

/// Grid search over depth x width x activation, scored by validation
/// accuracy; ties break toward fewer parameters, then lower depth. Cell
/// seeds derive from (options.seed, cell index).
std::pair<AnnModel, AnnGridReport> grid_search_ann(
    const std::vector<std::vector<double>>& inputs, const std::vector<Label>& labels,
    const ClassWeights& weights, const AnnGrid& grid, const AnnTrainOptions& options,
    const EncodingSpec& encoding, const std::vector<std::string>* groups = nullptr);

/// Window-position importance I_j = (W_0j^2 + W_1j^2) / 2. Defined only for
/// linear (depth 0) models over the raw probability encoding.
std::vector<double> window_importance(const AnnModel& model);

}  // namespace winstack
