#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "winstack/meta_gbt.hpp"

namespace winstack {

struct Attribution {
  std::string instance_id;
  std::vector<double> input;      // the explained instance
  std::vector<double> phi;        // per-feature Shapley values
  std::vector<double> std_error;  // empty for the exact method
  double base_value = 0.0;        // expected model output over the background
  double model_output = 0.0;

  /// |sum(phi) + base - output|, zero for exact attributions.
  double efficiency_gap() const;
};

/// Exact interventional Shapley values by exhaustive subset enumeration
/// (2^m coalitions, marginal expectations over the background set). Only
/// feasible for m <= 15 features; larger models use shapley_sampled.
Attribution shapley_exact(const GbtModel& model, std::span<const double> instance,
                          const std::vector<std::vector<double>>& background,
                          const std::string& instance_id = "");

/// Monte Carlo permutation estimate with per-feature standard errors.
/// Deterministic given seed; unbiased for the interventional values.
Attribution shapley_sampled(const GbtModel& model, std::span<const double> instance,
                            const std::vector<std::vector<double>>& background, int permutations,
                            std::uint64_t seed, const std::string& instance_id = "");

struct PositionAttributionSummary {
  int position = 0;
  long n = 0;
  double mean_abs_phi = 0.0;
  int rank = 0;  // 1 = most important by mean |phi|
  // Asymmetry: spread of phi conditioned on high (>= 0.5) vs low input value.
  long n_high = 0, n_low = 0;
  double var_phi_high = 0.0;
  double var_phi_low = 0.0;
};

struct AttributionSummary {
  std::vector<PositionAttributionSummary> positions;  // by position
  std::vector<std::pair<int, double>> ranking;        // (position, mean |phi|) descending
  /// (input value, phi) pairs per position, for scatter export.
  std::vector<std::vector<std::pair<double, double>>> scatter;
};

/// Aggregates attributions from one model over a test set. All attributions
/// must share the input length (mixed encodings are rejected).
AttributionSummary attribution_summary(const std::vector<Attribution>& attributions);

}  // namespace winstack
