#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "winstack/corpus.hpp"
#include "winstack/rng.hpp"
#include "winstack/windowing.hpp"

namespace winstack {

struct WindowOutput {
  double p_abnormal = 0.5;
  double logit_normal = 0.0;
  double logit_abnormal = 0.0;
  std::vector<double> features;  // empty = absent
};

struct WindowOutputs {
  std::string recording_id;
  std::vector<WindowOutput> windows;  // temporal order

  int feature_dim() const { return windows.empty() ? 0 : static_cast<int>(windows[0].features.size()); }
};

/// p_abnormal must equal softmax(logit_normal, logit_abnormal)[1] within tol.
void check_softmax_consistency(const WindowOutputs& outputs, double tol);

/// Distribution descriptor for synthetic corpus parameters.
struct DistSpec {
  enum class Kind { Fixed, Uniform, Choice };
  Kind kind = Kind::Fixed;
  double lo = 0.0, hi = 0.0;          // Uniform bounds (inclusive for counts)
  std::vector<double> values;         // Choice support

  static DistSpec fixed(double v) { return {Kind::Fixed, v, v, {}}; }
  static DistSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi, {}}; }
  static DistSpec choice(std::vector<double> values) { return {Kind::Choice, 0, 0, std::move(values)}; }

  double sample(Rng& rng) const;
  long sample_count(Rng& rng) const;  // integer draw (uniform over [lo,hi] for Uniform)
  double min_value() const;
  double max_value() const;
};

// Synthetic first-stage generator: plants window-level abnormal events and
// emits noisy classifier responses, a desk-scale substitute for real
// per-window deep-network outputs.
struct SynthConfig {
  int n_patients = 1000;
  DistSpec recordings_per_session = DistSpec::fixed(1);
  DistSpec duration_s = DistSpec::fixed(1260.0);
  double prevalence_abnormal = 0.5;
  double event_density = 0.15;  // fraction of windows carrying events in abnormal recordings
  double window_tpr = 0.95;     // P(elevated response | event window)
  double window_fpr = 0.05;     // P(elevated response | clean window)
  double response_noise = 0.1;  // stddev of the probability perturbation
  double base_event_response = 0.8;
  double base_clean_response = 0.2;
  bool bursty_events = false;   // events in one contiguous run instead of i.i.d.
  int feature_dim = 0;          // 0 = no feature vectors; otherwise >= 2
  std::uint64_t seed = 0;

  void validate(const WindowingConfig& windowing) const;
};

struct SynthData {
  Corpus corpus;
  std::map<std::string, WindowOutputs> outputs;          // keyed by recording_id
  std::map<std::string, std::vector<std::uint8_t>> events;  // ground-truth event windows
};

/// Fully deterministic given config.seed; per-recording randomness derives
/// from (seed, recording_id) so parallel and serial runs agree bit-for-bit.
/// Abnormal recordings contain at least one event window
/// (rejection-resampled); normal recordings contain none.
SynthData simulate(const SynthConfig& config, const WindowingConfig& windowing);

/// Exact posterior P(recording abnormal | window responses) under the
/// synthetic generative model. Performance ceiling oracle for arbitration.
double bayes_posterior_abnormal(const WindowOutputs& outputs, const SynthConfig& config,
                                const WindowingConfig& windowing);

// Per-window output file: recording_id,window_index,p_abnormal,logit_normal,
// logit_abnormal[,feature_0..]; rows need not be sorted.
std::map<std::string, WindowOutputs> read_window_outputs(const std::filesystem::path& path,
                                                         const WindowingConfig& expected);
void write_window_outputs(const std::filesystem::path& path,
                          const std::map<std::string, WindowOutputs>& outputs);

}  // namespace winstack
