#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "winstack/arbitration.hpp"
#include "winstack/corpus.hpp"
#include "winstack/encodings.hpp"
#include "winstack/evaluation.hpp"
#include "winstack/firststage.hpp"
#include "winstack/meta_ann.hpp"
#include "winstack/meta_gbt.hpp"
#include "winstack/windowing.hpp"

namespace winstack {

struct MethodConfig {
  std::string name;  // e.g. "gbt-raw"
  ArbitrationMethod::Kind kind = ArbitrationMethod::Kind::Mean;
  EncodingKind encoding = EncodingKind::RawProb;  // meta methods only
};

/// "mean", "geomean", "no-arbitration", "ann:<encoding>" or "gbt:<encoding>".
MethodConfig parse_method(const std::string& token);

struct AnnMethodOptions {
  AnnTrainOptions train;
  int hidden_layers = 0;
  int hidden_width = 10;
  Activation activation = Activation::None;
  bool grid_search = false;
  AnnGrid grid;
};

struct GbtMethodOptions {
  GbtConfig config;
  bool cv_depth = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int repeats = 5;
  std::filesystem::path out_dir;
  int workers = 1;

  // Corpus source: synthetic generator or manifest + outputs files.
  bool synthetic = true;
  SynthConfig synth;
  std::filesystem::path manifest_path;
  std::filesystem::path outputs_path;
  InclusionPolicy policy;

  WindowingConfig windowing;
  double test_fraction = 0.1;
  int histogram_bins = 10;
  double pad_value = 0.0;

  std::vector<MethodConfig> methods;
  std::vector<SessionMethod> stage3;

  AnnMethodOptions ann;
  GbtMethodOptions gbt;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct SummaryRow {
  int repeat = 0;
  std::string method;
  Granularity granularity = Granularity::Recording;
  std::string subset;
  EvalReport report;
};

struct ExperimentResult {
  std::vector<SummaryRow> rows;
  std::filesystem::path run_dir;
};

/// Runs `repeats` seeded repetitions: per repeat, identical splits feed all
/// methods; artifacts (models, decisions, reports, tables) land under
/// config.out_dir with a hash manifest. Deterministic: same config + seed
/// gives byte-identical artifacts.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SweepSpec {
  std::vector<double> window_lengths;  // stride = length when strides empty
  std::vector<double> strides;         // applied to every length, skipping stride > length
};

ExperimentResult run_sweep(const ExperimentConfig& base, const SweepSpec& sweep);

/// FNV-1a 64-bit content hash, hex-encoded; used for the artifact manifest.
std::string hash_file(const std::filesystem::path& path);

}  // namespace winstack
