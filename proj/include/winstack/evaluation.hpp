#pragma once

#include <optional>
#include <string>
#include <vector>

#include "winstack/corpus.hpp"
#include "winstack/windowing.hpp"

namespace winstack {

struct ConfusionMatrix {
  long tp = 0, fp = 0, tn = 0, fn = 0;  // abnormal is the positive class

  long total() const { return tp + fp + tn + fn; }
  void add(Label truth, Label predicted);
};

enum class Granularity { Window, Recording, Session };

const char* to_string(Granularity g);

struct EvalReport {
  Granularity granularity = Granularity::Recording;
  ConfusionMatrix matrix;
  // Ratios with a zero denominator are reported absent, never coerced to 0/1.
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  long n = 0;
  std::string subset_tag;
};

EvalReport report_from_matrix(const ConfusionMatrix& m, Granularity g, std::string subset_tag = "");

EvalReport evaluate(const std::vector<Label>& truths, const std::vector<Label>& predictions,
                    Granularity granularity, std::string subset_tag = "");

struct PositionAccuracy {
  int position = 0;
  long n = 0;
  std::optional<double> accuracy;  // absent when no samples at this position
};

/// Accuracy of window-level decisions grouped by window position. Each entry
/// of `recordings` is (truth label, per-window predicted labels in temporal
/// order).
std::vector<PositionAccuracy> per_position_accuracy(
    const std::vector<std::pair<Label, std::vector<Label>>>& recordings);

struct LengthHistogramRow {
  int window_count = 0;
  long n_normal = 0;
  long n_abnormal = 0;
};

/// Per-recording window-count histogram split by label, ascending count.
std::vector<LengthHistogramRow> length_histogram(const Corpus& corpus,
                                                 const WindowingConfig& windowing);

/// Sessions with more than one recording (the subset where third-stage
/// arbitration can act).
std::vector<const Session*> multi_recording_subset(const Corpus& corpus);

}  // namespace winstack
