#pragma once

#include <string>
#include <utility>
#include <vector>

#include "winstack/corpus.hpp"

namespace winstack {

struct WindowingConfig {
  double window_length_s = 60.0;
  double stride_s = 60.0;
  double head_trim_s = 60.0;    // first minute dropped, signal quality is poor there
  double max_used_s = 1200.0;   // at most 20 minutes of usable content per recording

  void validate() const;

  /// Largest possible window count under this config (usable content capped
  /// at max_used_s).
  int max_window_count() const;
};

struct WindowIndexing {
  std::string recording_id;
  double usable_s = 0.0;  // min(duration - head_trim, max_used)
  int count = 0;
  std::vector<double> offsets;  // start seconds; offsets[k] = head_trim + k*stride
  bool too_short = false;       // usable < window length; recording excluded downstream
  double discarded_tail_s = 0.0;
};

/// Segments a recording's timeline: trim the head first, then cap usable
/// content at max_used_s. Trailing partial windows are discarded, never
/// padded.
WindowIndexing segment(const Recording& recording, const WindowingConfig& config);

int window_count_for_duration(double duration_s, const WindowingConfig& config);

/// Every window assumes the label of its originating recording.
std::vector<std::pair<int, Label>> inherit_labels(const WindowIndexing& indexing, Label label);

}  // namespace winstack
