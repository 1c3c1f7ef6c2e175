#include "winstack/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace winstack {

namespace {

// floor((usable - length) / stride) + 1 with a small guard so that exact
// multiples (1140/60 = 19) are not lost to representation error.
int count_from_usable(double usable, double length, double stride) {
  if (usable < length) return 0;
  return static_cast<int>(std::floor((usable - length) / stride + 1e-9)) + 1;
}

}  // namespace

void WindowingConfig::validate() const {
  if (!(window_length_s > 0.0)) throw std::invalid_argument("window_length must be positive");
  if (!(stride_s > 0.0 && stride_s <= window_length_s)) {
    throw std::invalid_argument("stride must satisfy 0 < stride <= window_length");
  }
  if (head_trim_s < 0.0) throw std::invalid_argument("head_trim must be non-negative");
  if (max_used_s < window_length_s) {
    throw std::invalid_argument("max_used must be at least one window length");
  }
}

int WindowingConfig::max_window_count() const {
  return count_from_usable(max_used_s, window_length_s, stride_s);
}

int window_count_for_duration(double duration_s, const WindowingConfig& config) {
  const double usable = std::min(duration_s - config.head_trim_s, config.max_used_s);
  return count_from_usable(usable, config.window_length_s, config.stride_s);
}

WindowIndexing segment(const Recording& recording, const WindowingConfig& config) {
  config.validate();
  WindowIndexing idx;
  idx.recording_id = recording.recording_id;
  idx.usable_s = std::min(recording.duration_s - config.head_trim_s, config.max_used_s);
  idx.count = count_from_usable(idx.usable_s, config.window_length_s, config.stride_s);
  if (idx.count == 0) {
    idx.too_short = true;
    idx.discarded_tail_s = std::max(idx.usable_s, 0.0);
    return idx;
  }
  idx.offsets.reserve(static_cast<std::size_t>(idx.count));
  for (int k = 0; k < idx.count; ++k) {
    idx.offsets.push_back(config.head_trim_s + static_cast<double>(k) * config.stride_s);
  }
  const double covered = static_cast<double>(idx.count - 1) * config.stride_s + config.window_length_s;
  idx.discarded_tail_s = idx.usable_s - covered;
  return idx;
}

std::vector<std::pair<int, Label>> inherit_labels(const WindowIndexing& indexing, Label label) {
  std::vector<std::pair<int, Label>> out;
  out.reserve(static_cast<std::size_t>(indexing.count));
  for (int k = 0; k < indexing.count; ++k) out.emplace_back(k, label);
  return out;
}

}  // namespace winstack
