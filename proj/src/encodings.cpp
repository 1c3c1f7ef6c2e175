#include "winstack/encodings.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace winstack {

const char* to_string(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::RawProb: return "raw";
    case EncodingKind::Histogram: return "histogram";
    case EncodingKind::Hybrid: return "hybrid";
    case EncodingKind::Logits: return "logits";
    case EncodingKind::Features: return "features";
  }
  return "?";
}

EncodingKind encoding_kind_from_string(const std::string& s) {
  if (s == "raw") return EncodingKind::RawProb;
  if (s == "histogram") return EncodingKind::Histogram;
  if (s == "hybrid") return EncodingKind::Hybrid;
  if (s == "logits") return EncodingKind::Logits;
  if (s == "features") return EncodingKind::Features;
  throw std::runtime_error("unknown encoding '" + s + "'");
}

int EncodingSpec::input_length() const {
  switch (kind) {
    case EncodingKind::RawProb: return max_windows;
    case EncodingKind::Histogram: return bins;
    case EncodingKind::Hybrid: return max_windows + bins;
    case EncodingKind::Logits: return 2 * max_windows;
    case EncodingKind::Features: return feature_dim * max_windows;
  }
  return 0;
}

void EncodingSpec::validate() const {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  if (kind != EncodingKind::Histogram && max_windows < 1) {
    throw std::invalid_argument("padded encodings need max_windows >= 1");
  }
  if (kind == EncodingKind::Features && feature_dim < 1) {
    throw std::invalid_argument("features encoding needs feature_dim >= 1");
  }
}

namespace {

void append_histogram(std::vector<double>& out, const WindowOutputs& outputs, int bins) {
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(bins), 0.0);
  const std::size_t n = outputs.windows.size();
  if (n == 0) return;  // degenerate recording: all-zero histogram
  for (const auto& w : outputs.windows) {
    int b = static_cast<int>(std::floor(w.p_abnormal * bins));
    b = std::clamp(b, 0, bins - 1);  // p = 1.0 falls in the right-closed last bin
    out[base + static_cast<std::size_t>(b)] += 1.0;
  }
  for (int b = 0; b < bins; ++b) out[base + static_cast<std::size_t>(b)] /= static_cast<double>(n);
}

}  // namespace

std::vector<double> encode(const WindowOutputs& outputs, const EncodingSpec& spec) {
  spec.validate();
  const int n = static_cast<int>(outputs.windows.size());
  if (spec.kind != EncodingKind::Histogram && n > spec.max_windows) {
    throw std::runtime_error("recording '" + outputs.recording_id + "' has " + std::to_string(n) +
                             " windows but the encoding spec was fit with T = " +
                             std::to_string(spec.max_windows));
  }

  std::vector<double> out;
  switch (spec.kind) {
    case EncodingKind::RawProb: {
      out.reserve(static_cast<std::size_t>(spec.max_windows));
      for (const auto& w : outputs.windows) out.push_back(w.p_abnormal);
      out.resize(static_cast<std::size_t>(spec.max_windows), spec.pad_value);
      break;
    }
    case EncodingKind::Histogram: {
      append_histogram(out, outputs, spec.bins);
      break;
    }
    case EncodingKind::Hybrid: {
      out.reserve(static_cast<std::size_t>(spec.max_windows + spec.bins));
      for (const auto& w : outputs.windows) out.push_back(w.p_abnormal);
      out.resize(static_cast<std::size_t>(spec.max_windows), spec.pad_value);
      append_histogram(out, outputs, spec.bins);
      break;
    }
    case EncodingKind::Logits: {
      out.reserve(static_cast<std::size_t>(2 * spec.max_windows));
      for (const auto& w : outputs.windows) {
        out.push_back(w.logit_normal);
        out.push_back(w.logit_abnormal);
      }
      out.resize(static_cast<std::size_t>(2 * spec.max_windows), spec.pad_value);
      break;
    }
    case EncodingKind::Features: {
      out.reserve(static_cast<std::size_t>(spec.feature_dim * spec.max_windows));
      for (const auto& w : outputs.windows) {
        if (static_cast<int>(w.features.size()) != spec.feature_dim) {
          throw std::runtime_error("recording '" + outputs.recording_id +
                                   "': feature vectors absent or of wrong dimension (want " +
                                   std::to_string(spec.feature_dim) + ", have " +
                                   std::to_string(w.features.size()) + ")");
        }
        out.insert(out.end(), w.features.begin(), w.features.end());
      }
      out.resize(static_cast<std::size_t>(spec.feature_dim * spec.max_windows), spec.pad_value);
      break;
    }
  }
  return out;
}

EncodingSpec fit_spec(const std::vector<const WindowOutputs*>& training, EncodingKind kind,
                      int bins, double pad_value) {
  if (training.empty()) throw std::invalid_argument("fit_spec needs a non-empty training split");
  EncodingSpec spec;
  spec.kind = kind;
  spec.bins = bins;
  spec.pad_value = pad_value;
  int max_n = 0;
  int feature_dim = -1;
  for (const WindowOutputs* wo : training) {
    max_n = std::max(max_n, static_cast<int>(wo->windows.size()));
    if (kind == EncodingKind::Features && !wo->windows.empty()) {
      const int d = wo->feature_dim();
      if (feature_dim < 0) feature_dim = d;
      if (d != feature_dim) {
        throw std::runtime_error("recording '" + wo->recording_id + "': feature dimension " +
                                 std::to_string(d) + " differs from corpus-wide " +
                                 std::to_string(feature_dim));
      }
    }
  }
  spec.max_windows = max_n;
  if (kind == EncodingKind::Features) {
    if (feature_dim <= 0) throw std::runtime_error("features encoding requested but inputs carry none");
    spec.feature_dim = feature_dim;
  }
  spec.validate();
  return spec;
}

}  // namespace winstack
