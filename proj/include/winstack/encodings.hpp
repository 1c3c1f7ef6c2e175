#pragma once

#include <string>
#include <vector>

#include "winstack/firststage.hpp"

namespace winstack {

enum class EncodingKind { RawProb, Histogram, Hybrid, Logits, Features };

const char* to_string(EncodingKind kind);
EncodingKind encoding_kind_from_string(const std::string& s);

struct EncodingSpec {
  EncodingKind kind = EncodingKind::RawProb;
  int max_windows = 0;   // T, learned from the training split
  int bins = 10;
  int feature_dim = 0;   // d, Features only
  double pad_value = 0.0;  // 0.5 available as an ablation of the zero-pad semantics

  int input_length() const;
  void validate() const;
};

/// Fixed-length meta-model input.
/// RawProb:   [p_0..p_{n-1}, pad..]                      length T
/// Histogram: normalised bin frequencies over [0,1]      length bins
/// Hybrid:    RawProb then Histogram                     length T + bins
/// Logits:    (logit_normal, logit_abnormal) interleaved length 2T
/// Features:  per-window feature vectors concatenated    length d*T
std::vector<double> encode(const WindowOutputs& outputs, const EncodingSpec& spec);

/// Learns T (and d for Features) from the training split; the spec is frozen
/// and serialized with any model trained on it.
EncodingSpec fit_spec(const std::vector<const WindowOutputs*>& training, EncodingKind kind,
                      int bins = 10, double pad_value = 0.0);

}  // namespace winstack
