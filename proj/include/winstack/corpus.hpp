#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace winstack {

enum class Label { Normal, Abnormal };

const char* to_string(Label label);
Label label_from_string(const std::string& s);

struct Recording {
  std::string recording_id;
  std::string session_id;
  std::string patient_id;
  double duration_s = 0.0;
  Label label = Label::Normal;
  double label_confidence = 1.0;  // 1.0 = manually labeled
};

struct Session {
  std::string session_id;
  std::string patient_id;
  std::vector<Recording> recordings;
  Label label = Label::Normal;  // every member recording carries this label
};

struct InclusionPolicy {
  double min_duration_s = 0.0;
  double min_label_confidence = 0.0;

  /// Manually labeled corpus: every recording at least 15 minutes.
  static InclusionPolicy tuab() { return {15.0 * 60.0, 1.0}; }
  /// Auto-labeled corpus: at least 6 minutes, label confidence >= 0.99.
  static InclusionPolicy autotuab() { return {6.0 * 60.0, 0.99}; }

  bool admits(const Recording& r) const {
    return r.duration_s >= min_duration_s && r.label_confidence >= min_label_confidence;
  }
};

struct LabelCounts {
  std::int64_t n_normal = 0;
  std::int64_t n_abnormal = 0;
};

class Corpus {
 public:
  std::string name;
  InclusionPolicy policy;
  std::vector<Session> sessions;

  std::size_t session_count() const { return sessions.size(); }
  std::size_t recording_count() const;
  std::size_t patient_count() const;
  LabelCounts recording_label_counts() const;

  /// All recordings in session order (stable, deterministic).
  std::vector<const Recording*> recordings() const;
  const Recording* find_recording(const std::string& recording_id) const;
};

struct Split {
  std::set<std::string> train;  // recording ids
  std::set<std::string> test;
  double ratio = 0.0;  // requested test fraction
};

struct ClassWeights {
  std::int64_t n_normal = 0;
  std::int64_t n_abnormal = 0;
  double a_normal = 1.0;
  double a_abnormal = 1.0;

  double weight(Label label) const { return label == Label::Normal ? a_normal : a_abnormal; }
};

/// Assembles sessions from raw per-recording descriptors, keeping only
/// records that pass the policy. Rejects duplicate recording ids and
/// sessions whose members disagree on patient id or label.
Corpus build_corpus(const std::vector<Recording>& records, const InclusionPolicy& policy,
                    const std::string& name = "");

/// Patient-disjoint split: patients are shuffled deterministically by seed
/// and assigned to the test side until the test recording count first
/// reaches test_fraction * total.
Split split_by_patient(const Corpus& corpus, double test_fraction, std::uint64_t seed);

bool patients_disjoint(const Corpus& corpus, const Split& split);

/// Per-class loss weights, inversely proportional to class counts and
/// normalised so the majority class has weight 1.
ClassWeights class_weights(const std::vector<Label>& labels);

// Corpus manifest file: recording_id,session_id,patient_id,duration_seconds,label,confidence
std::vector<Recording> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace winstack
