#include "winstack/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "winstack/csv.hpp"
#include "winstack/rng.hpp"

namespace winstack {

const char* to_string(Label label) {
  return label == Label::Normal ? "normal" : "abnormal";
}

Label label_from_string(const std::string& s) {
  if (s == "normal") return Label::Normal;
  if (s == "abnormal") return Label::Abnormal;
  throw std::runtime_error("unknown label '" + s + "' (expected normal|abnormal)");
}

std::size_t Corpus::recording_count() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.recordings.size();
  return n;
}

std::size_t Corpus::patient_count() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : sessions) ids.insert(s.patient_id);
  return ids.size();
}

LabelCounts Corpus::recording_label_counts() const {
  LabelCounts c;
  for (const auto& s : sessions) {
    for (const auto& r : s.recordings) {
      (r.label == Label::Normal ? c.n_normal : c.n_abnormal)++;
    }
  }
  return c;
}

std::vector<const Recording*> Corpus::recordings() const {
  std::vector<const Recording*> out;
  out.reserve(recording_count());
  for (const auto& s : sessions) {
    for (const auto& r : s.recordings) out.push_back(&r);
  }
  return out;
}

const Recording* Corpus::find_recording(const std::string& recording_id) const {
  for (const auto& s : sessions) {
    for (const auto& r : s.recordings) {
      if (r.recording_id == recording_id) return &r;
    }
  }
  return nullptr;
}

Corpus build_corpus(const std::vector<Recording>& records, const InclusionPolicy& policy,
                    const std::string& name) {
  std::unordered_set<std::string> seen_ids;
  seen_ids.reserve(records.size());
  for (const auto& r : records) {
    if (r.recording_id.empty() || r.session_id.empty() || r.patient_id.empty()) {
      throw std::runtime_error("record with empty id fields (recording '" + r.recording_id + "')");
    }
    if (r.duration_s <= 0.0) {
      throw std::runtime_error("recording '" + r.recording_id + "' has non-positive duration");
    }
    if (r.label_confidence < 0.0 || r.label_confidence > 1.0) {
      throw std::runtime_error("recording '" + r.recording_id + "' has confidence outside [0,1]");
    }
    if (!seen_ids.insert(r.recording_id).second) {
      throw std::runtime_error("duplicate recording_id '" + r.recording_id + "'");
    }
  }

  Corpus corpus;
  corpus.name = name;
  corpus.policy = policy;

  // Group retained records by session, preserving first-appearance order.
  std::unordered_map<std::string, std::size_t> session_index;
  for (const auto& r : records) {
    if (!policy.admits(r)) continue;
    auto it = session_index.find(r.session_id);
    if (it == session_index.end()) {
      session_index.emplace(r.session_id, corpus.sessions.size());
      Session s;
      s.session_id = r.session_id;
      s.patient_id = r.patient_id;
      s.label = r.label;
      s.recordings.push_back(r);
      corpus.sessions.push_back(std::move(s));
    } else {
      Session& s = corpus.sessions[it->second];
      if (s.patient_id != r.patient_id) {
        throw std::runtime_error("session '" + r.session_id + "' has recordings from patients '" +
                                 s.patient_id + "' and '" + r.patient_id + "'");
      }
      if (s.label != r.label) {
        throw std::runtime_error("session '" + r.session_id +
                                 "' has recordings with conflicting labels");
      }
      s.recordings.push_back(r);
    }
  }
  return corpus;
}

Split split_by_patient(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in (0,1)");
  }
  if (corpus.sessions.empty()) throw std::invalid_argument("cannot split an empty corpus");

  // Patient -> owned recording ids, in first-appearance order.
  std::vector<std::string> patients;
  std::unordered_map<std::string, std::vector<std::string>> by_patient;
  std::size_t total = 0;
  for (const auto& s : corpus.sessions) {
    auto [it, fresh] = by_patient.try_emplace(s.patient_id);
    if (fresh) patients.push_back(s.patient_id);
    for (const auto& r : s.recordings) {
      it->second.push_back(r.recording_id);
      ++total;
    }
  }
  if (patients.size() < 2) {
    throw std::runtime_error("patient-disjoint split needs at least 2 patients, corpus has " +
                             std::to_string(patients.size()));
  }

  Rng rng(derive_seed(seed, "split_by_patient"));
  rng.shuffle(patients);

  Split split;
  split.ratio = test_fraction;
  const double target = test_fraction * static_cast<double>(total);
  std::size_t test_count = 0;
  std::size_t i = 0;
  for (; i < patients.size() && static_cast<double>(test_count) < target; ++i) {
    for (const auto& rid : by_patient[patients[i]]) {
      split.test.insert(rid);
      ++test_count;
    }
  }
  if (i == patients.size()) {
    throw std::runtime_error("test fraction leaves no train patients at patient granularity");
  }
  for (; i < patients.size(); ++i) {
    for (const auto& rid : by_patient[patients[i]]) split.train.insert(rid);
  }
  return split;
}

bool patients_disjoint(const Corpus& corpus, const Split& split) {
  std::unordered_set<std::string> train_patients, test_patients;
  for (const auto& s : corpus.sessions) {
    for (const auto& r : s.recordings) {
      if (split.train.count(r.recording_id)) train_patients.insert(r.patient_id);
      if (split.test.count(r.recording_id)) test_patients.insert(r.patient_id);
    }
  }
  for (const auto& p : test_patients) {
    if (train_patients.count(p)) return false;
  }
  return true;
}

ClassWeights class_weights(const std::vector<Label>& labels) {
  ClassWeights w;
  for (Label l : labels) (l == Label::Normal ? w.n_normal : w.n_abnormal)++;
  if (w.n_normal == 0) throw std::runtime_error("class 'normal' has zero samples");
  if (w.n_abnormal == 0) throw std::runtime_error("class 'abnormal' has zero samples");
  const double top = static_cast<double>(std::max(w.n_normal, w.n_abnormal));
  w.a_normal = top / static_cast<double>(w.n_normal);
  w.a_abnormal = top / static_cast<double>(w.n_abnormal);
  return w;
}

std::vector<Recording> read_manifest(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  const std::size_t c_rid = t.column("recording_id");
  const std::size_t c_sid = t.column("session_id");
  const std::size_t c_pid = t.column("patient_id");
  const std::size_t c_dur = t.column("duration_seconds");
  const std::size_t c_lab = t.column("label");
  // Confidence column is optional; absent means manually labeled.
  bool has_conf = std::find(t.columns.begin(), t.columns.end(), "confidence") != t.columns.end();
  std::size_t c_conf = has_conf ? t.column("confidence") : 0;

  std::vector<Recording> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Recording r;
    r.recording_id = row[c_rid];
    r.session_id = row[c_sid];
    r.patient_id = row[c_pid];
    r.duration_s = parse_double(row[c_dur], "duration_seconds of " + r.recording_id);
    r.label = label_from_string(row[c_lab]);
    r.label_confidence = has_conf ? parse_double(row[c_conf], "confidence of " + r.recording_id) : 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Corpus& corpus) {
  std::string content = "recording_id,session_id,patient_id,duration_seconds,label,confidence\n";
  for (const auto& s : corpus.sessions) {
    for (const auto& r : s.recordings) {
      content += csv_join({r.recording_id, r.session_id, r.patient_id, format_double(r.duration_s),
                           to_string(r.label), format_double(r.label_confidence)});
      content += '\n';
    }
  }
  write_text_file_atomic(path, content);
}

}  // namespace winstack
