#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "winstack/corpus.hpp"
#include "winstack/firststage.hpp"
#include "winstack/meta_ann.hpp"
#include "winstack/meta_gbt.hpp"

namespace winstack {

struct RecordingDecision {
  std::string recording_id;
  double p_abnormal = 0.0;
  Label label = Label::Normal;  // Abnormal iff p >= 0.5 (ties resolve abnormal)
};

enum class SessionMethod { Mean, Geomean };

const char* to_string(SessionMethod m);
SessionMethod session_method_from_string(const std::string& s);

struct SessionDecision {
  std::string session_id;
  double p_abnormal = 0.0;
  Label label = Label::Normal;
  SessionMethod method = SessionMethod::Mean;
};

struct ArbitrationMethod {
  enum class Kind { NoArbitration, Mean, Geomean, MetaAnn, MetaGbt };
  Kind kind = Kind::Mean;
  const AnnModel* ann = nullptr;
  const GbtModel* gbt = nullptr;

  static ArbitrationMethod no_arbitration() { return {Kind::NoArbitration, nullptr, nullptr}; }
  static ArbitrationMethod mean() { return {Kind::Mean, nullptr, nullptr}; }
  static ArbitrationMethod geomean() { return {Kind::Geomean, nullptr, nullptr}; }
  static ArbitrationMethod meta(const AnnModel& m) { return {Kind::MetaAnn, &m, nullptr}; }
  static ArbitrationMethod meta(const GbtModel& m) { return {Kind::MetaGbt, nullptr, &m}; }
};

Label decide(double p_abnormal);

/// Geometric mean of probabilities. Exact zeros annihilate; nonzero inputs
/// are clamped to [1e-7, 1-1e-7] first so that long recordings cannot
/// underflow to a spurious zero. All-equal inputs return the common value.
double geometric_mean_probability(std::span<const double> p);

/// Second-stage arbitration of one recording's window outputs.
RecordingDecision arbitrate_recording(const WindowOutputs& outputs,
                                      const ArbitrationMethod& method);

/// Third-stage arbitration over the recording decisions of one session.
SessionDecision arbitrate_session(const std::string& session_id,
                                  const std::vector<RecordingDecision>& decisions,
                                  SessionMethod method);

/// Each recording inherits its session's decided label, converting
/// session-level results to recording-level ones for comparison.
std::map<std::string, Label> session_to_recording_labels(
    const std::vector<SessionDecision>& decisions, const std::vector<Session>& sessions);

}  // namespace winstack
