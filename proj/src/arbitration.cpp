#include "winstack/arbitration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace winstack {

namespace {
constexpr double kGeomeanClamp = 1e-7;
}

const char* to_string(SessionMethod m) {
  return m == SessionMethod::Mean ? "mean" : "geomean";
}

SessionMethod session_method_from_string(const std::string& s) {
  if (s == "mean") return SessionMethod::Mean;
  if (s == "geomean") return SessionMethod::Geomean;
  throw std::runtime_error("unknown session method '" + s + "'");
}

Label decide(double p_abnormal) {
  // A tie at 0.5 resolves to abnormal: missed abnormality costs more than a
  // false alarm in a screening setting.
  return p_abnormal >= 0.5 ? Label::Abnormal : Label::Normal;
}

double geometric_mean_probability(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("geometric mean of an empty list");
  bool all_equal = true;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("probability outside [0,1]");
    if (v == 0.0) return 0.0;
    all_equal = all_equal && v == p[0];
  }
  if (all_equal) return p[0];
  double log_sum = 0.0;
  for (double v : p) {
    log_sum += std::log(std::clamp(v, kGeomeanClamp, 1.0 - kGeomeanClamp));
  }
  return std::exp(log_sum / static_cast<double>(p.size()));
}

namespace {

double mean_probability(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s += v;
  return s / static_cast<double>(p.size());
}

std::vector<double> window_probabilities(const WindowOutputs& outputs) {
  std::vector<double> p;
  p.reserve(outputs.windows.size());
  for (const auto& w : outputs.windows) p.push_back(w.p_abnormal);
  return p;
}

}  // namespace

RecordingDecision arbitrate_recording(const WindowOutputs& outputs,
                                      const ArbitrationMethod& method) {
  RecordingDecision d;
  d.recording_id = outputs.recording_id;
  switch (method.kind) {
    case ArbitrationMethod::Kind::NoArbitration:
      throw std::invalid_argument(
          "no-arbitration is a window-level method and yields no recording decision");
    case ArbitrationMethod::Kind::Mean: {
      if (outputs.windows.empty()) {
        throw std::runtime_error("recording '" + outputs.recording_id +
                                 "' has no windows; mean arbitration undefined");
      }
      d.p_abnormal = mean_probability(window_probabilities(outputs));
      break;
    }
    case ArbitrationMethod::Kind::Geomean: {
      if (outputs.windows.empty()) {
        throw std::runtime_error("recording '" + outputs.recording_id +
                                 "' has no windows; geomean arbitration undefined");
      }
      d.p_abnormal = geometric_mean_probability(window_probabilities(outputs));
      break;
    }
    case ArbitrationMethod::Kind::MetaAnn: {
      const auto probs = predict_ann(*method.ann, encode(outputs, method.ann->encoding));
      d.p_abnormal = probs[1];
      break;
    }
    case ArbitrationMethod::Kind::MetaGbt: {
      d.p_abnormal = predict_gbt(*method.gbt, encode(outputs, method.gbt->encoding));
      break;
    }
  }
  d.label = decide(d.p_abnormal);
  return d;
}

SessionDecision arbitrate_session(const std::string& session_id,
                                  const std::vector<RecordingDecision>& decisions,
                                  SessionMethod method) {
  if (decisions.empty()) {
    throw std::invalid_argument("session '" + session_id + "' has no recording decisions");
  }
  std::vector<double> p;
  p.reserve(decisions.size());
  for (const auto& d : decisions) p.push_back(d.p_abnormal);
  SessionDecision s;
  s.session_id = session_id;
  s.method = method;
  s.p_abnormal =
      method == SessionMethod::Mean ? mean_probability(p) : geometric_mean_probability(p);
  s.label = decide(s.p_abnormal);
  return s;
}

std::map<std::string, Label> session_to_recording_labels(
    const std::vector<SessionDecision>& decisions, const std::vector<Session>& sessions) {
  std::map<std::string, Label> by_session;
  for (const auto& d : decisions) by_session.emplace(d.session_id, d.label);
  std::map<std::string, Label> out;
  for (const auto& s : sessions) {
    auto it = by_session.find(s.session_id);
    if (it == by_session.end()) {
      throw std::runtime_error("no session decision for session '" + s.session_id + "'");
    }
    for (const auto& r : s.recordings) out.emplace(r.recording_id, it->second);
  }
  return out;
}

}  // namespace winstack
