#include "winstack/evaluation.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace winstack {

void ConfusionMatrix::add(Label truth, Label predicted) {
  if (truth == Label::Abnormal) {
    (predicted == Label::Abnormal ? tp : fn)++;
  } else {
    (predicted == Label::Normal ? tn : fp)++;
  }
}

const char* to_string(Granularity g) {
  switch (g) {
    case Granularity::Window: return "window";
    case Granularity::Recording: return "recording";
    case Granularity::Session: return "session";
  }
  return "?";
}

EvalReport report_from_matrix(const ConfusionMatrix& m, Granularity g, std::string subset_tag) {
  EvalReport r;
  r.granularity = g;
  r.matrix = m;
  r.n = m.total();
  r.subset_tag = std::move(subset_tag);
  if (r.n > 0) r.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(r.n);
  if (m.tp + m.fn > 0) r.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (m.tn + m.fp > 0) r.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  return r;
}

EvalReport evaluate(const std::vector<Label>& truths, const std::vector<Label>& predictions,
                    Granularity granularity, std::string subset_tag) {
  if (truths.size() != predictions.size()) {
    throw std::invalid_argument("truth and prediction lists differ in length (" +
                                std::to_string(truths.size()) + " vs " +
                                std::to_string(predictions.size()) + ")");
  }
  if (truths.empty()) throw std::invalid_argument("nothing to evaluate (empty lists)");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truths.size(); ++i) m.add(truths[i], predictions[i]);
  return report_from_matrix(m, granularity, std::move(subset_tag));
}

std::vector<PositionAccuracy> per_position_accuracy(
    const std::vector<std::pair<Label, std::vector<Label>>>& recordings) {
  std::size_t max_len = 0;
  for (const auto& [truth, preds] : recordings) max_len = std::max(max_len, preds.size());
  std::vector<long> n(max_len, 0), correct(max_len, 0);
  for (const auto& [truth, preds] : recordings) {
    for (std::size_t k = 0; k < preds.size(); ++k) {
      n[k]++;
      if (preds[k] == truth) correct[k]++;
    }
  }
  std::vector<PositionAccuracy> out;
  out.reserve(max_len);
  for (std::size_t k = 0; k < max_len; ++k) {
    PositionAccuracy pa;
    pa.position = static_cast<int>(k);
    pa.n = n[k];
    if (n[k] > 0) pa.accuracy = static_cast<double>(correct[k]) / static_cast<double>(n[k]);
    out.push_back(pa);
  }
  return out;
}

std::vector<LengthHistogramRow> length_histogram(const Corpus& corpus,
                                                 const WindowingConfig& windowing) {
  windowing.validate();
  std::map<int, LengthHistogramRow> rows;
  for (const auto& s : corpus.sessions) {
    for (const auto& r : s.recordings) {
      const int count = window_count_for_duration(r.duration_s, windowing);
      auto& row = rows[count];
      row.window_count = count;
      (r.label == Label::Normal ? row.n_normal : row.n_abnormal)++;
    }
  }
  std::vector<LengthHistogramRow> out;
  out.reserve(rows.size());
  for (const auto& [count, row] : rows) out.push_back(row);
  return out;
}

std::vector<const Session*> multi_recording_subset(const Corpus& corpus) {
  std::vector<const Session*> out;
  for (const auto& s : corpus.sessions) {
    if (s.recordings.size() > 1) out.push_back(&s);
  }
  return out;
}

}  // namespace winstack
