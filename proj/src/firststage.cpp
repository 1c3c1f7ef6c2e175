#include "winstack/firststage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "winstack/csv.hpp"

namespace winstack {

namespace {

constexpr double kProbEps = 1e-6;  // simulator keeps probabilities inside (0,1)
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_weight(double w) { return w > 0.0 ? std::log(w) : kNegInf; }

}  // namespace

void check_softmax_consistency(const WindowOutputs& outputs, double tol) {
  for (std::size_t k = 0; k < outputs.windows.size(); ++k) {
    const auto& w = outputs.windows[k];
    const double p = 1.0 / (1.0 + std::exp(w.logit_normal - w.logit_abnormal));
    if (std::abs(p - w.p_abnormal) > tol) {
      throw std::runtime_error("recording '" + outputs.recording_id + "' window " +
                               std::to_string(k) + ": p_abnormal " + format_double(w.p_abnormal) +
                               " inconsistent with logits (softmax gives " + format_double(p) + ")");
    }
  }
}

double DistSpec::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Fixed:
      return lo;
    case Kind::Uniform:
      return rng.uniform(lo, hi);
    case Kind::Choice:
      return values[rng.below(values.size())];
  }
  return lo;
}

long DistSpec::sample_count(Rng& rng) const {
  switch (kind) {
    case Kind::Fixed:
      return std::lround(lo);
    case Kind::Uniform: {
      const long a = std::lround(lo), b = std::lround(hi);
      return a + static_cast<long>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
    }
    case Kind::Choice:
      return std::lround(values[rng.below(values.size())]);
  }
  return 0;
}

double DistSpec::min_value() const {
  if (kind == Kind::Choice) {
    return *std::min_element(values.begin(), values.end());
  }
  return lo;
}

double DistSpec::max_value() const {
  if (kind == Kind::Choice) {
    return *std::max_element(values.begin(), values.end());
  }
  return kind == Kind::Fixed ? lo : hi;
}

void SynthConfig::validate(const WindowingConfig& windowing) const {
  windowing.validate();
  if (n_patients < 1) throw std::invalid_argument("n_patients must be >= 1");
  auto check_fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
    }
  };
  check_fraction(prevalence_abnormal, "prevalence_abnormal");
  check_fraction(event_density, "event_density");
  check_fraction(window_tpr, "window_tpr");
  check_fraction(window_fpr, "window_fpr");
  if (!(event_density > 0.0)) throw std::invalid_argument("event_density must be positive");
  if (response_noise < 0.0) throw std::invalid_argument("response_noise must be non-negative");
  if (!(base_event_response > 0.0 && base_event_response < 1.0) ||
      !(base_clean_response > 0.0 && base_clean_response < 1.0)) {
    throw std::invalid_argument("base responses must lie in (0,1)");
  }
  if (base_event_response <= base_clean_response) {
    throw std::invalid_argument("base_event_response must exceed base_clean_response");
  }
  if (feature_dim != 0 && feature_dim < 2) {
    throw std::invalid_argument("feature_dim must be 0 (absent) or >= 2");
  }
  if (recordings_per_session.min_value() < 1.0) {
    throw std::invalid_argument("recordings_per_session must be >= 1");
  }
  // Every simulated recording must yield at least one window.
  const double min_needed = windowing.head_trim_s + windowing.window_length_s;
  if (duration_s.min_value() < min_needed) {
    throw std::invalid_argument("duration distribution produces recordings shorter than head_trim + "
                                "window_length (" + format_double(min_needed) + " s); no windows");
  }
}

namespace {

std::string padded_index(int i, int width) {
  std::string s = std::to_string(i);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<std::uint8_t> draw_events(Rng& rng, int n_windows, const SynthConfig& cfg) {
  std::vector<std::uint8_t> ev(static_cast<std::size_t>(n_windows), 0);
  if (cfg.bursty_events) {
    // One contiguous run; length Binomial(n, rho) resampled until >= 1.
    int len = 0;
    do {
      len = 0;
      for (int k = 0; k < n_windows; ++k) len += rng.bernoulli(cfg.event_density) ? 1 : 0;
    } while (len == 0);
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_windows - len + 1)));
    for (int k = start; k < start + len; ++k) ev[static_cast<std::size_t>(k)] = 1;
  } else {
    bool any = false;
    do {
      any = false;
      for (int k = 0; k < n_windows; ++k) {
        ev[static_cast<std::size_t>(k)] = rng.bernoulli(cfg.event_density) ? 1 : 0;
        any = any || ev[static_cast<std::size_t>(k)];
      }
    } while (!any);
  }
  return ev;
}

WindowOutput draw_response(Rng& rng, bool event, const SynthConfig& cfg) {
  const bool elevated = rng.bernoulli(event ? cfg.window_tpr : cfg.window_fpr);
  const double base = elevated ? cfg.base_event_response : cfg.base_clean_response;
  double p = base + cfg.response_noise * rng.normal();
  p = std::clamp(p, kProbEps, 1.0 - kProbEps);
  WindowOutput out;
  out.p_abnormal = p;
  const double z = std::log(p / (1.0 - p));
  out.logit_normal = -0.5 * z;
  out.logit_abnormal = 0.5 * z;
  if (cfg.feature_dim >= 2) {
    out.features.resize(static_cast<std::size_t>(cfg.feature_dim));
    out.features[0] = out.logit_normal;
    out.features[1] = out.logit_abnormal;
    for (int j = 2; j < cfg.feature_dim; ++j) {
      out.features[static_cast<std::size_t>(j)] = rng.normal();  // nuisance dimensions
    }
  }
  return out;
}

}  // namespace

SynthData simulate(const SynthConfig& config, const WindowingConfig& windowing) {
  config.validate(windowing);

  const int pad = static_cast<int>(std::to_string(std::max(config.n_patients - 1, 1)).size());
  std::vector<Recording> records;
  SynthData data;

  for (int i = 0; i < config.n_patients; ++i) {
    const std::string patient_id = "p" + padded_index(i, pad);
    Rng prng(derive_seed(config.seed, "patient/" + patient_id));
    const Label label = prng.bernoulli(config.prevalence_abnormal) ? Label::Abnormal : Label::Normal;
    const long n_rec = config.recordings_per_session.sample_count(prng);
    const std::string session_id = patient_id + "-s0";
    for (long k = 0; k < n_rec; ++k) {
      Recording r;
      r.recording_id = session_id + "-r" + std::to_string(k);
      r.session_id = session_id;
      r.patient_id = patient_id;
      r.duration_s = config.duration_s.sample(prng);
      r.label = label;
      r.label_confidence = 1.0;
      records.push_back(std::move(r));
    }
  }

  for (const auto& r : records) {
    const int n_windows = window_count_for_duration(r.duration_s, windowing);
    Rng rng(derive_seed(config.seed, "recording/" + r.recording_id));
    std::vector<std::uint8_t> events(static_cast<std::size_t>(n_windows), 0);
    if (r.label == Label::Abnormal) events = draw_events(rng, n_windows, config);

    WindowOutputs out;
    out.recording_id = r.recording_id;
    out.windows.reserve(static_cast<std::size_t>(n_windows));
    for (int k = 0; k < n_windows; ++k) {
      out.windows.push_back(draw_response(rng, events[static_cast<std::size_t>(k)] != 0, config));
    }
    data.outputs.emplace(r.recording_id, std::move(out));
    data.events.emplace(r.recording_id, std::move(events));
  }

  data.corpus = build_corpus(records, InclusionPolicy{}, "synthetic");
  return data;
}

namespace {

struct WindowLogLik {
  double log_event;  // log f(r | event window)
  double log_clean;  // log f(r | clean window)
};

WindowLogLik window_loglik(double r, const SynthConfig& cfg) {
  const double sigma = cfg.response_noise;
  double lpdf_e, lpdf_c;  // log density of the response around each base level
  if (sigma == 0.0) {
    // Noiseless responses sit exactly on a base level; match to the nearer one.
    const bool elevated =
        std::abs(r - cfg.base_event_response) < std::abs(r - cfg.base_clean_response);
    lpdf_e = elevated ? 0.0 : kNegInf;
    lpdf_c = elevated ? kNegInf : 0.0;
  } else {
    const double ze = (r - cfg.base_event_response) / sigma;
    const double zc = (r - cfg.base_clean_response) / sigma;
    const double norm = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    lpdf_e = -0.5 * ze * ze + norm;
    lpdf_c = -0.5 * zc * zc + norm;
  }
  WindowLogLik ll;
  ll.log_event = logsumexp2(log_weight(cfg.window_tpr) + lpdf_e,
                            log_weight(1.0 - cfg.window_tpr) + lpdf_c);
  ll.log_clean = logsumexp2(log_weight(cfg.window_fpr) + lpdf_e,
                            log_weight(1.0 - cfg.window_fpr) + lpdf_c);
  return ll;
}

double log_binomial_pmf(int n, int m, double p) {
  if (p <= 0.0) return m == 0 ? 0.0 : kNegInf;
  if (p >= 1.0) return m == n ? 0.0 : kNegInf;
  const double lchoose =
      std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0);
  return lchoose + m * std::log(p) + (n - m) * std::log1p(-p);
}

// log P(responses | abnormal) for i.i.d. Bernoulli(rho) events conditioned
// on at least one event window.
double log_lik_abnormal_iid(const std::vector<WindowLogLik>& ll, double rho) {
  const double log_rho = log_weight(rho);
  const double log_1m_rho = log_weight(1.0 - rho);
  double log_all = 0.0;    // sum over windows of log(rho f_e + (1-rho) f_c)
  double log_clean = 0.0;  // all-clean event pattern
  for (const auto& w : ll) {
    log_all += logsumexp2(log_rho + w.log_event, log_1m_rho + w.log_clean);
    log_clean += log_1m_rho + w.log_clean;
  }
  const double n = static_cast<double>(ll.size());
  const double log_q = n * log_1m_rho;  // P(no event) before conditioning
  // (A - C) / (1 - q), all in log space.
  double diff = log_clean - log_all;  // <= 0 up to rounding
  double log_numer;
  if (diff >= 0.0) {
    log_numer = kNegInf;  // A == C: no event pattern explains the data better
  } else {
    log_numer = log_all + std::log1p(-std::exp(diff));
  }
  const double log_denom = log_q == kNegInf ? 0.0 : std::log1p(-std::exp(log_q));
  return log_numer - log_denom;
}

// Bursty mode: a single contiguous run of events, run length Binomial(n, rho)
// conditioned >= 1, start uniform over feasible positions.
double log_lik_abnormal_bursty(const std::vector<WindowLogLik>& ll, double rho) {
  const int n = static_cast<int>(ll.size());
  std::vector<double> delta(ll.size());
  double sum_clean = 0.0;
  for (std::size_t k = 0; k < ll.size(); ++k) {
    delta[k] = ll[k].log_event - ll[k].log_clean;
    sum_clean += ll[k].log_clean;
  }
  std::vector<double> prefix(ll.size() + 1, 0.0);
  for (std::size_t k = 0; k < ll.size(); ++k) prefix[k + 1] = prefix[k] + delta[k];

  const double log_p0 = log_binomial_pmf(n, 0, rho);
  const double log_norm = log_p0 == kNegInf ? 0.0 : std::log1p(-std::exp(log_p0));
  double acc = kNegInf;
  for (int m = 1; m <= n; ++m) {
    const double log_pm = log_binomial_pmf(n, m, rho) - log_norm;
    const double log_start = -std::log(static_cast<double>(n - m + 1));
    for (int s = 0; s + m <= n; ++s) {
      const double log_term = sum_clean + prefix[s + m] - prefix[s] + log_pm + log_start;
      acc = logsumexp2(acc, log_term);
    }
  }
  return acc;
}

}  // namespace

double bayes_posterior_abnormal(const WindowOutputs& outputs, const SynthConfig& config,
                                const WindowingConfig& windowing) {
  const int n = static_cast<int>(outputs.windows.size());
  if (n == 0) throw std::invalid_argument("bayes posterior needs at least one window");
  const int n_min = window_count_for_duration(config.duration_s.min_value(), windowing);
  const int n_max = window_count_for_duration(config.duration_s.max_value(), windowing);
  if (n < n_min || n > n_max) {
    throw std::invalid_argument("recording '" + outputs.recording_id + "' has " + std::to_string(n) +
                                " windows; config admits [" + std::to_string(n_min) + ", " +
                                std::to_string(n_max) + "]");
  }

  const double prior = config.prevalence_abnormal;
  if (prior <= 0.0) return 0.0;
  if (prior >= 1.0) return 1.0;

  std::vector<WindowLogLik> ll;
  ll.reserve(outputs.windows.size());
  for (const auto& w : outputs.windows) ll.push_back(window_loglik(w.p_abnormal, config));

  double log_lik_ab = config.bursty_events ? log_lik_abnormal_bursty(ll, config.event_density)
                                           : log_lik_abnormal_iid(ll, config.event_density);
  double log_lik_norm = 0.0;
  for (const auto& w : ll) log_lik_norm += w.log_clean;

  if (log_lik_ab == kNegInf && log_lik_norm == kNegInf) return prior;  // both impossible
  if (log_lik_ab == kNegInf) return 0.0;
  if (log_lik_norm == kNegInf) return 1.0;
  // posterior = 1 / (1 + (1-prior)/prior * exp(log_lik_norm - log_lik_ab))
  const double log_odds =
      std::log(prior / (1.0 - prior)) + log_lik_ab - log_lik_norm;
  if (log_odds > 700.0) return 1.0;
  if (log_odds < -700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-log_odds));
}

std::map<std::string, WindowOutputs> read_window_outputs(const std::filesystem::path& path,
                                                         const WindowingConfig& expected) {
  expected.validate();
  CsvTable t = read_csv(path);
  const std::size_t c_rid = t.column("recording_id");
  const std::size_t c_idx = t.column("window_index");
  const std::size_t c_p = t.column("p_abnormal");
  const std::size_t c_ln = t.column("logit_normal");
  const std::size_t c_la = t.column("logit_abnormal");

  // Contiguous feature_0..feature_{d-1} columns, if any.
  std::vector<std::size_t> feature_cols;
  for (int d = 0;; ++d) {
    auto it = std::find(t.columns.begin(), t.columns.end(), "feature_" + std::to_string(d));
    if (it == t.columns.end()) break;
    feature_cols.push_back(static_cast<std::size_t>(it - t.columns.begin()));
  }

  std::map<std::string, std::vector<std::pair<long, WindowOutput>>> grouped;
  for (const auto& row : t.rows) {
    const std::string& rid = row[c_rid];
    WindowOutput w;
    const long idx = parse_int(row[c_idx], "window_index of " + rid);
    w.p_abnormal = parse_double(row[c_p], "p_abnormal of " + rid);
    w.logit_normal = parse_double(row[c_ln], "logit_normal of " + rid);
    w.logit_abnormal = parse_double(row[c_la], "logit_abnormal of " + rid);
    if (!(w.p_abnormal >= 0.0 && w.p_abnormal <= 1.0)) {
      throw std::runtime_error("recording '" + rid + "' window " + std::to_string(idx) +
                               ": p_abnormal outside [0,1]");
    }
    w.features.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) {
      w.features.push_back(parse_double(row[c], "feature of " + rid));
    }
    grouped[rid].emplace_back(idx, std::move(w));
  }

  const int max_windows = expected.max_window_count();
  std::map<std::string, WindowOutputs> out;
  for (auto& [rid, rows] : grouped) {
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    WindowOutputs wo;
    wo.recording_id = rid;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].first != static_cast<long>(k)) {
        throw std::runtime_error("recording '" + rid + "': missing window index " +
                                 std::to_string(k) + " (found " + std::to_string(rows[k].first) +
                                 ")");
      }
      wo.windows.push_back(std::move(rows[k].second));
    }
    if (static_cast<int>(wo.windows.size()) > max_windows) {
      throw std::runtime_error("recording '" + rid + "' has " + std::to_string(wo.windows.size()) +
                               " windows, more than the windowing config admits (" +
                               std::to_string(max_windows) + ")");
    }
    check_softmax_consistency(wo, 1e-6);
    out.emplace(rid, std::move(wo));
  }
  return out;
}

void write_window_outputs(const std::filesystem::path& path,
                          const std::map<std::string, WindowOutputs>& outputs) {
  int feature_dim = 0;
  for (const auto& [rid, wo] : outputs) {
    if (!wo.windows.empty()) {
      feature_dim = wo.feature_dim();
      break;
    }
  }
  std::string header = "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal";
  for (int d = 0; d < feature_dim; ++d) header += ",feature_" + std::to_string(d);
  std::string content = header + "\n";
  for (const auto& [rid, wo] : outputs) {
    for (std::size_t k = 0; k < wo.windows.size(); ++k) {
      const auto& w = wo.windows[k];
      if (static_cast<int>(w.features.size()) != feature_dim) {
        throw std::runtime_error("recording '" + rid + "': feature dimension " +
                                 std::to_string(w.features.size()) + " differs from corpus-wide " +
                                 std::to_string(feature_dim));
      }
      content += rid;
      content += ',' + std::to_string(k);
      content += ',' + format_double(w.p_abnormal);
      content += ',' + format_double(w.logit_normal);
      content += ',' + format_double(w.logit_abnormal);
      for (double f : w.features) content += ',' + format_double(f);
      content += '\n';
    }
  }
  write_text_file_atomic(path, content);
}

}  // namespace winstack
