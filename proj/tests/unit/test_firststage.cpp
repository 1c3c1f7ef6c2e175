#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "winstack/csv.hpp"
#include "winstack/firststage.hpp"

using namespace winstack;

namespace {

const WindowingConfig kWindowing{60, 60, 60, 1200};

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_patients = 50;
  cfg.duration_s = DistSpec::fixed(660);  // 10 windows
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("simulate: noiseless limit puts every window on its base level") {
  SynthConfig cfg = small_config();
  cfg.event_density = 1.0;
  cfg.window_tpr = 1.0;
  cfg.window_fpr = 0.0;
  cfg.response_noise = 0.0;
  const SynthData data = simulate(cfg, kWindowing);
  REQUIRE(data.corpus.recording_count() > 0);
  for (const auto* rec : data.corpus.recordings()) {
    const auto& wo = data.outputs.at(rec->recording_id);
    REQUIRE(wo.windows.size() == 10);
    for (const auto& w : wo.windows) {
      CHECK(w.p_abnormal == (rec->label == Label::Abnormal ? 0.8 : 0.2));
    }
  }
}

TEST_CASE("simulate: prevalence lands in the binomial bound and re-runs agree") {
  SynthConfig cfg = small_config();
  cfg.n_patients = 1000;
  cfg.seed = 42;
  const SynthData a = simulate(cfg, kWindowing);
  const auto counts = a.corpus.recording_label_counts();
  CHECK(counts.n_abnormal >= 400);
  CHECK(counts.n_abnormal <= 600);

  const SynthData b = simulate(cfg, kWindowing);
  REQUIRE(a.corpus.recording_count() == b.corpus.recording_count());
  for (const auto* rec : a.corpus.recordings()) {
    const auto& wa = a.outputs.at(rec->recording_id);
    const auto& wb = b.outputs.at(rec->recording_id);
    REQUIRE(wa.windows.size() == wb.windows.size());
    for (std::size_t k = 0; k < wa.windows.size(); ++k) {
      CHECK(wa.windows[k].p_abnormal == wb.windows[k].p_abnormal);  // bit-identical
    }
  }
}

TEST_CASE("simulate: event rate matches the conditioned Bernoulli mean") {
  SynthConfig cfg;
  cfg.n_patients = 2000;
  cfg.duration_s = DistSpec::fixed(1260);  // 20 windows
  cfg.event_density = 0.15;
  cfg.prevalence_abnormal = 1.0;
  cfg.seed = 7;
  const SynthData data = simulate(cfg, kWindowing);
  double total_events = 0;
  long n_rec = 0;
  for (const auto& [rid, ev] : data.events) {
    total_events += std::accumulate(ev.begin(), ev.end(), 0.0);
    CHECK(std::accumulate(ev.begin(), ev.end(), 0) >= 1);  // rejection guarantees an event
    ++n_rec;
  }
  // E[events | >= 1] = 20 * rho / (1 - (1-rho)^20)
  const double expected = 20.0 * 0.15 / (1.0 - std::pow(0.85, 20));
  CHECK(total_events / static_cast<double>(n_rec) == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("simulate: normal recordings carry no events; outputs are softmax-consistent") {
  const SynthData data = simulate(small_config(), kWindowing);
  for (const auto* rec : data.corpus.recordings()) {
    const auto& ev = data.events.at(rec->recording_id);
    const long n_events = std::accumulate(ev.begin(), ev.end(), 0L);
    if (rec->label == Label::Normal) CHECK(n_events == 0);
    else CHECK(n_events >= 1);
    CHECK_NOTHROW(check_softmax_consistency(data.outputs.at(rec->recording_id), 1e-9));
  }
}

TEST_CASE("simulate: empirical window-level AUC approaches the channel AUC") {
  SynthConfig cfg;
  cfg.n_patients = 1000;
  cfg.duration_s = DistSpec::fixed(1260);  // 20k windows total
  cfg.event_density = 0.3;
  cfg.seed = 11;
  const SynthData data = simulate(cfg, kWindowing);

  std::vector<double> event_p, clean_p;
  for (const auto& [rid, wo] : data.outputs) {
    const auto& ev = data.events.at(rid);
    for (std::size_t k = 0; k < wo.windows.size(); ++k) {
      (ev[k] ? event_p : clean_p).push_back(wo.windows[k].p_abnormal);
    }
  }
  REQUIRE(event_p.size() + clean_p.size() >= 10000);

  // Empirical AUC by rank comparison.
  std::sort(event_p.begin(), event_p.end());
  std::sort(clean_p.begin(), clean_p.end());
  double wins = 0;
  for (double e : event_p) {
    const auto lo = std::lower_bound(clean_p.begin(), clean_p.end(), e) - clean_p.begin();
    const auto hi = std::upper_bound(clean_p.begin(), clean_p.end(), e) - clean_p.begin();
    wins += static_cast<double>(lo) + 0.5 * static_cast<double>(hi - lo);
  }
  const double auc = wins / (static_cast<double>(event_p.size()) * static_cast<double>(clean_p.size()));

  // Channel AUC for the two-level mixture with shared gaussian noise:
  // P(X_event > X_clean) over the four (elevated?) combinations.
  auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const double d = (cfg.base_event_response - cfg.base_clean_response) /
                   (cfg.response_noise * std::sqrt(2.0));
  const double tpr = cfg.window_tpr, fpr = cfg.window_fpr;
  const double expected = tpr * fpr * 0.5 + tpr * (1 - fpr) * phi(d) + (1 - tpr) * fpr * phi(-d) +
                          (1 - tpr) * (1 - fpr) * 0.5;
  CHECK(auc == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("simulate rejects duration distributions that yield no windows") {
  SynthConfig cfg = small_config();
  cfg.duration_s = DistSpec::fixed(100);  // below head_trim + window_length
  CHECK_THROWS_AS(simulate(cfg, kWindowing), std::invalid_argument);
}

TEST_CASE("window outputs file round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "winstack_test_outputs.csv";

  SUBCASE("contiguous windows are accepted") {
    std::string content = "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n";
    for (int k = 0; k < 19; ++k) {
      content += "rec0," + std::to_string(k) + ",0.5,0,0\n";
    }
    write_text_file_atomic(path, content);
    const auto outputs = read_window_outputs(path, kWindowing);
    REQUIRE(outputs.size() == 1);
    CHECK(outputs.at("rec0").windows.size() == 19);
  }

  SUBCASE("a missing window index is an error naming the recording") {
    write_text_file_atomic(path,
                           "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n"
                           "rec1,0,0.5,0,0\nrec1,1,0.5,0,0\nrec1,3,0.5,0,0\n");
    CHECK_THROWS_WITH_AS(read_window_outputs(path, kWindowing), doctest::Contains("rec1"),
                         std::runtime_error);
  }

  SUBCASE("softmax-consistent logits are accepted") {
    // p = 0.7 with logits (0, ln(7/3)).
    const double la = std::log(7.0 / 3.0);
    write_text_file_atomic(path,
                           "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n"
                           "rec2,0,0.7,0," + format_double(la) + "\n");
    const auto outputs = read_window_outputs(path, kWindowing);
    CHECK(outputs.at("rec2").windows[0].p_abnormal == 0.7);
  }

  SUBCASE("inconsistent probability/logit pairs are rejected") {
    write_text_file_atomic(path,
                           "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n"
                           "rec3,0,0.9,0,0\n");
    CHECK_THROWS_AS(read_window_outputs(path, kWindowing), std::runtime_error);
  }

  SUBCASE("probability outside [0,1] is rejected") {
    write_text_file_atomic(path,
                           "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n"
                           "rec4,0,1.5,0,0\n");
    CHECK_THROWS_AS(read_window_outputs(path, kWindowing), std::runtime_error);
  }

  SUBCASE("rows need not be sorted") {
    write_text_file_atomic(path,
                           "recording_id,window_index,p_abnormal,logit_normal,logit_abnormal\n"
                           "rec5,1,0.5,0,0\nrec5,0,0.5,0,0\n");
    const auto outputs = read_window_outputs(path, kWindowing);
    CHECK(outputs.at("rec5").windows.size() == 2);
  }

  SUBCASE("simulated outputs round-trip through the file format") {
    SynthConfig cfg = small_config();
    cfg.feature_dim = 4;
    const SynthData data = simulate(cfg, kWindowing);
    write_window_outputs(path, data.outputs);
    const auto back = read_window_outputs(path, kWindowing);
    REQUIRE(back.size() == data.outputs.size());
    for (const auto& [rid, wo] : data.outputs) {
      const auto& rt = back.at(rid);
      REQUIRE(rt.windows.size() == wo.windows.size());
      for (std::size_t k = 0; k < wo.windows.size(); ++k) {
        CHECK(rt.windows[k].p_abnormal == wo.windows[k].p_abnormal);
        CHECK(rt.windows[k].features == wo.windows[k].features);
      }
    }
  }

  std::filesystem::remove(path);
}

TEST_CASE("bayes posterior: qualitative behaviour on clean channels") {
  SynthConfig cfg;
  cfg.n_patients = 10;
  cfg.duration_s = DistSpec::fixed(660);
  cfg.event_density = 0.15;
  cfg.prevalence_abnormal = 0.4;
  cfg.response_noise = 0.0;

  WindowOutputs all_clean;
  all_clean.recording_id = "x";
  for (int k = 0; k < 10; ++k) all_clean.windows.push_back({0.2, 0, 0, {}});

  SUBCASE("all-clean responses with zero fpr keep the posterior at or below the prior") {
    SynthConfig c = cfg;
    c.window_fpr = 0.0;
    const double post = bayes_posterior_abnormal(all_clean, c, kWindowing);
    CHECK(post <= c.prevalence_abnormal + 1e-12);
  }

  SUBCASE("one certain event implies abnormal") {
    SynthConfig c = cfg;
    c.window_tpr = 1.0;
    c.window_fpr = 0.0;
    WindowOutputs one_event = all_clean;
    one_event.windows[3].p_abnormal = 0.8;
    CHECK(bayes_posterior_abnormal(one_event, c, kWindowing) == doctest::Approx(1.0));
  }

  SUBCASE("an uninformative channel returns the prior") {
    SynthConfig c = cfg;
    c.window_tpr = 0.3;
    c.window_fpr = 0.3;
    c.response_noise = 0.1;
    WindowOutputs mixed = all_clean;
    mixed.windows[0].p_abnormal = 0.75;
    mixed.windows[5].p_abnormal = 0.44;
    CHECK(bayes_posterior_abnormal(mixed, c, kWindowing) ==
          doctest::Approx(c.prevalence_abnormal).epsilon(1e-9));
  }

  SUBCASE("posterior is invariant to window order") {
    SynthConfig c = cfg;
    c.response_noise = 0.1;
    WindowOutputs a = all_clean;
    a.windows[0].p_abnormal = 0.81;
    a.windows[4].p_abnormal = 0.77;
    a.windows[9].p_abnormal = 0.33;
    WindowOutputs b = a;
    std::reverse(b.windows.begin(), b.windows.end());
    CHECK(bayes_posterior_abnormal(a, c, kWindowing) ==
          doctest::Approx(bayes_posterior_abnormal(b, c, kWindowing)).epsilon(1e-12));
  }

  SUBCASE("window-count mismatch is rejected") {
    WindowOutputs too_long = all_clean;
    for (int k = 0; k < 30; ++k) too_long.windows.push_back({0.2, 0, 0, {}});
    CHECK_THROWS_AS(bayes_posterior_abnormal(too_long, cfg, kWindowing), std::invalid_argument);
  }
}

TEST_CASE("bayes posterior: bursty mode matches a brute-force enumeration") {
  SynthConfig cfg;
  cfg.n_patients = 10;
  cfg.duration_s = DistSpec::fixed(360);  // 5 windows
  cfg.event_density = 0.3;
  cfg.prevalence_abnormal = 0.5;
  cfg.window_tpr = 0.9;
  cfg.window_fpr = 0.1;
  cfg.response_noise = 0.2;
  cfg.bursty_events = true;

  WindowOutputs wo;
  wo.recording_id = "x";
  for (double p : {0.75, 0.85, 0.3, 0.2, 0.25}) wo.windows.push_back({p, 0, 0, {}});
  const int n = 5;

  // Brute force: enumerate run length and start, mirroring the generator.
  auto norm_pdf = [&](double x, double mu) {
    const double s = cfg.response_noise;
    return std::exp(-0.5 * (x - mu) * (x - mu) / (s * s)) / (s * std::sqrt(2 * 3.14159265358979));
  };
  auto f_event = [&](double r) {
    return cfg.window_tpr * norm_pdf(r, 0.8) + (1 - cfg.window_tpr) * norm_pdf(r, 0.2);
  };
  auto f_clean = [&](double r) {
    return cfg.window_fpr * norm_pdf(r, 0.8) + (1 - cfg.window_fpr) * norm_pdf(r, 0.2);
  };
  auto binom = [&](int m) {
    double c = 1;
    for (int i = 0; i < m; ++i) c = c * (n - i) / (i + 1);
    return c * std::pow(cfg.event_density, m) * std::pow(1 - cfg.event_density, n - m);
  };
  double lik_ab = 0.0;
  const double p0 = binom(0);
  for (int m = 1; m <= n; ++m) {
    for (int start = 0; start + m <= n; ++start) {
      double prod = 1.0;
      for (int k = 0; k < n; ++k) {
        const bool in_run = k >= start && k < start + m;
        prod *= in_run ? f_event(wo.windows[k].p_abnormal) : f_clean(wo.windows[k].p_abnormal);
      }
      lik_ab += binom(m) / (1 - p0) / (n - m + 1) * prod;
    }
  }
  double lik_norm = 1.0;
  for (int k = 0; k < n; ++k) lik_norm *= f_clean(wo.windows[k].p_abnormal);
  const double expected = 0.5 * lik_ab / (0.5 * lik_ab + 0.5 * lik_norm);

  CHECK(bayes_posterior_abnormal(wo, cfg, kWindowing) ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("bursty simulation plants one contiguous run") {
  SynthConfig cfg = small_config();
  cfg.bursty_events = true;
  cfg.event_density = 0.4;
  const SynthData data = simulate(cfg, kWindowing);
  for (const auto* rec : data.corpus.recordings()) {
    if (rec->label != Label::Abnormal) continue;
    const auto& ev = data.events.at(rec->recording_id);
    int transitions = 0;
    for (std::size_t k = 1; k < ev.size(); ++k) transitions += ev[k] != ev[k - 1];
    CHECK(transitions <= 2);  // a single run has at most two edges
    CHECK(std::accumulate(ev.begin(), ev.end(), 0) >= 1);
  }
}
