// Acceptance suite: one self-contained criterion per function, each printing
// a single [PASS]/[FAIL] line. Exit status = number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "winstack/arbitration.hpp"
#include "winstack/corpus.hpp"
#include "winstack/encodings.hpp"
#include "winstack/evaluation.hpp"
#include "winstack/experiment.hpp"
#include "winstack/explain.hpp"
#include "winstack/firststage.hpp"
#include "winstack/meta_ann.hpp"
#include "winstack/meta_gbt.hpp"
#include "winstack/model_io.hpp"
#include "winstack/rng.hpp"

using namespace winstack;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
};

double norm_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double da = 0, db = 0, diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    da += a[i] * a[i];
    db += b[i] * b[i];
    diff += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(diff) / std::max({std::sqrt(da), std::sqrt(db), 1e-12});
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. ANN gradients match central finite differences on every grid cell.
// ---------------------------------------------------------------------------
Check criterion_gradients() {
  Check c;
  Rng data_rng(1001);
  const int dim = 8;
  std::vector<std::vector<double>> x;
  std::vector<Label> y;
  std::vector<double> w;
  for (int i = 0; i < 20; ++i) {  // 20 random instances
    std::vector<double> row(dim);
    for (auto& v : row) v = data_rng.uniform(-1, 1);
    x.push_back(row);
    y.push_back(data_rng.bernoulli(0.5) ? Label::Abnormal : Label::Normal);
    w.push_back(data_rng.bernoulli(0.5) ? 1.0 : 2.584);
  }

  for (int depth = 0; depth <= 3; ++depth) {
    for (Activation act : {Activation::ReLU, Activation::GELU, Activation::ELU, Activation::None}) {
      AnnArchitecture arch{dim, depth, depth > 0 ? 8 : 0, act};
      AnnNet net(arch);
      Rng init(derive_seed(17, "cell/" + std::to_string(depth) + to_string(act)));
      net.init(init);
      std::vector<double> grad;
      net.loss_and_gradient(x, y, w, &grad);
      const std::vector<double> params = net.flat_params();
      std::vector<double> fd(params.size());
      const double h = 1e-6;
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params;
        p[i] = params[i] + h;
        net.set_flat_params(p);
        const double up = net.loss_and_gradient(x, y, w, nullptr);
        p[i] = params[i] - h;
        net.set_flat_params(p);
        const double down = net.loss_and_gradient(x, y, w, nullptr);
        fd[i] = (up - down) / (2 * h);
      }
      net.set_flat_params(params);
      const double err = norm_rel_err(grad, fd);
      c.require(err < 1e-5, "depth " + std::to_string(depth) + " act " + to_string(act) +
                                ": rel err " + fmt(err));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 2. AM-GM: geomean <= mean over 10^4 random recordings, equality iff equal.
// ---------------------------------------------------------------------------
Check criterion_am_gm() {
  Check c;
  Rng rng(1002);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    WindowOutputs wo;
    wo.recording_id = "t";
    const bool make_equal = trial % 10 == 0;
    const double shared = rng.uniform();
    for (int k = 0; k < n; ++k) {
      wo.windows.push_back({make_equal ? shared : rng.uniform(), 0, 0, {}});
    }
    const double mean = arbitrate_recording(wo, ArbitrationMethod::mean()).p_abnormal;
    const double geo = arbitrate_recording(wo, ArbitrationMethod::geomean()).p_abnormal;
    c.require(geo <= mean + 1e-12, "geomean " + fmt(geo) + " > mean " + fmt(mean));
    bool all_equal = true;
    for (const auto& w : wo.windows) all_equal = all_equal && w.p_abnormal == wo.windows[0].p_abnormal;
    if (all_equal) {
      c.require(std::abs(geo - mean) <= 1e-12, "equality violated on an all-equal recording");
    } else if (n > 1) {
      c.require(geo < mean, "strict inequality violated on a non-equal recording");
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 3. GBT correctness: monotone loss, exact leaf values, duplication = weight.
// ---------------------------------------------------------------------------
Check criterion_gbt() {
  Check c;
  auto make_data = [](std::uint64_t seed, int n, int dim) {
    Rng rng(seed);
    std::pair<std::vector<std::vector<double>>, std::vector<Label>> d;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(dim);
      double s = 0;
      for (auto& v : row) {
        v = rng.uniform();
        s += v;
      }
      d.first.push_back(row);
      d.second.push_back(s + 0.6 * rng.normal() > dim * 0.5 ? Label::Abnormal : Label::Normal);
    }
    return d;
  };

  // (a) 200 rounds of non-increasing training loss on 3 datasets.
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    const auto [x, y] = make_data(seed, 250, 6);
    GbtConfig cfg;
    cfg.rounds = 200;
    const GbtModel model =
        train_gbt(x, y, class_weights(y), cfg, EncodingSpec{EncodingKind::RawProb, 6, 10, 0, 0.0});
    for (std::size_t r = 1; r < model.train_loss.size(); ++r) {
      c.require(model.train_loss[r] <= model.train_loss[r - 1] + 1e-12,
                "loss increased at round " + std::to_string(r) + " (seed " + std::to_string(seed) +
                    ")");
    }

    // (b) every leaf equals -G/(H+lambda) on recomputation.
    std::vector<double> margins(x.size(), model.base_score);
    const ClassWeights w = class_weights(y);
    for (const auto& tree : model.trees) {
      std::vector<double> lg(tree.nodes.size(), 0.0), lh(tree.nodes.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-margins[i]));
        const double a = w.weight(y[i]);
        const int leaf = tree.leaf_index(x[i]);
        lg[static_cast<std::size_t>(leaf)] += a * (p - (y[i] == Label::Abnormal ? 1.0 : 0.0));
        lh[static_cast<std::size_t>(leaf)] += a * p * (1.0 - p);
      }
      for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        if (!tree.nodes[n].is_leaf() || (lg[n] == 0.0 && lh[n] == 0.0)) continue;
        const double expected = -lg[n] / (lh[n] + model.config.lambda);
        const double got = tree.nodes[n].leaf_value;
        c.require(std::abs(got - expected) <=
                      1e-12 * std::max({1.0, std::abs(got), std::abs(expected)}),
                  "leaf value " + fmt(got) + " != " + fmt(expected));
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        margins[i] += model.config.learning_rate * tree.value(x[i]);
      }
    }
  }

  // (c) duplicating the minority twice == doubling its weight, on 200 samples.
  {
    const auto [x, y] = make_data(44, 200, 4);
    std::vector<std::vector<double>> dup_x;
    std::vector<Label> dup_y;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dup_x.push_back(x[i]);
      dup_y.push_back(y[i]);
      if (y[i] == Label::Normal) {
        dup_x.push_back(x[i]);
        dup_y.push_back(y[i]);
      }
    }
    ClassWeights unit;
    unit.n_normal = unit.n_abnormal = 1;
    unit.a_normal = unit.a_abnormal = 1.0;
    ClassWeights doubled = unit;
    doubled.a_normal = 2.0;
    GbtConfig cfg;
    cfg.rounds = 50;
    cfg.max_depth = 4;
    const EncodingSpec spec{EncodingKind::RawProb, 4, 10, 0, 0.0};
    const GbtModel a = train_gbt(dup_x, dup_y, unit, cfg, spec);
    const GbtModel b = train_gbt(x, y, doubled, cfg, spec);
    c.require(a.trees.size() == b.trees.size(), "tree count differs");
    for (std::size_t t = 0; t < a.trees.size() && c.ok; ++t) {
      c.require(a.trees[t].nodes.size() == b.trees[t].nodes.size(),
                "node count differs in tree " + std::to_string(t));
      if (!c.ok) break;
      for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
        const auto &na = a.trees[t].nodes[n], &nb = b.trees[t].nodes[n];
        c.require(na.feature == nb.feature && na.threshold == nb.threshold &&
                      na.leaf_value == nb.leaf_value,
                  "tree " + std::to_string(t) + " node " + std::to_string(n) + " differs");
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 4. Depth-grid CV on an XOR corpus beats the depth-1 control by > 10 points.
// ---------------------------------------------------------------------------
Check criterion_xor_cv() {
  Check c;
  Rng rng(1004);
  std::vector<std::vector<double>> x;
  std::vector<Label> y;
  for (int i = 0; i < 600; ++i) {
    const bool a = rng.bernoulli(0.5), b = rng.bernoulli(0.5);
    std::vector<double> row(8);
    for (auto& v : row) v = rng.uniform(0.3, 0.7);
    row[0] = (a ? 0.9 : 0.1) + rng.uniform(-0.02, 0.02);
    row[3] = (b ? 0.9 : 0.1) + rng.uniform(-0.02, 0.02);
    x.push_back(row);
    y.push_back(a != b ? Label::Abnormal : Label::Normal);
  }
  GbtConfig cfg;
  cfg.rounds = 60;
  cfg.depth_grid = {1, 5, 10, 15, 20, 25};  // depth 1 as the control
  cfg.cv_folds = 3;
  cfg.seed = 9;
  const DepthCvResult r =
      cv_select_depth(x, y, cfg, EncodingSpec{EncodingKind::RawProb, 8, 10, 0, 0.0});
  double control = 0, best = 0;
  for (const auto& row : r.table) {
    if (row.depth == 1) control = row.mean_accuracy;
    if (row.depth == r.best_depth) best = row.mean_accuracy;
  }
  c.require(r.best_depth != 1, "CV selected the depth-1 control");
  c.require(best - control > 0.10, "selected depth " + std::to_string(r.best_depth) + " at " +
                                       fmt(best) + " vs depth-1 " + fmt(control));
  c.detail = "selected depth " + std::to_string(r.best_depth) + ": " + fmt(best) + " vs depth-1 " +
             fmt(control);
  return c;
}

// ---------------------------------------------------------------------------
// 5. Synthetic analogue of the core claim: dilution hurts mean arbitration,
//    the tree meta-model recovers to near the Bayes ceiling.
// ---------------------------------------------------------------------------
Check criterion_core_claim() {
  Check c;
  const WindowingConfig windowing{60, 60, 60, 1200};
  SynthConfig synth;
  synth.n_patients = 1000;
  synth.recordings_per_session = DistSpec::fixed(3);
  synth.duration_s = DistSpec::fixed(1260);  // 20 windows
  synth.prevalence_abnormal = 0.5;
  synth.event_density = 0.15;
  synth.window_tpr = 0.95;
  synth.window_fpr = 0.05;
  synth.response_noise = 0.1;

  // The synthetic channel's evidence is additive across windows, so stumps
  // are the right tree shape here.
  GbtConfig gbt;
  gbt.rounds = 200;
  gbt.max_depth = 1;

  double sum_sens = 0, sum_spec = 0, sum_mean_acc = 0, sum_gbt_acc = 0, sum_bayes_acc = 0;
  const int repeats = 5;
  for (int r = 0; r < repeats; ++r) {
    SynthConfig cfg = synth;
    cfg.seed = derive_seed(2026, "repeat/" + std::to_string(r));
    const SynthData data = simulate(cfg, windowing);
    const Split split = split_by_patient(data.corpus, 0.1, cfg.seed);

    std::vector<const Recording*> train, test;
    for (const auto* rec : data.corpus.recordings()) {
      (split.train.count(rec->recording_id) ? train : test).push_back(rec);
    }

    // Mean arbitration on the test side.
    ConfusionMatrix mean_matrix;
    for (const auto* rec : test) {
      const auto d = arbitrate_recording(data.outputs.at(rec->recording_id),
                                         ArbitrationMethod::mean());
      mean_matrix.add(rec->label, d.label);
    }
    const EvalReport mean_report = report_from_matrix(mean_matrix, Granularity::Recording);

    // GBT on raw encodings.
    std::vector<const WindowOutputs*> train_outputs;
    std::vector<Label> train_labels;
    for (const auto* rec : train) {
      train_outputs.push_back(&data.outputs.at(rec->recording_id));
      train_labels.push_back(rec->label);
    }
    const EncodingSpec spec = fit_spec(train_outputs, EncodingKind::RawProb);
    std::vector<std::vector<double>> train_x;
    for (const auto* wo : train_outputs) train_x.push_back(encode(*wo, spec));
    GbtConfig gc = gbt;
    gc.seed = cfg.seed;
    const GbtModel model = train_gbt(train_x, train_labels, class_weights(train_labels), gc, spec);

    ConfusionMatrix gbt_matrix, bayes_matrix;
    for (const auto* rec : test) {
      const auto& wo = data.outputs.at(rec->recording_id);
      const double p_gbt = predict_gbt(model, encode(wo, spec));
      gbt_matrix.add(rec->label, decide(p_gbt));
      const double p_bayes = bayes_posterior_abnormal(wo, cfg, windowing);
      bayes_matrix.add(rec->label, decide(p_bayes));
    }
    const EvalReport gbt_report = report_from_matrix(gbt_matrix, Granularity::Recording);
    const EvalReport bayes_report = report_from_matrix(bayes_matrix, Granularity::Recording);

    sum_sens += mean_report.sensitivity.value_or(0);
    sum_spec += mean_report.specificity.value_or(0);
    sum_mean_acc += *mean_report.accuracy;
    sum_gbt_acc += *gbt_report.accuracy;
    sum_bayes_acc += *bayes_report.accuracy;
  }

  const double sens = sum_sens / repeats, spec = sum_spec / repeats;
  const double mean_acc = sum_mean_acc / repeats, gbt_acc = sum_gbt_acc / repeats;
  const double bayes_acc = sum_bayes_acc / repeats;
  c.require(spec - sens >= 0.05,
            "dilution signature missing: spec " + fmt(spec) + " sens " + fmt(sens));
  c.require(gbt_acc - mean_acc >= 0.05,
            "meta-model margin " + fmt(gbt_acc - mean_acc) + " < 5 points");
  c.require(bayes_acc - gbt_acc <= 0.02,
            "gap to the Bayes oracle " + fmt(bayes_acc - gbt_acc) + " > 2 points");
  c.detail = "mean " + fmt(mean_acc) + " (sens " + fmt(sens) + "/spec " + fmt(spec) + "), gbt " +
             fmt(gbt_acc) + ", bayes " + fmt(bayes_acc);
  return c;
}

// ---------------------------------------------------------------------------
// 6. Shapley axioms, and sampled-vs-exact agreement at 10^4 permutations.
// ---------------------------------------------------------------------------
Check criterion_shapley() {
  Check c;
  // Hand-built symmetric ensemble: stumps on features 0 and 1, feature 2 idle.
  GbtModel handmade;
  handmade.base_score = 0.0;
  handmade.input_len = 3;
  handmade.config.learning_rate = 1.0;
  handmade.encoding = EncodingSpec{EncodingKind::RawProb, 3, 10, 0, 0.0};
  for (int f = 0; f < 2; ++f) {
    GbtTree tree;
    tree.nodes.push_back({f, 0.5, 1, 2, 0.0});
    tree.nodes.push_back({-1, 0, -1, -1, -1.0});
    tree.nodes.push_back({-1, 0, -1, -1, 1.0});
    handmade.trees.push_back(tree);
  }
  std::vector<std::vector<double>> cube;
  for (int mask = 0; mask < 8; ++mask) {
    cube.push_back({mask & 1 ? 0.9 : 0.1, mask & 2 ? 0.9 : 0.1, mask & 4 ? 0.9 : 0.1});
  }
  {
    const auto attr = shapley_exact(handmade, std::vector<double>{0.9, 0.9, 0.4}, cube);
    c.require(attr.efficiency_gap() < 1e-9, "efficiency gap " + fmt(attr.efficiency_gap()));
    c.require(attr.phi[2] == 0.0, "dummy axiom violated: phi_2 = " + fmt(attr.phi[2]));
    c.require(std::abs(attr.phi[0] - attr.phi[1]) < 1e-12, "symmetry axiom violated");
  }

  // Trained 12-feature model: efficiency + sampled agreement within 3 SE.
  Rng rng(1006);
  std::vector<std::vector<double>> x;
  std::vector<Label> y;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> row(12);
    double s = 0;
    for (auto& v : row) {
      v = rng.uniform();
      s += v;
    }
    x.push_back(row);
    y.push_back(s + rng.normal() * 0.5 > 6.0 ? Label::Abnormal : Label::Normal);
  }
  GbtConfig cfg;
  cfg.rounds = 30;
  cfg.max_depth = 3;
  const GbtModel model =
      train_gbt(x, y, class_weights(y), cfg, EncodingSpec{EncodingKind::RawProb, 12, 10, 0, 0.0});
  std::vector<std::vector<double>> background(x.begin(), x.begin() + 40);

  for (int i = 0; i < 3; ++i) {
    const auto& instance = x[static_cast<std::size_t>(100 + i)];
    const auto exact = shapley_exact(model, instance, background);
    c.require(exact.efficiency_gap() < 1e-9,
              "trained-model efficiency gap " + fmt(exact.efficiency_gap()));
    const auto sampled = shapley_sampled(model, instance, background, 10000, 42 + i);
    for (std::size_t j = 0; j < exact.phi.size(); ++j) {
      const double tol = 3.0 * std::max(sampled.std_error[j], 1e-9);
      c.require(std::abs(sampled.phi[j] - exact.phi[j]) <= tol,
                "feature " + std::to_string(j) + ": |sampled - exact| = " +
                    fmt(std::abs(sampled.phi[j] - exact.phi[j])) + " > 3 SE = " + fmt(tol));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 7. Squared-weight window importance, exact hand values.
// ---------------------------------------------------------------------------
Check criterion_importance() {
  Check c;
  AnnModel model(AnnArchitecture{3, 0, 0, Activation::None});
  model.encoding = EncodingSpec{EncodingKind::RawProb, 3, 10, 0, 0.0};
  model.net.mutable_weights()[0] = {3, 0, 2, 4, 0, -2};
  const auto importance = window_importance(model);
  c.require(importance[0] == 12.5, "I_0 = " + fmt(importance[0]) + " != 12.5");
  c.require(importance[1] == 0.0, "I_1 = " + fmt(importance[1]) + " != 0");
  c.require(importance[2] == 4.0, "I_2 = " + fmt(importance[2]) + " != 4");

  AnnModel flipped(AnnArchitecture{3, 0, 0, Activation::None});
  flipped.encoding = model.encoding;
  flipped.net.mutable_weights()[0] = {-3, 0, -2, -4, 0, 2};
  c.require(window_importance(flipped) == importance, "sign-flip invariance violated");
  return c;
}

// ---------------------------------------------------------------------------
// 8. Stage 3: singleton fixed points; geomean improves converted accuracy.
// ---------------------------------------------------------------------------
Check criterion_stage3() {
  Check c;
  // Singleton sessions are fixed points, exactly.
  {
    RecordingDecision r{"rec", 0.7341928373, Label::Abnormal};
    for (SessionMethod m : {SessionMethod::Mean, SessionMethod::Geomean}) {
      const auto s = arbitrate_session("s", {r}, m);
      c.require(s.p_abnormal == r.p_abnormal && s.label == r.label,
                "singleton session not a fixed point");
    }
  }

  const WindowingConfig windowing{60, 60, 60, 1200};
  SynthConfig synth;
  synth.n_patients = 400;
  synth.recordings_per_session = DistSpec::fixed(3);
  synth.duration_s = DistSpec::fixed(660);  // 10 windows
  synth.prevalence_abnormal = 0.5;
  synth.event_density = 0.7;
  synth.window_tpr = 0.9;
  synth.window_fpr = 0.1;
  synth.response_noise = 0.25;

  double total_improvement = 0;
  double sum_acc2 = 0, sum_acc3 = 0;
  const int repeats = 5;
  for (int r = 0; r < repeats; ++r) {
    SynthConfig cfg = synth;
    cfg.seed = derive_seed(808, "repeat/" + std::to_string(r));
    const SynthData data = simulate(cfg, windowing);

    // Stage 2 = mean arbitration per recording.
    std::map<std::string, RecordingDecision> decisions;
    ConfusionMatrix stage2;
    for (const auto* rec : data.corpus.recordings()) {
      const auto d = arbitrate_recording(data.outputs.at(rec->recording_id),
                                         ArbitrationMethod::mean());
      stage2.add(rec->label, d.label);
      decisions.emplace(rec->recording_id, d);
    }

    // Stage 3 = geomean across each session's recordings, converted back.
    std::vector<SessionDecision> session_decisions;
    for (const auto& s : data.corpus.sessions) {
      std::vector<RecordingDecision> members;
      for (const auto& rec : s.recordings) members.push_back(decisions.at(rec.recording_id));
      session_decisions.push_back(arbitrate_session(s.session_id, members, SessionMethod::Geomean));
    }
    const auto converted = session_to_recording_labels(session_decisions, data.corpus.sessions);
    ConfusionMatrix stage3;
    for (const auto* rec : data.corpus.recordings()) {
      stage3.add(rec->label, converted.at(rec->recording_id));
    }

    const double acc2 = *report_from_matrix(stage2, Granularity::Recording).accuracy;
    const double acc3 = *report_from_matrix(stage3, Granularity::Recording).accuracy;
    total_improvement += acc3 - acc2;
    sum_acc2 += acc2;
    sum_acc3 += acc3;
  }
  const double mean_improvement = total_improvement / repeats;
  c.require(mean_improvement >= 0.01,
            "stage-3 improvement " + fmt(mean_improvement) + " < 1 point");
  c.detail = "stage2 " + fmt(sum_acc2 / repeats) + " -> stage3 " + fmt(sum_acc3 / repeats) +
             " (+" + fmt(mean_improvement) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 9. Encoding contracts over 10^3 random recordings.
// ---------------------------------------------------------------------------
Check criterion_encodings() {
  Check c;
  Rng rng(1009);
  const int t_max = 24;
  const EncodingSpec raw{EncodingKind::RawProb, t_max, 10, 0, 0.0};
  const EncodingSpec hist{EncodingKind::Histogram, t_max, 10, 0, 0.0};
  const EncodingSpec hybrid{EncodingKind::Hybrid, t_max, 10, 0, 0.0};
  for (int trial = 0; trial < 1000; ++trial) {
    WindowOutputs wo;
    wo.recording_id = "t";
    const int n = 1 + static_cast<int>(rng.below(t_max));
    for (int k = 0; k < n; ++k) wo.windows.push_back({rng.uniform(), 0, 0, {}});

    const auto r = encode(wo, raw);
    const auto h = encode(wo, hist);
    const auto hy = encode(wo, hybrid);

    WindowOutputs shuffled = wo;
    rng.shuffle(shuffled.windows);
    c.require(encode(shuffled, hist) == h, "histogram not permutation invariant");

    c.require(hy.size() == r.size() + h.size(), "hybrid length mismatch");
    bool prefix = std::equal(r.begin(), r.end(), hy.begin());
    bool suffix = std::equal(h.begin(), h.end(), hy.begin() + static_cast<std::ptrdiff_t>(r.size()));
    c.require(prefix && suffix, "hybrid != raw || histogram");

    for (int k = n; k < t_max; ++k) {
      c.require(r[static_cast<std::size_t>(k)] == 0.0, "pad position not exactly zero");
    }
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    c.require(std::abs(sum - 1.0) <= 1e-12, "histogram sum " + fmt(sum) + " != 1");
  }
  return c;
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism and model round-trips.
// ---------------------------------------------------------------------------
Check criterion_determinism() {
  Check c;
  const auto base = std::filesystem::temp_directory_path() / "winstack_acceptance_runs";
  std::filesystem::remove_all(base);

  auto config_for = [&](const std::filesystem::path& out) {
    ExperimentConfig cfg;
    cfg.seed = 31337;
    cfg.repeats = 2;
    cfg.out_dir = out;
    cfg.synth.n_patients = 80;
    cfg.synth.duration_s = DistSpec::fixed(660);
    cfg.synth.recordings_per_session = DistSpec::uniform(1, 2);
    cfg.windowing = WindowingConfig{60, 60, 60, 1200};
    cfg.test_fraction = 0.2;
    cfg.methods = {parse_method("no-arbitration"), parse_method("mean"), parse_method("geomean"),
                   parse_method("ann:raw"), parse_method("gbt:histogram")};
    cfg.stage3 = {SessionMethod::Geomean};
    cfg.ann.train.epochs = 40;
    cfg.gbt.config.rounds = 20;
    cfg.gbt.config.max_depth = 3;
    return cfg;
  };

  run_experiment(config_for(base / "a"));
  run_experiment(config_for(base / "b"));

  auto read_manifest_json = [](const std::filesystem::path& p) {
    std::ifstream in(p / "manifest.json");
    return nlohmann::json::parse(in);
  };
  const auto ma = read_manifest_json(base / "a");
  const auto mb = read_manifest_json(base / "b");
  c.require(ma.at("status") == "ok", "run A did not succeed");
  c.require(ma.at("artifacts").size() == mb.at("artifacts").size(), "artifact counts differ");
  if (c.ok) {
    for (std::size_t i = 0; i < ma.at("artifacts").size(); ++i) {
      const auto &aa = ma.at("artifacts")[i], &ab = mb.at("artifacts")[i];
      c.require(aa.at("path") == ab.at("path") && aa.at("fnv1a64") == ab.at("fnv1a64"),
                "artifact hash differs: " + aa.at("path").get<std::string>());
    }
  }

  // Every saved model round-trips to the decisions recorded during the run.
  const WindowingConfig windowing{60, 60, 60, 1200};
  for (int r = 0; r < 2 && c.ok; ++r) {
    const auto repeat_dir = base / "a" / ("repeat_" + std::to_string(r));
    const auto outputs = read_window_outputs(repeat_dir / "outputs.csv", windowing);
    for (const std::string name : {"ann-raw", "gbt-histogram"}) {
      const auto loaded = load_model(repeat_dir / "models" / (name + ".json"));
      const CsvTable decisions = read_csv(repeat_dir / "decisions" / (name + ".csv"));
      const std::size_t c_rid = decisions.column("recording_id");
      const std::size_t c_p = decisions.column("p_abnormal");
      for (const auto& row : decisions.rows) {
        const auto& wo = outputs.at(row[c_rid]);
        double replayed;
        if (std::holds_alternative<AnnModel>(loaded)) {
          const auto& m = std::get<AnnModel>(loaded);
          replayed = predict_ann(m, encode(wo, m.encoding))[1];
        } else {
          const auto& m = std::get<GbtModel>(loaded);
          replayed = predict_gbt(m, encode(wo, m.encoding));
        }
        const double recorded = parse_double(row[c_p], "p_abnormal");
        c.require(recorded == replayed, name + "/" + row[c_rid] + ": loaded model prediction " +
                                            fmt(replayed) + " != recorded " + fmt(recorded));
        if (!c.ok) break;
      }
      if (!c.ok) break;
    }
  }

  std::filesystem::remove_all(base);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  const struct {
    int id;
    const char* name;
    Check (*run)();
  } criteria[] = {
      {1, "ANN gradient check vs central finite differences", criterion_gradients},
      {2, "AM-GM arbitration property over 10^4 recordings", criterion_am_gm},
      {3, "GBT monotone loss, exact leaves, duplication equivalence", criterion_gbt},
      {4, "depth-grid CV beats the depth-1 control on XOR structure", criterion_xor_cv},
      {5, "dilution signature + meta-model recovery near the Bayes ceiling", criterion_core_claim},
      {6, "Shapley axioms and sampled agreement", criterion_shapley},
      {7, "squared-weight window importance hand values", criterion_importance},
      {8, "stage-3 fixed points and geomean improvement", criterion_stage3},
      {9, "encoding contracts over 10^3 recordings", criterion_encodings},
      {10, "end-to-end determinism and model round-trips", criterion_determinism},
  };

  int only = 0;
  if (argc > 2 && std::string(argv[1]) == "--only") only = std::atoi(argv[2]);

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (only != 0 && criterion.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Check result = criterion.run();
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.ok) {
      std::printf("[PASS] criterion %2d: %s (%.1fs)%s%s\n", criterion.id, criterion.name, seconds,
                  result.detail.empty() ? "" : " -- ", result.detail.c_str());
    } else {
      std::printf("[FAIL] criterion %2d: %s (%.1fs) -- %s\n", criterion.id, criterion.name, seconds,
                  result.detail.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
