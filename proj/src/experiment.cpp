#include "winstack/experiment.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "winstack/csv.hpp"
#include "winstack/model_io.hpp"
#include "winstack/rng.hpp"

namespace winstack {

using nlohmann::json;

MethodConfig parse_method(const std::string& token) {
  MethodConfig m;
  m.name = token;
  if (token == "no-arbitration") {
    m.kind = ArbitrationMethod::Kind::NoArbitration;
    return m;
  }
  if (token == "mean") {
    m.kind = ArbitrationMethod::Kind::Mean;
    return m;
  }
  if (token == "geomean") {
    m.kind = ArbitrationMethod::Kind::Geomean;
    return m;
  }
  const auto colon = token.find(':');
  if (colon != std::string::npos) {
    const std::string family = token.substr(0, colon);
    const EncodingKind enc = encoding_kind_from_string(token.substr(colon + 1));
    if (family == "ann") {
      m.kind = ArbitrationMethod::Kind::MetaAnn;
      m.encoding = enc;
      m.name = "ann-" + token.substr(colon + 1);
      return m;
    }
    if (family == "gbt") {
      m.kind = ArbitrationMethod::Kind::MetaGbt;
      m.encoding = enc;
      m.name = "gbt-" + token.substr(colon + 1);
      return m;
    }
  }
  throw std::runtime_error("unknown method '" + token +
                           "' (expected no-arbitration|mean|geomean|ann:<enc>|gbt:<enc>)");
}

namespace {

DistSpec dist_from_json(const json& j, const std::string& context) {
  if (j.is_number()) return DistSpec::fixed(j.get<double>());
  if (j.contains("fixed")) return DistSpec::fixed(j.at("fixed").get<double>());
  if (j.contains("uniform")) {
    const auto& u = j.at("uniform");
    return DistSpec::uniform(u.at(0).get<double>(), u.at(1).get<double>());
  }
  if (j.contains("choice")) return DistSpec::choice(j.at("choice").get<std::vector<double>>());
  throw std::runtime_error("bad distribution descriptor for " + context +
                           " (want number, {\"fixed\":v}, {\"uniform\":[lo,hi]} or {\"choice\":[..]})");
}

json dist_to_json(const DistSpec& d) {
  switch (d.kind) {
    case DistSpec::Kind::Fixed: return json{{"fixed", d.lo}};
    case DistSpec::Kind::Uniform: return json{{"uniform", {d.lo, d.hi}}};
    case DistSpec::Kind::Choice: return json{{"choice", d.values}};
  }
  return {};
}

void parse_synth(const json& j, SynthConfig& s) {
  if (j.contains("n_patients")) s.n_patients = j.at("n_patients").get<int>();
  if (j.contains("recordings_per_session")) {
    s.recordings_per_session = dist_from_json(j.at("recordings_per_session"), "recordings_per_session");
  }
  if (j.contains("duration_s")) s.duration_s = dist_from_json(j.at("duration_s"), "duration_s");
  if (j.contains("prevalence_abnormal")) s.prevalence_abnormal = j.at("prevalence_abnormal").get<double>();
  if (j.contains("event_density")) s.event_density = j.at("event_density").get<double>();
  if (j.contains("window_tpr")) s.window_tpr = j.at("window_tpr").get<double>();
  if (j.contains("window_fpr")) s.window_fpr = j.at("window_fpr").get<double>();
  if (j.contains("response_noise")) s.response_noise = j.at("response_noise").get<double>();
  if (j.contains("base_event_response")) s.base_event_response = j.at("base_event_response").get<double>();
  if (j.contains("base_clean_response")) s.base_clean_response = j.at("base_clean_response").get<double>();
  if (j.contains("bursty_events")) s.bursty_events = j.at("bursty_events").get<bool>();
  if (j.contains("feature_dim")) s.feature_dim = j.at("feature_dim").get<int>();
}

void parse_windowing(const json& j, WindowingConfig& w) {
  if (j.contains("window_length_s")) w.window_length_s = j.at("window_length_s").get<double>();
  if (j.contains("stride_s")) w.stride_s = j.at("stride_s").get<double>();
  if (j.contains("head_trim_s")) w.head_trim_s = j.at("head_trim_s").get<double>();
  if (j.contains("max_used_s")) w.max_used_s = j.at("max_used_s").get<double>();
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j = json::parse(in);

  ExperimentConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("repeats")) cfg.repeats = j.at("repeats").get<int>();
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();

  if (j.contains("corpus")) {
    const auto& jc = j.at("corpus");
    const std::string source = jc.value("source", "synthetic");
    if (source == "synthetic") {
      cfg.synthetic = true;
      if (jc.contains("synth")) parse_synth(jc.at("synth"), cfg.synth);
    } else if (source == "files") {
      cfg.synthetic = false;
      cfg.manifest_path = jc.at("manifest").get<std::string>();
      cfg.outputs_path = jc.at("outputs").get<std::string>();
      if (jc.contains("policy")) {
        const auto& jp = jc.at("policy");
        if (jp.is_string()) {
          const std::string preset = jp.get<std::string>();
          if (preset == "tuab") cfg.policy = InclusionPolicy::tuab();
          else if (preset == "autotuab") cfg.policy = InclusionPolicy::autotuab();
          else if (preset != "none") throw std::runtime_error("unknown policy preset '" + preset + "'");
        } else {
          cfg.policy.min_duration_s = jp.value("min_duration_s", 0.0);
          cfg.policy.min_label_confidence = jp.value("min_label_confidence", 0.0);
        }
      }
    } else {
      throw std::runtime_error("corpus.source must be 'synthetic' or 'files'");
    }
  }

  if (j.contains("windowing")) parse_windowing(j.at("windowing"), cfg.windowing);
  if (j.contains("split")) cfg.test_fraction = j.at("split").value("test_fraction", 0.1);
  if (j.contains("encoding")) {
    cfg.histogram_bins = j.at("encoding").value("bins", 10);
    cfg.pad_value = j.at("encoding").value("pad_value", 0.0);
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& t : j.at("methods")) cfg.methods.push_back(parse_method(t.get<std::string>()));
  }
  if (j.contains("stage3")) {
    for (const auto& t : j.at("stage3")) {
      cfg.stage3.push_back(session_method_from_string(t.get<std::string>()));
    }
  }
  if (j.contains("ann")) {
    const auto& ja = j.at("ann");
    cfg.ann.train.learning_rate = ja.value("learning_rate", cfg.ann.train.learning_rate);
    cfg.ann.train.epochs = ja.value("epochs", cfg.ann.train.epochs);
    cfg.ann.train.batch_size = ja.value("batch_size", cfg.ann.train.batch_size);
    cfg.ann.train.validation_fraction = ja.value("validation_fraction", cfg.ann.train.validation_fraction);
    cfg.ann.train.patience = ja.value("patience", cfg.ann.train.patience);
    cfg.ann.hidden_layers = ja.value("hidden_layers", cfg.ann.hidden_layers);
    cfg.ann.hidden_width = ja.value("hidden_width", cfg.ann.hidden_width);
    if (ja.contains("activation")) {
      cfg.ann.activation = activation_from_string(ja.at("activation").get<std::string>());
    }
    cfg.ann.grid_search = ja.value("grid", cfg.ann.grid_search);
    if (ja.contains("grid_depths")) cfg.ann.grid.depths = ja.at("grid_depths").get<std::vector<int>>();
    if (ja.contains("grid_widths")) cfg.ann.grid.widths = ja.at("grid_widths").get<std::vector<int>>();
    if (ja.contains("grid_activations")) {
      cfg.ann.grid.activations.clear();
      for (const auto& a : ja.at("grid_activations")) {
        cfg.ann.grid.activations.push_back(activation_from_string(a.get<std::string>()));
      }
    }
  }
  if (j.contains("gbt")) {
    const auto& jg = j.at("gbt");
    cfg.gbt.config.rounds = jg.value("rounds", cfg.gbt.config.rounds);
    cfg.gbt.config.learning_rate = jg.value("learning_rate", cfg.gbt.config.learning_rate);
    cfg.gbt.config.max_depth = jg.value("max_depth", cfg.gbt.config.max_depth);
    cfg.gbt.config.min_child_weight = jg.value("min_child_weight", cfg.gbt.config.min_child_weight);
    cfg.gbt.config.lambda = jg.value("lambda", cfg.gbt.config.lambda);
    cfg.gbt.config.feature_subsample = jg.value("feature_subsample", cfg.gbt.config.feature_subsample);
    if (jg.contains("depth_grid")) cfg.gbt.config.depth_grid = jg.at("depth_grid").get<std::vector<int>>();
    cfg.gbt.config.cv_folds = jg.value("cv_folds", cfg.gbt.config.cv_folds);
    cfg.gbt.cv_depth = jg.value("cv_depth", cfg.gbt.cv_depth);
  }
  return cfg;
}

namespace {

json resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["repeats"] = cfg.repeats;
  j["workers"] = cfg.workers;
  if (cfg.synthetic) {
    j["corpus"] = {{"source", "synthetic"},
                   {"synth",
                    {{"n_patients", cfg.synth.n_patients},
                     {"recordings_per_session", dist_to_json(cfg.synth.recordings_per_session)},
                     {"duration_s", dist_to_json(cfg.synth.duration_s)},
                     {"prevalence_abnormal", cfg.synth.prevalence_abnormal},
                     {"event_density", cfg.synth.event_density},
                     {"window_tpr", cfg.synth.window_tpr},
                     {"window_fpr", cfg.synth.window_fpr},
                     {"response_noise", cfg.synth.response_noise},
                     {"base_event_response", cfg.synth.base_event_response},
                     {"base_clean_response", cfg.synth.base_clean_response},
                     {"bursty_events", cfg.synth.bursty_events},
                     {"feature_dim", cfg.synth.feature_dim}}}};
  } else {
    j["corpus"] = {{"source", "files"},
                   {"manifest", cfg.manifest_path.string()},
                   {"outputs", cfg.outputs_path.string()},
                   {"policy",
                    {{"min_duration_s", cfg.policy.min_duration_s},
                     {"min_label_confidence", cfg.policy.min_label_confidence}}}};
  }
  j["windowing"] = {{"window_length_s", cfg.windowing.window_length_s},
                    {"stride_s", cfg.windowing.stride_s},
                    {"head_trim_s", cfg.windowing.head_trim_s},
                    {"max_used_s", cfg.windowing.max_used_s}};
  j["split"] = {{"test_fraction", cfg.test_fraction}};
  j["encoding"] = {{"bins", cfg.histogram_bins}, {"pad_value", cfg.pad_value}};
  json methods = json::array();
  for (const auto& m : cfg.methods) methods.push_back(m.name);
  j["methods"] = std::move(methods);
  json stage3 = json::array();
  for (auto s : cfg.stage3) stage3.push_back(to_string(s));
  j["stage3"] = std::move(stage3);
  j["ann"] = {{"learning_rate", cfg.ann.train.learning_rate},
              {"epochs", cfg.ann.train.epochs},
              {"batch_size", cfg.ann.train.batch_size},
              {"validation_fraction", cfg.ann.train.validation_fraction},
              {"patience", cfg.ann.train.patience},
              {"hidden_layers", cfg.ann.hidden_layers},
              {"hidden_width", cfg.ann.hidden_width},
              {"activation", to_string(cfg.ann.activation)},
              {"grid", cfg.ann.grid_search}};
  j["gbt"] = {{"rounds", cfg.gbt.config.rounds},
              {"learning_rate", cfg.gbt.config.learning_rate},
              {"max_depth", cfg.gbt.config.max_depth},
              {"min_child_weight", cfg.gbt.config.min_child_weight},
              {"lambda", cfg.gbt.config.lambda},
              {"feature_subsample", cfg.gbt.config.feature_subsample},
              {"depth_grid", cfg.gbt.config.depth_grid},
              {"cv_folds", cfg.gbt.config.cv_folds},
              {"cv_depth", cfg.gbt.cv_depth}};
  return j;
}

std::string optional_metric(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::string report_row(int repeat, const std::string& method, const EvalReport& r) {
  return csv_join({std::to_string(repeat), method, to_string(r.granularity),
                   r.subset_tag.empty() ? "all" : r.subset_tag, std::to_string(r.matrix.tp),
                   std::to_string(r.matrix.fp), std::to_string(r.matrix.tn),
                   std::to_string(r.matrix.fn), std::to_string(r.n), optional_metric(r.accuracy),
                   optional_metric(r.sensitivity), optional_metric(r.specificity)});
}

constexpr const char* kSummaryHeader =
    "repeat,method,granularity,subset,tp,fp,tn,fn,n,accuracy,sensitivity,specificity";

struct RepeatData {
  Corpus corpus;
  std::map<std::string, WindowOutputs> outputs;
  std::map<std::string, std::vector<std::uint8_t>> events;  // synth only
};

RepeatData make_repeat_data(const ExperimentConfig& cfg, std::uint64_t repeat_seed) {
  RepeatData data;
  if (cfg.synthetic) {
    SynthConfig synth = cfg.synth;
    synth.seed = repeat_seed;
    SynthData s = simulate(synth, cfg.windowing);
    data.corpus = std::move(s.corpus);
    data.outputs = std::move(s.outputs);
    data.events = std::move(s.events);
  } else {
    data.corpus = build_corpus(read_manifest(cfg.manifest_path), cfg.policy,
                               cfg.manifest_path.stem().string());
    data.outputs = read_window_outputs(cfg.outputs_path, cfg.windowing);
  }
  return data;
}

struct PreparedSplit {
  std::vector<const Recording*> train, test;  // usable (>= 1 window) recordings
  std::vector<Label> train_labels, test_labels;
  std::vector<std::string> train_patients;
  long excluded_too_short = 0;
};

PreparedSplit prepare_split(const RepeatData& data, const Split& split,
                            const ExperimentConfig& cfg) {
  PreparedSplit prep;
  for (const auto& session : data.corpus.sessions) {
    for (const auto& rec : session.recordings) {
      const auto idx = segment(rec, cfg.windowing);
      if (idx.too_short) {
        prep.excluded_too_short++;
        continue;
      }
      auto it = data.outputs.find(rec.recording_id);
      if (it == data.outputs.end()) {
        throw std::runtime_error("no first-stage outputs for recording '" + rec.recording_id + "'");
      }
      if (split.train.count(rec.recording_id)) {
        prep.train.push_back(&rec);
        prep.train_labels.push_back(rec.label);
        prep.train_patients.push_back(rec.patient_id);
      } else if (split.test.count(rec.recording_id)) {
        prep.test.push_back(&rec);
        prep.test_labels.push_back(rec.label);
      }
    }
  }
  if (prep.train.empty() || prep.test.empty()) {
    throw std::runtime_error("split leaves an empty train or test side after exclusions");
  }
  return prep;
}

void write_split_file(const std::filesystem::path& path, const Split& split) {
  std::string content = "recording_id,part\n";
  for (const auto& id : split.train) content += id + ",train\n";
  for (const auto& id : split.test) content += id + ",test\n";
  write_text_file_atomic(path, content);
}

void write_events_file(const std::filesystem::path& path,
                       const std::map<std::string, std::vector<std::uint8_t>>& events) {
  std::string content = "recording_id,window_index,event\n";
  for (const auto& [rid, ev] : events) {
    for (std::size_t k = 0; k < ev.size(); ++k) {
      content += rid + ',' + std::to_string(k) + ',' + (ev[k] ? "1\n" : "0\n");
    }
  }
  write_text_file_atomic(path, content);
}

void write_decisions_file(const std::filesystem::path& path,
                          const std::vector<RecordingDecision>& decisions,
                          const std::map<std::string, std::string>& session_of,
                          const std::string& method) {
  std::string content = "recording_id,session_id,p_abnormal,label,method\n";
  for (const auto& d : decisions) {
    content += csv_join({d.recording_id, session_of.at(d.recording_id),
                         format_double(d.p_abnormal), to_string(d.label), method});
    content += '\n';
  }
  write_text_file_atomic(path, content);
}

void write_session_decisions_file(const std::filesystem::path& path,
                                  const std::vector<SessionDecision>& decisions,
                                  const std::string& method) {
  std::string content = "session_id,p_abnormal,label,method\n";
  for (const auto& d : decisions) {
    content += csv_join({d.session_id, format_double(d.p_abnormal), to_string(d.label), method});
    content += '\n';
  }
  write_text_file_atomic(path, content);
}

struct RepeatResult {
  std::vector<SummaryRow> rows;
};

RepeatResult run_one_repeat(const ExperimentConfig& cfg, int repeat,
                            const std::filesystem::path& run_dir) {
  const std::uint64_t repeat_seed = derive_seed(cfg.seed, "repeat/" + std::to_string(repeat));
  const auto repeat_dir = run_dir / ("repeat_" + std::to_string(repeat));
  std::filesystem::create_directories(repeat_dir);

  RepeatData data = make_repeat_data(cfg, repeat_seed);
  write_manifest(repeat_dir / "corpus.csv", data.corpus);
  if (cfg.synthetic) {
    write_window_outputs(repeat_dir / "outputs.csv", data.outputs);
    write_events_file(repeat_dir / "events.csv", data.events);
  }

  const Split split = split_by_patient(data.corpus, cfg.test_fraction, repeat_seed);
  write_split_file(repeat_dir / "split.csv", split);
  const PreparedSplit prep = prepare_split(data, split, cfg);

  std::map<std::string, std::string> session_of;
  for (const auto& s : data.corpus.sessions) {
    for (const auto& r : s.recordings) session_of.emplace(r.recording_id, s.session_id);
  }

  // Test sessions in corpus order, restricted to usable test recordings.
  std::vector<Session> test_sessions;
  {
    std::set<std::string> test_ids;
    for (const auto* r : prep.test) test_ids.insert(r->recording_id);
    for (const auto& s : data.corpus.sessions) {
      Session t;
      t.session_id = s.session_id;
      t.patient_id = s.patient_id;
      t.label = s.label;
      for (const auto& r : s.recordings) {
        if (test_ids.count(r.recording_id)) t.recordings.push_back(r);
      }
      if (!t.recordings.empty()) test_sessions.push_back(std::move(t));
    }
  }
  std::set<std::string> multi_session_ids;
  for (const auto& s : test_sessions) {
    if (s.recordings.size() > 1) multi_session_ids.insert(s.session_id);
  }

  // Window-level diagnostics on the test side: per-position accuracy and the
  // corpus length histogram.
  {
    std::vector<std::pair<Label, std::vector<Label>>> window_decisions;
    for (const auto* rec : prep.test) {
      const auto& wo = data.outputs.at(rec->recording_id);
      std::vector<Label> preds;
      preds.reserve(wo.windows.size());
      for (const auto& w : wo.windows) preds.push_back(decide(w.p_abnormal));
      window_decisions.emplace_back(rec->label, std::move(preds));
    }
    const auto positions = per_position_accuracy(window_decisions);
    std::string content = "position,n,accuracy\n";
    for (const auto& p : positions) {
      content += csv_join({std::to_string(p.position), std::to_string(p.n),
                           p.accuracy ? format_double(*p.accuracy) : std::string()});
      content += '\n';
    }
    write_text_file_atomic(repeat_dir / "position_accuracy.csv", content);

    const auto hist = length_histogram(data.corpus, cfg.windowing);
    content = "window_count,n_normal,n_abnormal\n";
    for (const auto& row : hist) {
      content += csv_join({std::to_string(row.window_count), std::to_string(row.n_normal),
                           std::to_string(row.n_abnormal)});
      content += '\n';
    }
    write_text_file_atomic(repeat_dir / "length_histogram.csv", content);
  }

  const ClassWeights weights = class_weights(prep.train_labels);

  // Encoding specs are fit once per kind on the training split.
  std::map<EncodingKind, EncodingSpec> specs;
  {
    std::vector<const WindowOutputs*> train_outputs;
    for (const auto* r : prep.train) train_outputs.push_back(&data.outputs.at(r->recording_id));
    for (const auto& m : cfg.methods) {
      if (m.kind != ArbitrationMethod::Kind::MetaAnn && m.kind != ArbitrationMethod::Kind::MetaGbt) {
        continue;
      }
      if (!specs.count(m.encoding)) {
        specs.emplace(m.encoding,
                      fit_spec(train_outputs, m.encoding, cfg.histogram_bins, cfg.pad_value));
      }
    }
  }

  auto encode_set = [&](const std::vector<const Recording*>& recs, const EncodingSpec& spec) {
    std::vector<std::vector<double>> out;
    out.reserve(recs.size());
    for (const auto* r : recs) out.push_back(encode(data.outputs.at(r->recording_id), spec));
    return out;
  };

  RepeatResult result;
  std::deque<AnnModel> ann_models;
  std::deque<GbtModel> gbt_models;

  auto add_report = [&](const std::string& method, const EvalReport& report) {
    result.rows.push_back({repeat, method, report.granularity, report.subset_tag, report});
  };

  for (const auto& method : cfg.methods) {
    if (method.kind == ArbitrationMethod::Kind::NoArbitration) {
      // Window-level accuracy of the raw first-stage outputs.
      std::vector<Label> truths, preds;
      for (std::size_t i = 0; i < prep.test.size(); ++i) {
        const auto& wo = data.outputs.at(prep.test[i]->recording_id);
        for (const auto& w : wo.windows) {
          truths.push_back(prep.test_labels[i]);
          preds.push_back(decide(w.p_abnormal));
        }
      }
      add_report(method.name, evaluate(truths, preds, Granularity::Window));
      continue;
    }

    ArbitrationMethod arb = ArbitrationMethod::mean();
    const std::uint64_t method_seed = derive_seed(repeat_seed, "method/" + method.name);
    switch (method.kind) {
      case ArbitrationMethod::Kind::Mean:
        arb = ArbitrationMethod::mean();
        break;
      case ArbitrationMethod::Kind::Geomean:
        arb = ArbitrationMethod::geomean();
        break;
      case ArbitrationMethod::Kind::MetaAnn: {
        const EncodingSpec& spec = specs.at(method.encoding);
        const auto train_x = encode_set(prep.train, spec);
        AnnTrainOptions opts = cfg.ann.train;
        opts.seed = method_seed;
        if (cfg.ann.grid_search) {
          auto [model, report] = grid_search_ann(train_x, prep.train_labels, weights, cfg.ann.grid,
                                                 opts, spec, &prep.train_patients);
          ann_models.push_back(std::move(model));
          std::string content = "depth,width,activation,val_accuracy,param_count\n";
          for (const auto& c : report.cells) {
            content += csv_join({std::to_string(c.depth), std::to_string(c.width),
                                 to_string(c.activation), format_double(c.val_accuracy),
                                 std::to_string(c.param_count)});
            content += '\n';
          }
          write_text_file_atomic(repeat_dir / ("grid_" + method.name + ".csv"), content);
        } else {
          AnnArchitecture arch{spec.input_length(), cfg.ann.hidden_layers,
                               cfg.ann.hidden_layers > 0 ? cfg.ann.hidden_width : 0,
                               cfg.ann.hidden_layers > 0 ? cfg.ann.activation : Activation::None};
          ann_models.push_back(train_ann(train_x, prep.train_labels, weights, arch, opts, spec,
                                         &prep.train_patients));
        }
        save_model(repeat_dir / "models" / (method.name + ".json"), ann_models.back());
        arb = ArbitrationMethod::meta(ann_models.back());
        break;
      }
      case ArbitrationMethod::Kind::MetaGbt: {
        const EncodingSpec& spec = specs.at(method.encoding);
        const auto train_x = encode_set(prep.train, spec);
        GbtConfig gc = cfg.gbt.config;
        gc.seed = method_seed;
        if (cfg.gbt.cv_depth) {
          DepthCvResult cv = cv_select_depth(train_x, prep.train_labels, gc, spec,
                                             &prep.train_patients);
          gbt_models.push_back(std::move(cv.model));
          std::string content = "depth,mean_accuracy\n";
          for (const auto& row : cv.table) {
            content += std::to_string(row.depth) + ',' + format_double(row.mean_accuracy) + '\n';
          }
          write_text_file_atomic(repeat_dir / ("cv_" + method.name + ".csv"), content);
        } else {
          gbt_models.push_back(train_gbt(train_x, prep.train_labels, weights, gc, spec));
        }
        save_model(repeat_dir / "models" / (method.name + ".json"), gbt_models.back());
        arb = ArbitrationMethod::meta(gbt_models.back());
        break;
      }
      default:
        break;
    }

    // Stage-2 decisions on the test split.
    std::vector<RecordingDecision> decisions;
    decisions.reserve(prep.test.size());
    for (const auto* rec : prep.test) {
      decisions.push_back(arbitrate_recording(data.outputs.at(rec->recording_id), arb));
    }
    write_decisions_file(repeat_dir / "decisions" / (method.name + ".csv"), decisions, session_of,
                         method.name);

    std::vector<Label> preds;
    preds.reserve(decisions.size());
    for (const auto& d : decisions) preds.push_back(d.label);
    add_report(method.name, evaluate(prep.test_labels, preds, Granularity::Recording));

    {  // Restricted to sessions where stage 3 can act.
      std::vector<Label> t, p;
      for (std::size_t i = 0; i < prep.test.size(); ++i) {
        if (!multi_session_ids.count(prep.test[i]->session_id)) continue;
        t.push_back(prep.test_labels[i]);
        p.push_back(preds[i]);
      }
      if (!t.empty()) {
        add_report(method.name, evaluate(t, p, Granularity::Recording, "multi_recording"));
      }
    }

    // Stage-3 session arbitration on top of this method's decisions.
    std::map<std::string, const RecordingDecision*> decision_of;
    for (const auto& d : decisions) decision_of.emplace(d.recording_id, &d);
    for (SessionMethod s3 : cfg.stage3) {
      std::vector<SessionDecision> session_decisions;
      std::vector<Label> session_truths;
      for (const auto& s : test_sessions) {
        std::vector<RecordingDecision> members;
        for (const auto& r : s.recordings) members.push_back(*decision_of.at(r.recording_id));
        session_decisions.push_back(arbitrate_session(s.session_id, members, s3));
        session_truths.push_back(s.label);
      }
      const std::string name = method.name + "+stage3-" + to_string(s3);
      write_session_decisions_file(repeat_dir / "decisions" / (name + ".csv"), session_decisions,
                                   name);

      std::vector<Label> session_preds;
      for (const auto& d : session_decisions) session_preds.push_back(d.label);
      add_report(name, evaluate(session_truths, session_preds, Granularity::Session));

      // Session results converted back to recording level for a fair
      // comparison with stage 2.
      const auto rec_labels = session_to_recording_labels(session_decisions, test_sessions);
      std::vector<Label> conv, conv_multi, truth_multi;
      for (std::size_t i = 0; i < prep.test.size(); ++i) {
        const Label l = rec_labels.at(prep.test[i]->recording_id);
        conv.push_back(l);
        if (multi_session_ids.count(prep.test[i]->session_id)) {
          conv_multi.push_back(l);
          truth_multi.push_back(prep.test_labels[i]);
        }
      }
      add_report(name, evaluate(prep.test_labels, conv, Granularity::Recording));
      if (!truth_multi.empty()) {
        add_report(name, evaluate(truth_multi, conv_multi, Granularity::Recording, "multi_recording"));
      }
    }
  }

  // Per-repeat report table.
  std::string content = std::string(kSummaryHeader) + '\n';
  for (const auto& row : result.rows) content += report_row(repeat, row.method, row.report) + '\n';
  write_text_file_atomic(repeat_dir / "reports.csv", content);
  return result;
}

void write_summary_files(const std::filesystem::path& run_dir, const std::vector<SummaryRow>& rows) {
  std::string content = std::string(kSummaryHeader) + '\n';
  for (const auto& row : rows) content += report_row(row.repeat, row.method, row.report) + '\n';
  write_text_file_atomic(run_dir / "summary.csv", content);

  // Mean across repeats per (method, granularity, subset), mirroring the
  // repeated-experiment protocol.
  struct Acc {
    int n = 0;
    double acc = 0, sens = 0, spec = 0;
    int n_acc = 0, n_sens = 0, n_spec = 0;
  };
  std::map<std::string, Acc> grouped;
  for (const auto& row : rows) {
    const std::string key = row.method + "," + to_string(row.granularity) + "," +
                            (row.subset.empty() ? "all" : row.subset);
    auto& a = grouped[key];
    a.n++;
    if (row.report.accuracy) {
      a.acc += *row.report.accuracy;
      a.n_acc++;
    }
    if (row.report.sensitivity) {
      a.sens += *row.report.sensitivity;
      a.n_sens++;
    }
    if (row.report.specificity) {
      a.spec += *row.report.specificity;
      a.n_spec++;
    }
  }
  content = "method,granularity,subset,repeats,mean_accuracy,mean_sensitivity,mean_specificity\n";
  for (const auto& [key, a] : grouped) {
    content += key + ',' + std::to_string(a.n);
    content += ',' + (a.n_acc ? format_double(a.acc / a.n_acc) : std::string());
    content += ',' + (a.n_sens ? format_double(a.sens / a.n_sens) : std::string());
    content += ',' + (a.n_spec ? format_double(a.spec / a.n_spec) : std::string());
    content += '\n';
  }
  write_text_file_atomic(run_dir / "summary_mean.csv", content);
}

void write_run_manifest(const std::filesystem::path& run_dir, const json& config_echo,
                        const std::string& status, const std::string& error) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == "manifest.json") continue;
    files.push_back(std::filesystem::relative(entry.path(), run_dir));
  }
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const auto& f : files) {
    artifacts.push_back(json{{"path", f.generic_string()},
                             {"bytes", std::filesystem::file_size(run_dir / f)},
                             {"fnv1a64", hash_file(run_dir / f)}});
  }
  json manifest{{"status", status}, {"config", config_echo}, {"artifacts", std::move(artifacts)}};
  if (!error.empty()) manifest["error"] = error;
  write_text_file_atomic(run_dir / "manifest.json", manifest.dump(1));
}

}  // namespace

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (config.methods.empty()) throw std::invalid_argument("no methods configured");
  if (config.out_dir.empty()) throw std::invalid_argument("output directory not set");
  config.windowing.validate();

  const auto run_dir = config.out_dir;
  std::filesystem::create_directories(run_dir);
  const json config_echo = resolved_config_json(config);
  write_text_file_atomic(run_dir / "config.json", config_echo.dump(1));

  ExperimentResult result;
  result.run_dir = run_dir;
  try {
    std::vector<RepeatResult> repeat_results(static_cast<std::size_t>(config.repeats));
    const int workers = std::max(1, config.workers);
    for (int start = 0; start < config.repeats; start += workers) {
      const int end = std::min(config.repeats, start + workers);
      std::vector<std::future<RepeatResult>> futures;
      for (int r = start; r < end; ++r) {
        futures.push_back(std::async(std::launch::async,
                                     [&, r] { return run_one_repeat(config, r, run_dir); }));
      }
      for (int r = start; r < end; ++r) {
        repeat_results[static_cast<std::size_t>(r)] = futures[static_cast<std::size_t>(r - start)].get();
      }
    }
    for (auto& rr : repeat_results) {
      result.rows.insert(result.rows.end(), rr.rows.begin(), rr.rows.end());
    }
    write_summary_files(run_dir, result.rows);
    write_run_manifest(run_dir, config_echo, "ok", "");
  } catch (const std::exception& e) {
    write_run_manifest(run_dir, config_echo, "error", e.what());
    throw;
  }
  return result;
}

ExperimentResult run_sweep(const ExperimentConfig& base, const SweepSpec& sweep) {
  if (sweep.window_lengths.empty() && sweep.strides.empty()) {
    throw std::invalid_argument("sweep needs window_lengths and/or strides");
  }
  std::vector<double> lengths = sweep.window_lengths;
  if (lengths.empty()) lengths.push_back(base.windowing.window_length_s);

  std::filesystem::create_directories(base.out_dir);
  ExperimentResult combined;
  combined.run_dir = base.out_dir;

  std::string content =
      "window_length_s,stride_s,method,granularity,subset,repeat,accuracy,sensitivity,specificity,n\n";
  for (double length : lengths) {
    std::vector<double> strides = sweep.strides.empty() ? std::vector<double>{length} : sweep.strides;
    for (double stride : strides) {
      if (stride > length) continue;
      ExperimentConfig cell = base;
      cell.windowing.window_length_s = length;
      cell.windowing.stride_s = stride;
      char tag[64];
      std::snprintf(tag, sizeof tag, "cell_L%g_S%g", length, stride);
      cell.out_dir = base.out_dir / tag;
      ExperimentResult r = run_experiment(cell);
      for (const auto& row : r.rows) {
        content += csv_join({format_double(length), format_double(stride), row.method,
                             to_string(row.granularity), row.subset.empty() ? "all" : row.subset,
                             std::to_string(row.repeat), optional_metric(row.report.accuracy),
                             optional_metric(row.report.sensitivity),
                             optional_metric(row.report.specificity), std::to_string(row.report.n)});
        content += '\n';
        combined.rows.push_back(row);
      }
    }
  }
  write_text_file_atomic(base.out_dir / "sweep_summary.csv", content);
  return combined;
}

}  // namespace winstack
