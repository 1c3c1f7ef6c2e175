// winstack command line: configuration-driven experiment runner around the
// window-stacking toolkit. See README.md for the config schema.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "winstack/arbitration.hpp"
#include "winstack/csv.hpp"
#include "winstack/evaluation.hpp"
#include "winstack/experiment.hpp"
#include "winstack/explain.hpp"
#include "winstack/model_io.hpp"

namespace ws = winstack;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out, "output path");
  cmd->add_option("--seed", args.seed, "seed override");
}

ws::ExperimentConfig load_config(const CommonArgs& args) {
  ws::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = ws::load_experiment_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.out_dir = args.out;
  return cfg;
}

int cmd_synth(const CommonArgs& args) {
  ws::ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) throw std::runtime_error("synth needs --out (or \"out\" in the config)");
  ws::SynthConfig synth = cfg.synth;
  synth.seed = cfg.seed;
  ws::SynthData data = ws::simulate(synth, cfg.windowing);
  std::filesystem::create_directories(cfg.out_dir);
  ws::write_manifest(cfg.out_dir / "corpus.csv", data.corpus);
  ws::write_window_outputs(cfg.out_dir / "outputs.csv", data.outputs);
  std::string events = "recording_id,window_index,event\n";
  for (const auto& [rid, ev] : data.events) {
    for (std::size_t k = 0; k < ev.size(); ++k) {
      events += rid + ',' + std::to_string(k) + ',' + (ev[k] ? "1\n" : "0\n");
    }
  }
  ws::write_text_file_atomic(cfg.out_dir / "events.csv", events);
  const auto counts = data.corpus.recording_label_counts();
  std::printf("synth: %zu recordings (%lld abnormal / %lld normal) in %zu sessions -> %s\n",
              data.corpus.recording_count(), static_cast<long long>(counts.n_abnormal),
              static_cast<long long>(counts.n_normal), data.corpus.session_count(),
              cfg.out_dir.string().c_str());
  return 0;
}

// Split file written by experiments: recording_id,part with part in {train,test}.
std::map<std::string, std::string> read_split_file(const std::filesystem::path& path) {
  ws::CsvTable t = ws::read_csv(path);
  const std::size_t c_id = t.column("recording_id");
  const std::size_t c_part = t.column("part");
  std::map<std::string, std::string> out;
  for (const auto& row : t.rows) out[row[c_id]] = row[c_part];
  return out;
}

int cmd_train_meta(const CommonArgs& args, const std::string& corpus_path,
                   const std::string& outputs_path, const std::string& kind,
                   const std::string& encoding, const std::string& split_path) {
  ws::ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) throw std::runtime_error("train-meta needs --out <model.json>");
  const ws::Corpus corpus = ws::build_corpus(ws::read_manifest(corpus_path), cfg.policy, "train");
  const auto outputs = ws::read_window_outputs(outputs_path, cfg.windowing);

  std::map<std::string, std::string> split;
  if (!split_path.empty()) split = read_split_file(split_path);

  std::vector<const ws::WindowOutputs*> train_outputs;
  std::vector<const ws::Recording*> train_recs;
  std::vector<ws::Label> labels;
  std::vector<std::string> patients;
  for (const auto* rec : corpus.recordings()) {
    if (!split.empty()) {
      auto it = split.find(rec->recording_id);
      if (it == split.end() || it->second != "train") continue;
    }
    auto it = outputs.find(rec->recording_id);
    if (it == outputs.end() || it->second.windows.empty()) continue;
    train_outputs.push_back(&it->second);
    train_recs.push_back(rec);
    labels.push_back(rec->label);
    patients.push_back(rec->patient_id);
  }
  if (train_outputs.empty()) throw std::runtime_error("no training recordings with outputs");

  const ws::EncodingKind enc = ws::encoding_kind_from_string(encoding);
  const ws::EncodingSpec spec =
      ws::fit_spec(train_outputs, enc, cfg.histogram_bins, cfg.pad_value);
  std::vector<std::vector<double>> x;
  x.reserve(train_outputs.size());
  for (const auto* wo : train_outputs) x.push_back(ws::encode(*wo, spec));
  const ws::ClassWeights weights = ws::class_weights(labels);

  if (kind == "ann") {
    ws::AnnTrainOptions opts = cfg.ann.train;
    opts.seed = cfg.seed;
    if (cfg.ann.grid_search) {
      auto [model, report] =
          ws::grid_search_ann(x, labels, weights, cfg.ann.grid, opts, spec, &patients);
      ws::save_model(cfg.out_dir, model);
    } else {
      ws::AnnArchitecture arch{spec.input_length(), cfg.ann.hidden_layers,
                               cfg.ann.hidden_layers > 0 ? cfg.ann.hidden_width : 0,
                               cfg.ann.hidden_layers > 0 ? cfg.ann.activation
                                                         : ws::Activation::None};
      ws::save_model(cfg.out_dir, ws::train_ann(x, labels, weights, arch, opts, spec, &patients));
    }
  } else if (kind == "gbt") {
    ws::GbtConfig gc = cfg.gbt.config;
    gc.seed = cfg.seed;
    if (cfg.gbt.cv_depth) {
      ws::save_model(cfg.out_dir, ws::cv_select_depth(x, labels, gc, spec, &patients).model);
    } else {
      ws::save_model(cfg.out_dir, ws::train_gbt(x, labels, weights, gc, spec));
    }
  } else {
    throw std::runtime_error("--kind must be ann or gbt");
  }
  std::printf("train-meta: %zu recordings, %s/%s -> %s\n", train_outputs.size(), kind.c_str(),
              encoding.c_str(), cfg.out_dir.string().c_str());
  return 0;
}

int cmd_arbitrate(const CommonArgs& args, const std::string& model_path,
                  const std::string& method_name, const std::string& outputs_path,
                  const std::string& corpus_path) {
  ws::ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) throw std::runtime_error("arbitrate needs --out <decisions.csv>");
  const auto outputs = ws::read_window_outputs(outputs_path, cfg.windowing);

  std::map<std::string, std::string> session_of;
  if (!corpus_path.empty()) {
    for (const auto& r : ws::read_manifest(corpus_path)) session_of[r.recording_id] = r.session_id;
  }

  std::optional<ws::LoadedModel> loaded;
  ws::ArbitrationMethod method = ws::ArbitrationMethod::mean();
  std::string name = method_name;
  if (!model_path.empty()) {
    loaded = ws::load_model(model_path);
    if (std::holds_alternative<ws::AnnModel>(*loaded)) {
      method = ws::ArbitrationMethod::meta(std::get<ws::AnnModel>(*loaded));
      name = "ann-" + std::string(ws::to_string(std::get<ws::AnnModel>(*loaded).encoding.kind));
    } else {
      method = ws::ArbitrationMethod::meta(std::get<ws::GbtModel>(*loaded));
      name = "gbt-" + std::string(ws::to_string(std::get<ws::GbtModel>(*loaded).encoding.kind));
    }
  } else if (method_name == "mean") {
    method = ws::ArbitrationMethod::mean();
  } else if (method_name == "geomean") {
    method = ws::ArbitrationMethod::geomean();
  } else {
    throw std::runtime_error("arbitrate needs --model or --method mean|geomean");
  }

  std::string content = "recording_id,session_id,p_abnormal,label,method\n";
  for (const auto& [rid, wo] : outputs) {
    const ws::RecordingDecision d = ws::arbitrate_recording(wo, method);
    const auto sit = session_of.find(rid);
    content += ws::csv_join({d.recording_id, sit == session_of.end() ? "" : sit->second,
                             ws::format_double(d.p_abnormal), ws::to_string(d.label), name});
    content += '\n';
  }
  ws::write_text_file_atomic(cfg.out_dir, content);
  std::printf("arbitrate: %zu decisions (%s) -> %s\n", outputs.size(), name.c_str(),
              cfg.out_dir.string().c_str());
  return 0;
}

json report_to_json(const ws::EvalReport& r) {
  json j{{"granularity", ws::to_string(r.granularity)},
         {"n", r.n},
         {"tp", r.matrix.tp},
         {"fp", r.matrix.fp},
         {"tn", r.matrix.tn},
         {"fn", r.matrix.fn}};
  if (!r.subset_tag.empty()) j["subset"] = r.subset_tag;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  if (r.sensitivity) j["sensitivity"] = *r.sensitivity;
  if (r.specificity) j["specificity"] = *r.specificity;
  return j;
}

int cmd_eval(const CommonArgs& args, const std::string& decisions_path,
             const std::string& corpus_path) {
  const auto records = ws::read_manifest(corpus_path);
  std::map<std::string, ws::Label> recording_truth;
  std::map<std::string, ws::Label> session_truth;
  for (const auto& r : records) {
    recording_truth[r.recording_id] = r.label;
    session_truth[r.session_id] = r.label;  // session label = member label
  }

  ws::CsvTable t = ws::read_csv(decisions_path);
  const bool by_session =
      std::find(t.columns.begin(), t.columns.end(), "recording_id") == t.columns.end();
  const std::size_t c_id = t.column(by_session ? "session_id" : "recording_id");
  const std::size_t c_label = t.column("label");
  std::vector<ws::Label> truths, preds;
  for (const auto& row : t.rows) {
    const auto& truth_map = by_session ? session_truth : recording_truth;
    auto it = truth_map.find(row[c_id]);
    if (it == truth_map.end()) {
      throw std::runtime_error("decision for unknown id '" + row[c_id] + "'");
    }
    truths.push_back(it->second);
    preds.push_back(ws::label_from_string(row[c_label]));
  }
  const ws::EvalReport report = ws::evaluate(
      truths, preds, by_session ? ws::Granularity::Session : ws::Granularity::Recording);
  const std::string out = report_to_json(report).dump(1);
  if (!args.out.empty()) {
    ws::write_text_file_atomic(args.out, out + "\n");
  }
  std::printf("%s\n", out.c_str());
  return 0;
}

int cmd_explain(const CommonArgs& args, const std::string& model_path,
                const std::string& outputs_path, int background_size, int permutations,
                int max_instances) {
  ws::ExperimentConfig cfg = load_config(args);
  if (cfg.out_dir.empty()) throw std::runtime_error("explain needs --out <dir>");
  ws::LoadedModel loaded = ws::load_model(model_path);
  if (!std::holds_alternative<ws::GbtModel>(loaded)) {
    throw std::runtime_error("shapley attribution supports tree models; for linear models use "
                             "the window importance table emitted by experiments");
  }
  const ws::GbtModel& model = std::get<ws::GbtModel>(loaded);
  const auto outputs = ws::read_window_outputs(outputs_path, cfg.windowing);

  std::vector<std::string> ids;
  std::vector<std::vector<double>> encoded;
  for (const auto& [rid, wo] : outputs) {
    ids.push_back(rid);
    encoded.push_back(ws::encode(wo, model.encoding));
  }
  if (encoded.empty()) throw std::runtime_error("no recordings to explain");

  // Background: up to background_size rows sampled without replacement.
  ws::Rng rng(ws::derive_seed(cfg.seed, "explain_background"));
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<double>> background;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < background_size; ++i) {
    background.push_back(encoded[order[i]]);
  }

  const bool exact = permutations <= 0;
  std::vector<ws::Attribution> attributions;
  std::string content = "instance,position,input_value,phi,std_error\n";
  for (std::size_t i = 0; i < encoded.size() && static_cast<int>(i) < max_instances; ++i) {
    ws::Attribution a =
        exact ? ws::shapley_exact(model, encoded[i], background, ids[i])
              : ws::shapley_sampled(model, encoded[i], background, permutations, cfg.seed, ids[i]);
    for (std::size_t j = 0; j < a.phi.size(); ++j) {
      content += ws::csv_join({a.instance_id, std::to_string(j), ws::format_double(a.input[j]),
                               ws::format_double(a.phi[j]),
                               a.std_error.empty() ? "" : ws::format_double(a.std_error[j])});
      content += '\n';
    }
    attributions.push_back(std::move(a));
  }
  std::filesystem::create_directories(cfg.out_dir);
  ws::write_text_file_atomic(cfg.out_dir / "attributions.csv", content);

  const ws::AttributionSummary summary = ws::attribution_summary(attributions);
  content = "position,rank,n,mean_abs_phi,n_high,var_phi_high,n_low,var_phi_low\n";
  for (const auto& p : summary.positions) {
    content += ws::csv_join({std::to_string(p.position), std::to_string(p.rank),
                             std::to_string(p.n), ws::format_double(p.mean_abs_phi),
                             std::to_string(p.n_high), ws::format_double(p.var_phi_high),
                             std::to_string(p.n_low), ws::format_double(p.var_phi_low)});
    content += '\n';
  }
  ws::write_text_file_atomic(cfg.out_dir / "attribution_summary.csv", content);
  std::printf("explain: %zu instances (%s shapley) -> %s\n", attributions.size(),
              exact ? "exact" : "sampled", cfg.out_dir.string().c_str());
  return 0;
}

int cmd_experiment(const CommonArgs& args) {
  ws::ExperimentConfig cfg = load_config(args);
  const ws::ExperimentResult result = ws::run_experiment(cfg);
  std::printf("experiment: %d repeats, %zu report rows -> %s\n", cfg.repeats, result.rows.size(),
              result.run_dir.string().c_str());
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  ws::ExperimentConfig cfg = load_config(args);
  // Sweep lists live in the same config file.
  std::ifstream in(args.config_path);
  const json j = json::parse(in);
  ws::SweepSpec sweep;
  if (j.contains("sweep")) {
    const auto& js = j.at("sweep");
    if (js.contains("window_lengths")) {
      sweep.window_lengths = js.at("window_lengths").get<std::vector<double>>();
    }
    if (js.contains("strides")) sweep.strides = js.at("strides").get<std::vector<double>>();
  }
  const ws::ExperimentResult result = ws::run_sweep(cfg, sweep);
  std::printf("sweep: %zu report rows -> %s\n", result.rows.size(),
              result.run_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"window stacking meta-models for long-sequence classification"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  auto* synth = app.add_subcommand("synth", "emit a synthetic corpus + first-stage outputs");
  add_common(synth, synth_args, true);

  CommonArgs train_args;
  std::string train_corpus, train_outputs, train_kind = "gbt", train_encoding = "raw", train_split;
  auto* train = app.add_subcommand("train-meta", "fit one meta-model");
  add_common(train, train_args, false);
  train->add_option("--corpus", train_corpus, "corpus manifest csv")->required();
  train->add_option("--outputs", train_outputs, "per-window outputs csv")->required();
  train->add_option("--kind", train_kind, "ann|gbt");
  train->add_option("--encoding", train_encoding, "raw|histogram|hybrid|logits|features");
  train->add_option("--split", train_split, "optional split csv; train side only");

  CommonArgs arb_args;
  std::string arb_model, arb_method, arb_outputs, arb_corpus;
  auto* arb = app.add_subcommand("arbitrate", "apply a model or baseline to outputs");
  add_common(arb, arb_args, false);
  arb->add_option("--model", arb_model, "model file");
  arb->add_option("--method", arb_method, "mean|geomean");
  arb->add_option("--outputs", arb_outputs, "per-window outputs csv")->required();
  arb->add_option("--corpus", arb_corpus, "corpus manifest (adds session ids)");

  CommonArgs eval_args;
  std::string eval_decisions, eval_corpus;
  auto* eval = app.add_subcommand("eval", "score decisions against corpus labels");
  add_common(eval, eval_args, false);
  eval->add_option("--decisions", eval_decisions, "decisions csv")->required();
  eval->add_option("--corpus", eval_corpus, "corpus manifest csv")->required();

  CommonArgs explain_args;
  std::string explain_model, explain_outputs;
  int explain_background = 100, explain_permutations = 0, explain_instances = 50;
  auto* explain = app.add_subcommand("explain", "shapley attributions for a tree meta-model");
  add_common(explain, explain_args, false);
  explain->add_option("--model", explain_model, "gbt model file")->required();
  explain->add_option("--outputs", explain_outputs, "per-window outputs csv")->required();
  explain->add_option("--background", explain_background, "background set size");
  explain->add_option("--permutations", explain_permutations,
                      "0 = exact enumeration, otherwise sampled with this many permutations");
  explain->add_option("--max-instances", explain_instances, "explain at most this many recordings");

  CommonArgs exp_args;
  auto* experiment = app.add_subcommand("experiment", "run the full pipeline");
  add_common(experiment, exp_args, true);

  CommonArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "window length / stride grid of experiments");
  add_common(sweep, sweep_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train->parsed()) {
      return cmd_train_meta(train_args, train_corpus, train_outputs, train_kind, train_encoding,
                            train_split);
    }
    if (arb->parsed()) return cmd_arbitrate(arb_args, arb_model, arb_method, arb_outputs, arb_corpus);
    if (eval->parsed()) return cmd_eval(eval_args, eval_decisions, eval_corpus);
    if (explain->parsed()) {
      return cmd_explain(explain_args, explain_model, explain_outputs, explain_background,
                         explain_permutations, explain_instances);
    }
    if (experiment->parsed()) return cmd_experiment(exp_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
