#include "winstack/model_io.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "winstack/csv.hpp"

namespace winstack {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json hex(double v) { return format_double_hex(v); }

double unhex(const json& j, const char* context) {
  if (!j.is_string()) throw std::runtime_error(std::string("expected hex double for ") + context);
  return parse_double(j.get<std::string>(), context);
}

json hex_vector(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(hex(x));
  return out;
}

std::vector<double> unhex_vector(const json& j, const char* context) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(unhex(e, context));
  return out;
}

json encoding_to_json(const EncodingSpec& spec) {
  return json{{"kind", to_string(spec.kind)},
              {"max_windows", spec.max_windows},
              {"bins", spec.bins},
              {"feature_dim", spec.feature_dim},
              {"pad_value", hex(spec.pad_value)}};
}

EncodingSpec encoding_from_json(const json& j) {
  EncodingSpec spec;
  spec.kind = encoding_kind_from_string(j.at("kind").get<std::string>());
  spec.max_windows = j.at("max_windows").get<int>();
  spec.bins = j.at("bins").get<int>();
  spec.feature_dim = j.at("feature_dim").get<int>();
  spec.pad_value = unhex(j.at("pad_value"), "pad_value");
  return spec;
}

json header_json(const char* type) {
  return json{{"format", "winstack-model"}, {"version", kFormatVersion}, {"type", type}};
}

json load_checked(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  json j = json::parse(in);
  if (j.value("format", "") != "winstack-model") {
    throw std::runtime_error(path.string() + " is not a winstack model file");
  }
  if (j.at("version").get<int>() != kFormatVersion) {
    throw std::runtime_error("unsupported model file version in " + path.string());
  }
  return j;
}

json tree_to_json(const GbtTree& tree, int index) {
  const GbtNode& n = tree.nodes[static_cast<std::size_t>(index)];
  if (n.is_leaf()) return json{{"leaf_value", hex(n.leaf_value)}};
  return json{{"feature", n.feature},
              {"threshold", hex(n.threshold)},
              {"left", tree_to_json(tree, n.left)},
              {"right", tree_to_json(tree, n.right)}};
}

int tree_from_json(const json& j, GbtTree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf_value")) {
    tree.nodes[static_cast<std::size_t>(index)].leaf_value = unhex(j.at("leaf_value"), "leaf_value");
    return index;
  }
  tree.nodes[static_cast<std::size_t>(index)].feature = j.at("feature").get<int>();
  tree.nodes[static_cast<std::size_t>(index)].threshold = unhex(j.at("threshold"), "threshold");
  const int left = tree_from_json(j.at("left"), tree);
  const int right = tree_from_json(j.at("right"), tree);
  tree.nodes[static_cast<std::size_t>(index)].left = left;
  tree.nodes[static_cast<std::size_t>(index)].right = right;
  return index;
}

}  // namespace

void save_model(const std::filesystem::path& path, const AnnModel& model) {
  json j = header_json("ann");
  const auto& arch = model.net.architecture();
  j["architecture"] = {{"input_len", arch.input_len},
                       {"hidden_layers", arch.hidden_layers},
                       {"hidden_width", arch.hidden_width},
                       {"activation", to_string(arch.activation)}};
  j["encoding"] = encoding_to_json(model.encoding);
  j["training"] = {{"seed", model.meta.seed},
                   {"epochs_run", model.meta.epochs_run},
                   {"learning_rate", hex(model.meta.learning_rate)},
                   {"final_train_loss", hex(model.meta.final_train_loss)},
                   {"final_val_loss", hex(model.meta.final_val_loss)}};
  json layers = json::array();
  const auto shapes = arch.layer_shapes();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    layers.push_back(json{{"rows", shapes[l].first},
                          {"cols", shapes[l].second},
                          {"weights", hex_vector(model.net.weights()[l])},
                          {"biases", hex_vector(model.net.biases()[l])}});
  }
  j["layers"] = std::move(layers);
  write_text_file_atomic(path, j.dump(1));
}

void save_model(const std::filesystem::path& path, const GbtModel& model) {
  json j = header_json("gbt");
  j["encoding"] = encoding_to_json(model.encoding);
  j["input_len"] = model.input_len;
  j["base_score"] = hex(model.base_score);
  j["reduced_to_prior"] = model.reduced_to_prior;
  j["config"] = {{"rounds", model.config.rounds},
                 {"learning_rate", hex(model.config.learning_rate)},
                 {"max_depth", model.config.max_depth},
                 {"min_child_weight", hex(model.config.min_child_weight)},
                 {"lambda", hex(model.config.lambda)},
                 {"depth_grid", model.config.depth_grid},
                 {"cv_folds", model.config.cv_folds},
                 {"feature_subsample", hex(model.config.feature_subsample)},
                 {"seed", model.config.seed}};
  j["train_loss"] = hex_vector(model.train_loss);
  json trees = json::array();
  for (const auto& t : model.trees) trees.push_back(tree_to_json(t, 0));
  j["trees"] = std::move(trees);
  write_text_file_atomic(path, j.dump(1));
}

LoadedModel load_model(const std::filesystem::path& path) {
  json j = load_checked(path);
  const std::string type = j.at("type").get<std::string>();
  if (type == "ann") {
    const auto& ja = j.at("architecture");
    AnnArchitecture arch;
    arch.input_len = ja.at("input_len").get<int>();
    arch.hidden_layers = ja.at("hidden_layers").get<int>();
    arch.hidden_width = ja.at("hidden_width").get<int>();
    arch.activation = activation_from_string(ja.at("activation").get<std::string>());
    AnnModel model(arch);
    model.encoding = encoding_from_json(j.at("encoding"));
    const auto& jt = j.at("training");
    model.meta.seed = jt.at("seed").get<std::uint64_t>();
    model.meta.epochs_run = jt.at("epochs_run").get<int>();
    model.meta.learning_rate = unhex(jt.at("learning_rate"), "learning_rate");
    model.meta.final_train_loss = unhex(jt.at("final_train_loss"), "final_train_loss");
    model.meta.final_val_loss = unhex(jt.at("final_val_loss"), "final_val_loss");
    const auto& layers = j.at("layers");
    const auto shapes = arch.layer_shapes();
    if (layers.size() != shapes.size()) throw std::runtime_error("layer count mismatch in " + path.string());
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      auto w = unhex_vector(layers[l].at("weights"), "weights");
      auto b = unhex_vector(layers[l].at("biases"), "biases");
      if (static_cast<int>(w.size()) != shapes[l].first * shapes[l].second ||
          static_cast<int>(b.size()) != shapes[l].first) {
        throw std::runtime_error("weight shape mismatch in " + path.string());
      }
      model.net.mutable_weights()[l] = std::move(w);
      model.net.mutable_biases()[l] = std::move(b);
    }
    return model;
  }
  if (type == "gbt") {
    GbtModel model;
    model.encoding = encoding_from_json(j.at("encoding"));
    model.input_len = j.at("input_len").get<int>();
    model.base_score = unhex(j.at("base_score"), "base_score");
    model.reduced_to_prior = j.at("reduced_to_prior").get<bool>();
    const auto& jc = j.at("config");
    model.config.rounds = jc.at("rounds").get<int>();
    model.config.learning_rate = unhex(jc.at("learning_rate"), "learning_rate");
    model.config.max_depth = jc.at("max_depth").get<int>();
    model.config.min_child_weight = unhex(jc.at("min_child_weight"), "min_child_weight");
    model.config.lambda = unhex(jc.at("lambda"), "lambda");
    model.config.depth_grid = jc.at("depth_grid").get<std::vector<int>>();
    model.config.cv_folds = jc.at("cv_folds").get<int>();
    model.config.feature_subsample = unhex(jc.at("feature_subsample"), "feature_subsample");
    model.config.seed = jc.at("seed").get<std::uint64_t>();
    model.train_loss = unhex_vector(j.at("train_loss"), "train_loss");
    for (const auto& jt : j.at("trees")) {
      GbtTree tree;
      tree_from_json(jt, tree);
      model.trees.push_back(std::move(tree));
    }
    return model;
  }
  throw std::runtime_error("unknown model type '" + type + "' in " + path.string());
}

}  // namespace winstack
