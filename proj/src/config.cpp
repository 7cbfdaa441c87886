/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "sfda/config.hpp"

#include <set>
#include <utility>

#include "json.hpp"
#include "sfda/error.hpp"

namespace sfda {
namespace {

using json = nlohmann::json;

// Walks one JSON object, remembering which keys were read so that leftovers
// can be reported.
class Section {
 public:
  Section(const json* node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object())
      throw ConfigError("key '" + path_ + "' must be an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    if (!node_) return nullptr;
    auto it = node_->find(key);
    if (it == node_->end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + key_path(key) + "' has the wrong type");
    }
  }

  void get_path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    fs::path p(s);
    out = p.is_absolute() || base.empty() ? p : base / p;
  }

  Section sub(const std::string& key) { return Section(find(key), key_path(key)); }

  void finish() const {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigError("unknown key '" + key_path(it.key()) + "'");
  }

 private:
  const json* node_;
  std::string path_;
  std::set<std::string> used_;
};

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

EdgeRanking parse_ranking(const std::string& s) {
  if (s == "signed") return EdgeRanking::kSigned;
  if (s == "absolute") return EdgeRanking::kAbsolute;
  throw ConfigError("key 'graph.ranking': expected signed or absolute, got '" +
                    s + "'");
}

PairMode parse_pairs(const std::string& s, const std::string& where) {
  if (s == "ordered") return PairMode::kOrdered;
  if (s == "unordered") return PairMode::kUnordered;
  throw ConfigError("key '" + where + "': expected ordered or unordered");
}

void read_train(Section s, TrainConfig& t) {
  s.get("batch_size", t.batch_size);
  s.get("lr0", t.lr0);
  s.get("lr_decay_factor", t.lr_decay_factor);
  s.get("lr_decay_every", t.lr_decay_every);
  s.get("epochs", t.epochs);
  s.get("seed", t.seed);
  if (const json* k = s.find("branch_kinds")) {
    if (!k->is_array())
      throw ConfigError("key '" + s.key_path("branch_kinds") +
                        "' must be a list");
    t.branch_kinds.clear();
    for (const auto& item : *k) {
      if (!item.is_string())
        throw ConfigError("key '" + s.key_path("branch_kinds") +
                          "' must list names");
      t.branch_kinds.push_back(parse_enrichment(item.get<std::string>()));
    }
  }
  {
    Section a = s.sub("adam");
    a.get("beta1", t.adam.beta1);
    a.get("beta2", t.adam.beta2);
    a.get("eps", t.adam.eps);
    a.finish();
  }
  s.get("norm_momentum", t.norm_momentum);
  s.get("freeze_norm_stats", t.freeze_norm_stats);
  std::string pairs;
  s.get("pairs", pairs);
  if (!pairs.empty()) t.pairs = parse_pairs(pairs, s.key_path("pairs"));
  s.finish();
}

json train_json(const TrainConfig& t) {
  json kinds = json::array();
  for (auto k : t.branch_kinds) kinds.push_back(enrichment_name(k));
  return {{"batch_size", t.batch_size},
          {"lr0", t.lr0},
          {"lr_decay_factor", t.lr_decay_factor},
          {"lr_decay_every", t.lr_decay_every},
          {"epochs", t.epochs},
          {"seed", t.seed},
          {"branch_kinds", kinds},
          {"adam",
           {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
          {"norm_momentum", t.norm_momentum},
          {"freeze_norm_stats", t.freeze_norm_stats},
          {"pairs", t.pairs == PairMode::kOrdered ? "ordered" : "unordered"}};
}

}  // namespace

const TrainConfig& ExperimentConfig::train(Stage stage) const {
  switch (stage) {
    case Stage::kPretrain: return pretrain;
    case Stage::kSource: return source;
    case Stage::kAdapt: return adapt;
  }
  return source;
}

TrainConfig& ExperimentConfig::train(Stage stage) {
  return const_cast<TrainConfig&>(std::as_const(*this).train(stage));
}

void ExperimentConfig::validate() const {
  const auto& w = model.graph.window;
  if (w.length < 2) throw ConfigError("window.length must be >= 2");
  if (w.stride < 1) throw ConfigError("window.stride must be >= 1");
  if (!(model.graph.keep_ratio > 0 && model.graph.keep_ratio <= 1))
    throw ConfigError("graph.keep_ratio must lie in (0, 1]");
  if (model.feature_dim < 2 || model.feature_dim % 2)
    throw ConfigError("model.feature_dim must be even and >= 2");
  for (double a : model.domains.warp_ratios)
    if (!(a > 0)) throw ConfigError("enrichment.warp_ratios must be > 0");
  for (int b : model.domains.window_sizes)
    if (b < 2) throw ConfigError("enrichment.window_sizes must be >= 2");
  for (double g : model.domains.slice_ratios)
    if (!(g > 0 && g <= 1))
      throw ConfigError("enrichment.slice_ratios must lie in (0, 1]");
  pretrain.validate();
  source.validate();
  adapt.validate();
  if (!(eval.threshold >= 0 && eval.threshold <= 1))
    throw ConfigError("eval.threshold must lie in [0, 1]");
  if (eval.top_k < 1) throw ConfigError("eval.top_k must be >= 1");
  if (eval.stochastic_views < 0)
    throw ConfigError("eval.stochastic_views must be >= 0");
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const fs::path& base_dir) {
  const json root = parse_json(json_text);
  Section top(&root, "");
  ExperimentConfig c;
  {
    Section p = top.sub("paths");
    p.get_path("source_manifest", c.paths.source_manifest, base_dir);
    p.get_path("target_manifest", c.paths.target_manifest, base_dir);
    p.get_path("auxiliary_manifest", c.paths.auxiliary_manifest, base_dir);
    p.get_path("eval_manifest", c.paths.eval_manifest, base_dir);
    p.get_path("run_dir", c.paths.run_dir, base_dir);
    p.finish();
  }
  {
    Section w = top.sub("window");
    w.get("length", c.model.graph.window.length);
    w.get("stride", c.model.graph.window.stride);
    w.finish();
  }
  {
    Section g = top.sub("graph");
    g.get("keep_ratio", c.model.graph.keep_ratio);
    std::string ranking;
    g.get("ranking", ranking);
    if (!ranking.empty()) c.model.graph.ranking = parse_ranking(ranking);
    g.finish();
  }
  {
    Section e = top.sub("enrichment");
    e.get("warp_ratios", c.model.domains.warp_ratios);
    e.get("window_sizes", c.model.domains.window_sizes);
    e.get("slice_ratios", c.model.domains.slice_ratios);
    e.finish();
  }
  {
    Section m = top.sub("model");
    m.get("feature_dim", c.model.feature_dim);
    m.finish();
  }
  // Stage settings start from the shared "train" block; stage blocks
  // override individual keys.
  json shared = json::object();
  if (const json* t = top.find("train")) shared = *t;
  const std::pair<const char*, Stage> stages[] = {
      {"pretrain", Stage::kPretrain},
      {"source", Stage::kSource},
      {"adapt", Stage::kAdapt}};
  if (!shared.is_object()) throw ConfigError("key 'train' must be an object");
  read_train(Section(&shared, "train"), c.pretrain);
  c.source = c.adapt = c.pretrain;
  for (const auto& [name, stage] : stages) {
    const json* over = top.find(name);
    if (!over) continue;
    if (!over->is_object())
      throw ConfigError(std::string("key '") + name + "' must be an object");
    json merged = shared;
    merged.merge_patch(*over);
    // Reading the override alone reports unknown keys under its own name.
    TrainConfig unused;
    read_train(Section(over, name), unused);
    read_train(Section(&merged, name), c.train(stage));
  }
  {
    Section e = top.sub("eval");
    e.get("threshold", c.eval.threshold);
    e.get("top_k", c.eval.top_k);
    e.get("stochastic_views", c.eval.stochastic_views);
    e.get("seed", c.eval.seed);
    e.finish();
  }
  top.get("deterministic", c.deterministic);
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path))
    throw ConfigError("config file not found: " + path.string());
  return parse_experiment_config(read_file(path), path.parent_path());
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json j;
  j["paths"] = {{"source_manifest", c.paths.source_manifest.string()},
                {"target_manifest", c.paths.target_manifest.string()},
                {"auxiliary_manifest", c.paths.auxiliary_manifest.string()},
                {"eval_manifest", c.paths.eval_manifest.string()},
                {"run_dir", c.paths.run_dir.string()}};
  j["window"] = {{"length", c.model.graph.window.length},
                 {"stride", c.model.graph.window.stride}};
  j["graph"] = {{"keep_ratio", c.model.graph.keep_ratio},
                {"ranking", c.model.graph.ranking == EdgeRanking::kSigned
                                ? "signed"
                                : "absolute"}};
  j["enrichment"] = {{"warp_ratios", c.model.domains.warp_ratios},
                     {"window_sizes", c.model.domains.window_sizes},
                     {"slice_ratios", c.model.domains.slice_ratios}};
  j["model"] = {{"feature_dim", c.model.feature_dim}};
  j["pretrain"] = train_json(c.pretrain);
  j["source"] = train_json(c.source);
  j["adapt"] = train_json(c.adapt);
  j["eval"] = {{"threshold", c.eval.threshold},
               {"top_k", c.eval.top_k},
               {"stochastic_views", c.eval.stochastic_views},
               {"seed", c.eval.seed}};
  j["deterministic"] = c.deterministic;
  return j.dump(2) + "\n";
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  const json root = parse_json(json_text);
  Section top(&root, "");
  SyntheticSpec s;
  top.get("subjects_per_class", s.subjects_per_class);
  top.get("target_subjects_per_class", s.target_subjects_per_class);
  top.get("length", s.length);
  top.get("roi_count", s.roi_count);
  top.get("planted_block", s.planted_block);
  top.get("signal_strength", s.signal_strength);
  top.get("noise_sigma", s.noise_sigma);
  {
    Section d = top.sub("shift");
    d.get("resample_ratio", s.shift.resample_ratio);
    d.get("noise_multiplier", s.shift.noise_multiplier);
    d.get("amplitude_scale", s.shift.amplitude_scale);
    d.finish();
  }
  top.get("val_fraction", s.val_fraction);
  top.get("seed", s.seed);
  top.finish();
  s.validate();
  return s;
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  if (!fs::exists(path))
    throw ConfigError("synthetic spec not found: " + path.string());
  return parse_synthetic_spec(read_file(path));
}

std::string synthetic_spec_json(const SyntheticSpec& s) {
  json j = {{"subjects_per_class", s.subjects_per_class},
            {"target_subjects_per_class", s.target_subjects_per_class},
            {"length", s.length},
            {"roi_count", s.roi_count},
            {"planted_block", s.planted_block},
            {"signal_strength", s.signal_strength},
            {"noise_sigma", s.noise_sigma},
            {"shift",
             {{"resample_ratio", s.shift.resample_ratio},
              {"noise_multiplier", s.shift.noise_multiplier},
              {"amplitude_scale", s.shift.amplitude_scale}}},
            {"val_fraction", s.val_fraction},
            {"seed", s.seed}};
  return j.dump(2) + "\n";
}

}  // namespace sfda
