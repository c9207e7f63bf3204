#include "synmt/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "synmt/error.hpp"

namespace synmt {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects any key nobody asked for.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0)) {
          throw ConfigError(child(key), "expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError(child(key), "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(child(key), "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(child(key), "expected a string");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(child(key), e.what());
    }
  }

  const json* object(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json model_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"word_emb_dim", c.word_emb_dim},
          {"hidden_dim", c.hidden_dim},
          {"label_emb_dim", c.label_emb_dim},
          {"label_hidden_dim", c.label_hidden_dim},
          {"source_vocab", c.source_vocab},
          {"target_vocab", c.target_vocab},
          {"label_vocab", c.label_vocab},
          {"dropout", c.dropout},
          {"seed", c.seed}};
}

void read_model(const json& j, const std::string& path, ModelConfig& c) {
  Reader r(j, path);
  std::string variant = to_string(c.variant);
  r.get("variant", variant);
  try {
    c.variant = parse_variant(variant);
  } catch (const UsageError& e) {
    throw ConfigError(r.child("variant"), e.what());
  }
  r.get("word_emb_dim", c.word_emb_dim);
  r.get("hidden_dim", c.hidden_dim);
  r.get("label_emb_dim", c.label_emb_dim);
  r.get("label_hidden_dim", c.label_hidden_dim);
  r.get("source_vocab", c.source_vocab);
  r.get("target_vocab", c.target_vocab);
  r.get("label_vocab", c.label_vocab);
  r.get("dropout", c.dropout);
  r.get("seed", c.seed);
  r.finish();
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) { return model_json(c).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    read_model(json::parse(text), "model", c);
  } catch (const json::parse_error& e) {
    throw ConfigError("model", e.what());
  }
  return c;
}

std::string RunConfig::to_json(int indent) const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["model"] = model_json(model);
  j["data"] = {{"train_source", data.train_source}, {"train_target", data.train_target},
               {"train_trees", data.train_trees},   {"dev_source", data.dev_source},
               {"dev_target", data.dev_target},     {"dev_trees", data.dev_trees},
               {"test_source", data.test_source},   {"test_target", data.test_target},
               {"test_trees", data.test_trees},     {"gold_alignments", data.gold_alignments},
               {"source_vocab_limit", data.source_vocab_limit},
               {"target_vocab_limit", data.target_vocab_limit}};
  j["limits"] = {{"max_source", limits.max_source},
                 {"max_target", limits.max_target},
                 {"max_labels", limits.max_labels},
                 {"max_mixed", limits.max_mixed}};
  j["closing_brackets"] = closing_brackets;
  j["training"] = {{"epochs", training.epochs},       {"batch_size", training.batch_size},
                   {"clip_norm", training.clip_norm}, {"rho", training.rho},
                   {"epsilon", training.epsilon},     {"log_every", training.log_every}};
  j["decode"] = {{"beam", decode.beam}, {"max_len", decode.max_len}};
  j["analysis"] = {{"buckets", analysis.buckets},
                   {"phrase_categories", analysis.phrase_categories},
                   {"pos_groups", analysis.pos_groups},
                   {"alignment_source", analysis.alignment_source}};
  return j.dump(indent);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", e.what());
  }
  RunConfig c;
  {
    Reader r(j, "");
    r.get("seed", c.seed);
    r.get("out_dir", c.out_dir);
    r.get("closing_brackets", c.closing_brackets);
    c.model.seed = c.seed;
    if (const json* m = r.object("model")) read_model(*m, "model", c.model);
    if (const json* d = r.object("data")) {
      Reader rd(*d, "data");
      rd.get("train_source", c.data.train_source);
      rd.get("train_target", c.data.train_target);
      rd.get("train_trees", c.data.train_trees);
      rd.get("dev_source", c.data.dev_source);
      rd.get("dev_target", c.data.dev_target);
      rd.get("dev_trees", c.data.dev_trees);
      rd.get("test_source", c.data.test_source);
      rd.get("test_target", c.data.test_target);
      rd.get("test_trees", c.data.test_trees);
      rd.get("gold_alignments", c.data.gold_alignments);
      rd.get("source_vocab_limit", c.data.source_vocab_limit);
      rd.get("target_vocab_limit", c.data.target_vocab_limit);
      rd.finish();
    }
    if (const json* l = r.object("limits")) {
      Reader rl(*l, "limits");
      rl.get("max_source", c.limits.max_source);
      rl.get("max_target", c.limits.max_target);
      rl.get("max_labels", c.limits.max_labels);
      rl.get("max_mixed", c.limits.max_mixed);
      rl.finish();
    }
    if (const json* t = r.object("training")) {
      Reader rt(*t, "training");
      rt.get("epochs", c.training.epochs);
      rt.get("batch_size", c.training.batch_size);
      rt.get("clip_norm", c.training.clip_norm);
      rt.get("rho", c.training.rho);
      rt.get("epsilon", c.training.epsilon);
      rt.get("log_every", c.training.log_every);
      rt.finish();
    }
    if (const json* d = r.object("decode")) {
      Reader rd(*d, "decode");
      rd.get("beam", c.decode.beam);
      rd.get("max_len", c.decode.max_len);
      rd.finish();
    }
    if (const json* a = r.object("analysis")) {
      Reader ra(*a, "analysis");
      ra.get("buckets", c.analysis.buckets);
      ra.get("phrase_categories", c.analysis.phrase_categories);
      ra.get("pos_groups", c.analysis.pos_groups);
      ra.get("alignment_source", c.analysis.alignment_source);
      ra.finish();
    }
    r.finish();
  }
  if (c.training.batch_size == 0) throw ConfigError("training.batch_size", "must be positive");
  if (c.training.rho <= 0.0 || c.training.rho >= 1.0) throw ConfigError("training.rho", "must lie in (0, 1)");
  if (c.training.epsilon <= 0.0) throw ConfigError("training.epsilon", "must be positive");
  if (c.training.clip_norm < 0.0) throw ConfigError("training.clip_norm", "must be non-negative");
  if (c.decode.beam == 0) throw ConfigError("decode.beam", "must be at least 1");
  for (std::size_t i = 1; i < c.analysis.buckets.size(); ++i) {
    if (c.analysis.buckets[i] <= c.analysis.buckets[i - 1]) throw ConfigError("analysis.buckets", "edges must increase");
  }
  if (c.analysis.alignment_source != "translation" && c.analysis.alignment_source != "forced") {
    throw ConfigError("analysis.alignment_source", "expected \"translation\" or \"forced\"");
  }
  try {
    c.model.validate();
  } catch (const UsageError& e) {
    throw ConfigError("model", e.what());
  }
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = from_json(ss.str());
  // Data paths are relative to the config file; out_dir stays relative to the caller.
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.data.train_source, &c.data.train_target, &c.data.train_trees, &c.data.dev_source,
                         &c.data.dev_target, &c.data.dev_trees, &c.data.test_source, &c.data.test_target,
                         &c.data.test_trees, &c.data.gold_alignments}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return c;
}

}  // namespace synmt
