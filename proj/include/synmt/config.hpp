#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "synmt/corpus.hpp"
#include "synmt/model.hpp"

namespace synmt {

struct DataPaths {
  std::string train_source, train_target, train_trees;
  std::string dev_source, dev_target, dev_trees;
  std::string test_source, test_target, test_trees;
  std::string gold_alignments;
  std::size_t source_vocab_limit = 16000;
  std::size_t target_vocab_limit = 16000;
};

struct TrainingOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 80;
  double clip_norm = 1.0;
  double rho = 0.95;
  double epsilon = 1e-6;
  std::size_t log_every = 1;  // progress line every N updates
};

struct DecodeOptions {
  std::size_t beam = 10;
  std::size_t max_len = 0;  // 0: 2 * source words + 10
};

struct AnalysisOptions {
  std::vector<std::size_t> buckets = {10, 20, 30, 40, 50};
  std::vector<std::string> phrase_categories = {"NP", "VP", "PP", "QP", "ADJP", "ADVP"};
  std::map<std::string, std::vector<std::string>> pos_groups = {
      {"NR", {"NR", "NNP", "NNPS"}}, {"CD", {"CD"}}, {"DT", {"DT"}},
      {"NN", {"NN", "NNS"}},         {"VV", {"VV", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ"}}};
  /// "translation" (attention over the system's own output) or "forced".
  std::string alignment_source = "translation";
};

/// Every tunable of a run. Parsed strictly: unknown keys raise ConfigError
/// naming the offending field path.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  ModelConfig model;
  DataPaths data;
  LengthLimits limits;
  bool closing_brackets = false;
  TrainingOptions training;
  DecodeOptions decode;
  AnalysisOptions analysis;

  LinearizeOptions linearize_options() const { return {closing_brackets}; }

  std::string to_json(int indent = 2) const;
  static RunConfig from_json(const std::string& text);
  /// Relative data paths are resolved against the file's directory.
  static RunConfig from_file(const std::string& path);
};

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace synmt
