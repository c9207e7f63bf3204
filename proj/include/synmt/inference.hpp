#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "synmt/model.hpp"

namespace synmt {

/// Attention weights for one output step, over source positions (EOS last).
using AttentionRow = std::vector<double>;

struct Hypothesis {
  std::vector<TokenId> tokens;  // includes the final EOS when finished
  double log_prob = 0.0;
  bool finished = false;
  std::vector<AttentionRow> attention;  // one row per token

  /// Length-normalized score used for final ranking.
  double score() const { return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size()); }
  /// Tokens without the trailing EOS.
  std::vector<TokenId> words() const;
};

/// Incremental next-token distributions for a set of partial outputs.
/// A fresh session has exactly one row: the empty prefix.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;
  virtual std::size_t vocab_size() const = 0;
  /// rows x vocab matrix of log-probabilities for the current rows.
  virtual const Tensor& log_probs() const = 0;
  /// rows x source matrix of attention weights, if the model has any.
  virtual const Tensor* attention() const { return nullptr; }
  /// New row k continues old row `parents[k]` with `tokens[k]`.
  virtual void advance(const std::vector<std::size_t>& parents, const std::vector<TokenId>& tokens) = 0;
  virtual TokenId eos() const { return Vocabulary::kEos; }
};

/// Decodes one source sentence with a trained model.
class ModelSession : public DecoderSession {
 public:
  ModelSession(const Model& model, const ExamplePair& example);

  std::size_t vocab_size() const override { return model_.config().target_vocab; }
  const Tensor& log_probs() const override { return log_probs_; }
  const Tensor* attention() const override { return &alpha_; }
  void advance(const std::vector<std::size_t>& parents, const std::vector<TokenId>& tokens) override;

 private:
  void run_step();
  const EncoderOutput& tiled(std::size_t rows);

  const Model& model_;
  Tape tape_{false};
  Batch batch_;
  EncoderOutput enc_;
  std::vector<std::pair<std::size_t, EncoderOutput>> tiled_;
  DecoderState state_;
  Tensor log_probs_;
  Tensor alpha_;
};

/// Beam search that retires hypotheses on EOS, shrinks the live beam by the
/// number finished, truncates at `max_len` tokens, and ranks the finished
/// set by length-normalized log-probability (ties keep discovery order).
/// Returns hypotheses best first.
std::vector<Hypothesis> beam_search(DecoderSession& session, std::size_t beam, std::size_t max_len);
Hypothesis greedy_decode(DecoderSession& session, std::size_t max_len);

/// 2 * source words + 10.
std::size_t default_max_len(const ExamplePair& example);

Hypothesis translate(const Model& model, const ExamplePair& example, std::size_t beam, std::size_t max_len = 0);

struct ForcedDecode {
  double log_prob = 0.0;
  std::vector<AttentionRow> attention;  // one row per reference token, EOS included
};

/// Scores the reference target of each listed example, batched together.
std::vector<ForcedDecode> force_decode(const Model& model, const std::vector<ExamplePair>& examples,
                                       const std::vector<std::size_t>& indices);
ForcedDecode force_decode(const Model& model, const ExamplePair& example);

/// (source word, target word) links, 0-based.
using AlignmentSet = std::set<std::pair<int, int>>;

/// Links each of the first `target_words` rows to its highest-weight source
/// word among the first `source_words` positions (lowest index on ties).
AlignmentSet extract_alignment(const std::vector<AttentionRow>& attention, std::size_t source_words,
                               std::size_t target_words);

std::string format_pharaoh(const AlignmentSet& links);
AlignmentSet parse_pharaoh(const std::string& line);

}  // namespace synmt
