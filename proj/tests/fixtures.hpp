#pragma once

#include <string>
#include <vector>

#include "synmt/corpus.hpp"
#include "synmt/model.hpp"

namespace synmt::testing {

inline ParallelText three_sentences() {
  ParallelText text;
  const std::vector<std::pair<std::string, Sentence>> rows = {
      {"(S (NP (PRP I)) (VP (VBP love) (NP (NNS dogs))))", {"j'", "aime", "les", "chiens"}},
      {"(S (NP (NNS dogs)) (VP (VBP run)))", {"les", "chiens", "courent"}},
      {"(S (NP (PRP I)) (VP (VBP run) (PP (IN with) (NP (NNS dogs)))))", {"je", "cours", "avec", "les", "chiens"}},
  };
  for (const auto& [tree, tgt] : rows) {
    ParseTree t = parse_bracketed(tree);
    text.source.push_back(tree_words(t));
    text.target.push_back(tgt);
    text.trees.emplace_back(std::move(t));
  }
  return text;
}

struct Fixture {
  Vocabs vocabs;
  std::vector<ExamplePair> examples;
  ModelConfig config;
};

inline Fixture tiny_fixture(Variant variant, std::size_t dim = 6) {
  Fixture f;
  const ParallelText text = three_sentences();
  f.vocabs = build_vocabs(text, variant, 100, 100);
  f.examples = make_examples(text, f.vocabs, variant, {});
  f.config.variant = variant;
  f.config.word_emb_dim = dim;
  f.config.hidden_dim = dim + 1;
  f.config.label_emb_dim = dim - 1;
  f.config.label_hidden_dim = dim - 2;
  f.config.source_vocab = f.vocabs.source.size();
  f.config.target_vocab = f.vocabs.target.size();
  f.config.label_vocab = f.vocabs.label.size();
  f.config.dropout = 0.0;
  return f;
}

}  // namespace synmt::testing

#include <cmath>

#include "synmt/inference.hpp"

namespace synmt::testing {

/// Decoder whose next-token distribution depends only on the previous token
/// (three tokens plus a start state). Token 2 is EOS.
class TableSession : public DecoderSession {
 public:
  // probs[state][token], state 3 = start.
  explicit TableSession(std::vector<std::vector<double>> probs) : probs_(std::move(probs)) {
    rows_ = {3};
    fill();
  }
  std::size_t vocab_size() const override { return 3; }
  const Tensor& log_probs() const override { return lp_; }
  void advance(const std::vector<std::size_t>&, const std::vector<TokenId>& tokens) override {
    rows_.assign(tokens.begin(), tokens.end());
    fill();
  }

 private:
  void fill() {
    lp_ = Tensor({rows_.size(), 3});
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      for (std::size_t w = 0; w < 3; ++w) lp_.at(r, w) = std::log(probs_[static_cast<std::size_t>(rows_[r])][w]);
    }
  }
  std::vector<std::vector<double>> probs_;
  std::vector<TokenId> rows_;
  Tensor lp_;
};

}  // namespace synmt::testing
