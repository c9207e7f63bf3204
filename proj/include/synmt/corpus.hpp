#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synmt/tensor.hpp"
#include "synmt/treebank.hpp"

namespace synmt {

using TokenId = std::int32_t;
using Sentence = std::vector<std::string>;

enum class Variant { Baseline, Parallel, Hierarchical, Mixed };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
inline bool uses_labels(Variant v) { return v == Variant::Parallel || v == Variant::Hierarchical; }

/// Token <-> id map with reserved PAD, UNK and EOS entries.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::size_t kNumSpecial = 3;

  Vocabulary();

  /// Keeps the `limit - reserved` most frequent tokens, ties broken by first
  /// occurrence. `extra_reserved` entries (e.g. structural labels shared with
  /// words) are inserted right after the specials and count against `limit`.
  static Vocabulary build(const std::vector<Sentence>& corpus, std::size_t limit,
                          const std::vector<std::string>& extra_reserved = {});

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Fraction of corpus tokens (at build time) that are in the vocabulary.
  double coverage() const {
    return total_tokens_ ? static_cast<double>(covered_tokens_) / static_cast<double>(total_tokens_) : 0.0;
  }
  std::size_t covered_tokens() const { return covered_tokens_; }
  std::size_t total_tokens() const { return total_tokens_; }

  std::vector<TokenId> encode(const Sentence& words) const;
  /// Maps ids back to tokens, stopping at EOS.
  Sentence decode(const std::vector<TokenId>& ids) const;

  /// "token<TAB>id" per line.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t covered_tokens_ = 0;
  std::size_t total_tokens_ = 0;
};

/// Vocabulary entry for a structural label in a shared word/label vocabulary.
std::string label_token(const std::string& label);

struct Vocabs {
  Vocabulary source;
  Vocabulary target;
  Vocabulary label;
};

struct LengthLimits {
  std::size_t max_source = 50;
  std::size_t max_target = 50;
  std::size_t max_labels = 100;
  std::size_t max_mixed = 150;
};

struct ExamplePair {
  std::vector<TokenId> source;  // word ids + EOS
  std::vector<TokenId> target;  // word ids + EOS
  std::vector<TokenId> labels;  // label ids + EOS (parallel, hierarchical)
  std::vector<TokenId> mixed;   // shared-vocabulary ids + EOS (mixed)
  std::vector<std::int32_t> word_to_label;   // per word, index into labels
  std::vector<std::int32_t> word_positions;  // per word, index into mixed
  std::size_t line = 0;                      // 0-based line in the input files

  std::size_t num_words() const { return source.empty() ? 0 : source.size() - 1; }
};

struct ParallelText {
  std::vector<Sentence> source;
  std::vector<Sentence> target;
  std::vector<std::optional<ParseTree>> trees;  // empty when no tree file is used
};

std::vector<Sentence> read_tokenized(const std::string& path);
ParallelText read_parallel(const std::string& source_path, const std::string& target_path,
                           const std::string& tree_path);

/// Builds source/target/label vocabularies from training text. For the
/// mixed variant every structural label seen in the trees is reserved in
/// the source vocabulary before frequency ranking fills the rest.
Vocabs build_vocabs(const ParallelText& text, Variant variant, std::size_t source_limit, std::size_t target_limit,
                    const LinearizeOptions& lin = {});

/// Numericalizes the corpus. Pairs are dropped (with a warning) when empty,
/// over a length limit, or when the tree is missing or disagrees with the
/// source tokens. Throws DataError when the files are not line-aligned.
std::vector<ExamplePair> make_examples(const ParallelText& text, const Vocabs& vocabs, Variant variant,
                                       const LengthLimits& limits, const LinearizeOptions& lin = {});

/// Padded time-major id matrix.
struct IdGrid {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::vector<TokenId> ids;          // steps * batch, PAD beyond each length
  std::vector<std::size_t> lengths;  // per batch row

  std::span<const TokenId> step(std::size_t t) const { return {ids.data() + t * batch, batch}; }
  /// batch x 1 column with 1 on rows whose length exceeds t.
  Tensor step_mask(std::size_t t) const;
  /// batch x steps matrix with 1 on real tokens.
  Tensor mask() const;
  static IdGrid pack(const std::vector<const std::vector<TokenId>*>& rows);
};

struct Batch {
  Variant variant = Variant::Baseline;
  IdGrid source;
  IdGrid target;
  IdGrid labels;
  IdGrid mixed;
  /// [source step][row] label / mixed index of each source position, EOS
  /// included; 0 on padding.
  std::vector<std::vector<std::int32_t>> label_index;
  std::vector<std::vector<std::int32_t>> mixed_index;
  std::vector<std::size_t> examples;

  std::size_t size() const { return source.batch; }
};

Batch make_batch(const std::vector<ExamplePair>& examples, const std::vector<std::size_t>& indices, Variant variant);

/// Index lists for one epoch. Examples are shuffled with a generator seeded
/// from (seed, epoch), cut into chunks of 20 batches, sorted by source
/// length within each chunk, and the full batches are shuffled; a final
/// partial batch stays last. Every example appears exactly once.
std::vector<std::vector<std::size_t>> plan_batches(const std::vector<ExamplePair>& examples, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch);

void save_examples(const std::string& path, const std::vector<ExamplePair>& examples);
std::vector<ExamplePair> load_examples(const std::string& path);

}  // namespace synmt
