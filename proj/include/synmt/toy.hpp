#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synmt/corpus.hpp"
#include "synmt/evaluation.hpp"

namespace synmt {

/// Synthetic parallel corpus with parse trees and word alignments known by
/// construction.
struct ToyCorpus {
  ParallelText text;
  std::vector<GoldAlignment> gold;
};

/// Source sentences of random words, each target identical to its source;
/// trees are flat.
ToyCorpus make_copy_corpus(std::size_t sentences, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                           std::uint64_t seed);

/// English-like sentences from a small phrase-structure grammar, translated
/// into a verb-final, postpositional language whose adjectives follow the
/// noun. Every word has a one-word translation.
ToyCorpus make_grammar_corpus(std::size_t sentences, std::uint64_t seed);

/// "subject verb object preposition noun-phrase" sentences whose prepositional
/// phrase attaches to the object or to the verb at random. The words do not
/// reveal the attachment, the tree does, and the target order depends on it.
ToyCorpus make_attachment_corpus(std::size_t sentences, std::uint64_t seed);

/// Writes source, target, tree and gold-alignment files under `dir` with the
/// given file stem (stem.src, stem.tgt, stem.tree, stem.align).
void write_toy_corpus(const ToyCorpus& corpus, const std::string& dir, const std::string& stem);

/// Word-for-word translation used by the synthetic target language.
std::string toy_translate_word(const std::string& source_word);

}  // namespace synmt
