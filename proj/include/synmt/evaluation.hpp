#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synmt/corpus.hpp"
#include "synmt/inference.hpp"
#include "synmt/treebank.hpp"

namespace synmt {

// ---- BLEU -------------------------------------------------------------------------

/// Sufficient statistics for corpus BLEU; adding stats of disjoint subsets
/// gives the stats of their union.
struct BleuStats {
  static constexpr std::size_t kMaxN = 4;
  std::size_t max_n = kMaxN;
  std::array<std::size_t, kMaxN> matches{};
  std::array<std::size_t, kMaxN> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& o);
  /// Geometric mean of clipped precisions times the brevity penalty; 0
  /// when any precision is 0.
  double score() const;
};

BleuStats sentence_bleu_stats(const Sentence& hypothesis, const std::vector<Sentence>& references,
                              std::size_t max_n = 4, bool case_insensitive = true);
BleuStats corpus_bleu_stats(const std::vector<Sentence>& hypotheses,
                            const std::vector<std::vector<Sentence>>& references, std::size_t max_n = 4,
                            bool case_insensitive = true);
double bleu(const std::vector<Sentence>& hypotheses, const std::vector<std::vector<Sentence>>& references,
            std::size_t max_n = 4, bool case_insensitive = true);

struct LengthBucket {
  std::size_t low = 0;   // inclusive
  std::size_t high = 0;  // inclusive; 0 means unbounded
  std::size_t sentences = 0;
  BleuStats stats;
  double bleu = 0.0;
  std::string label() const;
};

/// Groups sentences by source length into (0, e1], (e1, e2], ..., (ek, inf)
/// and scores each group. Empty groups are left out.
std::vector<LengthBucket> bleu_by_length(const std::vector<Sentence>& hypotheses,
                                         const std::vector<std::vector<Sentence>>& references,
                                         const std::vector<std::size_t>& source_lengths,
                                         const std::vector<std::size_t>& edges);

// ---- AER --------------------------------------------------------------------------

struct GoldAlignment {
  AlignmentSet sure;
  AlignmentSet possible;  // always includes every sure link
};

/// "i-j" is a sure link, "i?j" possible only.
GoldAlignment parse_gold_alignment(const std::string& line);
std::vector<GoldAlignment> read_gold_alignments(const std::string& path);

struct AerCounts {
  std::size_t a_and_s = 0, a_and_p = 0, a = 0, s = 0;
  AerCounts& operator+=(const AerCounts& o);
  double rate() const;
};

AerCounts aer_counts(const AlignmentSet& hypothesis, const GoldAlignment& gold);
/// Corpus AER from counts summed over all sentence pairs.
double aer(const std::vector<AlignmentSet>& hypotheses, const std::vector<GoldAlignment>& gold);

// ---- diagnostics --------------------------------------------------------------------

/// Counts of a three-way classification, reported as percentages.
struct Triple {
  std::array<std::size_t, 3> counts{};
  std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
  double percent(std::size_t k) const;
};

enum class Continuity { Continuous = 0, Discontinuous = 1, Untranslated = 2 };
Continuity classify_span(const PhraseSpan& span, const AlignmentSet& alignment);

/// Per phrase category plus "ALL". Categories never seen are absent.
std::map<std::string, Triple> phrase_continuity(const std::vector<std::vector<PhraseSpan>>& spans,
                                                const std::vector<AlignmentSet>& alignments);

/// |e| - |uniq(e)| for the target tokens aligned to one word.
std::size_t over_translation(const std::vector<std::string>& aligned_tokens);

struct RotGroup {
  std::size_t words = 0;     // |w|
  std::size_t repeated = 0;  // sum of t(w)
  std::size_t aligned = 0;   // sum of |e|
  std::size_t unique = 0;    // sum of |uniq(e)|
  double rot() const { return words ? static_cast<double>(repeated) / static_cast<double>(words) : 0.0; }
};

/// ROT over the words of each POS group (by preterminal tag) plus "ALL".
std::map<std::string, RotGroup> rot(const std::vector<std::vector<std::string>>& pos_tags,
                                    const std::vector<AlignmentSet>& alignments,
                                    const std::vector<Sentence>& targets,
                                    const std::map<std::string, std::vector<std::string>>& groups);

enum class RareOutcome { NonUnk = 0, Unk = 1, Untranslated = 2 };
RareOutcome classify_rare(const std::vector<std::string>& aligned_tokens, const std::string& unk = "<unk>");

/// Outcome of every source word outside the vocabulary, per POS group plus "ALL".
std::map<std::string, Triple> rare_word_report(const std::vector<Sentence>& sources,
                                               const std::vector<std::vector<std::string>>& pos_tags,
                                               const Vocabulary& source_vocab,
                                               const std::vector<AlignmentSet>& alignments,
                                               const std::vector<Sentence>& targets,
                                               const std::map<std::string, std::vector<std::string>>& groups,
                                               const std::string& unk = "<unk>");

struct DiagnosticReport {
  std::string alignment_source;  // "translation" or "forced"
  std::optional<double> corpus_bleu;
  std::vector<LengthBucket> bleu_by_length;
  std::optional<double> aer;
  std::map<std::string, Triple> continuity;
  std::map<std::string, RotGroup> rot;
  std::map<std::string, Triple> rare_words;

  std::string to_json(int indent = 2) const;
  std::string to_table() const;
};

}  // namespace synmt
