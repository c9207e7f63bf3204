#include "synmt/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "synmt/error.hpp"

namespace synmt {

// ---- BLEU -------------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Sentence(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < kMaxN; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_length += o.hyp_length;
  ref_length += o.ref_length;
  return *this;
}

double BleuStats::score() const {
  if (hyp_length == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  log_p /= static_cast<double>(max_n);
  const double c = static_cast<double>(hyp_length), r = static_cast<double>(ref_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_p);
}

BleuStats sentence_bleu_stats(const Sentence& hypothesis, const std::vector<Sentence>& references, std::size_t max_n,
                              bool case_insensitive) {
  if (max_n == 0 || max_n > BleuStats::kMaxN) throw UsageError("bleu: max_n must lie in [1, 4]");
  if (references.empty()) throw UsageError("bleu: every hypothesis needs at least one reference");
  auto norm = [&](const Sentence& s) {
    if (!case_insensitive) return s;
    Sentence out;
    for (const auto& w : s) out.push_back(lower(w));
    return out;
  };
  const Sentence hyp = norm(hypothesis);
  std::vector<Sentence> refs;
  for (const auto& r : references) refs.push_back(norm(r));

  BleuStats st;
  st.max_n = max_n;
  st.hyp_length = hyp.size();
  // Closest reference length; the shorter one wins a tie.
  std::size_t best = refs[0].size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  st.ref_length = best;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto h = ngram_counts(hyp, n);
    std::map<std::vector<std::string>, std::size_t> max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    for (const auto& [g, c] : h) {
      auto it = max_ref.find(g);
      st.matches[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
      st.totals[n - 1] += c;
    }
  }
  return st;
}

BleuStats corpus_bleu_stats(const std::vector<Sentence>& hypotheses, const std::vector<std::vector<Sentence>>& references,
                            std::size_t max_n, bool case_insensitive) {
  if (hypotheses.empty()) throw UsageError("bleu: empty hypothesis corpus");
  if (hypotheses.size() != references.size()) {
    throw UsageError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                     std::to_string(references.size()) + " reference sets");
  }
  BleuStats total;
  total.max_n = max_n;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    total += sentence_bleu_stats(hypotheses[i], references[i], max_n, case_insensitive);
  }
  return total;
}

double bleu(const std::vector<Sentence>& hypotheses, const std::vector<std::vector<Sentence>>& references,
            std::size_t max_n, bool case_insensitive) {
  return corpus_bleu_stats(hypotheses, references, max_n, case_insensitive).score();
}

std::string LengthBucket::label() const {
  if (high == 0) return ">" + std::to_string(low == 0 ? 0 : low - 1);
  return std::to_string(low) + "-" + std::to_string(high);
}

std::vector<LengthBucket> bleu_by_length(const std::vector<Sentence>& hypotheses,
                                         const std::vector<std::vector<Sentence>>& references,
                                         const std::vector<std::size_t>& source_lengths,
                                         const std::vector<std::size_t>& edges) {
  if (source_lengths.size() != hypotheses.size()) throw UsageError("bleu_by_length: one source length per sentence");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw UsageError("bleu_by_length: bucket edges must increase");
  }
  std::vector<LengthBucket> buckets(edges.size() + 1);
  for (std::size_t k = 0; k < buckets.size(); ++k) {
    buckets[k].low = k == 0 ? 0 : edges[k - 1] + 1;
    buckets[k].high = k < edges.size() ? edges[k] : 0;
  }
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const std::size_t k = static_cast<std::size_t>(
        std::lower_bound(edges.begin(), edges.end(), source_lengths[i]) - edges.begin());
    buckets[k].stats += sentence_bleu_stats(hypotheses[i], references.at(i));
    ++buckets[k].sentences;
  }
  std::vector<LengthBucket> out;
  for (auto& b : buckets) {
    if (b.sentences == 0) continue;
    b.bleu = b.stats.score();
    out.push_back(b);
  }
  return out;
}

// ---- AER --------------------------------------------------------------------------

GoldAlignment parse_gold_alignment(const std::string& line) {
  GoldAlignment g;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto sep = tok.find_first_of("-?");
    bool ok = sep != std::string::npos && sep > 0 && sep + 1 < tok.size();
    int i = 0, j = 0;
    if (ok) {
      const std::string a = tok.substr(0, sep), b = tok.substr(sep + 1);
      ok = std::all_of(a.begin(), a.end(), ::isdigit) && std::all_of(b.begin(), b.end(), ::isdigit);
      if (ok) {
        i = std::stoi(a);
        j = std::stoi(b);
      }
    }
    if (!ok) throw DataError("bad gold alignment link '" + tok + "'");
    g.possible.emplace(i, j);
    if (tok[sep] == '-') g.sure.emplace(i, j);
  }
  return g;
}

std::vector<GoldAlignment> read_gold_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<GoldAlignment> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    try {
      out.push_back(parse_gold_alignment(line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

AerCounts& AerCounts::operator+=(const AerCounts& o) {
  a_and_s += o.a_and_s;
  a_and_p += o.a_and_p;
  a += o.a;
  s += o.s;
  return *this;
}

double AerCounts::rate() const {
  if (a + s == 0) {
    std::cerr << "warning: AER with no hypothesis or sure links; reporting 0\n";
    return 0.0;
  }
  return 1.0 - static_cast<double>(a_and_s + a_and_p) / static_cast<double>(a + s);
}

AerCounts aer_counts(const AlignmentSet& hypothesis, const GoldAlignment& gold) {
  AerCounts c;
  c.a = hypothesis.size();
  c.s = gold.sure.size();
  for (const auto& link : hypothesis) {
    c.a_and_s += gold.sure.count(link);
    c.a_and_p += gold.possible.count(link) || gold.sure.count(link);
  }
  return c;
}

double aer(const std::vector<AlignmentSet>& hypotheses, const std::vector<GoldAlignment>& gold) {
  if (hypotheses.size() != gold.size()) {
    throw UsageError("aer: " + std::to_string(hypotheses.size()) + " alignments but " + std::to_string(gold.size()) +
                     " gold entries");
  }
  AerCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += aer_counts(hypotheses[i], gold[i]);
  return total.rate();
}

// ---- diagnostics --------------------------------------------------------------------

double Triple::percent(std::size_t k) const {
  const std::size_t t = total();
  return t ? 100.0 * static_cast<double>(counts[k]) / static_cast<double>(t) : 0.0;
}

Continuity classify_span(const PhraseSpan& span, const AlignmentSet& alignment) {
  std::set<int> targets;
  for (const auto& [s, t] : alignment) {
    if (s >= static_cast<int>(span.start) && s <= static_cast<int>(span.end)) targets.insert(t);
  }
  if (targets.empty()) return Continuity::Untranslated;
  const int width = *targets.rbegin() - *targets.begin() + 1;
  return static_cast<std::size_t>(width) == targets.size() ? Continuity::Continuous : Continuity::Discontinuous;
}

std::map<std::string, Triple> phrase_continuity(const std::vector<std::vector<PhraseSpan>>& spans,
                                                const std::vector<AlignmentSet>& alignments) {
  if (spans.size() != alignments.size()) throw UsageError("phrase_continuity: one alignment per sentence");
  std::map<std::string, Triple> out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (const PhraseSpan& sp : spans[i]) {
      const auto k = static_cast<std::size_t>(classify_span(sp, alignments[i]));
      ++out[sp.category].counts[k];
      ++out["ALL"].counts[k];
    }
  }
  return out;
}

std::size_t over_translation(const std::vector<std::string>& aligned_tokens) {
  return aligned_tokens.size() - std::set<std::string>(aligned_tokens.begin(), aligned_tokens.end()).size();
}

namespace {

// Target tokens aligned to each source word, in target order.
std::vector<std::vector<std::string>> aligned_tokens(std::size_t source_words, const AlignmentSet& alignment,
                                                     const Sentence& target) {
  std::vector<std::vector<std::pair<int, std::string>>> tmp(source_words);
  for (const auto& [s, t] : alignment) {
    if (s < 0 || static_cast<std::size_t>(s) >= source_words || t < 0 || static_cast<std::size_t>(t) >= target.size()) {
      throw DataError("alignment link " + std::to_string(s) + "-" + std::to_string(t) + " outside a " +
                      std::to_string(source_words) + "x" + std::to_string(target.size()) + " sentence pair");
    }
    tmp[static_cast<std::size_t>(s)].emplace_back(t, target[static_cast<std::size_t>(t)]);
  }
  std::vector<std::vector<std::string>> out(source_words);
  for (std::size_t w = 0; w < source_words; ++w) {
    std::sort(tmp[w].begin(), tmp[w].end());
    for (auto& [t, tok] : tmp[w]) out[w].push_back(tok);
  }
  return out;
}

std::vector<std::string> groups_of(const std::string& tag, const std::map<std::string, std::vector<std::string>>& groups) {
  std::vector<std::string> out;
  for (const auto& [name, tags] : groups) {
    if (std::find(tags.begin(), tags.end(), tag) != tags.end()) out.push_back(name);
  }
  out.push_back("ALL");
  return out;
}

}  // namespace

std::map<std::string, RotGroup> rot(const std::vector<std::vector<std::string>>& pos_tags,
                                    const std::vector<AlignmentSet>& alignments, const std::vector<Sentence>& targets,
                                    const std::map<std::string, std::vector<std::string>>& groups) {
  if (pos_tags.size() != alignments.size() || pos_tags.size() != targets.size()) {
    throw UsageError("rot: tags, alignments and targets must cover the same sentences");
  }
  std::map<std::string, RotGroup> out;
  for (std::size_t i = 0; i < pos_tags.size(); ++i) {
    const auto e = aligned_tokens(pos_tags[i].size(), alignments[i], targets[i]);
    for (std::size_t w = 0; w < e.size(); ++w) {
      const std::size_t uniq = e[w].size() - over_translation(e[w]);
      for (const std::string& g : groups_of(pos_tags[i][w], groups)) {
        RotGroup& r = out[g];
        ++r.words;
        r.aligned += e[w].size();
        r.unique += uniq;
        r.repeated += e[w].size() - uniq;
      }
    }
  }
  return out;
}

RareOutcome classify_rare(const std::vector<std::string>& aligned, const std::string& unk) {
  if (aligned.empty()) return RareOutcome::Untranslated;
  for (const auto& t : aligned) {
    if (t != unk) return RareOutcome::NonUnk;
  }
  return RareOutcome::Unk;
}

std::map<std::string, Triple> rare_word_report(const std::vector<Sentence>& sources,
                                               const std::vector<std::vector<std::string>>& pos_tags,
                                               const Vocabulary& source_vocab,
                                               const std::vector<AlignmentSet>& alignments,
                                               const std::vector<Sentence>& targets,
                                               const std::map<std::string, std::vector<std::string>>& groups,
                                               const std::string& unk) {
  if (sources.size() != pos_tags.size() || sources.size() != alignments.size() || sources.size() != targets.size()) {
    throw UsageError("rare_word_report: inputs must cover the same sentences");
  }
  std::map<std::string, Triple> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (pos_tags[i].size() != sources[i].size()) throw UsageError("rare_word_report: one POS tag per source word");
    const auto e = aligned_tokens(sources[i].size(), alignments[i], targets[i]);
    for (std::size_t w = 0; w < sources[i].size(); ++w) {
      if (source_vocab.id(sources[i][w]) != Vocabulary::kUnk) continue;
      const auto k = static_cast<std::size_t>(classify_rare(e[w], unk));
      for (const std::string& g : groups_of(pos_tags[i][w], groups)) ++out[g].counts[k];
    }
  }
  return out;
}

// ---- report -------------------------------------------------------------------------

std::string DiagnosticReport::to_json(int indent) const {
  using nlohmann::json;
  json j;
  j["alignment_source"] = alignment_source;
  if (corpus_bleu) j["bleu"] = *corpus_bleu;
  json buckets = json::array();
  for (const auto& b : bleu_by_length) {
    buckets.push_back({{"bucket", b.label()}, {"sentences", b.sentences}, {"bleu", b.bleu}});
  }
  j["bleu_by_length"] = buckets;
  if (aer) j["aer"] = *aer;
  auto triple = [](const Triple& t, const char* a, const char* b, const char* c) {
    return json{{"count", t.total()}, {a, t.percent(0)}, {b, t.percent(1)}, {c, t.percent(2)}};
  };
  for (const auto& [cat, t] : continuity) j["continuity"][cat] = triple(t, "cont", "dis", "un");
  for (const auto& [g, r] : rot) {
    j["rot"][g] = {{"words", r.words}, {"aligned", r.aligned}, {"unique", r.unique}, {"repeated", r.repeated},
                   {"rot", r.rot()}};
  }
  for (const auto& [g, t] : rare_words) j["rare_words"][g] = triple(t, "non_unk", "unk", "un");
  return j.dump(indent);
}

std::string DiagnosticReport::to_table() const {
  std::ostringstream o;
  char buf[160];
  o << "alignments from: " << alignment_source << "\n";
  if (corpus_bleu) {
    std::snprintf(buf, sizeof buf, "BLEU  %.2f\n", 100.0 * *corpus_bleu);
    o << buf;
  }
  if (!bleu_by_length.empty()) {
    o << "\nBLEU by source length\n";
    for (const auto& b : bleu_by_length) {
      std::snprintf(buf, sizeof buf, "  %-8s %6zu sent  %6.2f\n", b.label().c_str(), b.sentences, 100.0 * b.bleu);
      o << buf;
    }
  }
  if (aer) {
    std::snprintf(buf, sizeof buf, "\nAER   %.2f\n", 100.0 * *aer);
    o << buf;
  }
  auto triples = [&](const char* title, const char* h0, const char* h1, const char* h2,
                     const std::map<std::string, Triple>& rows) {
    if (rows.empty()) return;
    std::snprintf(buf, sizeof buf, "\n%s\n  %-6s %7s %8s %8s %8s\n", title, "", "count", h0, h1, h2);
    o << buf;
    for (const auto& [name, t] : rows) {
      std::snprintf(buf, sizeof buf, "  %-6s %7zu %8.2f %8.2f %8.2f\n", name.c_str(), t.total(), t.percent(0),
                    t.percent(1), t.percent(2));
      o << buf;
    }
  };
  triples("Phrase continuity (%)", "Cont.", "Dis.", "Un.", continuity);
  if (!rot.empty()) {
    std::snprintf(buf, sizeof buf, "\nOver-translation\n  %-6s %7s %8s %8s %8s\n", "", "|w|", "|e|", "uniq", "ROT");
    o << buf;
    for (const auto& [g, r] : rot) {
      std::snprintf(buf, sizeof buf, "  %-6s %7zu %8zu %8zu %8.4f\n", g.c_str(), r.words, r.aligned, r.unique, r.rot());
      o << buf;
    }
  }
  triples("Rare words (%)", "non-UNK", "UNK", "Un.", rare_words);
  return o.str();
}

}  // namespace synmt
