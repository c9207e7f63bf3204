#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them call into the library code they check,
// apart from the functions under test in the *_matches_* helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "synmt/evaluation.hpp"
#include "synmt/rng.hpp"

namespace synmt::testing {

inline Sentence words(const std::string& s) {
  std::istringstream in(s);
  Sentence out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct BleuFixture {
  std::vector<Sentence> hyps;
  std::vector<std::vector<Sentence>> refs;
};

inline BleuFixture load_bleu_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  BleuFixture f;
  for (const auto& h : j["hypotheses"]) f.hyps.push_back(words(h));
  for (const auto& rs : j["references"]) {
    f.refs.emplace_back();
    for (const auto& r : rs) f.refs.back().push_back(words(r));
  }
  return f;
}

/// corpus_bleu from NLTK 3.x on the lowercased fixture, no smoothing.
inline constexpr double kNltkFixtureBleu = 0.579790644220648;

// Second BLEU written from the textbook definition with joined-string n-grams.
inline double reference_bleu(const std::vector<Sentence>& hyps, const std::vector<std::vector<Sentence>>& refs) {
  auto low = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  double num[4] = {0, 0, 0, 0}, den[4] = {0, 0, 0, 0};
  double c = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    std::vector<std::string> h;
    for (auto& w : hyps[i]) h.push_back(low(w));
    c += static_cast<double>(h.size());
    int best = -1;
    for (auto& ref : refs[i]) {
      const int len = static_cast<int>(ref.size());
      const int d = std::abs(len - static_cast<int>(h.size()));
      if (best < 0 || d < std::abs(best - static_cast<int>(h.size())) ||
          (d == std::abs(best - static_cast<int>(h.size())) && len < best)) {
        best = len;
      }
    }
    r += best;
    for (int n = 1; n <= 4; ++n) {
      std::map<std::string, int> hc, mc;
      for (std::size_t k = 0; k + n <= h.size(); ++k) {
        std::string g;
        for (int q = 0; q < n; ++q) g += h[k + q] + "\x01";
        ++hc[g];
      }
      for (auto& ref : refs[i]) {
        std::map<std::string, int> rc;
        for (std::size_t k = 0; k + n <= ref.size(); ++k) {
          std::string g;
          for (int q = 0; q < n; ++q) g += low(ref[k + q]) + "\x01";
          ++rc[g];
        }
        for (auto& [g, v] : rc) mc[g] = std::max(mc[g], v);
      }
      for (auto& [g, v] : hc) {
        num[n - 1] += std::min(v, mc[g]);
        den[n - 1] += v;
      }
    }
  }
  double lp = 0;
  for (int n = 0; n < 4; ++n) {
    if (num[n] == 0) return 0.0;
    lp += 0.25 * std::log(num[n] / den[n]);
  }
  return (c > r ? 1.0 : std::exp(1.0 - r / c)) * std::exp(lp);
}


/// One random sentence with random spans and links; the library's continuity
/// counts are compared with a recount that marks covered target columns and
/// counts runs.
inline bool continuity_matches_recount(Rng& rng) {
  const int n = 2 + static_cast<int>(rng.below(8)), m = 2 + static_cast<int>(rng.below(8));
  AlignmentSet a;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (rng.uniform() < 0.2) a.emplace(i, j);
    }
  }
  std::vector<PhraseSpan> spans;
  std::map<std::string, std::array<std::size_t, 3>> expected;
  for (int k = 0; k < 5; ++k) {
    const std::size_t s = rng.below(static_cast<std::size_t>(n));
    const std::size_t e = s + rng.below(static_cast<std::size_t>(n) - s);
    const std::string cat = rng.uniform() < 0.5 ? "NP" : "VP";
    spans.push_back({cat, s, e});
    std::vector<bool> hit(static_cast<std::size_t>(m), false);
    for (int i = static_cast<int>(s); i <= static_cast<int>(e); ++i) {
      for (int j = 0; j < m; ++j) {
        if (a.count({i, j})) hit[static_cast<std::size_t>(j)] = true;
      }
    }
    int runs = 0;
    for (std::size_t j = 0; j < hit.size(); ++j) runs += hit[j] && (j == 0 || !hit[j - 1]);
    const std::size_t label = runs == 0 ? 2 : runs == 1 ? 0 : 1;
    ++expected[cat][label];
    ++expected["ALL"][label];
  }
  const auto got = phrase_continuity({spans}, {a});
  if (got.size() != expected.size()) return false;
  for (const auto& [cat, counts] : expected) {
    if (!got.count(cat) || got.at(cat).counts != counts) return false;
  }
  return true;
}

/// Three random sentences with out-of-vocabulary "rare*" words; the rare-word
/// report is compared with a per-word recount of aligned target tokens.
inline bool rare_report_matches_recount(Rng& rng) {
  const Vocabulary vocab = Vocabulary::from_tokens({"<pad>", "<unk>", "</s>", "k0", "k1", "k2"});
  const std::map<std::string, std::vector<std::string>> groups = {{"NN", {"NN", "NNS"}}, {"CD", {"CD"}}};
  const std::vector<std::string> tagset = {"NN", "NNS", "CD", "VB"};
  std::vector<Sentence> sources, targets;
  std::vector<std::vector<std::string>> tags;
  std::vector<AlignmentSet> aligns;
  std::map<std::string, std::array<std::size_t, 3>> expected;
  for (int s = 0; s < 3; ++s) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(6);
    Sentence src, tgt;
    std::vector<std::string> tg;
    for (std::size_t i = 0; i < n; ++i) {
      src.push_back(rng.uniform() < 0.5 ? "k" + std::to_string(rng.below(3)) : "rare" + std::to_string(rng.below(50)));
      tg.push_back(tagset[rng.below(tagset.size())]);
    }
    for (std::size_t j = 0; j < m; ++j) tgt.push_back(rng.uniform() < 0.4 ? "<unk>" : "w" + std::to_string(j));
    AlignmentSet a;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (rng.uniform() < 0.25) a.emplace(static_cast<int>(i), static_cast<int>(j));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (src[i].rfind("rare", 0) != 0) continue;
      std::size_t any = 0, non_unk = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (a.count({static_cast<int>(i), static_cast<int>(j)})) {
          ++any;
          non_unk += tgt[j] != "<unk>";
        }
      }
      const std::size_t label = any == 0 ? 2 : non_unk > 0 ? 0 : 1;
      ++expected["ALL"][label];
      if (tg[i] == "NN" || tg[i] == "NNS") ++expected["NN"][label];
      if (tg[i] == "CD") ++expected["CD"][label];
    }
    sources.push_back(src);
    targets.push_back(tgt);
    tags.push_back(tg);
    aligns.push_back(a);
  }
  const auto got = rare_word_report(sources, tags, vocab, aligns, targets, groups);
  if (got.size() != expected.size()) return false;
  for (const auto& [g, counts] : expected) {
    if (!got.count(g) || got.at(g).counts != counts) return false;
  }
  return true;
}

/// next-token probabilities of the three-token table decoder, rows indexed by
/// the previous token (3 = start). The greedy first choice is a dead end.
inline const std::vector<std::vector<double>>& table_model() {
  static const std::vector<std::vector<double>> t = {
      {0.05, 0.05, 0.90},
      {0.30, 0.40, 0.30},
      {1.0 / 3, 1.0 / 3, 1.0 / 3},
      {0.10, 0.50, 0.40},
  };
  return t;
}

// Best length-normalized score over every output of at most `max_len` tokens.
inline double exhaustive_best(const std::vector<std::vector<double>>& table, std::size_t max_len) {
  double best = -INFINITY;
  std::function<void(std::size_t, double, std::size_t)> walk = [&](std::size_t state, double lp, std::size_t len) {
    for (std::size_t w = 0; w < 3; ++w) {
      const double next = lp + std::log(table[state][w]);
      const std::size_t n = len + 1;
      if (w == 2 || n == max_len) best = std::max(best, next / static_cast<double>(n));
      if (w != 2 && n < max_len) walk(w, next, n);
    }
  };
  walk(3, 0.0, 0);
  return best;
}

}  // namespace synmt::testing
