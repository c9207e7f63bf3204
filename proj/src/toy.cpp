#include "synmt/toy.hpp"

#include <filesystem>
#include <fstream>

#include "synmt/error.hpp"

namespace synmt {

namespace {

const std::vector<std::string> kNouns = {
    "dog",    "cat",    "man",    "woman",  "child",   "bird",   "horse", "farmer", "teacher", "doctor",
    "house",  "garden", "river",  "tree",   "book",    "letter", "car",   "table",  "window",  "door",
    "city",   "school", "market", "song",   "picture", "stone",  "boat",  "apple",  "friend",  "king",
    "queen",  "soldier", "girl",  "boy",    "baker",   "field",  "road",  "hill",   "bridge",  "lamp"};
const std::vector<std::string> kVerbs = {"sees",   "likes",  "finds", "takes",  "paints", "reads",  "builds",
                                         "visits", "carries", "helps", "watches", "follows", "opens", "sells"};
const std::vector<std::string> kIntransitive = {"sleeps", "runs", "sings", "waits", "laughs", "swims"};
const std::vector<std::string> kAdjectives = {"big",   "small", "old",  "young", "red",   "green",
                                              "quiet", "happy", "tall", "dark",  "brave", "clever"};
const std::vector<std::string> kDeterminers = {"the", "a", "this", "every"};
const std::vector<std::string> kPrepositions = {"with", "near", "behind", "under", "from"};

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

// A sentence under construction: words, tree text, and for each target
// position the source word it translates.
struct Phrase {
  std::vector<std::string> words;  // source order
  std::string tree;
  std::vector<std::size_t> target_order;  // indices into words
};

Phrase leaf(const std::string& tag, const std::string& word) { return {{word}, "(" + tag + " " + word + ")", {0}}; }

// Joins children under `label`; `order` gives the target order of children.
Phrase join(const std::string& label, const std::vector<Phrase>& kids, const std::vector<std::size_t>& order) {
  Phrase p;
  p.tree = "(" + label;
  std::vector<std::size_t> offset;
  for (const Phrase& k : kids) {
    offset.push_back(p.words.size());
    p.words.insert(p.words.end(), k.words.begin(), k.words.end());
    p.tree += " " + k.tree;
  }
  p.tree += ")";
  for (std::size_t c : order) {
    for (std::size_t i : kids[c].target_order) p.target_order.push_back(offset[c] + i);
  }
  return p;
}

Phrase noun_phrase(Rng& rng, int depth);

Phrase prep_phrase(Rng& rng, int depth) {
  // Postpositional target: object before the adposition.
  return join("PP", {leaf("IN", pick(kPrepositions, rng)), noun_phrase(rng, depth + 1)}, {1, 0});
}

Phrase noun_phrase(Rng& rng, int depth) {
  Phrase base;
  if (rng.uniform() < 0.35) {
    base = join("NP", {leaf("DT", pick(kDeterminers, rng)), leaf("JJ", pick(kAdjectives, rng)), leaf("NN", pick(kNouns, rng))},
                {0, 2, 1});
  } else {
    base = join("NP", {leaf("DT", pick(kDeterminers, rng)), leaf("NN", pick(kNouns, rng))}, {0, 1});
  }
  if (depth < 1 && rng.uniform() < 0.2) return join("NP", {base, prep_phrase(rng, depth)}, {0, 1});
  return base;
}

Phrase verb_phrase(Rng& rng) {
  if (rng.uniform() < 0.2) return join("VP", {leaf("VBZ", pick(kIntransitive, rng))}, {0});
  Phrase obj = noun_phrase(rng, 0);
  if (rng.uniform() < 0.25) {
    return join("VP", {leaf("VBZ", pick(kVerbs, rng)), obj, prep_phrase(rng, 0)}, {2, 1, 0});
  }
  return join("VP", {leaf("VBZ", pick(kVerbs, rng)), obj}, {1, 0});
}

ToyCorpus finish(const std::vector<Phrase>& sentences) {
  ToyCorpus c;
  for (const Phrase& p : sentences) {
    c.text.source.push_back(p.words);
    Sentence tgt;
    GoldAlignment g;
    for (std::size_t j = 0; j < p.target_order.size(); ++j) {
      tgt.push_back(toy_translate_word(p.words[p.target_order[j]]));
      g.sure.emplace(static_cast<int>(p.target_order[j]), static_cast<int>(j));
    }
    g.possible = g.sure;
    c.text.target.push_back(std::move(tgt));
    c.text.trees.emplace_back(parse_bracketed(p.tree));
    c.gold.push_back(std::move(g));
  }
  return c;
}

}  // namespace

std::string toy_translate_word(const std::string& w) { return std::string(w.rbegin(), w.rend()) + "o"; }

ToyCorpus make_copy_corpus(std::size_t sentences, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                           std::uint64_t seed) {
  if (vocab == 0 || min_len == 0 || max_len < min_len) throw UsageError("copy corpus: bad size parameters");
  Rng rng(seed);
  ToyCorpus c;
  for (std::size_t s = 0; s < sentences; ++s) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    Sentence words;
    std::string tree = "(S";
    GoldAlignment g;
    for (std::size_t i = 0; i < len; ++i) {
      words.push_back("w" + std::to_string(rng.below(vocab)));
      tree += " (X " + words.back() + ")";
      g.sure.emplace(static_cast<int>(i), static_cast<int>(i));
    }
    g.possible = g.sure;
    c.text.source.push_back(words);
    c.text.target.push_back(words);
    c.text.trees.emplace_back(parse_bracketed(tree + ")"));
    c.gold.push_back(std::move(g));
  }
  return c;
}

ToyCorpus make_grammar_corpus(std::size_t sentences, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Phrase> out;
  for (std::size_t s = 0; s < sentences; ++s) {
    // Verb-final target: subject, then the verb phrase in its own order.
    out.push_back(join("S", {noun_phrase(rng, 0), verb_phrase(rng)}, {0, 1}));
  }
  return finish(out);
}

ToyCorpus make_attachment_corpus(std::size_t sentences, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Phrase> out;
  auto simple_np = [&] {
    return join("NP", {leaf("DT", pick(kDeterminers, rng)), leaf("NN", pick(kNouns, rng))}, {0, 1});
  };
  for (std::size_t s = 0; s < sentences; ++s) {
    Phrase subj = simple_np();
    Phrase verb = leaf("VBZ", pick(kVerbs, rng));
    Phrase obj = simple_np();
    Phrase pp = join("PP", {leaf("IN", pick(kPrepositions, rng)), simple_np()}, {1, 0});
    Phrase vp;
    if (rng.uniform() < 0.5) {
      // Noun attachment: the modifier stays next to its noun.
      vp = join("VP", {verb, join("NP", {obj, pp}, {0, 1})}, {1, 0});
    } else {
      // Verb attachment: the modifier moves to the front of the clause body.
      vp = join("VP", {verb, obj, pp}, {2, 1, 0});
    }
    out.push_back(join("S", {subj, vp}, {0, 1}));
  }
  return finish(out);
}

void write_toy_corpus(const ToyCorpus& corpus, const std::string& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const std::string base = (std::filesystem::path(dir) / stem).string();
  std::ofstream src(base + ".src"), tgt(base + ".tgt"), tree(base + ".tree"), align(base + ".align");
  if (!src || !tgt || !tree || !align) throw Error("cannot write toy corpus under " + dir);
  auto line = [](std::ostream& o, const Sentence& s) {
    for (std::size_t i = 0; i < s.size(); ++i) o << (i ? " " : "") << s[i];
    o << "\n";
  };
  for (std::size_t i = 0; i < corpus.text.source.size(); ++i) {
    line(src, corpus.text.source[i]);
    line(tgt, corpus.text.target[i]);
    tree << to_bracketed(*corpus.text.trees[i]) << "\n";
    std::string links;
    for (const auto& [a, b] : corpus.gold[i].possible) {
      if (!links.empty()) links += ' ';
      links += std::to_string(a) + (corpus.gold[i].sure.count({a, b}) ? "-" : "?") + std::to_string(b);
    }
    align << links << "\n";
  }
}

}  // namespace synmt
