#include "synmt/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "synmt/error.hpp"

namespace synmt {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Parallel: return "parallel";
    case Variant::Hierarchical: return "hierarchical";
    case Variant::Mixed: return "mixed";
  }
  return "baseline";
}

Variant parse_variant(const std::string& name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "parallel") return Variant::Parallel;
  if (name == "hierarchical") return Variant::Hierarchical;
  if (name == "mixed") return Variant::Mixed;
  throw UsageError("unknown variant '" + name + "' (expected baseline, parallel, hierarchical or mixed)");
}

std::string label_token(const std::string& label) { return "(" + label; }

// ---- Vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("</s>");
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus, std::size_t limit,
                             const std::vector<std::string>& extra_reserved) {
  Vocabulary v;
  for (const std::string& r : extra_reserved) v.add(r);
  if (limit < v.size()) {
    throw UsageError("vocabulary limit " + std::to_string(limit) + " is below the " + std::to_string(v.size()) +
                     " reserved tokens");
  }
  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::size_t position = 0;
  for (const Sentence& s : corpus) {
    for (const std::string& w : s) {
      auto [it, inserted] = freq.try_emplace(w, Entry{0, position});
      ++it->second.count;
      ++position;
    }
  }
  if (position == 0) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, Entry>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  for (const auto& [tok, e] : ranked) {
    if (v.size() >= limit) break;
    v.add(tok);
  }
  v.total_tokens_ = position;
  for (const auto& [tok, e] : ranked) {
    if (v.contains(tok)) v.covered_tokens_ += e.count;
  }
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UsageError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(const Sentence& words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(id(w));
  return ids;
}

Sentence Vocabulary::decode(const std::vector<TokenId>& ids) const {
  Sentence out;
  for (TokenId i : ids) {
    if (i == kEos) break;
    out.push_back(token(i));
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary " + path);
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  if (!out) throw DataError("failed writing vocabulary " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": missing tab");
    const std::size_t id = std::stoul(line.substr(tab + 1));
    if (id != tokens.size()) throw DataError(path + ":" + std::to_string(lineno) + ": ids must be dense from 0");
    tokens.push_back(line.substr(0, tab));
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecial || tokens[kPad] != "<pad>" || tokens[kUnk] != "<unk>" || tokens[kEos] != "</s>") {
    throw DataError("vocabulary must start with <pad>, <unk>, </s>");
  }
  Vocabulary v;
  for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != tokens.size()) throw DataError("vocabulary contains duplicate tokens");
  return v;
}

// ---- reading --------------------------------------------------------------

std::vector<Sentence> read_tokenized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    Sentence s;
    std::string w;
    while (is >> w) s.push_back(w);
    out.push_back(std::move(s));
  }
  return out;
}

ParallelText read_parallel(const std::string& source_path, const std::string& target_path,
                           const std::string& tree_path) {
  ParallelText text;
  text.source = read_tokenized(source_path);
  text.target = read_tokenized(target_path);
  if (!tree_path.empty()) text.trees = read_treebank(tree_path);
  return text;
}

Vocabs build_vocabs(const ParallelText& text, Variant variant, std::size_t source_limit, std::size_t target_limit,
                    const LinearizeOptions& lin) {
  Vocabs v;
  std::vector<Sentence> label_corpus;
  if (variant != Variant::Baseline) {
    if (text.trees.empty()) throw UsageError(to_string(variant) + " variant needs a tree file");
    for (const auto& t : text.trees) {
      if (t) label_corpus.push_back(linearize(*t, lin).labels);
    }
  }
  if (variant == Variant::Mixed) {
    // Label inventory by frequency, then words fill the remaining slots.
    Vocabulary labels = Vocabulary::build(label_corpus, SIZE_MAX);
    std::vector<std::string> reserved;
    for (std::size_t i = Vocabulary::kNumSpecial; i < labels.size(); ++i) {
      reserved.push_back(label_token(labels.token(static_cast<TokenId>(i))));
    }
    v.source = Vocabulary::build(text.source, source_limit, reserved);
  } else {
    v.source = Vocabulary::build(text.source, source_limit);
  }
  v.target = Vocabulary::build(text.target, target_limit);
  if (uses_labels(variant)) v.label = Vocabulary::build(label_corpus, SIZE_MAX);
  return v;
}

std::vector<ExamplePair> make_examples(const ParallelText& text, const Vocabs& vocabs, Variant variant,
                                       const LengthLimits& limits, const LinearizeOptions& lin) {
  if (text.source.size() != text.target.size() || (!text.trees.empty() && text.trees.size() != text.source.size())) {
    std::string msg = "input files are not line-aligned: " + std::to_string(text.source.size()) + " source, " +
                      std::to_string(text.target.size()) + " target";
    if (!text.trees.empty()) msg += ", " + std::to_string(text.trees.size()) + " tree";
    throw DataError(msg + " lines");
  }
  if (variant != Variant::Baseline && text.trees.empty()) {
    throw UsageError(to_string(variant) + " variant needs a tree file");
  }
  std::vector<ExamplePair> out;
  auto warn = [](std::size_t i, const std::string& why) {
    std::cerr << "warning: line " << (i + 1) << ": dropping pair (" << why << ")\n";
  };
  for (std::size_t i = 0; i < text.source.size(); ++i) {
    const Sentence& src = text.source[i];
    const Sentence& tgt = text.target[i];
    if (src.empty() || tgt.empty()) {
      warn(i, "empty sentence");
      continue;
    }
    if (src.size() > limits.max_source || tgt.size() > limits.max_target) continue;
    ExamplePair ex;
    ex.line = i;
    if (!text.trees.empty()) {
      if (!text.trees[i]) continue;  // already warned by the tree reader
      const LinearizedTree lt = linearize(*text.trees[i], lin);
      if (lt.words != src) {
        warn(i, "tree leaves do not match the source sentence");
        continue;
      }
      if (uses_labels(variant)) {
        if (lt.labels.size() > limits.max_labels) continue;
        ex.labels = vocabs.label.encode(lt.labels);
        ex.labels.push_back(Vocabulary::kEos);
        ex.word_to_label.assign(lt.word_to_label.begin(), lt.word_to_label.end());
      }
      if (variant == Variant::Mixed) {
        const MixedSequence mix = build_mixed(*text.trees[i], lin);
        if (mix.tokens.size() > limits.max_mixed) continue;
        std::size_t w = 0;
        for (std::size_t k = 0; k < mix.tokens.size(); ++k) {
          if (w < mix.word_positions.size() && mix.word_positions[w] == k) {
            ex.mixed.push_back(vocabs.source.id(mix.tokens[k]));
            ++w;
          } else {
            ex.mixed.push_back(vocabs.source.id(label_token(mix.tokens[k])));
          }
        }
        ex.mixed.push_back(Vocabulary::kEos);
        ex.word_positions.assign(mix.word_positions.begin(), mix.word_positions.end());
      }
    }
    ex.source = vocabs.source.encode(src);
    ex.source.push_back(Vocabulary::kEos);
    ex.target = vocabs.target.encode(tgt);
    ex.target.push_back(Vocabulary::kEos);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- batching -------------------------------------------------------------

Tensor IdGrid::step_mask(std::size_t t) const {
  Tensor m({batch, 1});
  for (std::size_t b = 0; b < batch; ++b) m[b] = lengths[b] > t ? 1.0 : 0.0;
  return m;
}

Tensor IdGrid::mask() const {
  Tensor m({batch, steps});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) m[b * steps + t] = lengths[b] > t ? 1.0 : 0.0;
  }
  return m;
}

IdGrid IdGrid::pack(const std::vector<const std::vector<TokenId>*>& rows) {
  IdGrid g;
  g.batch = rows.size();
  for (const auto* r : rows) g.steps = std::max(g.steps, r->size());
  g.ids.assign(g.steps * g.batch, Vocabulary::kPad);
  for (std::size_t b = 0; b < g.batch; ++b) {
    g.lengths.push_back(rows[b]->size());
    for (std::size_t t = 0; t < rows[b]->size(); ++t) g.ids[t * g.batch + b] = (*rows[b])[t];
  }
  return g;
}

Batch make_batch(const std::vector<ExamplePair>& examples, const std::vector<std::size_t>& indices, Variant variant) {
  Batch batch;
  batch.variant = variant;
  batch.examples = indices;
  std::vector<const std::vector<TokenId>*> src, tgt, lab, mix;
  for (std::size_t i : indices) {
    const ExamplePair& ex = examples.at(i);
    src.push_back(&ex.source);
    tgt.push_back(&ex.target);
    if (uses_labels(variant)) {
      if (ex.labels.empty()) throw UsageError("example " + std::to_string(i) + " has no label sequence");
      lab.push_back(&ex.labels);
    }
    if (variant == Variant::Mixed) {
      if (ex.mixed.empty()) throw UsageError("example " + std::to_string(i) + " has no mixed sequence");
      mix.push_back(&ex.mixed);
    }
  }
  batch.source = IdGrid::pack(src);
  batch.target = IdGrid::pack(tgt);
  if (!lab.empty()) batch.labels = IdGrid::pack(lab);
  if (!mix.empty()) batch.mixed = IdGrid::pack(mix);

  auto position_map = [&](auto member, const IdGrid& grid) {
    std::vector<std::vector<std::int32_t>> map(batch.source.steps, std::vector<std::int32_t>(indices.size(), 0));
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const ExamplePair& ex = examples[indices[b]];
      const auto& positions = ex.*member;
      for (std::size_t t = 0; t < positions.size(); ++t) map[t][b] = positions[t];
      // Source EOS attends through the EOS closing the label / mixed sequence.
      map[positions.size()][b] = static_cast<std::int32_t>(grid.lengths[b] - 1);
    }
    return map;
  };
  if (uses_labels(variant)) batch.label_index = position_map(&ExamplePair::word_to_label, batch.labels);
  if (variant == Variant::Mixed) batch.mixed_index = position_map(&ExamplePair::word_positions, batch.mixed);
  return batch;
}

std::vector<std::vector<std::size_t>> plan_batches(const std::vector<ExamplePair>& examples, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw UsageError("batch size must be at least 1");
  Rng rng(seed * 1000003ULL + epoch);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t chunk = batch_size * 20;
  std::vector<std::vector<std::size_t>> full;
  std::vector<std::size_t> partial;
  for (std::size_t start = 0; start < order.size(); start += chunk) {
    const std::size_t stop = std::min(order.size(), start + chunk);
    std::stable_sort(order.begin() + start, order.begin() + stop, [&](std::size_t a, std::size_t b) {
      return examples[a].source.size() < examples[b].source.size();
    });
    for (std::size_t b = start; b < stop; b += batch_size) {
      std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(stop, b + batch_size));
      if (idx.size() == batch_size) {
        full.push_back(std::move(idx));
      } else {
        partial = std::move(idx);
      }
    }
  }
  rng.shuffle(full);
  if (!partial.empty()) full.push_back(std::move(partial));
  return full;
}

// ---- binary example files --------------------------------------------------

namespace {

constexpr char kExamplesMagic[8] = {'S', 'Y', 'N', 'M', 'T', 'E', 'X', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated example file");
  return v;
}

void put_ids(std::ostream& out, const std::vector<std::int32_t>& v) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  for (std::int32_t x : v) put<std::int32_t>(out, x);
}

std::vector<std::int32_t> get_ids(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::vector<std::int32_t> v(n);
  for (auto& x : v) x = get<std::int32_t>(in);
  return v;
}

}  // namespace

void save_examples(const std::string& path, const std::vector<ExamplePair>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kExamplesMagic, sizeof(kExamplesMagic));
  put<std::uint64_t>(out, examples.size());
  for (const ExamplePair& ex : examples) {
    put<std::uint64_t>(out, ex.line);
    put_ids(out, ex.source);
    put_ids(out, ex.target);
    put_ids(out, ex.labels);
    put_ids(out, ex.mixed);
    put_ids(out, ex.word_to_label);
    put_ids(out, ex.word_positions);
  }
  if (!out) throw DataError("failed writing " + path);
}

std::vector<ExamplePair> load_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[sizeof(kExamplesMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kExamplesMagic, sizeof(magic)) != 0) throw DataError(path + ": not an example file");
  const auto n = get<std::uint64_t>(in);
  std::vector<ExamplePair> out(n);
  for (ExamplePair& ex : out) {
    ex.line = get<std::uint64_t>(in);
    ex.source = get_ids(in);
    ex.target = get_ids(in);
    ex.labels = get_ids(in);
    ex.mixed = get_ids(in);
    ex.word_to_label = get_ids(in);
    ex.word_positions = get_ids(in);
  }
  return out;
}

}  // namespace synmt
