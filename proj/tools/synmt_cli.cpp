// Command-line driver: preprocess, train, translate, align, evaluate,
// analyze and inspect-tree.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "synmt/config.hpp"
#include "synmt/error.hpp"
#include "synmt/evaluation.hpp"
#include "synmt/inference.hpp"
#include "synmt/training.hpp"

namespace fs = std::filesystem;
using namespace synmt;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> epochs;
  std::optional<std::string> out;
  std::string checkpoint;
  std::string input, trees, output;
};

template <class T>
T parse_env(const char* name, const char* value) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return value;
    } else {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(value, &used);
      if (used != std::string(value).size()) throw std::invalid_argument(value);
      return static_cast<T>(v);
    }
  } catch (const std::logic_error&) {
    throw ConfigError(std::string("$") + name, std::string("cannot parse '") + value + "'");
  }
}

// Layering: defaults, then the config file, then SYNMT_* variables, then flags.
RunConfig resolve(const Flags& f) {
  std::string config_path = f.config;
  if (config_path.empty()) {
    if (const char* e = std::getenv("SYNMT_CONFIG")) config_path = e;
  }
  RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  auto env = [](const char* name, auto& dst) {
    if (const char* v = std::getenv(name)) dst = parse_env<std::decay_t<decltype(dst)>>(name, v);
  };
  std::string variant = to_string(c.model.variant);
  env("SYNMT_SEED", c.seed);
  env("SYNMT_VARIANT", variant);
  env("SYNMT_BEAM", c.decode.beam);
  env("SYNMT_EPOCHS", c.training.epochs);
  env("SYNMT_OUT", c.out_dir);
  if (f.seed) c.seed = *f.seed;
  if (f.variant) variant = *f.variant;
  if (f.beam) c.decode.beam = *f.beam;
  if (f.epochs) c.training.epochs = *f.epochs;
  if (f.out) c.out_dir = *f.out;
  c.model.seed = c.seed;
  try {
    c.model.variant = parse_variant(variant);
  } catch (const UsageError& e) {
    throw ConfigError("variant", e.what());
  }
  if (c.decode.beam == 0) throw ConfigError("decode.beam", "must be at least 1");
  // Re-validate the merged document so overrides obey the same rules.
  return RunConfig::from_json(c.to_json());
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

void require_file(const std::string& path, const std::string& field) {
  if (path.empty()) throw ConfigError(field, "no path configured");
  if (!fs::exists(path)) throw DataError(field + ": " + path + " does not exist");
}

std::string tree_path_for(const RunConfig& c, const std::string& trees, const std::string& field) {
  if (c.model.variant == Variant::Baseline && trees.empty()) return "";
  require_file(trees, field);
  return trees;
}

// Loads a source file (plus trees and an optional target file) for decoding.
// Lines that cannot be numericalized are reported and skipped.
struct DecodeSet {
  ParallelText text;
  std::vector<ExamplePair> examples;
};

DecodeSet load_decode_set(const RunConfig& c, const Vocabs& vocabs, const std::string& src, const std::string& tgt,
                          const std::string& trees) {
  DecodeSet d;
  d.text.source = read_tokenized(src);
  if (!tgt.empty()) {
    d.text.target = read_tokenized(tgt);
  } else {
    d.text.target.assign(d.text.source.size(), Sentence{"."});
  }
  if (!trees.empty()) d.text.trees = read_treebank(trees);
  LengthLimits unlimited{SIZE_MAX, SIZE_MAX, SIZE_MAX, SIZE_MAX};
  d.examples = make_examples(d.text, vocabs, c.model.variant, unlimited, c.linearize_options());
  return d;
}

Checkpoint load_model(const RunConfig& c, const std::string& explicit_path) {
  std::string path = explicit_path;
  if (path.empty()) {
    path = out_path(c, "model.best.ckpt");
    if (!fs::exists(path)) path = out_path(c, "model.last.ckpt");
  }
  Checkpoint ck = load_checkpoint(path);
  std::cerr << "loaded " << path << " (" << to_string(ck.model.config().variant) << ", "
            << count_params(ck.model.params()) << " parameters)\n";
  return ck;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
}

std::string join(const Sentence& s) {
  std::string out;
  for (const auto& w : s) out += (out.empty() ? "" : " ") + w;
  return out;
}

// ---- commands ----------------------------------------------------------------------

struct Prepared {
  Vocabs vocabs;
  std::vector<ExamplePair> train, dev;
  ParallelText dev_text;
};

Prepared preprocess(const RunConfig& c, bool write) {
  require_file(c.data.train_source, "data.train_source");
  require_file(c.data.train_target, "data.train_target");
  Prepared p;
  const ParallelText text = read_parallel(c.data.train_source, c.data.train_target,
                                          tree_path_for(c, c.data.train_trees, "data.train_trees"));
  p.vocabs = build_vocabs(text, c.model.variant, c.data.source_vocab_limit, c.data.target_vocab_limit,
                          c.linearize_options());
  p.train = make_examples(text, p.vocabs, c.model.variant, c.limits, c.linearize_options());
  if (p.train.empty()) throw DataError("no usable training pairs in " + c.data.train_source);
  if (!c.data.dev_source.empty()) {
    require_file(c.data.dev_target, "data.dev_target");
    p.dev_text = read_parallel(c.data.dev_source, c.data.dev_target, tree_path_for(c, c.data.dev_trees, "data.dev_trees"));
    LengthLimits unlimited{SIZE_MAX, SIZE_MAX, SIZE_MAX, SIZE_MAX};
    p.dev = make_examples(p.dev_text, p.vocabs, c.model.variant, unlimited, c.linearize_options());
  }
  std::fprintf(stderr, "source vocab %zu (coverage %.2f%%), target vocab %zu (coverage %.2f%%), labels %zu\n",
               p.vocabs.source.size(), 100.0 * p.vocabs.source.coverage(), p.vocabs.target.size(),
               100.0 * p.vocabs.target.coverage(), p.vocabs.label.size());
  std::fprintf(stderr, "%zu of %zu training pairs kept\n", p.train.size(), text.source.size());
  if (write) {
    fs::create_directories(c.out_dir);
    p.vocabs.source.save(out_path(c, "vocab.src"));
    p.vocabs.target.save(out_path(c, "vocab.tgt"));
    if (p.vocabs.label.size() > Vocabulary::kNumSpecial) p.vocabs.label.save(out_path(c, "vocab.label"));
    save_examples(out_path(c, "train.bin"), p.train);
    if (!p.dev.empty()) save_examples(out_path(c, "dev.bin"), p.dev);
    std::cerr << "wrote vocabularies and binarized examples to " << c.out_dir << "\n";
  }
  return p;
}

ModelConfig sized_model(const RunConfig& c, const Vocabs& v) {
  ModelConfig m = c.model;
  m.source_vocab = v.source.size();
  m.target_vocab = v.target.size();
  m.label_vocab = std::max(v.label.size(), Vocabulary::kNumSpecial);
  return m;
}

double dev_bleu(const Model& m, const Vocabs& v, const std::vector<ExamplePair>& dev, const ParallelText& text) {
  std::vector<Sentence> hyps;
  std::vector<std::vector<Sentence>> refs;
  for (const auto& ex : dev) {
    ModelSession s(m, ex);
    hyps.push_back(v.target.decode(greedy_decode(s, default_max_len(ex)).words()));
    refs.push_back({text.target[ex.line]});
  }
  return hyps.empty() ? 0.0 : bleu(hyps, refs);
}

int cmd_train(const RunConfig& c) {
  Prepared p = preprocess(c, true);
  const std::string run_json = c.to_json();
  Model model = Model::init(sized_model(c, p.vocabs), c.seed);
  std::cerr << "model " << to_string(c.model.variant) << ": " << count_params(model.params()) << " parameters\n";
  Trainer trainer(model, p.train, c.training, c.seed);
  trainer.progress = &std::cout;
  std::cout << "epoch\tupdate\tloss/token\tseconds\n";
  if (!p.dev.empty()) {
    trainer.dev_score = [&](const Model& m) { return dev_bleu(m, p.vocabs, p.dev, p.dev_text); };
  }
  trainer.on_epoch = [&](const TrainReport& r, bool best) {
    std::fprintf(stderr, "epoch %zu done: %zu updates, %.4f loss/token, %.1fs", r.epoch, r.updates, r.loss_per_token,
                 r.seconds);
    if (r.dev_score) std::fprintf(stderr, ", dev BLEU %.2f", 100.0 * *r.dev_score);
    std::fprintf(stderr, "\n");
    try {
      save_checkpoint(out_path(c, "model.last.ckpt"), model, p.vocabs, run_json, &trainer.state(), &trainer.optimizer());
      if (best) save_checkpoint(out_path(c, "model.best.ckpt"), model, p.vocabs, run_json, &trainer.state(),
                                &trainer.optimizer());
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (training stopped after epoch " + std::to_string(r.epoch) + ", update " +
                  std::to_string(r.updates) + "; newer state is not saved)");
    }
  };
  trainer.train(c.training.epochs);
  return 0;
}

int cmd_translate(const RunConfig& c, const Flags& f) {
  Checkpoint ck = load_model(c, f.checkpoint);
  if (ck.model.config().variant != c.model.variant) {
    std::cerr << "note: checkpoint variant " << to_string(ck.model.config().variant) << " overrides the configured one\n";
  }
  RunConfig rc = c;
  rc.model.variant = ck.model.config().variant;
  const std::string src = f.input.empty() ? c.data.test_source : f.input;
  require_file(src, "data.test_source");
  const std::string trees = tree_path_for(rc, f.trees.empty() ? c.data.test_trees : f.trees, "data.test_trees");
  const DecodeSet d = load_decode_set(rc, ck.vocabs, src, "", trees);
  std::vector<std::string> lines(d.text.source.size()), links(d.text.source.size());
  for (const auto& ex : d.examples) {
    const Hypothesis h = translate(ck.model, ex, c.decode.beam, c.decode.max_len);
    const auto words = h.words();
    lines[ex.line] = join(ck.vocabs.target.decode(words));
    links[ex.line] = format_pharaoh(extract_alignment(h.attention, ex.num_words(), words.size()));
  }
  fs::create_directories(c.out_dir);
  const std::string out = f.output.empty() ? out_path(c, "translations.txt") : f.output;
  write_lines(out, lines);
  write_lines(out + ".align", links);
  std::cerr << "translated " << d.examples.size() << " of " << lines.size() << " lines into " << out << "\n";
  return 0;
}

std::vector<AlignmentSet> forced_alignments(const Checkpoint& ck, const DecodeSet& d) {
  std::vector<AlignmentSet> out(d.text.source.size());
  for (std::size_t start = 0; start < d.examples.size(); start += 32) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(d.examples.size(), start + 32); ++i) idx.push_back(i);
    const auto fds = force_decode(ck.model, d.examples, idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const ExamplePair& ex = d.examples[idx[k]];
      out[ex.line] = extract_alignment(fds[k].attention, ex.num_words(), ex.target.size() - 1);
    }
  }
  return out;
}

int cmd_align(const RunConfig& c, const Flags& f) {
  Checkpoint ck = load_model(c, f.checkpoint);
  RunConfig rc = c;
  rc.model.variant = ck.model.config().variant;
  require_file(c.data.test_source, "data.test_source");
  require_file(c.data.test_target, "data.test_target");
  const DecodeSet d = load_decode_set(rc, ck.vocabs, c.data.test_source, c.data.test_target,
                                      tree_path_for(rc, c.data.test_trees, "data.test_trees"));
  const auto links = forced_alignments(ck, d);
  std::vector<std::string> lines;
  for (const auto& l : links) lines.push_back(format_pharaoh(l));
  fs::create_directories(c.out_dir);
  const std::string out = f.output.empty() ? out_path(c, "forced.align") : f.output;
  write_lines(out, lines);
  std::cerr << "wrote forced-decoding alignments for " << d.examples.size() << " pairs to " << out << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& c, const Flags& f) {
  const std::string hyp_path = f.input.empty() ? out_path(c, "translations.txt") : f.input;
  require_file(hyp_path, "translations");
  require_file(c.data.test_target, "data.test_target");
  const auto hyps = read_tokenized(hyp_path);
  const auto refs = read_tokenized(c.data.test_target);
  if (hyps.size() != refs.size()) {
    throw DataError(hyp_path + " has " + std::to_string(hyps.size()) + " lines, " + c.data.test_target + " has " +
                    std::to_string(refs.size()));
  }
  std::vector<std::vector<Sentence>> ref_sets;
  for (const auto& r : refs) ref_sets.push_back({r});
  DiagnosticReport report;
  report.alignment_source = "forced";
  report.corpus_bleu = bleu(hyps, ref_sets);
  const std::string forced = out_path(c, "forced.align");
  if (!c.data.gold_alignments.empty() && fs::exists(forced)) {
    const auto gold = read_gold_alignments(c.data.gold_alignments);
    std::vector<AlignmentSet> a;
    std::ifstream in(forced);
    std::string line;
    while (std::getline(in, line)) a.push_back(parse_pharaoh(line));
    report.aer = aer(a, gold);
  }
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_analyze(const RunConfig& c, const Flags& f) {
  Checkpoint ck = load_model(c, f.checkpoint);
  RunConfig rc = c;
  rc.model.variant = ck.model.config().variant;
  require_file(c.data.test_source, "data.test_source");
  require_file(c.data.test_target, "data.test_target");
  require_file(c.data.test_trees, "data.test_trees");
  const DecodeSet d = load_decode_set(rc, ck.vocabs, c.data.test_source, c.data.test_target, c.data.test_trees);

  DiagnosticReport report;
  report.alignment_source = c.analysis.alignment_source;
  std::vector<Sentence> hyps, sources;
  std::vector<std::vector<Sentence>> refs;
  std::vector<std::size_t> lengths;
  std::vector<AlignmentSet> translation_links;
  std::vector<std::vector<PhraseSpan>> spans;
  std::vector<std::vector<std::string>> tags;
  for (const auto& ex : d.examples) {
    const Hypothesis h = translate(ck.model, ex, c.decode.beam, c.decode.max_len);
    const auto words = h.words();
    hyps.push_back(ck.vocabs.target.decode(words));
    refs.push_back({d.text.target[ex.line]});
    sources.push_back(d.text.source[ex.line]);
    lengths.push_back(ex.num_words());
    translation_links.push_back(extract_alignment(h.attention, ex.num_words(), words.size()));
    const ParseTree& tree = *d.text.trees[ex.line];
    const std::set<std::string> cats(c.analysis.phrase_categories.begin(), c.analysis.phrase_categories.end());
    spans.push_back(extract_spans(tree, cats));
    tags.push_back(tree_pos_tags(tree));
  }
  if (hyps.empty()) throw DataError("no test pairs could be decoded");
  report.corpus_bleu = bleu(hyps, refs);
  report.bleu_by_length = bleu_by_length(hyps, refs, lengths, c.analysis.buckets);

  const auto forced_all = forced_alignments(ck, d);
  std::vector<AlignmentSet> forced;
  for (const auto& ex : d.examples) forced.push_back(forced_all[ex.line]);
  if (!c.data.gold_alignments.empty()) {
    const auto gold_all = read_gold_alignments(c.data.gold_alignments);
    if (gold_all.size() != d.text.source.size()) {
      throw DataError(c.data.gold_alignments + " has " + std::to_string(gold_all.size()) + " lines, expected " +
                      std::to_string(d.text.source.size()));
    }
    std::vector<GoldAlignment> gold;
    for (const auto& ex : d.examples) gold.push_back(gold_all[ex.line]);
    report.aer = aer(forced, gold);
  }

  const bool use_forced = c.analysis.alignment_source == "forced";
  const auto& links = use_forced ? forced : translation_links;
  std::vector<Sentence> targets;
  for (std::size_t i = 0; i < hyps.size(); ++i) targets.push_back(use_forced ? refs[i][0] : hyps[i]);
  report.continuity = phrase_continuity(spans, links);
  report.rot = rot(tags, links, targets, c.analysis.pos_groups);
  report.rare_words = rare_word_report(sources, tags, ck.vocabs.source, links, targets, c.analysis.pos_groups,
                                       ck.vocabs.target.token(Vocabulary::kUnk));

  fs::create_directories(c.out_dir);
  write_lines(out_path(c, "report.json"), {report.to_json()});
  write_lines(out_path(c, "report.txt"), {report.to_table()});
  std::cout << report.to_table();
  std::cerr << "wrote " << out_path(c, "report.json") << "\n";
  return 0;
}

int cmd_inspect(const RunConfig& c, const std::vector<std::string>& trees_in, const std::string& file) {
  std::vector<std::string> texts = trees_in;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) texts.push_back(line);
    }
  }
  if (texts.empty()) throw UsageError("inspect-tree: give a bracketed tree or --file");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ParseTree t;
    try {
      t = parse_bracketed(texts[i]);
    } catch (const ParseError& e) {
      throw DataError("tree " + std::to_string(i + 1) + ": " + e.what());
    }
    const LinearizedTree lin = linearize(t, c.linearize_options());
    const MixedSequence mix = build_mixed(t, c.linearize_options());
    std::cout << "tree    " << to_bracketed(t) << "\n";
    std::cout << "words   " << join(lin.words) << "\n";
    std::cout << "labels  [" << join(lin.labels) << "]  (" << lin.labels.size() << ")\n";
    std::cout << "word->label";
    for (std::size_t w = 0; w < lin.word_to_label.size(); ++w) std::cout << " " << w << ":" << lin.word_to_label[w];
    std::cout << "\nmixed   [" << join(mix.tokens) << "]  (" << mix.tokens.size() << ")\n";
    std::cout << "word positions";
    for (std::size_t p : mix.word_positions) std::cout << " " << p;
    std::cout << "\nspans  ";
    const std::set<std::string> cats(c.analysis.phrase_categories.begin(), c.analysis.phrase_categories.end());
    for (const auto& s : extract_spans(t, cats)) std::cout << " " << s.category << "[" << s.start << "," << s.end << "]";
    std::cout << "\n";
    if (i + 1 < texts.size()) std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based NMT with source-syntax encoders"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--seed", f.seed, "random seed (default 1)");
  app.add_option("--variant", f.variant, "baseline | parallel | hierarchical | mixed");
  app.add_option("--beam", f.beam, "beam size");
  app.add_option("--epochs", f.epochs, "training epochs");
  app.add_option("--out", f.out, "output directory");

  // Global options are accepted after the subcommand as well.
  app.fallthrough();
  auto* pre = app.add_subcommand("preprocess", "build vocabularies and binarized examples");
  auto* train = app.add_subcommand("train", "train a model");
  auto* tr = app.add_subcommand("translate", "beam-search translation");
  auto* al = app.add_subcommand("align", "forced-decoding word alignments");
  auto* ev = app.add_subcommand("evaluate", "BLEU and AER");
  auto* an = app.add_subcommand("analyze", "full diagnostic report");
  auto* in = app.add_subcommand("inspect-tree", "show linearization and mixed sequence");
  for (auto* s : {tr, al, an}) s->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  tr->add_option("--input", f.input, "source file (default data.test_source)");
  tr->add_option("--trees", f.trees, "tree file for the source");
  for (auto* s : {tr, al}) s->add_option("--output", f.output, "output file");
  ev->add_option("--hyp", f.input, "translations (default OUT/translations.txt)");
  std::vector<std::string> trees;
  std::string tree_file;
  in->add_option("tree", trees, "bracketed tree");
  in->add_option("--file", tree_file, "file with one tree per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const RunConfig c = resolve(f);
    std::cerr << "resolved configuration:\n" << c.to_json() << "\n";
    if (pre->parsed()) return (preprocess(c, true), 0);
    if (train->parsed()) return cmd_train(c);
    if (tr->parsed()) return cmd_translate(c, f);
    if (al->parsed()) return cmd_align(c, f);
    if (ev->parsed()) return cmd_evaluate(c, f);
    if (an->parsed()) return cmd_analyze(c, f);
    if (in->parsed()) return cmd_inspect(c, trees, tree_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
