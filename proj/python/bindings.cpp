#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <sstream>

#include "synmt/config.hpp"
#include "synmt/error.hpp"
#include "synmt/evaluation.hpp"
#include "synmt/inference.hpp"
#include "synmt/toy.hpp"
#include "synmt/training.hpp"

namespace py = pybind11;
using namespace synmt;

namespace {

Sentence split_words(const std::string& s) {
  std::istringstream in(s);
  Sentence out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const Sentence& s) {
  std::string out;
  for (const auto& w : s) out += (out.empty() ? "" : " ") + w;
  return out;
}

py::list links_to_py(const AlignmentSet& a) {
  py::list out;
  for (const auto& [i, j] : a) out.append(py::make_tuple(i, j));
  return out;
}

// Loaded checkpoint plus single-sentence decoding.
class Translator {
 public:
  explicit Translator(const std::string& path) : ck_(load_checkpoint(path)) {}

  Variant variant() const { return ck_.model.config().variant; }

  py::dict translate(const std::string& source, const std::string& tree, std::size_t beam, std::size_t max_len) const {
    const ExamplePair ex = example(source, "", tree);
    Hypothesis h;
    {
      py::gil_scoped_release release;
      h = synmt::translate(ck_.model, ex, beam, max_len);
    }
    const auto words = h.words();
    py::dict d;
    d["translation"] = join(ck_.vocabs.target.decode(words));
    d["log_prob"] = h.log_prob;
    d["score"] = h.score();
    d["alignment"] = links_to_py(extract_alignment(h.attention, ex.num_words(), words.size()));
    d["attention"] = h.attention;
    return d;
  }

  py::dict force_align(const std::string& source, const std::string& target, const std::string& tree) const {
    const ExamplePair ex = example(source, target, tree);
    const ForcedDecode fd = force_decode(ck_.model, ex);
    py::dict d;
    d["log_prob"] = fd.log_prob;
    d["alignment"] = links_to_py(extract_alignment(fd.attention, ex.num_words(), ex.target.size() - 1));
    d["attention"] = fd.attention;
    return d;
  }

  std::size_t num_parameters() const { return count_params(ck_.model.params()); }

 private:
  ExamplePair example(const std::string& source, const std::string& target, const std::string& tree) const {
    ParallelText text;
    text.source = {split_words(source)};
    text.target = {target.empty() ? Sentence{"."} : split_words(target)};
    if (!tree.empty()) text.trees = {parse_bracketed(tree)};
    if (variant() != Variant::Baseline && tree.empty()) throw UsageError("this model needs a parse tree");
    LengthLimits unlimited{SIZE_MAX, SIZE_MAX, SIZE_MAX, SIZE_MAX};
    auto exs = make_examples(text, ck_.vocabs, variant(), unlimited);
    if (exs.empty()) throw DataError("the sentence could not be numericalized (empty, or tree and words disagree)");
    return exs.front();
  }

  Checkpoint ck_;
};

// Trains from a JSON run configuration and writes
// out_dir/model.last.ckpt (vocabularies included). Returns one dict per epoch.
py::list train(const std::string& config_json, std::optional<std::size_t> epochs) {
  RunConfig c = RunConfig::from_json(config_json);
  if (epochs) c.training.epochs = *epochs;
  const ParallelText text = read_parallel(c.data.train_source, c.data.train_target, c.data.train_trees);
  const Vocabs vocabs = build_vocabs(text, c.model.variant, c.data.source_vocab_limit, c.data.target_vocab_limit,
                                     c.linearize_options());
  const auto examples = make_examples(text, vocabs, c.model.variant, c.limits, c.linearize_options());
  if (examples.empty()) throw DataError("no usable training pairs");
  ModelConfig mc = c.model;
  mc.source_vocab = vocabs.source.size();
  mc.target_vocab = vocabs.target.size();
  mc.label_vocab = std::max(vocabs.label.size(), Vocabulary::kNumSpecial);
  Model model = Model::init(mc, c.seed);
  Trainer trainer(model, examples, c.training, c.seed);
  std::vector<TrainReport> reports;
  {
    py::gil_scoped_release release;
    reports = trainer.train(c.training.epochs);
    std::filesystem::create_directories(c.out_dir);
    save_checkpoint((std::filesystem::path(c.out_dir) / "model.last.ckpt").string(), model, vocabs, c.to_json(),
                    &trainer.state(), &trainer.optimizer());
  }
  py::list out;
  for (const auto& r : reports) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["updates"] = r.updates;
    d["loss_per_token"] = r.loss_per_token;
    d["seconds"] = r.seconds;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention NMT with syntax-aware source encoders";

  // pybind11 tries the most recently registered translator first, so the
  // base class goes first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<UsageError>(m, "UsageError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<NumericError>(m, "NumericError", base);

  m.def(
      "linearize",
      [](const std::string& tree, bool closing_brackets) {
        const ParseTree t = parse_bracketed(tree);
        const LinearizeOptions opt{closing_brackets};
        const LinearizedTree lin = synmt::linearize(t, opt);
        const MixedSequence mix = build_mixed(t, opt);
        py::dict d;
        d["tree"] = to_bracketed(t);
        d["words"] = lin.words;
        d["labels"] = lin.labels;
        d["word_to_label"] = lin.word_to_label;
        d["mixed"] = mix.tokens;
        d["mixed_word_positions"] = mix.word_positions;
        return d;
      },
      py::arg("tree"), py::arg("closing_brackets") = false,
      "Structural label sequence, word-to-label map and mixed sequence of a bracketed tree.");

  m.def(
      "bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::vector<std::string>>& refs) {
        std::vector<Sentence> h;
        std::vector<std::vector<Sentence>> r;
        for (const auto& s : hyps) h.push_back(split_words(s));
        for (const auto& rs : refs) {
          r.emplace_back();
          for (const auto& s : rs) r.back().push_back(split_words(s));
        }
        return synmt::bleu(h, r);
      },
      py::arg("hypotheses"), py::arg("references"), "Corpus BLEU-4 on whitespace-tokenized strings, 0-1 scale.");

  m.def(
      "aer",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& gold) {
        std::vector<AlignmentSet> h;
        std::vector<GoldAlignment> g;
        for (const auto& s : hyps) h.push_back(parse_pharaoh(s));
        for (const auto& s : gold) g.push_back(parse_gold_alignment(s));
        return synmt::aer(h, g);
      },
      py::arg("hypotheses"), py::arg("gold"),
      "Alignment error rate; hypotheses as 'i-j' links, gold with '-' sure and '?' possible links.");

  m.def(
      "over_translation", [](const std::string& tokens) { return synmt::over_translation(split_words(tokens)); },
      py::arg("aligned_tokens"));

  m.def(
      "count_parameters",
      [](const std::string& model_json) { return count_params(Model(model_config_from_json(model_json)).params()); },
      py::arg("model_config_json") = std::string("{}"), "Parameter count for a model configuration (JSON).");

  m.def(
      "make_toy_corpus",
      [](const std::string& kind, std::size_t n, std::uint64_t seed, const std::string& dir, const std::string& stem) {
        ToyCorpus c;
        if (kind == "grammar") {
          c = make_grammar_corpus(n, seed);
        } else if (kind == "attachment") {
          c = make_attachment_corpus(n, seed);
        } else if (kind == "copy") {
          c = make_copy_corpus(n, 20, 2, 8, seed);
        } else {
          throw UsageError("kind must be grammar, attachment or copy");
        }
        std::filesystem::create_directories(dir);
        write_toy_corpus(c, dir, stem);
      },
      py::arg("kind"), py::arg("n"), py::arg("seed"), py::arg("directory"), py::arg("stem") = "train");

  m.def("train", &train, py::arg("config_json"), py::arg("epochs") = py::none());

  py::class_<Translator>(m, "Translator")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def_property_readonly("variant", [](const Translator& t) { return to_string(t.variant()); })
      .def_property_readonly("num_parameters", &Translator::num_parameters)
      .def("translate", &Translator::translate, py::arg("source"), py::arg("tree") = "", py::arg("beam") = 10,
           py::arg("max_len") = 0)
      .def("force_align", &Translator::force_align, py::arg("source"), py::arg("target"), py::arg("tree") = "");
}
