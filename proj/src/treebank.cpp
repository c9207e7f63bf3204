#include "synmt/treebank.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <iostream>

#include "synmt/error.hpp"

namespace synmt {

namespace {

class BracketParser {
 public:
  explicit BracketParser(std::string_view text) : text_(text) {}

  ParseTree parse() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError("empty tree", pos_);
    ParseTree tree = node();
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing characters after tree", pos_);
    return tree;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string token() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')') {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect(char c) {
    if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "' but input ended", pos_);
    if (text_[pos_] != c) throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  ParseTree node() {
    const std::size_t open = pos_;
    expect('(');
    skip_space();
    ParseTree t;
    if (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')') t.label = token();
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unbalanced '('", open);
    if (text_[pos_] == ')') throw ParseError("node without children", pos_);
    if (text_[pos_] != '(') {
      // Preterminal: exactly one word, then ')'.
      const std::size_t wpos = pos_;
      ParseTree leaf;
      leaf.word = token();
      skip_space();
      if (pos_ < text_.size() && text_[pos_] != ')') throw ParseError("preterminal with more than one child", pos_);
      if (t.label.empty()) throw ParseError("word without a POS tag", wpos);
      expect(')');
      t.label = strip_function_tag(t.label);
      t.children.push_back(std::move(leaf));
      return t;
    }
    while (pos_ < text_.size() && text_[pos_] == '(') {
      t.children.push_back(node());
      skip_space();
      if (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')') {
        throw ParseError("bare word among phrase children", pos_);
      }
    }
    if (pos_ >= text_.size()) throw ParseError("unbalanced '('", open);
    expect(')');
    t.label = strip_function_tag(t.label);
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void print(const ParseTree& t, std::string& out) {
  if (t.is_terminal()) {
    out += *t.word;
    return;
  }
  out += '(';
  out += t.label;
  for (const ParseTree& c : t.children) {
    out += ' ';
    print(c, out);
  }
  out += ')';
}

bool is_wrapper(const ParseTree& t) {
  return (t.label.empty() || t.label == "ROOT" || t.label == "TOP") && t.children.size() == 1 &&
         !t.children[0].is_terminal() && !t.is_preterminal();
}

}  // namespace

std::string strip_function_tag(std::string_view label) {
  if (label.empty() || label.front() == '-') return std::string(label);
  const std::size_t cut = label.find_first_of("-=");
  return std::string(label.substr(0, cut));
}

ParseTree parse_bracketed(std::string_view line) {
  ParseTree t = BracketParser(line).parse();
  while (is_wrapper(t)) {
    ParseTree inner = std::move(t.children[0]);
    t = std::move(inner);
  }
  if (t.label.empty()) throw ParseError("root node has no label", 0);
  return t;
}

std::string to_bracketed(const ParseTree& tree) {
  std::string out;
  print(tree, out);
  return out;
}

LinearizedTree linearize(const ParseTree& tree, const LinearizeOptions& opts) {
  LinearizedTree lin;
  std::function<void(const ParseTree&)> walk = [&](const ParseTree& t) {
    if (t.is_terminal()) return;
    if (t.is_preterminal()) {
      lin.word_to_label.push_back(lin.labels.size());
      lin.labels.push_back(t.label);
      lin.words.push_back(*t.children[0].word);
      return;
    }
    lin.labels.push_back(t.label);
    for (const ParseTree& c : t.children) walk(c);
    if (opts.closing_brackets) lin.labels.push_back(")" + t.label);
  };
  walk(tree);
  return lin;
}

MixedSequence build_mixed(const ParseTree& tree, const LinearizeOptions& opts) {
  MixedSequence mix;
  std::function<void(const ParseTree&)> walk = [&](const ParseTree& t) {
    if (t.is_terminal()) {
      mix.word_positions.push_back(mix.tokens.size());
      mix.tokens.push_back(*t.word);
      return;
    }
    mix.tokens.push_back(t.label);
    for (const ParseTree& c : t.children) walk(c);
    if (opts.closing_brackets && !t.is_preterminal()) mix.tokens.push_back(")" + t.label);
  };
  walk(tree);
  return mix;
}

std::vector<PhraseSpan> extract_spans(const ParseTree& tree, const std::set<std::string>& categories) {
  std::vector<PhraseSpan> spans;
  std::size_t next_word = 0;
  std::function<void(const ParseTree&)> walk = [&](const ParseTree& t) {
    if (t.is_terminal()) {
      ++next_word;
      return;
    }
    const std::size_t start = next_word;
    const std::size_t slot = spans.size();
    const bool wanted = categories.count(t.label) > 0;
    if (wanted) spans.push_back({t.label, start, start});
    for (const ParseTree& c : t.children) walk(c);
    if (wanted) spans[slot].end = next_word - 1;
  };
  walk(tree);
  return spans;
}

std::vector<std::string> tree_words(const ParseTree& tree) { return linearize(tree).words; }

std::vector<std::string> tree_pos_tags(const ParseTree& tree) {
  const LinearizedTree lin = linearize(tree);
  std::vector<std::string> tags;
  tags.reserve(lin.words.size());
  for (std::size_t idx : lin.word_to_label) tags.push_back(lin.labels[idx]);
  return tags;
}

std::size_t count_internal_nodes(const ParseTree& tree) {
  if (tree.is_terminal()) return 0;
  std::size_t n = 1;
  for (const ParseTree& c : tree.children) n += count_internal_nodes(c);
  return n;
}

std::vector<std::optional<ParseTree>> read_treebank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tree file " + path);
  std::vector<std::optional<ParseTree>> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      trees.emplace_back(parse_bracketed(line));
    } catch (const ParseError& e) {
      std::cerr << "warning: " << path << ":" << lineno << ": skipping unparsable tree (" << e.what() << ")\n";
      trees.emplace_back(std::nullopt);
    }
  }
  return trees;
}

}  // namespace synmt
