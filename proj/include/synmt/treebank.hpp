#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace synmt {

/// Constituency tree node.
///
/// A terminal carries `word` and has an empty label and no children. A
/// preterminal (POS tag) has exactly one terminal child. Every other node
/// has one or more non-terminal children.
struct ParseTree {
  std::string label;
  std::optional<std::string> word;
  std::vector<ParseTree> children;

  bool is_terminal() const { return word.has_value(); }
  bool is_preterminal() const { return children.size() == 1 && children[0].is_terminal(); }
};

/// Depth-first structural label sequence of a tree.
struct LinearizedTree {
  std::vector<std::string> labels;
  /// word index -> index in `labels` of the word's POS tag.
  std::vector<std::size_t> word_to_label;
  std::vector<std::string> words;
};

/// Labels and words interleaved in depth-first order, each word right
/// after its POS tag.
struct MixedSequence {
  std::vector<std::string> tokens;
  std::vector<std::size_t> word_positions;
};

struct PhraseSpan {
  std::string category;
  std::size_t start = 0;  // inclusive word index
  std::size_t end = 0;    // inclusive word index

  bool operator==(const PhraseSpan&) const = default;
};

struct LinearizeOptions {
  /// Emit ")X" after the children of every phrasal node X.
  bool closing_brackets = false;
};

/// Parses one PTB-style bracketed tree. An outer wrapper with an empty,
/// ROOT or TOP label and a single child is stripped; functional suffixes
/// ("NP-SBJ-1", "NP=2") are removed. Throws ParseError with the character
/// offset of the problem.
ParseTree parse_bracketed(std::string_view line);

/// Inverse of parse_bracketed on normalized input: single spaces, no wrapper.
std::string to_bracketed(const ParseTree& tree);

/// Label with functional tags removed ("NP-SBJ" -> "NP"; "-NONE-" kept).
std::string strip_function_tag(std::string_view label);

LinearizedTree linearize(const ParseTree& tree, const LinearizeOptions& opts = {});
MixedSequence build_mixed(const ParseTree& tree, const LinearizeOptions& opts = {});
std::vector<PhraseSpan> extract_spans(const ParseTree& tree, const std::set<std::string>& categories);

std::vector<std::string> tree_words(const ParseTree& tree);
/// POS tag of every word, in sentence order.
std::vector<std::string> tree_pos_tags(const ParseTree& tree);
std::size_t count_internal_nodes(const ParseTree& tree);

/// Reads one tree per line. Lines that fail to parse yield std::nullopt and a
/// warning on stderr naming the line number.
std::vector<std::optional<ParseTree>> read_treebank(const std::string& path);

}  // namespace synmt
