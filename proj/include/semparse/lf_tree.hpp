#pragma once

// Logical forms as ordered trees: bracket parsing and printing, the
// nonterminal linearization used by the tree decoder, and production
// extraction for F1 scoring.

#include <compare>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semparse/text.hpp"

namespace semparse {

/// A leaf token, or a bracketed subtree with at least one child.
class LfNode {
 public:
  static LfNode leaf(std::string token);
  static LfNode subtree(std::vector<LfNode> children);

  bool is_leaf() const { return !is_subtree_; }
  const std::string& token() const { return token_; }
  const std::vector<LfNode>& children() const { return children_; }
  std::vector<LfNode>& mutable_children() { return children_; }

  bool operator==(const LfNode&) const = default;

 private:
  bool is_subtree_ = false;
  std::string token_;
  std::vector<LfNode> children_;
};

struct LfTree {
  std::vector<LfNode> root_children;

  bool operator==(const LfTree&) const = default;
  /// Bracket depth plus one; a tree of leaves has depth 1.
  int depth() const;
  int num_subtrees() const;
  std::size_t num_tokens() const;
};

/// Splits on whitespace with ( and ) as separate symbols. A quoted constant
/// ('...' or "...") is one token even if it contains spaces or brackets.
Tokens lex_logical_form(std::string_view s);

/// Throws ParseError on unbalanced brackets, empty input, or "()".
LfTree parse_lf(std::string_view s);
LfTree parse_lf_tokens(std::span<const std::string> tokens);

/// Tokens single-space-joined with no space after "(" or before ")".
std::string serialize_lf(const LfTree& t);
/// Flat token list including "(" and ")" (the sequence decoder's target).
Tokens lf_tokens(const LfTree& t);
std::string normalize_lf(std::string_view s);

// --- Prolog-style forms ---------------------------------------------------------

/// Rewrites `f(a,b)` as `f (a b)` and a bare group `(a,b)` as `(, a b)`, so
/// the result is an ordinary bracket form with the commas dropped. Whitespace
/// outside quoted atoms is not preserved.
LfTree parse_prolog(std::string_view s);
/// Inverse of parse_prolog.
std::string serialize_prolog(const LfTree& t);

enum class LfFormat { kBracket, kProlog };

LfFormat lf_format_from_string(std::string_view name);
std::string_view to_string(LfFormat format);

LfTree parse_lf(std::string_view s, LfFormat format);
std::string serialize_lf(const LfTree& t, LfFormat format);

// --- level sequences ----------------------------------------------------------

/// One node's children with each child subtree replaced by "<n>", followed by
/// "</s>". parent_position indexes the "<n>" in the parent's tokens.
struct LevelSequence {
  int node_id = 0;
  int parent_id = -1;
  int parent_position = -1;
  Tokens tokens;

  bool operator==(const LevelSequence&) const = default;
};

/// Root first, then breadth-first order; node ids equal sequence indices.
std::vector<LevelSequence> to_level_sequences(const LfTree& t);
/// Throws StructureError for a "<n>" without exactly one child sequence, an
/// orphan sequence, or a cyclic link.
LfTree from_level_sequences(std::span<const LevelSequence> seqs);

// --- productions -------------------------------------------------------------

inline constexpr std::string_view kRootLabel = "ROOT";

/// A node is named by its first token: a leaf by its text, a subtree by "("
/// followed by its first child's name, so leaf C and subtree (C ...) differ.
struct Production {
  std::string parent;
  std::vector<std::string> children;

  auto operator<=>(const Production&) const = default;
  std::string to_string() const;
};

std::set<Production> extract_productions(const LfTree& t);

}  // namespace semparse
