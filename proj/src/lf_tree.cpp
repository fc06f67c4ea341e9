#include "semparse/lf_tree.hpp"

#include <cctype>
#include <deque>
#include <functional>
#include <map>

#include "semparse/error.hpp"

namespace semparse {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Consumes a quoted token starting at s[pos]; returns the index past the
// closing quote.
std::size_t scan_quoted(std::string_view s, std::size_t pos) {
  const char quote = s[pos];
  const std::size_t close = s.find(quote, pos + 1);
  if (close == std::string_view::npos) {
    throw ParseError("unterminated quoted constant", pos);
  }
  return close + 1;
}

struct PositionedToken {
  std::string text;
  std::size_t pos;
};

std::vector<PositionedToken> lex_positioned(std::string_view s) {
  std::vector<PositionedToken> out;
  std::size_t k = 0;
  while (k < s.size()) {
    const char c = s[k];
    if (is_space(c)) {
      ++k;
    } else if (c == '(' || c == ')') {
      out.push_back({std::string(1, c), k});
      ++k;
    } else {
      const std::size_t start = k;
      while (k < s.size() && !is_space(s[k]) && s[k] != '(' && s[k] != ')') {
        if (s[k] == '\'' || s[k] == '"') {
          k = scan_quoted(s, k);
        } else {
          ++k;
        }
      }
      out.push_back({std::string(s.substr(start, k - start)), start});
    }
  }
  return out;
}

void append_tokens(const std::vector<LfNode>& nodes, Tokens& out) {
  for (const LfNode& n : nodes) {
    if (n.is_leaf()) {
      out.push_back(n.token());
    } else {
      out.emplace_back("(");
      append_tokens(n.children(), out);
      out.emplace_back(")");
    }
  }
}

int depth_of(const std::vector<LfNode>& nodes) {
  int d = 1;
  for (const LfNode& n : nodes) {
    if (!n.is_leaf()) d = std::max(d, 1 + depth_of(n.children()));
  }
  return d;
}

// --- Prolog reader ------------------------------------------------------------

class PrologReader {
 public:
  explicit PrologReader(std::string_view s) : s_(s) {}

  std::vector<LfNode> read_all() {
    skip_space();
    if (pos_ >= s_.size()) throw ParseError("empty logical form", 0);
    std::vector<LfNode> out = read_terms();
    skip_space();
    if (pos_ < s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
    return out;
  }

 private:
  void skip_space() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }

  // term (',' term)*, flattened into sibling nodes.
  std::vector<LfNode> read_terms() {
    std::vector<LfNode> out;
    for (;;) {
      read_term(out);
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      return out;
    }
  }

  std::vector<LfNode> read_parenthesized() {
    const std::size_t open = pos_;
    ++pos_;  // '('
    std::vector<LfNode> inner = read_terms();
    skip_space();
    if (pos_ >= s_.size() || s_[pos_] != ')') {
      throw ParseError("unbalanced '(' in Prolog form", open);
    }
    ++pos_;
    return inner;
  }

  void read_term(std::vector<LfNode>& out) {
    skip_space();
    if (pos_ >= s_.size()) throw ParseError("missing term", pos_);
    const char c = s_[pos_];
    if (c == '(') {
      std::vector<LfNode> group{LfNode::leaf(",")};
      for (LfNode& n : read_parenthesized()) group.push_back(std::move(n));
      out.push_back(LfNode::subtree(std::move(group)));
      return;
    }
    if (c == ')' || c == ',') {
      throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !is_space(s_[pos_]) && s_[pos_] != '(' &&
           s_[pos_] != ')' && s_[pos_] != ',') {
      if (s_[pos_] == '\'' || s_[pos_] == '"') {
        pos_ = scan_quoted(s_, pos_);
      } else {
        ++pos_;
      }
    }
    out.push_back(LfNode::leaf(std::string(s_.substr(start, pos_ - start))));
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      out.push_back(LfNode::subtree(read_parenthesized()));
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

bool is_group(const LfNode& n) {
  return !n.is_leaf() && n.children().front().is_leaf() &&
         n.children().front().token() == ",";
}

std::string prolog_terms(std::span<const LfNode> nodes);

std::string prolog_args(const LfNode& subtree, std::size_t skip) {
  auto kids = std::span<const LfNode>(subtree.children()).subspan(skip);
  return "(" + prolog_terms(kids) + ")";
}

std::string prolog_terms(std::span<const LfNode> nodes) {
  std::string out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!out.empty()) out += ",";
    const LfNode& n = nodes[i];
    if (n.is_leaf()) {
      out += n.token();
      if (i + 1 < nodes.size() && !nodes[i + 1].is_leaf() &&
          !is_group(nodes[i + 1])) {
        out += prolog_args(nodes[i + 1], 0);
        ++i;
      }
    } else {
      out += prolog_args(n, is_group(n) ? 1 : 0);
    }
  }
  return out;
}

std::string node_label(const LfNode& n) {
  if (n.is_leaf()) return n.token();
  return "(" + node_label(n.children().front());
}

void collect_productions(const std::string& label,
                         const std::vector<LfNode>& children,
                         std::set<Production>& out) {
  Production p;
  p.parent = label;
  for (const LfNode& c : children) p.children.push_back(node_label(c));
  out.insert(std::move(p));
  for (const LfNode& c : children) {
    if (!c.is_leaf()) collect_productions(node_label(c), c.children(), out);
  }
}

}  // namespace

LfNode LfNode::leaf(std::string token) {
  LfNode n;
  n.token_ = std::move(token);
  return n;
}

LfNode LfNode::subtree(std::vector<LfNode> children) {
  if (children.empty()) throw StructureError("subtree without children");
  LfNode n;
  n.is_subtree_ = true;
  n.children_ = std::move(children);
  return n;
}

int LfTree::depth() const { return depth_of(root_children); }

int LfTree::num_subtrees() const {
  int count = 0;
  std::function<void(const std::vector<LfNode>&)> walk =
      [&](const std::vector<LfNode>& nodes) {
        for (const LfNode& n : nodes) {
          if (!n.is_leaf()) {
            ++count;
            walk(n.children());
          }
        }
      };
  walk(root_children);
  return count;
}

std::size_t LfTree::num_tokens() const {
  std::size_t count = 0;
  std::function<void(const std::vector<LfNode>&)> walk =
      [&](const std::vector<LfNode>& nodes) {
        for (const LfNode& n : nodes) {
          if (n.is_leaf()) {
            ++count;
          } else {
            walk(n.children());
          }
        }
      };
  walk(root_children);
  return count;
}

Tokens lex_logical_form(std::string_view s) {
  Tokens out;
  for (auto& t : lex_positioned(s)) out.push_back(std::move(t.text));
  return out;
}

LfTree parse_lf(std::string_view s) {
  auto toks = lex_positioned(s);
  if (toks.empty()) throw ParseError("empty logical form", 0);
  std::vector<std::vector<LfNode>> stack(1);
  std::vector<std::size_t> open_positions;
  for (auto& t : toks) {
    if (t.text == "(") {
      stack.emplace_back();
      open_positions.push_back(t.pos);
    } else if (t.text == ")") {
      if (stack.size() == 1) throw ParseError("unbalanced ')'", t.pos);
      if (stack.back().empty()) throw ParseError("empty brackets", t.pos);
      LfNode node = LfNode::subtree(std::move(stack.back()));
      stack.pop_back();
      open_positions.pop_back();
      stack.back().push_back(std::move(node));
    } else {
      stack.back().push_back(LfNode::leaf(std::move(t.text)));
    }
  }
  if (stack.size() != 1) throw ParseError("unbalanced '('", open_positions.back());
  return LfTree{std::move(stack.front())};
}

LfTree parse_lf_tokens(std::span<const std::string> tokens) {
  std::string joined;
  for (const auto& t : tokens) {
    if (!joined.empty()) joined += ' ';
    joined += t;
  }
  return parse_lf(joined);
}

Tokens lf_tokens(const LfTree& t) {
  Tokens out;
  append_tokens(t.root_children, out);
  return out;
}

std::string serialize_lf(const LfTree& t) {
  std::string out;
  bool after_open = true;
  for (const std::string& tok : lf_tokens(t)) {
    if (!after_open && tok != ")") out += ' ';
    out += tok;
    after_open = tok == "(";
  }
  return out;
}

std::string normalize_lf(std::string_view s) { return serialize_lf(parse_lf(s)); }

LfTree parse_prolog(std::string_view s) {
  return LfTree{PrologReader(s).read_all()};
}

std::string serialize_prolog(const LfTree& t) {
  return prolog_terms(t.root_children);
}

LfFormat lf_format_from_string(std::string_view name) {
  if (name == "bracket" || name == "lambda") return LfFormat::kBracket;
  if (name == "prolog") return LfFormat::kProlog;
  throw ConfigError("unknown logical form format '" + std::string(name) +
                    "' (expected bracket or prolog)");
}

std::string_view to_string(LfFormat format) {
  return format == LfFormat::kProlog ? "prolog" : "bracket";
}

LfTree parse_lf(std::string_view s, LfFormat format) {
  return format == LfFormat::kProlog ? parse_prolog(s) : parse_lf(s);
}

std::string serialize_lf(const LfTree& t, LfFormat format) {
  return format == LfFormat::kProlog ? serialize_prolog(t) : serialize_lf(t);
}

std::vector<LevelSequence> to_level_sequences(const LfTree& t) {
  struct Pending {
    const std::vector<LfNode>* children;
    int parent_id;
    int parent_position;
  };
  std::vector<LevelSequence> out;
  std::deque<Pending> queue{{&t.root_children, -1, -1}};
  while (!queue.empty()) {
    Pending job = queue.front();
    queue.pop_front();
    LevelSequence seq;
    seq.node_id = static_cast<int>(out.size());
    seq.parent_id = job.parent_id;
    seq.parent_position = job.parent_position;
    for (const LfNode& child : *job.children) {
      if (child.is_leaf()) {
        seq.tokens.push_back(child.token());
      } else {
        queue.push_back({&child.children(), seq.node_id,
                         static_cast<int>(seq.tokens.size())});
        seq.tokens.emplace_back(Vocabulary::kNonterminalToken);
      }
    }
    seq.tokens.emplace_back(Vocabulary::kEndToken);
    out.push_back(std::move(seq));
  }
  return out;
}

LfTree from_level_sequences(std::span<const LevelSequence> seqs) {
  if (seqs.empty()) throw StructureError("no level sequences");
  std::map<int, std::size_t> by_id;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    if (!by_id.emplace(seqs[k].node_id, k).second) {
      throw StructureError("duplicate node id " + std::to_string(seqs[k].node_id));
    }
  }
  std::map<std::pair<int, int>, std::size_t> child_of;
  std::size_t root = seqs.size();
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const LevelSequence& s = seqs[k];
    if (s.tokens.empty() || s.tokens.back() != Vocabulary::kEndToken) {
      throw StructureError("sequence " + std::to_string(s.node_id) +
                           " does not end with </s>");
    }
    if (s.parent_id < 0) {
      if (root != seqs.size()) throw StructureError("more than one root sequence");
      root = k;
      continue;
    }
    auto parent = by_id.find(s.parent_id);
    if (parent == by_id.end()) {
      throw StructureError("orphan sequence " + std::to_string(s.node_id) +
                           ": parent " + std::to_string(s.parent_id) +
                           " does not exist");
    }
    const Tokens& ptoks = seqs[parent->second].tokens;
    if (s.parent_position < 0 ||
        static_cast<std::size_t>(s.parent_position) >= ptoks.size() ||
        ptoks[s.parent_position] != Vocabulary::kNonterminalToken) {
      throw StructureError("orphan sequence " + std::to_string(s.node_id) +
                           ": parent slot is not <n>");
    }
    if (!child_of.emplace(std::make_pair(s.parent_id, s.parent_position), k).second) {
      throw StructureError("two sequences claim the same <n> of node " +
                           std::to_string(s.parent_id));
    }
  }
  if (root == seqs.size()) throw StructureError("no root sequence");

  std::size_t visited = 0;
  std::function<std::vector<LfNode>(std::size_t, std::size_t)> build =
      [&](std::size_t k, std::size_t depth) {
        if (depth > seqs.size()) throw StructureError("cyclic sequence links");
        ++visited;
        const LevelSequence& s = seqs[k];
        std::vector<LfNode> nodes;
        for (std::size_t p = 0; p + 1 < s.tokens.size(); ++p) {
          const std::string& tok = s.tokens[p];
          if (tok == Vocabulary::kNonterminalToken) {
            auto it = child_of.find({s.node_id, static_cast<int>(p)});
            if (it == child_of.end()) {
              throw StructureError("dangling <n> at position " +
                                   std::to_string(p) + " of node " +
                                   std::to_string(s.node_id));
            }
            nodes.push_back(LfNode::subtree(build(it->second, depth + 1)));
          } else if (tok == Vocabulary::kEndToken) {
            throw StructureError("</s> before the end of node " +
                                 std::to_string(s.node_id));
          } else {
            nodes.push_back(LfNode::leaf(tok));
          }
        }
        if (nodes.empty() && s.parent_id >= 0) {
          throw StructureError("empty subtree sequence " + std::to_string(s.node_id));
        }
        return nodes;
      };
  LfTree tree{build(root, 0)};
  if (tree.root_children.empty()) throw StructureError("empty root sequence");
  if (visited != seqs.size()) {
    throw StructureError("orphan sequence not reachable from the root");
  }
  return tree;
}

std::string Production::to_string() const {
  std::string out = parent + " ->";
  for (const auto& c : children) out += " " + c;
  return out;
}

std::set<Production> extract_productions(const LfTree& t) {
  std::set<Production> out;
  collect_productions(std::string(kRootLabel), t.root_children, out);
  return out;
}

}  // namespace semparse
