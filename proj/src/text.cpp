#include "semparse/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "semparse/error.hpp"

namespace semparse {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool always_separate(char c) {
  switch (c) {
    case '?': case '!': case ',': case ';': case '"':
    case '(': case ')': case '[': case ']': case '{': case '}':
      return true;
    default:
      return false;
  }
}

constexpr std::string_view kClitics[] = {"'s", "'re", "'ve", "'ll", "'d", "'m"};

void split_clitics(std::string word, Tokens& out) {
  if (word.size() > 3 && word.ends_with("n't")) {
    out.push_back(word.substr(0, word.size() - 3));
    out.emplace_back("n't");
    return;
  }
  for (std::string_view clitic : kClitics) {
    if (word.size() > clitic.size() && word.ends_with(clitic)) {
      out.push_back(word.substr(0, word.size() - clitic.size()));
      out.emplace_back(clitic);
      return;
    }
  }
  out.push_back(std::move(word));
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) split_clitics(std::move(word), out);
    word.clear();
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = static_cast<char>(
        std::tolower(static_cast<unsigned char>(text[k])));
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (always_separate(c)) {
      flush();
      out.emplace_back(1, c);
    } else if (c == '.' || c == ':') {
      const bool between_digits = k > 0 && k + 1 < text.size() &&
                                  is_digit(text[k - 1]) &&
                                  is_digit(text[k + 1]);
      if (between_digits) {
        word.push_back(c);
      } else {
        flush();
        out.emplace_back(1, c);
      }
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

std::string stem(std::string_view token) {
  std::string w(token);
  if (std::any_of(w.begin(), w.end(), is_digit)) return w;
  if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "xes") || ends_with(w, "ches") || ends_with(w, "shes")) {
    return w.substr(0, w.size() - 2);
  }
  if (w.size() >= 4 && ends_with(w, "s") && !ends_with(w, "ss") &&
      !ends_with(w, "us") && !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  if (w.size() >= 6 && ends_with(w, "ing")) return w.substr(0, w.size() - 3);
  if (w.size() >= 5 && ends_with(w, "ed")) return w.substr(0, w.size() - 2);
  return w;
}

Tokens reverse_input(std::span<const std::string> tokens) {
  return Tokens(tokens.rbegin(), tokens.rend());
}

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary()
    : Vocabulary(from_tokens({std::string(kUnkToken), std::string(kStartToken),
                              std::string(kEndToken),
                              std::string(kNonterminalToken),
                              std::string(kSubtreeStartToken)},
                             1)) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> index_to_token,
                                   int min_count) {
  const std::string_view specials[] = {kUnkToken, kStartToken, kEndToken,
                                       kNonterminalToken, kSubtreeStartToken};
  if (index_to_token.size() < kNumSpecials) {
    throw VocabularyError("vocabulary is missing its special tokens");
  }
  for (int k = 0; k < kNumSpecials; ++k) {
    if (index_to_token[k] != specials[k]) {
      throw VocabularyError("special token " + std::string(specials[k]) +
                            " not at index " + std::to_string(k));
    }
  }
  Vocabulary v{Empty{}};
  v.index_to_token_ = std::move(index_to_token);
  v.min_count_ = min_count;
  for (std::size_t k = 0; k < v.index_to_token_.size(); ++k) {
    auto [it, inserted] =
        v.token_to_index_.emplace(v.index_to_token_[k], static_cast<int>(k));
    if (!inserted) {
      throw VocabularyError("duplicate vocabulary token '" +
                            v.index_to_token_[k] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const Tokens> corpus, int min_count,
                             bool keep_all) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const Tokens& seq : corpus) {
    for (const std::string& tok : seq) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, count] : counts) {
    if (keep_all || count >= min_count) kept.emplace_back(tok, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // std::map order already lexicographic
  });
  Vocabulary base;
  std::vector<std::string> tokens = base.index_to_token_;
  for (auto& [tok, count] : kept) {
    if (!base.find(tok)) tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens), keep_all ? 1 : min_count);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = token_to_index_.find(std::string(token));
  if (it == token_to_index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::index(std::string_view token) const {
  return find(token).value_or(kUnk);
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= index_to_token_.size()) {
    throw IndexError("vocabulary index " + std::to_string(index) +
                     " out of range");
  }
  return index_to_token_[index];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

std::vector<int> Vocabulary::encode_strict(
    std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto id = find(t);
    if (!id) throw VocabularyError("token '" + t + "' not in vocabulary");
    ids.push_back(*id);
  }
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

// --- lexicon ------------------------------------------------------------------

void ArgumentLexicon::add(std::string_view surface, std::string type_name,
                          std::string constant) {
  Tokens toks = tokenize(surface);
  if (toks.empty()) throw DataError("lexicon entry with empty surface form");
  if (type_name.empty() || constant.empty()) {
    throw DataError("lexicon entry for '" + std::string(surface) +
                    "' lacks a type or constant");
  }
  for (const LexiconEntry& e : entries_) {
    if (e.surface == toks && e.type_name == type_name) {
      throw DataError("duplicate lexicon entry '" + std::string(surface) +
                      "' of type " + type_name);
    }
  }
  entries_.push_back({std::move(toks), std::move(type_name), std::move(constant)});
  const std::size_t idx = entries_.size() - 1;
  auto& bucket = by_first_token_[entries_[idx].surface.front()];
  bucket.push_back(idx);
  std::stable_sort(bucket.begin(), bucket.end(), [&](std::size_t a, std::size_t b) {
    return entries_[a].surface.size() > entries_[b].surface.size();
  });
}

ArgumentLexicon ArgumentLexicon::parse(std::string_view text,
                                       const std::string& source) {
  ArgumentLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw DataError(source + ":" + std::to_string(lineno) +
                      ": expected surface<TAB>type<TAB>constant");
    }
    try {
      lex.add(fields[0], fields[1], fields[2]);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return lex;
}

ArgumentLexicon ArgumentLexicon::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read lexicon file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

const LexiconEntry* ArgumentLexicon::longest_match(
    std::span<const std::string> tokens, std::size_t pos) const {
  if (pos >= tokens.size()) return nullptr;
  auto it = by_first_token_.find(tokens[pos]);
  if (it == by_first_token_.end()) return nullptr;
  for (std::size_t idx : it->second) {
    const LexiconEntry& e = entries_[idx];
    if (pos + e.surface.size() > tokens.size()) continue;
    if (std::equal(e.surface.begin(), e.surface.end(), tokens.begin() + pos)) {
      return &e;
    }
  }
  return nullptr;
}

std::set<std::string> ArgumentLexicon::marker_types() const {
  std::set<std::string> types{std::string(kNumberType)};
  for (const auto& e : entries_) types.insert(e.type_name);
  return types;
}

bool is_number_literal(std::string_view t) {
  if (t.empty() || !is_digit(t.front()) || !is_digit(t.back())) return false;
  const auto sep = t.find_first_of(".:");
  if (sep == std::string_view::npos) {
    return std::all_of(t.begin(), t.end(), is_digit);
  }
  const auto head = t.substr(0, sep);
  const auto tail = t.substr(sep + 1);
  if (!std::all_of(head.begin(), head.end(), is_digit) ||
      !std::all_of(tail.begin(), tail.end(), is_digit)) {
    return false;
  }
  if (t[sep] == '.') return true;
  return head.size() <= 2 && tail.size() == 2;
}

// --- argument table -------------------------------------------------------------

void ArgumentTable::add(std::string marker, std::string constant) {
  entries_.emplace_back(std::move(marker), std::move(constant));
}

const std::string* ArgumentTable::constant_of(std::string_view marker) const {
  for (const auto& [m, c] : entries_) {
    if (m == marker) return &c;
  }
  return nullptr;
}

std::vector<std::string> ArgumentTable::markers_for(
    std::string_view constant) const {
  std::vector<std::string> out;
  for (const auto& [m, c] : entries_) {
    if (c == constant) out.push_back(m);
  }
  return out;
}

MaskedUtterance identify_arguments(std::span<const std::string> tokens,
                                   const ArgumentLexicon& lexicon) {
  MaskedUtterance out;
  out.original.assign(tokens.begin(), tokens.end());
  std::map<std::string, int> next_id;
  // (type, constant) -> marker
  std::map<std::pair<std::string, std::string>, std::string> assigned;

  auto marker_for = [&](const std::string& type, const std::string& constant) {
    auto key = std::make_pair(type, constant);
    auto it = assigned.find(key);
    if (it != assigned.end()) return it->second;
    std::string marker = type + std::to_string(next_id[type]++);
    assigned.emplace(key, marker);
    out.table.add(marker, constant);
    return marker;
  };

  std::size_t pos = 0;
  while (pos < tokens.size()) {
    if (const LexiconEntry* e = lexicon.longest_match(tokens, pos)) {
      out.tokens.push_back(marker_for(e->type_name, e->constant));
      pos += e->surface.size();
    } else if (is_number_literal(tokens[pos])) {
      out.tokens.push_back(marker_for(std::string(kNumberType), tokens[pos]));
      ++pos;
    } else {
      out.tokens.push_back(tokens[pos]);
      ++pos;
    }
  }
  return out;
}

Tokens mask_logical_form(std::span<const std::string> lf_tokens,
                         const ArgumentTable& table) {
  Tokens out;
  out.reserve(lf_tokens.size());
  for (const std::string& tok : lf_tokens) {
    std::vector<std::string> markers = table.markers_for(tok);
    if (markers.empty()) {
      out.push_back(tok);
    } else if (markers.size() == 1) {
      out.push_back(markers.front());
    } else {
      std::string list;
      for (const auto& m : markers) list += (list.empty() ? "" : ", ") + m;
      throw AmbiguityError("logical constant '" + tok +
                           "' matches several markers: " + list);
    }
  }
  return out;
}

bool is_marker(std::string_view token, const std::set<std::string>& types) {
  std::size_t split = token.size();
  while (split > 0 && is_digit(token[split - 1])) --split;
  if (split == 0 || split == token.size()) return false;
  return types.count(std::string(token.substr(0, split))) > 0;
}

UnmaskResult unmask(std::span<const std::string> prediction,
                    const ArgumentTable& table,
                    const std::set<std::string>& marker_types) {
  UnmaskResult out;
  out.tokens.reserve(prediction.size());
  for (const std::string& tok : prediction) {
    if (const std::string* constant = table.constant_of(tok)) {
      out.tokens.push_back(*constant);
    } else {
      if (is_marker(tok, marker_types)) out.unresolved.push_back(tok);
      out.tokens.push_back(tok);
    }
  }
  return out;
}

}  // namespace semparse
