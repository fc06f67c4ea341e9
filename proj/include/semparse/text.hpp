#pragma once

// Utterance-side preprocessing: tokenization, vocabularies, argument
// identification (entity/number masking) and its inverse.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace semparse {

using Tokens = std::vector<std::string>;

// --- tokenization -----------------------------------------------------------

/// Lowercases, splits on whitespace, and separates punctuation:
///   - ? ! , ; " ( ) [ ] { } always stand alone;
///   - . and : stand alone unless both neighbours are digits (3.5, 4:30);
///   - the clitics 's 're 've 'll 'd 'm split off as their own token, and
///     n't splits off as "n't" (don't -> do n't).
/// Everything else, including + # - / _ $ and digits, stays inside the word.
Tokens tokenize(std::string_view text);

/// Rule-based suffix stripper, applied per token when stemming is enabled:
///   ies -> y (len > 4); sses -> ss; xes/ches/shes -> drop "es";
///   s -> "" unless the word ends in ss, us, is or is shorter than 4;
///   ing -> "" when at least 3 characters remain; ed -> "" likewise.
/// Tokens containing digits are left alone.
std::string stem(std::string_view token);

Tokens reverse_input(std::span<const std::string> tokens);

// --- vocabulary -------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kNonterminal = 3;
  static constexpr int kSubtreeStart = 4;
  static constexpr int kNumSpecials = 5;

  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kStartToken = "<s>";
  static constexpr std::string_view kEndToken = "</s>";
  static constexpr std::string_view kNonterminalToken = "<n>";
  static constexpr std::string_view kSubtreeStartToken = "<(";

  /// Specials only.
  Vocabulary();

  /// Specials at 0..4, then tokens with count >= min_count (all tokens when
  /// keep_all) by descending count, ties broken lexicographically.
  static Vocabulary build(std::span<const Tokens> corpus, int min_count,
                          bool keep_all);
  /// Rebuilds from a stored index-ordered token list (checkpoint load).
  static Vocabulary from_tokens(std::vector<std::string> index_to_token,
                                int min_count);

  std::optional<int> find(std::string_view token) const;
  /// Index of `token`, or kUnk.
  int index(std::string_view token) const;
  const std::string& token(int index) const;
  std::size_t size() const { return index_to_token_.size(); }
  int min_count() const { return min_count_; }
  const std::vector<std::string>& tokens() const { return index_to_token_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  /// Strict variant: throws VocabularyError on a token outside the vocabulary.
  std::vector<int> encode_strict(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const {
    return index_to_token_ == other.index_to_token_;
  }

 private:
  struct Empty {};
  explicit Vocabulary(Empty) {}

  std::vector<std::string> index_to_token_;
  std::unordered_map<std::string, int> token_to_index_;
  int min_count_ = 1;
};

// --- argument identification -------------------------------------------------

/// The type name given to literals recognised by the number patterns.
inline constexpr std::string_view kNumberType = "num";

struct LexiconEntry {
  Tokens surface;
  std::string type_name;
  std::string constant;
};

/// Entity surface forms with their types and logical constants. Numbers are
/// recognised by pattern rather than listed: integers [0-9]+, decimals
/// [0-9]+\.[0-9]+ and clock times [0-9]{1,2}:[0-9]{2}; the constant of a
/// number is its surface text.
class ArgumentLexicon {
 public:
  ArgumentLexicon() = default;

  /// Surface forms are run through tokenize(); empty surfaces and duplicate
  /// (surface, type) pairs are rejected with DataError.
  void add(std::string_view surface, std::string type_name,
           std::string constant);

  /// File format: UTF-8, one entry per line, `surface<TAB>type<TAB>constant`.
  /// Blank lines are skipped.
  static ArgumentLexicon load(const std::string& path);
  static ArgumentLexicon parse(std::string_view text,
                               const std::string& source = "<lexicon>");

  /// Longest entry whose surface matches tokens[pos...], if any.
  const LexiconEntry* longest_match(std::span<const std::string> tokens,
                                    std::size_t pos) const;

  /// Every marker type this lexicon can produce, including kNumberType.
  std::set<std::string> marker_types() const;
  const std::vector<LexiconEntry>& entries() const { return entries_; }

 private:
  std::vector<LexiconEntry> entries_;
  // first surface token -> entry indices, longest surface first
  std::unordered_map<std::string, std::vector<std::size_t>> by_first_token_;
};

bool is_number_literal(std::string_view token);

/// Marker -> constant pairs in assignment order.
class ArgumentTable {
 public:
  void add(std::string marker, std::string constant);
  const std::string* constant_of(std::string_view marker) const;
  std::vector<std::string> markers_for(std::string_view constant) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  bool operator==(const ArgumentTable&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct MaskedUtterance {
  Tokens tokens;
  ArgumentTable table;
  Tokens original;
};

/// Scans left to right; at each position takes the longest lexicon match,
/// else a number literal, and replaces it with `<type><i>`, where i counts
/// the distinct constants of that type seen so far. A constant seen again
/// reuses its marker.
MaskedUtterance identify_arguments(std::span<const std::string> tokens,
                                   const ArgumentLexicon& lexicon);

/// Replaces every logical-form token equal to a table constant by its marker.
/// Throws AmbiguityError if such a token maps to more than one marker.
Tokens mask_logical_form(std::span<const std::string> lf_tokens,
                         const ArgumentTable& table);

struct UnmaskResult {
  Tokens tokens;
  /// Marker-shaped tokens with no table entry, left in place.
  std::vector<std::string> unresolved;
};

/// True for `<type><digits>` where type is in `types`.
bool is_marker(std::string_view token, const std::set<std::string>& types);

UnmaskResult unmask(std::span<const std::string> prediction,
                    const ArgumentTable& table,
                    const std::set<std::string>& marker_types);

}  // namespace semparse
