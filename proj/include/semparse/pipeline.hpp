#pragma once

// Dataset files and the per-example preprocessing shared by training and
// inference: tokenize, mask arguments, stem, reverse; and the inverse path
// from decoder output back to a logical form.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semparse/lf_tree.hpp"
#include "semparse/text.hpp"

namespace semparse {

struct RawExample {
  std::string utterance;
  std::string logical_form;
  int line = 0;  // 1-based line in the source file
};

/// `utterance<TAB>logical form` per line; blank lines are skipped. Throws
/// DataError naming the line for a missing tab or an empty field, and for a
/// file with no examples.
std::vector<RawExample> parse_dataset(std::string_view text,
                                      const std::string& source = "<dataset>");
std::vector<RawExample> load_dataset(const std::string& path);

struct PipelineOptions {
  bool argument_identification = true;
  bool stem = false;
  bool reverse_input = true;
  LfFormat lf_format = LfFormat::kBracket;

  bool operator==(const PipelineOptions&) const = default;
};

struct PreparedInput {
  Tokens encoder_tokens;  // what the encoder reads, already reversed
  MaskedUtterance masked;
};

struct ExamplePair {
  PreparedInput input;
  LfTree logical_form;  // masked
  int line = 0;
};

class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(PipelineOptions options, ArgumentLexicon lexicon);

  const PipelineOptions& options() const { return options_; }
  const ArgumentLexicon& lexicon() const { return lexicon_; }
  const std::set<std::string>& marker_types() const { return marker_types_; }

  PreparedInput prepare_input(std::string_view utterance) const;
  /// Throws ParseError for a malformed logical form and AmbiguityError when a
  /// constant maps to two markers.
  ExamplePair prepare(const RawExample& raw) const;

  struct Restored {
    std::optional<LfTree> tree;  // empty when the tokens do not parse
    Tokens tokens;               // unmasked decoder tokens
    std::vector<std::string> unresolved;
  };
  /// Unmasks decoder output (flat tokens with brackets) and parses it.
  Restored restore(std::span<const std::string> tokens,
                   const ArgumentTable& table) const;

  LfTree parse_gold(std::string_view logical_form) const;
  std::string render(const LfTree& tree) const;

 private:
  PipelineOptions options_;
  ArgumentLexicon lexicon_;
  std::set<std::string> marker_types_;
};

}  // namespace semparse
