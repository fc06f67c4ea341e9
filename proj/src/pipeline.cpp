#include "semparse/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "semparse/error.hpp"

namespace semparse {

std::vector<RawExample> parse_dataset(std::string_view text,
                                      const std::string& source) {
  std::vector<RawExample> out;
  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    const std::size_t tab = line.find('\t');
    const std::string where = source + ":" + std::to_string(lineno);
    if (tab == std::string_view::npos) {
      throw DataError(where + ": expected utterance<TAB>logical form");
    }
    RawExample ex{std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)),
                  lineno};
    if (ex.utterance.find_first_not_of(' ') == std::string::npos ||
        ex.logical_form.find_first_not_of(' ') == std::string::npos) {
      throw DataError(where + ": empty utterance or logical form");
    }
    out.push_back(std::move(ex));
    if (end == text.size()) break;
  }
  if (out.empty()) throw DataError(source + ": no examples");
  return out;
}

std::vector<RawExample> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path);
}

Pipeline::Pipeline(PipelineOptions options, ArgumentLexicon lexicon)
    : options_(options),
      lexicon_(std::move(lexicon)),
      marker_types_(lexicon_.marker_types()) {}

PreparedInput Pipeline::prepare_input(std::string_view utterance) const {
  PreparedInput out;
  Tokens tokens = tokenize(utterance);
  if (options_.argument_identification) {
    out.masked = identify_arguments(tokens, lexicon_);
  } else {
    out.masked.tokens = tokens;
    out.masked.original = tokens;
  }
  out.encoder_tokens = out.masked.tokens;
  if (options_.stem) {
    for (std::string& t : out.encoder_tokens) {
      if (!is_marker(t, marker_types_)) t = stem(t);
    }
  }
  if (options_.reverse_input) out.encoder_tokens = reverse_input(out.encoder_tokens);
  return out;
}

ExamplePair Pipeline::prepare(const RawExample& raw) const {
  ExamplePair out;
  out.line = raw.line;
  out.input = prepare_input(raw.utterance);
  LfTree tree = parse_gold(raw.logical_form);
  if (options_.argument_identification && !out.input.masked.table.empty()) {
    Tokens masked = mask_logical_form(lf_tokens(tree), out.input.masked.table);
    tree = parse_lf_tokens(masked);
  }
  out.logical_form = std::move(tree);
  return out;
}

Pipeline::Restored Pipeline::restore(std::span<const std::string> tokens,
                                     const ArgumentTable& table) const {
  Restored out;
  UnmaskResult u = unmask(tokens, table, marker_types_);
  out.tokens = std::move(u.tokens);
  out.unresolved = std::move(u.unresolved);
  try {
    out.tree = parse_lf_tokens(out.tokens);
  } catch (const ParseError&) {
    out.tree.reset();
  }
  return out;
}

LfTree Pipeline::parse_gold(std::string_view logical_form) const {
  return parse_lf(logical_form, options_.lf_format);
}

std::string Pipeline::render(const LfTree& tree) const {
  return serialize_lf(tree, options_.lf_format);
}

}  // namespace semparse
