#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semparse/lf_tree.hpp"
#include "semparse/parser.hpp"
#include "semparse/pipeline.hpp"

namespace semparse {

/// Tree equality of the parsed forms; byte equality when either fails to
/// parse.
bool exact_match(std::string_view prediction, std::string_view gold,
                 LfFormat format = LfFormat::kBracket);

/// F1 over production sets; 0 when precision and recall are both 0.
double balanced_f1(const LfTree& prediction, const LfTree& gold);

struct Verdict {
  int id = 0;  // source line of the example
  std::string gold;
  std::string prediction;
  bool exact = false;
  double f1 = 0.0;
  bool truncated = false;
};

struct EvalResult {
  int correct = 0;
  int total = 0;
  double accuracy = 0.0;
  double f1 = 0.0;  // mean over examples
  std::vector<Verdict> verdicts;
};

/// Decodes every example (in parallel when threads != 1; 0 picks the
/// hardware concurrency) and scores it against its gold form. Malformed or
/// truncated predictions count as wrong with F1 0. Throws ConfigError on an
/// empty dataset and DataError on an unparsable gold form.
EvalResult evaluate(const Parser& parser, std::span<const RawExample> data,
                    int beam = 1, int threads = 0);

/// Header `id gold prediction exact f1`, one row per verdict.
void write_verdicts(std::ostream& out, const EvalResult& result);

}  // namespace semparse
