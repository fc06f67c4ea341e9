#include "semparse/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "semparse/error.hpp"

namespace semparse {

bool exact_match(std::string_view prediction, std::string_view gold, LfFormat format) {
  try {
    return parse_lf(prediction, format) == parse_lf(gold, format);
  } catch (const ParseError&) {
    return prediction == gold;
  }
}

double balanced_f1(const LfTree& prediction, const LfTree& gold) {
  const std::set<Production> p = extract_productions(prediction);
  const std::set<Production> g = extract_productions(gold);
  std::size_t common = 0;
  for (const Production& x : p) common += g.count(x);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

Verdict judge(const Parser& parser, const RawExample& ex, int beam) {
  const Pipeline& pipe = parser.pipeline();
  LfTree gold;
  try {
    gold = pipe.parse_gold(ex.logical_form);
  } catch (const ParseError& e) {
    throw DataError("line " + std::to_string(ex.line) + ": " + e.what());
  }
  Verdict v;
  v.id = ex.line;
  v.gold = pipe.render(gold);
  Prediction p = parser.predict(ex.utterance, beam);
  v.prediction = p.logical_form;
  v.truncated = p.truncated;
  if (p.tree && !p.truncated) {
    v.exact = *p.tree == gold;
    v.f1 = balanced_f1(*p.tree, gold);
  }
  return v;
}

}  // namespace

EvalResult evaluate(const Parser& parser, std::span<const RawExample> data, int beam,
                    int threads) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  EvalResult result;
  result.verdicts.resize(data.size());

  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, data.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < data.size();) {
      try {
        result.verdicts[k] = judge(parser, data[k], beam);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  double f1_sum = 0.0;
  for (const Verdict& v : result.verdicts) {
    result.correct += v.exact ? 1 : 0;
    f1_sum += v.f1;
  }
  result.total = static_cast<int>(data.size());
  result.accuracy = static_cast<double>(result.correct) / result.total;
  result.f1 = f1_sum / result.total;
  return result;
}

void write_verdicts(std::ostream& out, const EvalResult& result) {
  out << "id\tgold\tprediction\texact\tf1\n";
  char f1[32];
  for (const Verdict& v : result.verdicts) {
    std::snprintf(f1, sizeof f1, "%.6f", v.f1);
    out << v.id << '\t' << v.gold << '\t' << v.prediction << '\t' << (v.exact ? 1 : 0)
        << '\t' << f1 << '\n';
  }
}

}  // namespace semparse
