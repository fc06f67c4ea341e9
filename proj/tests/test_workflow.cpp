#include <filesystem>
#include <fstream>

#include "data_fixtures.hpp"
#include "doctest.h"
#include "semparse/checkpoint.hpp"
#include "semparse/error.hpp"
#include "semparse/workflow.hpp"

using namespace semparse;

namespace {

std::vector<RawExample> numbered(int n) {
  std::vector<RawExample> out;
  for (int k = 0; k < n; ++k) out.push_back({"u" + std::to_string(k), "(x)", k + 1});
  return out;
}

std::vector<RawExample> jobs_head(std::size_t n) {
  auto all = load_dataset((fixtures::data_dir() / "jobs" / "sample.tsv").string());
  all.resize(std::min(n, all.size()));
  return all;
}

TrainConfig small_config(DecoderKind decoder) {
  TrainConfig c;
  c.decoder = decoder;
  c.embed_dim = 24;
  c.hidden_dim = 24;
  c.dropout_rate = 0.0;
  c.batch_size = 4;
  c.learning_rate = 0.02;
  c.max_epochs = 200;
  c.patience = 200;
  c.input_min_count = 1;
  c.lf_format = LfFormat::kProlog;
  c.lexicon_path = (fixtures::data_dir() / "jobs" / "lexicon.tsv").string();
  return c;
}

std::filesystem::path write_temp(const std::string& name, const std::vector<RawExample>& rows) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  for (const RawExample& r : rows) out << r.utterance << '\t' << r.logical_form << '\n';
  return path;
}

}  // namespace

TEST_CASE("dev split") {
  DataSplit s = split_dev(numbered(50), {}, 0.1, 3);
  CHECK(s.dev.size() == 5);
  CHECK(s.train.size() == 45);
  DataSplit again = split_dev(numbered(50), {}, 0.1, 3);
  for (std::size_t k = 0; k < s.dev.size(); ++k) CHECK(s.dev[k].line == again.dev[k].line);
  std::set<int> lines;
  for (const auto& r : s.train) lines.insert(r.line);
  for (const auto& r : s.dev) lines.insert(r.line);
  CHECK(lines.size() == 50);

  CHECK(split_dev(numbered(3), {}, 0.1, 3).dev.size() == 1);
  CHECK(split_dev(numbered(4), {}, 0.5, 3).dev.size() == 2);
  CHECK(split_dev(numbered(1), {}, 0.5, 3).dev.empty());
  CHECK(split_dev(numbered(10), {}, 0.0, 3).dev.empty());
  DataSplit given = split_dev(numbered(10), numbered(2), 0.3, 3);
  CHECK(given.train.size() == 10);
  CHECK(given.dev.size() == 2);
}

TEST_CASE("prepare_all reports the line") {
  Pipeline pipe;
  std::vector<RawExample> rows{{"a", "(x)", 1}, {"b", "(x", 9}};
  CHECK_THROWS_WITH_AS(prepare_all(pipe, rows), doctest::Contains("line 9"), DataError);
}

TEST_CASE("small runs memorize their training set") {
  const auto data = jobs_head(10);
  for (DecoderKind decoder : {DecoderKind::kSequence, DecoderKind::kTree}) {
    CAPTURE(to_string(decoder));
    TrainConfig config = small_config(decoder);
    TrainingOutcome run = train_parser(config, DataSplit{data, {}});
    CHECK(run.report.epochs.size() <= static_cast<std::size_t>(config.max_epochs));
    EvalResult eval = evaluate(run.parser, data);
    CHECK(eval.accuracy == 1.0);
    for (const RawExample& ex : data) {
      CHECK(run.parser.predict(ex.utterance).logical_form == ex.logical_form);
    }
    Checkpoint restored =
        deserialize_checkpoint(serialize_checkpoint(run.parser, config.to_json(), config.seed));
    CHECK(evaluate(restored.parser, data).accuracy == 1.0);
  }
}

TEST_CASE("runs are deterministic") {
  const auto data = jobs_head(12);
  TrainConfig config = small_config(DecoderKind::kTree);
  config.dropout_rate = 0.3;
  config.max_epochs = 6;
  config.dev_fraction = 0.25;
  auto run = [&] {
    TrainingOutcome o = train_parser(config, split_dev(data, {}, config.dev_fraction, config.seed));
    return std::pair{serialize_checkpoint(o.parser, config.to_json(), config.seed),
                     o.report.to_json(false).dump()};
  };
  auto [bytes_a, report_a] = run();
  auto [bytes_b, report_b] = run();
  CHECK(bytes_a == bytes_b);
  CHECK(report_a == report_b);
}

TEST_CASE("sweep") {
  const auto data = jobs_head(16);
  const auto path = write_temp("semparse_sweep_train.tsv", data);
  SweepConfig sweep;
  sweep.base = small_config(DecoderKind::kSequence);
  sweep.base.train_path = path.string();
  sweep.base.max_epochs = 3;
  sweep.base.dev_fraction = 0.25;

  SUBCASE("single point equals a training run") {
    sweep.dropout_rates = {0.2};
    sweep.dims = {12};
    sweep.learning_rates = {0.01};
    SweepResult r = run_sweep(sweep);
    CHECK(r.rows.size() == 1);
    TrainConfig c = sweep.base;
    c.dropout_rate = 0.2;
    c.learning_rate = 0.01;
    c.embed_dim = c.hidden_dim = 12;
    TrainingOutcome direct = run_training(c);
    CHECK(r.best_config == c);
    CHECK(r.best_outcome.report.to_json(false) == direct.report.to_json(false));
    CHECK(serialize_checkpoint(r.best_outcome.parser, nullptr, 1) ==
          serialize_checkpoint(direct.parser, nullptr, 1));
  }
  SUBCASE("grid") {
    sweep.dropout_rates = {0.0, 0.3};
    sweep.dims = {12, 8};
    sweep.learning_rates = {0.01};
    std::vector<SweepRow> seen;
    SweepResult r = run_sweep(sweep, [&](const SweepRow& row) { seen.push_back(row); });
    CHECK(r.rows.size() == 4);
    CHECK(seen.size() == 4);
    const SweepRow& best = r.rows[r.best];
    for (const SweepRow& row : r.rows) {
      CHECK(best.dev_accuracy >= row.dev_accuracy);
      if (row.dev_accuracy == best.dev_accuracy) CHECK(best.dim <= row.dim);
    }
    CHECK(r.best_config.hidden_dim == best.dim);
    CHECK(r.to_json()["rows"].size() == 4);
  }
  SUBCASE("folds") {
    sweep.dropout_rates = {0.0};
    sweep.dims = {8};
    sweep.folds = 3;
    SweepResult r = run_sweep(sweep);
    CHECK(r.rows.size() == 1);
    CHECK(r.rows[0].dev_accuracy >= 0.0);
  }
  SUBCASE("empty grid") {
    sweep.dims.clear();
    CHECK_THROWS_AS(run_sweep(sweep), ConfigError);
    CHECK_THROWS_AS(SweepConfig::from_json({{"grid", {{"dim", nlohmann::json::array()}}}}),
                    ConfigError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("sweep config json") {
  SweepConfig s = SweepConfig::from_json(
      {{"base", {{"hidden_dim", 10}}}, {"grid", {{"dim", {4, 6}}, {"dropout_rate", {0.1}}}},
       {"folds", 2}});
  CHECK(s.base.hidden_dim == 10);
  CHECK(s.dims == std::vector<int>{4, 6});
  CHECK(s.dropout_rates == std::vector<double>{0.1});
  CHECK(s.learning_rates == std::vector<double>{0.01});
  CHECK(s.folds == 2);
  SweepConfig back = SweepConfig::from_json(s.to_json());
  CHECK(back.dims == s.dims);
  CHECK(back.base == s.base);
  CHECK_THROWS_AS(SweepConfig::from_json({{"grids", 1}}), ConfigError);
}

TEST_CASE("run_training needs a train path") {
  TrainConfig c;
  CHECK_THROWS_AS(run_training(c), ConfigError);
  c.train_path = "/nonexistent/train.tsv";
  CHECK_THROWS_AS(run_training(c), DataError);
}
