#include "semparse/workflow.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "semparse/error.hpp"

namespace semparse {

using nlohmann::json;

DataSplit split_dev(std::vector<RawExample> train, std::vector<RawExample> dev,
                    double dev_fraction, std::uint64_t seed) {
  DataSplit out;
  if (!dev.empty() || dev_fraction <= 0.0 || train.size() < 2) {
    out.train = std::move(train);
    out.dev = std::move(dev);
    return out;
  }
  std::vector<std::size_t> order(train.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  Rng rng(seed, RngStream::kDevSplit);
  rng.shuffle(order);
  std::size_t n_dev = static_cast<std::size_t>(
      std::llround(dev_fraction * static_cast<double>(train.size())));
  n_dev = std::clamp<std::size_t>(n_dev, 1, train.size() - 1);
  std::vector<bool> is_dev(train.size(), false);
  for (std::size_t k = 0; k < n_dev; ++k) is_dev[order[k]] = true;
  for (std::size_t k = 0; k < train.size(); ++k) {
    (is_dev[k] ? out.dev : out.train).push_back(std::move(train[k]));
  }
  return out;
}

Pipeline make_pipeline(const TrainConfig& config) {
  PipelineOptions opts;
  opts.argument_identification = config.argument_identification;
  opts.stem = config.stem;
  opts.reverse_input = config.reverse_input;
  opts.lf_format = config.lf_format;
  ArgumentLexicon lex;
  if (!config.lexicon_path.empty()) lex = ArgumentLexicon::load(config.lexicon_path);
  return Pipeline(opts, std::move(lex));
}

std::vector<ExamplePair> prepare_all(const Pipeline& pipeline,
                                     std::span<const RawExample> data) {
  std::vector<ExamplePair> out;
  out.reserve(data.size());
  for (const RawExample& ex : data) {
    try {
      out.push_back(pipeline.prepare(ex));
    } catch (const ParseError& e) {
      throw DataError("line " + std::to_string(ex.line) + ": " + e.what());
    } catch (const AmbiguityError& e) {
      throw DataError("line " + std::to_string(ex.line) + ": " + e.what());
    }
  }
  return out;
}

TrainingOutcome train_parser(const TrainConfig& config, const DataSplit& data,
                             const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw ConfigError("no training examples");
  Pipeline pipeline = make_pipeline(config);
  std::vector<ExamplePair> pairs = prepare_all(pipeline, data.train);
  TrainingOutcome out{Parser::create(config, std::move(pipeline), pairs), {}};

  std::vector<TrainingExample> encoded;
  encoded.reserve(pairs.size());
  for (const ExamplePair& p : pairs) encoded.push_back(out.parser.encode(p));

  const std::vector<RawExample>& monitor = data.dev.empty() ? data.train : data.dev;
  Parser& parser = out.parser;
  DevMetric metric = [&](const ModelParameters&) {
    return evaluate(parser, monitor).accuracy;
  };
  out.report = train(parser.mutable_model(), encoded, metric, config, on_epoch);
  return out;
}

TrainingOutcome run_training(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (config.train_path.empty()) throw ConfigError("train_path is required");
  std::vector<RawExample> train = load_dataset(config.train_path);
  std::vector<RawExample> dev;
  if (!config.dev_path.empty()) dev = load_dataset(config.dev_path);
  return train_parser(config,
                      split_dev(std::move(train), std::move(dev), config.dev_fraction,
                                config.seed),
                      on_epoch);
}

// --- sweep ------------------------------------------------------------------

SweepConfig SweepConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
  SweepConfig s;
  std::vector<std::string> errors;
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "grid" && key != "folds") {
      errors.push_back("unknown key '" + key + "'");
    }
  }
  try {
    s.base = TrainConfig::from_json(j.value("base", json::object()));
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  const json grid = j.value("grid", json::object());
  for (const auto& [key, value] : grid.items()) {
    try {
      if (key == "dropout_rate") {
        s.dropout_rates = value.get<std::vector<double>>();
      } else if (key == "dim") {
        s.dims = value.get<std::vector<int>>();
      } else if (key == "learning_rate") {
        s.learning_rates = value.get<std::vector<double>>();
      } else {
        errors.push_back("unknown grid key '" + key + "'");
      }
    } catch (const json::exception&) {
      errors.push_back("grid." + key + ": expected a list of numbers");
    }
  }
  if (!j.contains("grid") || !grid.contains("learning_rate")) {
    s.learning_rates = {s.base.learning_rate};
  }
  try {
    s.folds = j.value("folds", 0);
  } catch (const json::exception&) {
    errors.push_back("folds: wrong type");
  }
  if (s.dropout_rates.empty() || s.dims.empty() || s.learning_rates.empty()) {
    errors.push_back("empty grid");
  }
  if (s.folds == 1 || s.folds < 0) errors.push_back("folds must be 0 or at least 2");
  if (!errors.empty()) {
    std::string msg = "invalid sweep config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return s;
}

SweepConfig SweepConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read sweep config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

json SweepConfig::to_json() const {
  return json{{"base", base.to_json()},
              {"grid",
               {{"dropout_rate", dropout_rates}, {"dim", dims}, {"learning_rate", learning_rates}}},
              {"folds", folds}};
}

json SweepResult::to_json() const {
  json table = json::array();
  for (const SweepRow& r : rows) {
    table.push_back(json{{"dropout_rate", r.dropout_rate},
                         {"dim", r.dim},
                         {"learning_rate", r.learning_rate},
                         {"dev_accuracy", r.dev_accuracy},
                         {"best_epoch", r.best_epoch}});
  }
  return json{{"rows", table}, {"best", best}, {"best_config", best_config.to_json()}};
}

SweepResult run_sweep(const SweepConfig& sweep, const SweepCallback& on_row) {
  if (sweep.dropout_rates.empty() || sweep.dims.empty() || sweep.learning_rates.empty()) {
    throw ConfigError("empty sweep grid");
  }
  const TrainConfig& base = sweep.base;
  base.validate();
  if (base.train_path.empty()) throw ConfigError("train_path is required");
  std::vector<RawExample> all = load_dataset(base.train_path);
  std::vector<RawExample> explicit_dev;
  if (!base.dev_path.empty()) explicit_dev = load_dataset(base.dev_path);
  const DataSplit split = split_dev(all, explicit_dev, base.dev_fraction, base.seed);

  std::vector<DataSplit> folds;
  if (sweep.folds >= 2) {
    if (all.size() < static_cast<std::size_t>(sweep.folds)) {
      throw ConfigError("fewer training examples than folds");
    }
    std::vector<std::size_t> order(all.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng rng(base.seed, RngStream::kDevSplit);
    rng.shuffle(order);
    for (int f = 0; f < sweep.folds; ++f) {
      DataSplit d;
      for (std::size_t k = 0; k < order.size(); ++k) {
        (static_cast<int>(k % sweep.folds) == f ? d.dev : d.train).push_back(all[order[k]]);
      }
      folds.push_back(std::move(d));
    }
  }

  SweepResult result;
  std::vector<TrainConfig> configs;
  for (double lr : sweep.learning_rates) {
    for (int dim : sweep.dims) {
      for (double dropout : sweep.dropout_rates) {
        TrainConfig c = base;
        c.learning_rate = lr;
        c.embed_dim = dim;
        c.hidden_dim = dim;
        c.dropout_rate = dropout;
        c.validate();
        configs.push_back(c);
      }
    }
  }
  auto better = [](const SweepRow& r, const SweepRow& b) {
    return r.dev_accuracy > b.dev_accuracy || (r.dev_accuracy == b.dev_accuracy && r.dim < b.dim);
  };
  std::optional<TrainingOutcome> best_run;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const TrainConfig& c = configs[k];
    SweepRow row{c.dropout_rate, c.hidden_dim, c.learning_rate, 0.0, 0};
    std::optional<TrainingOutcome> run;
    if (folds.empty()) {
      run = train_parser(c, split);
      row.dev_accuracy = run->report.best_dev_accuracy;
      row.best_epoch = run->report.best_epoch;
    } else {
      double total = 0.0;
      for (const DataSplit& d : folds) {
        TrainingOutcome o = train_parser(c, d);
        total += o.report.best_dev_accuracy;
        row.best_epoch = std::max(row.best_epoch, o.report.best_epoch);
      }
      row.dev_accuracy = total / static_cast<double>(folds.size());
    }
    result.rows.push_back(row);
    if (k == 0 || better(row, result.rows[result.best])) {
      result.best = k;
      best_run = std::move(run);
    }
    if (on_row) on_row(row);
  }
  result.best_config = configs[result.best];
  result.best_outcome = best_run ? std::move(*best_run) : train_parser(result.best_config, split);
  return result;
}

}  // namespace semparse
