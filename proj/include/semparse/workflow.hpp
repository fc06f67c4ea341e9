#pragma once

// End-to-end runs driven by a TrainConfig: load and split data, preprocess,
// build vocabularies, train with dev-set early stopping; and grid sweeps.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semparse/evaluation.hpp"
#include "semparse/parser.hpp"
#include "semparse/pipeline.hpp"
#include "semparse/training.hpp"

namespace semparse {

struct DataSplit {
  std::vector<RawExample> train;
  std::vector<RawExample> dev;  // empty: monitor the training set
};

/// Uses `dev` when given, otherwise moves a seeded dev_fraction share of
/// `train` (at least one example, at least one left) into the dev set.
DataSplit split_dev(std::vector<RawExample> train, std::vector<RawExample> dev,
                    double dev_fraction, std::uint64_t seed);

/// Lexicon from the config's path, or an empty one.
Pipeline make_pipeline(const TrainConfig& config);

/// Preprocesses every example; ParseError and AmbiguityError become
/// DataError naming the line.
std::vector<ExamplePair> prepare_all(const Pipeline& pipeline,
                                     std::span<const RawExample> data);

struct TrainingOutcome {
  Parser parser;
  TrainReport report;
};

/// Trains on in-memory data; the checkpoint is not written.
TrainingOutcome train_parser(const TrainConfig& config, const DataSplit& data,
                             const EpochCallback& on_epoch = {});

/// Loads config.train_path (and dev_path) and calls train_parser.
TrainingOutcome run_training(const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

struct SweepConfig {
  TrainConfig base;
  std::vector<double> dropout_rates{0.2, 0.3, 0.4, 0.5};
  std::vector<int> dims{150, 200, 250};  // sets both embed_dim and hidden_dim
  std::vector<double> learning_rates{0.01};
  /// 0 uses the base dev split; k >= 2 averages dev accuracy over k folds.
  int folds = 0;

  static SweepConfig from_json(const nlohmann::json& j);
  static SweepConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

struct SweepRow {
  double dropout_rate = 0.0;
  int dim = 0;
  double learning_rate = 0.0;
  double dev_accuracy = 0.0;
  int best_epoch = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;
  TrainConfig best_config;
  /// Trained on the base split with best_config.
  TrainingOutcome best_outcome;

  nlohmann::json to_json() const;
};

using SweepCallback = std::function<void(const SweepRow&)>;

/// Grid search; ties go to the smaller dim, then to the earlier grid point.
/// Throws ConfigError on an empty grid.
SweepResult run_sweep(const SweepConfig& sweep, const SweepCallback& on_row = {});

}  // namespace semparse
