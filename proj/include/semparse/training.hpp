#pragma once

// Mini-batch training: RMSProp on the summed batch gradient with global-norm
// clipping, dropout, per-epoch shuffling and early stopping on a dev metric.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semparse/model.hpp"
#include "semparse/rng.hpp"

namespace semparse {

struct TrainConfig {
  // model
  DecoderKind decoder = DecoderKind::kSequence;
  bool attention = true;
  int embed_dim = 200;
  int hidden_dim = 200;
  int num_layers = 1;

  // preprocessing
  bool argument_identification = true;
  bool stem = false;
  bool reverse_input = true;
  int input_min_count = 2;
  LfFormat lf_format = LfFormat::kBracket;

  // optimisation
  double learning_rate = 0.01;
  int batch_size = 20;
  double smoothing = 0.95;
  double rmsprop_eps = 1e-8;
  double clip_threshold = 5.0;
  double dropout_rate = 0.3;
  double init_range = 0.08;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;

  // decoding
  int max_seq_len = 100;
  int max_depth = 10;
  int max_nodes = 500;

  // files
  std::string train_path;
  std::string dev_path;
  std::string lexicon_path;
  std::string checkpoint_path = "model.ckpt";
  std::string report_path;

  /// Every violated constraint, one message each.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems.
  void validate() const;

  /// Unknown keys and ill-typed values are reported together as one
  /// ConfigError. Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::string& path);
  nlohmann::json to_json() const;

  ModelConfig model_config(int input_vocab, int output_vocab) const;
  TreeDecodeOptions decode_options() const;

  bool operator==(const TrainConfig&) const = default;
};

/// A preprocessed, vocabulary-encoded training pair.
struct TrainingExample {
  std::vector<int> input;
  std::vector<int> target;  // flat tokens ending in </s> (sequence decoder)
  EncodedTree tree;         // level sequences (tree decoder)
};

/// Examples are summed one at a time within a batch, so there is no padding;
/// `lengths` records the input lengths used for bucketing.
struct Batch {
  std::vector<std::size_t> examples;
  std::vector<int> lengths;
};

/// Shuffles, sorts each bucket of ten batches' worth of examples by input
/// length, cuts batches of at most batch_size and shuffles the batch order.
/// Throws ConfigError on empty data or a non-positive batch size.
std::vector<Batch> make_batches(std::span<const TrainingExample> data,
                                int batch_size, Rng& rng);

/// Summed loss of one batch; adds the summed gradient to Parameter::grad.
double batch_loss_and_gradients(ModelParameters& model,
                                std::span<const TrainingExample> data,
                                const Batch& batch, DropoutContext dropout,
                                int max_depth);

struct EpochStats {
  double mean_loss = 0.0;
  double max_grad_norm = 0.0;      // before clipping
  double max_clipped_norm = 0.0;   // after clipping
};

/// One pass over `batches`: per batch, summed loss and gradients, clipping,
/// one RMSProp step. Throws TrainingError naming the batch on a non-finite
/// loss.
EpochStats train_epoch(ModelParameters& model,
                       std::span<const TrainingExample> data,
                       std::span<const Batch> batches, const TrainConfig& config,
                       Rng& dropout_rng);

/// Mean per-example negative log-likelihood without dropout.
double evaluation_loss(const ModelParameters& model,
                       std::span<const TrainingExample> data);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
  double best_dev_accuracy = 0.0;
  double max_grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_dev_accuracy = -1.0;
  std::string stop_reason;

  /// Wall times are left out when `timings` is false.
  nlohmann::json to_json(bool timings = true) const;
};

/// Scores the current parameters on held-out data; higher is better.
using DevMetric = std::function<double(const ModelParameters&)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains until max_epochs, `patience` epochs without a dev improvement, or a
/// perfect dev score, then restores the best parameters into `model`.
TrainReport train(ModelParameters& model, std::span<const TrainingExample> data,
                  const DevMetric& dev_metric, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace semparse
