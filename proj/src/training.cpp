#include "semparse/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "semparse/error.hpp"

namespace semparse {

using nlohmann::json;

// --- config -----------------------------------------------------------------

namespace {

template <typename T>
void read(const json& j, const char* key, T& field, std::vector<std::string>& errors) {
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    errors.push_back(std::string(key) + ": wrong type");
  }
}

}  // namespace

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0)) out.push_back(std::string(name) + " must be positive");
  };
  positive("embed_dim", embed_dim);
  positive("hidden_dim", hidden_dim);
  positive("num_layers", num_layers);
  positive("input_min_count", input_min_count);
  positive("learning_rate", learning_rate);
  positive("batch_size", batch_size);
  positive("smoothing", smoothing);
  positive("rmsprop_eps", rmsprop_eps);
  positive("clip_threshold", clip_threshold);
  positive("init_range", init_range);
  positive("max_epochs", max_epochs);
  positive("max_seq_len", max_seq_len);
  positive("max_depth", max_depth);
  positive("max_nodes", max_nodes);
  if (smoothing >= 1.0) out.push_back("smoothing must be below 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    out.push_back("dropout_rate must be in [0, 1)");
  }
  if (patience < 0) out.push_back("patience must be non-negative");
  if (!(dev_fraction >= 0.0 && dev_fraction <= 0.5)) {
    out.push_back("dev_fraction must be in [0, 0.5]");
  }
  if (checkpoint_path.empty()) out.push_back("checkpoint_path must not be empty");
  return out;
}

void TrainConfig::validate() const {
  std::vector<std::string> errs = problems();
  if (errs.empty()) return;
  std::string msg = "invalid training config:";
  for (const std::string& e : errs) msg += "\n  " + e;
  throw ConfigError(msg);
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  std::vector<std::string> errors;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "decoder") {
      try {
        c.decoder = decoder_kind_from_string(value.get<std::string>());
      } catch (const std::exception& e) {
        errors.push_back(std::string("decoder: ") + e.what());
      }
    } else if (key == "lf_format") {
      try {
        c.lf_format = lf_format_from_string(value.get<std::string>());
      } catch (const std::exception& e) {
        errors.push_back(std::string("lf_format: ") + e.what());
      }
    } else if (key == "attention") {
      read(j, k, c.attention, errors);
    } else if (key == "embed_dim") {
      read(j, k, c.embed_dim, errors);
    } else if (key == "hidden_dim") {
      read(j, k, c.hidden_dim, errors);
    } else if (key == "num_layers") {
      read(j, k, c.num_layers, errors);
    } else if (key == "argument_identification") {
      read(j, k, c.argument_identification, errors);
    } else if (key == "stem") {
      read(j, k, c.stem, errors);
    } else if (key == "reverse_input") {
      read(j, k, c.reverse_input, errors);
    } else if (key == "input_min_count") {
      read(j, k, c.input_min_count, errors);
    } else if (key == "learning_rate") {
      read(j, k, c.learning_rate, errors);
    } else if (key == "batch_size") {
      read(j, k, c.batch_size, errors);
    } else if (key == "smoothing") {
      read(j, k, c.smoothing, errors);
    } else if (key == "rmsprop_eps") {
      read(j, k, c.rmsprop_eps, errors);
    } else if (key == "clip_threshold") {
      read(j, k, c.clip_threshold, errors);
    } else if (key == "dropout_rate") {
      read(j, k, c.dropout_rate, errors);
    } else if (key == "init_range") {
      read(j, k, c.init_range, errors);
    } else if (key == "max_epochs") {
      read(j, k, c.max_epochs, errors);
    } else if (key == "patience") {
      read(j, k, c.patience, errors);
    } else if (key == "seed") {
      read(j, k, c.seed, errors);
    } else if (key == "dev_fraction") {
      read(j, k, c.dev_fraction, errors);
    } else if (key == "max_seq_len") {
      read(j, k, c.max_seq_len, errors);
    } else if (key == "max_depth") {
      read(j, k, c.max_depth, errors);
    } else if (key == "max_nodes") {
      read(j, k, c.max_nodes, errors);
    } else if (key == "train_path") {
      read(j, k, c.train_path, errors);
    } else if (key == "dev_path") {
      read(j, k, c.dev_path, errors);
    } else if (key == "lexicon_path") {
      read(j, k, c.lexicon_path, errors);
    } else if (key == "checkpoint_path") {
      read(j, k, c.checkpoint_path, errors);
    } else if (key == "report_path") {
      read(j, k, c.report_path, errors);
    } else {
      errors.push_back("unknown key '" + key + "'");
    }
  }
  if (errors.empty()) errors = c.problems();
  else {
    for (std::string& p : c.problems()) errors.push_back(std::move(p));
  }
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

json TrainConfig::to_json() const {
  return json{
      {"decoder", std::string(to_string(decoder))},
      {"attention", attention},
      {"embed_dim", embed_dim},
      {"hidden_dim", hidden_dim},
      {"num_layers", num_layers},
      {"argument_identification", argument_identification},
      {"stem", stem},
      {"reverse_input", reverse_input},
      {"input_min_count", input_min_count},
      {"lf_format", std::string(to_string(lf_format))},
      {"learning_rate", learning_rate},
      {"batch_size", batch_size},
      {"smoothing", smoothing},
      {"rmsprop_eps", rmsprop_eps},
      {"clip_threshold", clip_threshold},
      {"dropout_rate", dropout_rate},
      {"init_range", init_range},
      {"max_epochs", max_epochs},
      {"patience", patience},
      {"seed", seed},
      {"dev_fraction", dev_fraction},
      {"max_seq_len", max_seq_len},
      {"max_depth", max_depth},
      {"max_nodes", max_nodes},
      {"train_path", train_path},
      {"dev_path", dev_path},
      {"lexicon_path", lexicon_path},
      {"checkpoint_path", checkpoint_path},
      {"report_path", report_path},
  };
}

ModelConfig TrainConfig::model_config(int input_vocab, int output_vocab) const {
  return ModelConfig{input_vocab, output_vocab, embed_dim, hidden_dim,
                     num_layers,  decoder,      attention};
}

TreeDecodeOptions TrainConfig::decode_options() const {
  return TreeDecodeOptions{max_seq_len, max_depth, max_nodes, true};
}

// --- batching ---------------------------------------------------------------

std::vector<Batch> make_batches(std::span<const TrainingExample> data,
                                int batch_size, Rng& rng) {
  if (data.empty()) throw ConfigError("make_batches: no training data");
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  rng.shuffle(order);

  const std::size_t bucket = static_cast<std::size_t>(batch_size) * 10;
  for (std::size_t start = 0; start < order.size(); start += bucket) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bucket));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return data[a].input.size() < data[b].input.size();
    });
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      b.examples.push_back(order[k]);
      b.lengths.push_back(static_cast<int>(data[order[k]].input.size()));
    }
    batches.push_back(std::move(b));
  }
  rng.shuffle(batches);
  return batches;
}

// --- epochs -----------------------------------------------------------------

namespace {

LossResult example_loss(ModelParameters& model, const TrainingExample& ex,
                        DropoutContext dropout, int max_depth) {
  if (model.config().decoder == DecoderKind::kTree) {
    return tree_loss_and_gradients(model, ex.input, ex.tree, dropout, max_depth);
  }
  return seq_loss_and_gradients(model, ex.input, ex.target, dropout);
}

}  // namespace

double batch_loss_and_gradients(ModelParameters& model,
                                std::span<const TrainingExample> data,
                                const Batch& batch, DropoutContext dropout,
                                int max_depth) {
  double loss = 0.0;
  for (std::size_t idx : batch.examples) {
    loss += example_loss(model, data[idx], dropout, max_depth).loss;
  }
  return loss;
}

EpochStats train_epoch(ModelParameters& model, std::span<const TrainingExample> data,
                       std::span<const Batch> batches, const TrainConfig& config,
                       Rng& dropout_rng) {
  const nn::ParameterList params = model.parameters();
  const DropoutContext dropout{config.dropout_rate, &dropout_rng};
  EpochStats stats;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    nn::zero_grads(params);
    const double batch_loss =
        batch_loss_and_gradients(model, data, batches[b], dropout, config.max_depth);
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite loss in batch " + std::to_string(b));
    }
    const double norm = nn::clip_gradients(params, config.clip_threshold);
    if (!std::isfinite(norm)) {
      throw TrainingError("non-finite gradient in batch " + std::to_string(b));
    }
    stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
    stats.max_clipped_norm = std::max(stats.max_clipped_norm, nn::global_grad_norm(params));
    nn::rmsprop_step(params, config.learning_rate, config.smoothing, config.rmsprop_eps);
    total += batch_loss;
    count += batches[b].examples.size();
  }
  nn::zero_grads(params);
  stats.mean_loss = count > 0 ? total / static_cast<double>(count) : 0.0;
  return stats;
}

double evaluation_loss(const ModelParameters& model,
                       std::span<const TrainingExample> data) {
  if (data.empty()) throw ConfigError("evaluation_loss: no data");
  double total = 0.0;
  for (const TrainingExample& ex : data) {
    total -= model.config().decoder == DecoderKind::kTree
                 ? tree_log_prob(model, ex.input, ex.tree, {}, 0)
                 : seq_log_prob(model, ex.input, ex.target);
  }
  return total / static_cast<double>(data.size());
}

// --- training loop ----------------------------------------------------------

json TrainReport::to_json(bool timings) const {
  json epochs_json = json::array();
  for (const EpochRecord& e : epochs) {
    json row{{"epoch", e.epoch},
             {"train_loss", e.train_loss},
             {"dev_accuracy", e.dev_accuracy},
             {"best_dev_accuracy", e.best_dev_accuracy},
             {"max_grad_norm", e.max_grad_norm}};
    if (timings) row["seconds"] = e.seconds;
    epochs_json.push_back(std::move(row));
  }
  return json{{"epochs", epochs_json},
              {"best_epoch", best_epoch},
              {"best_dev_accuracy", best_dev_accuracy},
              {"stop_reason", stop_reason}};
}

TrainReport train(ModelParameters& model, std::span<const TrainingExample> data,
                  const DevMetric& dev_metric, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw ConfigError("train: no training data");
  Rng shuffle_rng(config.seed, RngStream::kShuffle);
  Rng dropout_rng(config.seed, RngStream::kDropout);

  TrainReport report;
  ModelParameters best = model;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Batch> batches = make_batches(data, config.batch_size, shuffle_rng);
    EpochStats stats = train_epoch(model, data, batches, config, dropout_rng);
    const double dev = dev_metric(model);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss;
    rec.dev_accuracy = dev;
    rec.max_grad_norm = stats.max_grad_norm;
    if (dev > report.best_dev_accuracy) {
      report.best_dev_accuracy = dev;
      report.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    rec.best_dev_accuracy = report.best_dev_accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (dev >= 1.0) {
      report.stop_reason = "perfect dev accuracy";
      break;
    }
    if (since_best >= std::max(1, config.patience)) {
      report.stop_reason = "no dev improvement for " + std::to_string(since_best) + " epochs";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max_epochs reached";
  const nn::ParameterList dst = model.parameters();
  const nn::ParameterList src = best.parameters();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k]->value = src[k]->value;
  return report;
}

}  // namespace semparse
