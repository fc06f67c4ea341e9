#pragma once

// A trained parser: preprocessing pipeline, vocabularies, parameters and
// decoding caps, with the utterance -> logical form entry point.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "semparse/model.hpp"
#include "semparse/pipeline.hpp"
#include "semparse/training.hpp"

namespace semparse {

struct Prediction {
  std::optional<LfTree> tree;  // unmasked; empty when the output is malformed
  std::string logical_form;    // rendered in the dataset format, or the raw tokens
  Tokens encoder_tokens;
  /// Decoder outputs (masked), one per attention row, including </s> steps.
  Tokens decoder_tokens;
  AttentionRecord attention;
  std::vector<std::string> unresolved;
  bool truncated = false;
};

class Parser {
 public:
  Parser() = default;
  Parser(Pipeline pipeline, Vocabulary input_vocab, Vocabulary output_vocab,
         ModelParameters model, TreeDecodeOptions decode);

  struct Vocabularies {
    Vocabulary input;   // encoder tokens with count >= input_min_count
    Vocabulary output;  // every decoder token of the configured decoder
  };
  static Vocabularies build_vocabularies(const TrainConfig& config,
                                         std::span<const ExamplePair> train);

  /// Vocabularies from training pairs and a model initialised from the
  /// config's seed.
  static Parser create(const TrainConfig& config, Pipeline pipeline,
                       std::span<const ExamplePair> train);

  const Pipeline& pipeline() const { return pipeline_; }
  const Vocabulary& input_vocab() const { return input_vocab_; }
  const Vocabulary& output_vocab() const { return output_vocab_; }
  const ModelParameters& model() const { return model_; }
  ModelParameters& mutable_model() { return model_; }
  const TreeDecodeOptions& decode_options() const { return decode_; }

  /// Throws VocabularyError when the logical form uses an output token the
  /// vocabulary lacks.
  TrainingExample encode(const ExamplePair& pair) const;

  /// Thread-safe. beam > 1 is only valid for the sequence decoder.
  Prediction predict(std::string_view utterance, int beam = 1) const;
  Prediction predict(const PreparedInput& input, int beam = 1) const;

 private:
  Pipeline pipeline_;
  Vocabulary input_vocab_;
  Vocabulary output_vocab_;
  ModelParameters model_;
  TreeDecodeOptions decode_;
};

}  // namespace semparse
