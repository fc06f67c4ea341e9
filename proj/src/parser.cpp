#include "semparse/parser.hpp"

#include "semparse/error.hpp"

namespace semparse {

namespace {

Tokens output_tokens_of(const LfTree& tree, DecoderKind decoder) {
  if (decoder == DecoderKind::kSequence) return lf_tokens(tree);
  Tokens out;
  for (const LevelSequence& s : to_level_sequences(tree)) {
    out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  }
  return out;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

Parser::Parser(Pipeline pipeline, Vocabulary input_vocab, Vocabulary output_vocab,
               ModelParameters model, TreeDecodeOptions decode)
    : pipeline_(std::move(pipeline)),
      input_vocab_(std::move(input_vocab)),
      output_vocab_(std::move(output_vocab)),
      model_(std::move(model)),
      decode_(decode) {
  const ModelConfig& cfg = model_.config();
  if (cfg.input_vocab_size != static_cast<int>(input_vocab_.size()) ||
      cfg.output_vocab_size != static_cast<int>(output_vocab_.size())) {
    throw DimensionError("parser: model vocabulary sizes do not match the vocabularies");
  }
}

Parser::Vocabularies Parser::build_vocabularies(const TrainConfig& config,
                                               std::span<const ExamplePair> train) {
  std::vector<Tokens> inputs, outputs;
  for (const ExamplePair& p : train) {
    inputs.push_back(p.input.encoder_tokens);
    outputs.push_back(output_tokens_of(p.logical_form, config.decoder));
  }
  return {Vocabulary::build(inputs, config.input_min_count, false),
          Vocabulary::build(outputs, 1, true)};
}

Parser Parser::create(const TrainConfig& config, Pipeline pipeline,
                      std::span<const ExamplePair> train) {
  config.validate();
  if (train.empty()) throw ConfigError("no training examples");
  auto [in_vocab, out_vocab] = build_vocabularies(config, train);
  ModelParameters model(config.model_config(static_cast<int>(in_vocab.size()),
                                            static_cast<int>(out_vocab.size())));
  Rng init(config.seed, RngStream::kInit);
  nn::init_uniform(model.parameters(), config.init_range, init);
  return Parser(std::move(pipeline), std::move(in_vocab), std::move(out_vocab),
                std::move(model), config.decode_options());
}

TrainingExample Parser::encode(const ExamplePair& pair) const {
  TrainingExample ex;
  ex.input = input_vocab_.encode(pair.input.encoder_tokens);
  if (model_.config().decoder == DecoderKind::kTree) {
    ex.tree = encode_tree(pair.logical_form, output_vocab_);
  } else {
    ex.target = output_vocab_.encode_strict(lf_tokens(pair.logical_form));
    ex.target.push_back(Vocabulary::kEnd);
  }
  return ex;
}

Prediction Parser::predict(std::string_view utterance, int beam) const {
  return predict(pipeline_.prepare_input(utterance), beam);
}

Prediction Parser::predict(const PreparedInput& input, int beam) const {
  if (beam < 1) throw ConfigError("beam must be at least 1");
  if (input.encoder_tokens.empty()) throw InputError("empty utterance");
  Prediction out;
  out.encoder_tokens = input.encoder_tokens;
  const std::vector<int> ids = input_vocab_.encode(input.encoder_tokens);

  Tokens masked;
  if (model_.config().decoder == DecoderKind::kTree) {
    if (beam > 1) throw ConfigError("beam search is only available for the sequence decoder");
    TreeDecodeResult r = decode_tree(model_, ids, decode_);
    out.truncated = r.truncated;
    out.attention = std::move(r.attention);
    for (const IdLevelSequence& s : r.sequences) {
      for (int id : s.tokens) out.decoder_tokens.push_back(output_vocab_.token(id));
    }
    masked = lf_tokens(assemble_tree(r, output_vocab_));
  } else {
    SeqDecodeResult r = beam == 1 ? greedy_decode_seq(model_, ids, decode_.max_seq_len)
                                  : beam_decode_seq(model_, ids, beam, decode_.max_seq_len);
    out.truncated = r.truncated;
    out.attention = std::move(r.attention);
    for (int id : r.tokens) {
      out.decoder_tokens.push_back(output_vocab_.token(id));
      masked.push_back(id < Vocabulary::kNumSpecials ? std::string(Vocabulary::kUnkToken)
                                                     : output_vocab_.token(id));
    }
    if (!r.truncated) out.decoder_tokens.emplace_back(Vocabulary::kEndToken);
  }

  Pipeline::Restored restored = pipeline_.restore(masked, input.masked.table);
  out.unresolved = std::move(restored.unresolved);
  if (restored.tree) {
    out.logical_form = pipeline_.render(*restored.tree);
    out.tree = std::move(restored.tree);
  } else {
    out.logical_form = join(restored.tokens);
  }
  return out;
}

}  // namespace semparse
