#pragma once

// LSTM encoder with dot-product attention and two decoders: a flat sequence
// decoder and a hierarchical tree decoder with parent feeding.
//
// Conventions:
//   * The decoder starts from the encoder's final per-layer (h, c).
//   * The sequence decoder (and the tree decoder's root sequence) is fed <s>
//     first; a subtree sequence is fed <( first and starts from the full
//     per-layer state snapshot taken at the step that emitted its <n>.
//   * Tree decoder layer-0 input is [embedding(prev); parent], where parent is
//     the snapshot's top-layer h for subtrees and the encoder's final
//     top-layer h for the root sequence.
//   * Dropout sits between stacked LSTM layers and on the vector entering the
//     output softmax, never on recurrent connections.

#include <span>
#include <vector>

#include "semparse/lf_tree.hpp"
#include "semparse/nn.hpp"
#include "semparse/rng.hpp"
#include "semparse/text.hpp"

namespace semparse {

using nn::Mat;
using nn::Vec;

enum class DecoderKind { kSequence, kTree };

DecoderKind decoder_kind_from_string(std::string_view name);
std::string_view to_string(DecoderKind kind);

struct ModelConfig {
  int input_vocab_size = 0;
  int output_vocab_size = 0;
  int embed_dim = 200;
  int hidden_dim = 200;
  int num_layers = 1;
  DecoderKind decoder = DecoderKind::kSequence;
  bool attention = true;

  bool operator==(const ModelConfig&) const = default;
};

class ModelParameters {
 public:
  ModelParameters() = default;
  explicit ModelParameters(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int decoder_input_dim() const;

  /// Every trainable tensor in a fixed order (the checkpoint order).
  nn::ParameterList parameters();
  std::vector<const nn::Parameter*> parameters() const;

  nn::Parameter input_embeddings;   // embed x |V_q|, one column per token
  nn::Parameter output_embeddings;  // embed x |V_a|
  std::vector<nn::LstmLayerParams> encoder_layers;
  std::vector<nn::LstmLayerParams> decoder_layers;
  nn::Parameter output_projection;  // |V_a| x n
  nn::Parameter attn_hidden;        // n x n, present only with attention
  nn::Parameter attn_context;       // n x n, present only with attention

 private:
  ModelConfig config_;
};

struct EncoderOutput {
  Eigen::MatrixXd top_hiddens;  // n x |q|; column k is the top-layer h at k
  std::vector<nn::LstmState> final_state;
};

struct DecoderState {
  std::vector<nn::LstmState> layers;
  Vec parent;  // empty for the sequence decoder
};

/// Rows are decoder steps, columns encoder positions.
struct AttentionRecord {
  std::vector<Vec> rows;
};

struct AttentionResult {
  Vec scores;
  Vec context;
};

/// Disabled unless both a generator and a positive rate are supplied.
struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool active() const { return rng != nullptr && rate > 0.0; }
};

/// Level sequences with vocabulary ids; see to_level_sequences.
struct IdLevelSequence {
  int node_id = 0;
  int parent_id = -1;
  int parent_position = -1;
  std::vector<int> tokens;

  bool operator==(const IdLevelSequence&) const = default;
};
using EncodedTree = std::vector<IdLevelSequence>;

/// Throws VocabularyError for tokens outside `vocab`.
EncodedTree encode_tree(const LfTree& tree, const Vocabulary& vocab);

// --- forward building blocks ------------------------------------------------

/// Throws InputError on empty input.
EncoderOutput encode(const ModelParameters& params, std::span<const int> tokens);

AttentionResult attend(const Vec& query, const EncoderOutput& enc);

DecoderState initial_decoder_state(const ModelParameters& params,
                                   const EncoderOutput& enc);
/// State for a subtree sequence spawned by a <n> emitted from `snapshot`.
DecoderState child_decoder_state(const DecoderState& snapshot);
DecoderState decoder_step(const ModelParameters& params,
                          const DecoderState& state, int input_token);

/// softmax(W_o tanh(W_1 h + W_2 c)) with attention, softmax(W_o h) without.
/// `scores` receives the attention row when attention is enabled.
Vec predict_distribution(const ModelParameters& params,
                         const DecoderState& state, const EncoderOutput& enc,
                         Vec* scores = nullptr);

// --- likelihoods --------------------------------------------------------------

struct LossResult {
  double loss = 0.0;      // sum of cross_entropy terms
  double log_prob = 0.0;  // sum of log p(y_t | ...)
  int num_tokens = 0;
};

/// Teacher-forced log p(a | q); `target` must end with </s>. A tree-decoder
/// model scores `target` as a lone root sequence.
double seq_log_prob(const ModelParameters& params, std::span<const int> input,
                    std::span<const int> target, DropoutContext dropout = {});

inline constexpr int kDefaultMaxDepth = 10;

/// Sum of the teacher-forced log-probabilities of every level sequence.
/// Throws StructureError for a tree deeper than max_depth.
double tree_log_prob(const ModelParameters& params, std::span<const int> input,
                     const EncodedTree& tree, DropoutContext dropout = {},
                     int max_depth = kDefaultMaxDepth);

/// Forward and backward pass: accumulates d(loss)/d(theta) into each
/// Parameter::grad and returns the loss.
LossResult seq_loss_and_gradients(ModelParameters& params,
                                  std::span<const int> input,
                                  std::span<const int> target,
                                  DropoutContext dropout = {});
LossResult tree_loss_and_gradients(ModelParameters& params,
                                   std::span<const int> input,
                                   const EncodedTree& tree,
                                   DropoutContext dropout = {},
                                   int max_depth = kDefaultMaxDepth);

// --- decoding ---------------------------------------------------------------

/// Argmax with ties broken toward the lowest index.
int argmax(const Vec& v);

struct SeqDecodeResult {
  std::vector<int> tokens;  // without </s>
  AttentionRecord attention;
  bool truncated = false;
  double log_prob = 0.0;
};

SeqDecodeResult greedy_decode_seq(const ModelParameters& params,
                                  std::span<const int> input, int max_len);

/// Length-synchronous beam search. Finished hypotheses compete with live ones
/// for beam slots; the search stops when every slot holds a finished
/// hypothesis or max_len is reached. beam = 1 reproduces greedy decoding.
SeqDecodeResult beam_decode_seq(const ModelParameters& params,
                                std::span<const int> input, int beam,
                                int max_len);

struct TreeDecodeOptions {
  int max_seq_len = 100;
  int max_depth = kDefaultMaxDepth;
  int max_nodes = 500;
  /// Decode all pending nonterminals of one depth together (matrix ops) or
  /// pop them one at a time; both produce the same tree.
  bool batched = true;
};

struct TreeDecodeResult {
  /// In node-id order. A sequence cut off by max_seq_len lacks </s>; an <n>
  /// that a cap kept from expanding has no child sequence.
  std::vector<IdLevelSequence> sequences;
  AttentionRecord attention;
  bool truncated = false;
};

TreeDecodeResult decode_tree(const ModelParameters& params,
                             std::span<const int> input,
                             const TreeDecodeOptions& options = {});

/// Builds the tree for a decode result. Unexpanded <n> become the leaf
/// "<trunc>" and missing </s> are supplied, so truncated output still yields
/// a (wrong) tree.
LfTree assemble_tree(const TreeDecodeResult& result, const Vocabulary& vocab);

}  // namespace semparse
