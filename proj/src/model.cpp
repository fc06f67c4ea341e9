#include "semparse/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "semparse/error.hpp"

namespace semparse {

using nn::LstmCache;
using nn::LstmState;

DecoderKind decoder_kind_from_string(std::string_view name) {
  if (name == "seq2seq" || name == "seq") return DecoderKind::kSequence;
  if (name == "seq2tree" || name == "tree") return DecoderKind::kTree;
  throw ConfigError("unknown decoder '" + std::string(name) +
                    "' (expected seq2seq or seq2tree)");
}

std::string_view to_string(DecoderKind kind) {
  return kind == DecoderKind::kTree ? "seq2tree" : "seq2seq";
}

// --- parameters -----------------------------------------------------------------

ModelParameters::ModelParameters(const ModelConfig& config) : config_(config) {
  if (config.input_vocab_size <= 0 || config.output_vocab_size <= 0 ||
      config.embed_dim <= 0 || config.hidden_dim <= 0 || config.num_layers < 1) {
    throw ConfigError("model dimensions must be positive with at least one layer");
  }
  const int e = config.embed_dim;
  const int n = config.hidden_dim;
  input_embeddings = nn::Parameter("input_embeddings", e, config.input_vocab_size);
  output_embeddings = nn::Parameter("output_embeddings", e, config.output_vocab_size);
  for (int l = 0; l < config.num_layers; ++l) {
    encoder_layers.emplace_back("encoder." + std::to_string(l), l == 0 ? e : n, n);
  }
  for (int l = 0; l < config.num_layers; ++l) {
    decoder_layers.emplace_back("decoder." + std::to_string(l),
                                l == 0 ? decoder_input_dim() : n, n);
  }
  output_projection = nn::Parameter("output_projection", config.output_vocab_size, n);
  if (config.attention) {
    attn_hidden = nn::Parameter("attn_hidden", n, n);
    attn_context = nn::Parameter("attn_context", n, n);
  }
}

int ModelParameters::decoder_input_dim() const {
  return config_.embed_dim +
         (config_.decoder == DecoderKind::kTree ? config_.hidden_dim : 0);
}

nn::ParameterList ModelParameters::parameters() {
  nn::ParameterList out{&input_embeddings, &output_embeddings};
  for (auto& layer : encoder_layers) layer.append_to(out);
  for (auto& layer : decoder_layers) layer.append_to(out);
  out.push_back(&output_projection);
  if (config_.attention) {
    out.push_back(&attn_hidden);
    out.push_back(&attn_context);
  }
  return out;
}

std::vector<const nn::Parameter*> ModelParameters::parameters() const {
  auto mut = const_cast<ModelParameters*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

EncodedTree encode_tree(const LfTree& tree, const Vocabulary& vocab) {
  EncodedTree out;
  for (const LevelSequence& s : to_level_sequences(tree)) {
    out.push_back({s.node_id, s.parent_id, s.parent_position,
                   vocab.encode_strict(s.tokens)});
  }
  return out;
}

namespace {

// --- stacked LSTM step ------------------------------------------------------------

struct StackTrace {
  std::vector<LstmCache> caches;
  std::vector<Vec> masks;  // masks[l] scales h^l on its way into layer l+1
};

std::vector<LstmState> stack_forward(
    const std::vector<nn::LstmLayerParams>& layers, const Vec& x0,
    const std::vector<LstmState>& prev, const DropoutContext& dropout,
    StackTrace* trace) {
  const std::size_t depth = layers.size();
  std::vector<LstmState> next(depth);
  if (trace != nullptr) {
    trace->caches.resize(depth);
    trace->masks.assign(depth - 1, Vec());
  }
  Vec x = x0;
  for (std::size_t l = 0; l < depth; ++l) {
    next[l] = nn::lstm_cell(layers[l], x, prev[l].h, prev[l].c,
                            trace != nullptr ? &trace->caches[l] : nullptr);
    if (l + 1 < depth) {
      if (dropout.active()) {
        x = nn::dropout(next[l].h, dropout.rate, *dropout.rng, true,
                        trace != nullptr ? &trace->masks[l] : nullptr);
      } else {
        x = next[l].h;
      }
    }
  }
  return next;
}

// dh/dc hold the gradients with respect to this step's output states and are
// replaced by the gradients with respect to the previous states. Returns the
// gradient of the layer-0 input.
Vec stack_backward(std::vector<nn::LstmLayerParams>& layers,
                   const StackTrace& trace, std::vector<Vec>& dh,
                   std::vector<Vec>& dc) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    nn::LstmGrads g = nn::lstm_cell_backward(layers[l], trace.caches[l], dh[l], dc[l]);
    dh[l] = std::move(g.dh_prev);
    dc[l] = std::move(g.dc_prev);
    if (l == 0) return std::move(g.dx);
    const Vec& mask = trace.masks[l - 1];
    if (mask.size() > 0) {
      dh[l - 1] += g.dx.cwiseProduct(mask);
    } else {
      dh[l - 1] += g.dx;
    }
  }
  return Vec();
}

std::vector<LstmState> zero_states(int layers, int n) {
  return std::vector<LstmState>(layers, LstmState{Vec::Zero(n), Vec::Zero(n)});
}

std::vector<Vec> zero_vecs(int count, int n) {
  return std::vector<Vec>(count, Vec::Zero(n));
}

// --- encoder ------------------------------------------------------------------

struct EncoderTrace {
  std::vector<int> tokens;
  std::vector<StackTrace> steps;
};

EncoderOutput encode_impl(const ModelParameters& params,
                          std::span<const int> tokens,
                          const DropoutContext& dropout, EncoderTrace* trace) {
  if (tokens.empty()) throw InputError("encode: empty input sequence");
  const ModelConfig& cfg = params.config();
  std::vector<LstmState> state = zero_states(cfg.num_layers, cfg.hidden_dim);
  EncoderOutput out;
  out.top_hiddens.resize(cfg.hidden_dim, static_cast<Eigen::Index>(tokens.size()));
  if (trace != nullptr) {
    trace->tokens.assign(tokens.begin(), tokens.end());
    trace->steps.resize(tokens.size());
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int tok = tokens[t];
    if (tok < 0 || tok >= cfg.input_vocab_size) {
      throw VocabularyError("input token id " + std::to_string(tok) +
                            " outside the input vocabulary");
    }
    Vec x = params.input_embeddings.value.col(tok);
    state = stack_forward(params.encoder_layers, x, state, dropout,
                          trace != nullptr ? &trace->steps[t] : nullptr);
    out.top_hiddens.col(static_cast<Eigen::Index>(t)) = state.back().h;
  }
  out.final_state = std::move(state);
  return out;
}

void encode_backward(ModelParameters& params, const EncoderTrace& trace,
                     const Eigen::MatrixXd& dtop, std::vector<Vec> dh,
                     std::vector<Vec> dc) {
  for (std::size_t t = trace.tokens.size(); t-- > 0;) {
    dh.back() += dtop.col(static_cast<Eigen::Index>(t));
    Vec dx = stack_backward(params.encoder_layers, trace.steps[t], dh, dc);
    params.input_embeddings.grad.col(trace.tokens[t]) += dx;
  }
}

// --- output head --------------------------------------------------------------

struct HeadTrace {
  Vec scores;
  Vec context;
  Vec h_att;
  Vec mask;     // dropout multipliers; empty when dropout is off
  Vec feature;  // vector entering W_o (after dropout)
  Vec probs;
};

Vec head_forward(const ModelParameters& params, const Vec& h_top,
                 const EncoderOutput& enc, const DropoutContext& dropout,
                 HeadTrace& tr) {
  Vec feature;
  if (params.config().attention) {
    AttentionResult att = attend(h_top, enc);
    tr.scores = std::move(att.scores);
    tr.context = std::move(att.context);
    Vec pre = params.attn_hidden.value * h_top;
    pre.noalias() += params.attn_context.value * tr.context;
    tr.h_att = pre.array().tanh();
    feature = tr.h_att;
  } else {
    feature = h_top;
  }
  if (dropout.active()) {
    tr.feature = nn::dropout(feature, dropout.rate, *dropout.rng, true, &tr.mask);
  } else {
    tr.mask = Vec();
    tr.feature = std::move(feature);
  }
  tr.probs = nn::softmax(params.output_projection.value * tr.feature);
  return tr.probs;
}

// Returns d(loss)/d(h_top); accumulates into dtop for the encoder states.
Vec head_backward(ModelParameters& params, const Vec& h_top,
                  const EncoderOutput& enc, const HeadTrace& tr, const Vec& dz,
                  Eigen::MatrixXd& dtop) {
  params.output_projection.grad.noalias() += dz * tr.feature.transpose();
  Vec dfeature = params.output_projection.value.transpose() * dz;
  if (tr.mask.size() > 0) dfeature = dfeature.cwiseProduct(tr.mask);
  if (!params.config().attention) return dfeature;

  Vec dpre = (dfeature.array() * (1.0 - tr.h_att.array().square())).matrix();
  params.attn_hidden.grad.noalias() += dpre * h_top.transpose();
  params.attn_context.grad.noalias() += dpre * tr.context.transpose();
  Vec dh = params.attn_hidden.value.transpose() * dpre;
  Vec dcontext = params.attn_context.value.transpose() * dpre;

  // context = H s
  dtop.noalias() += dcontext * tr.scores.transpose();
  Vec dscores = enc.top_hiddens.transpose() * dcontext;
  // s = softmax(H^T h)
  Vec dlogits = (tr.scores.array() * (dscores.array() - tr.scores.dot(dscores))).matrix();
  dh.noalias() += enc.top_hiddens * dlogits;
  dtop.noalias() += h_top * dlogits.transpose();
  return dh;
}

// --- teacher-forced runs --------------------------------------------------------

struct StepTrace {
  int input = 0;
  int target = 0;
  StackTrace stack;
  std::vector<LstmState> states;  // after this step
  HeadTrace head;
};

struct RunTrace {
  std::vector<LstmState> init;
  Vec parent;
  int parent_run = -1;
  int parent_step = -1;
  std::vector<StepTrace> steps;
};

struct StateGrad {
  std::vector<Vec> dh;
  std::vector<Vec> dc;
};

Vec decoder_input(const ModelParameters& params, int token, const Vec& parent) {
  const ModelConfig& cfg = params.config();
  if (token < 0 || token >= cfg.output_vocab_size) {
    throw VocabularyError("output token id " + std::to_string(token) +
                          " outside the output vocabulary");
  }
  Vec x(params.decoder_input_dim());
  x.head(cfg.embed_dim) = params.output_embeddings.value.col(token);
  if (parent.size() > 0) x.tail(parent.size()) = parent;
  return x;
}

void run_forward(const ModelParameters& params, const EncoderOutput& enc,
                 RunTrace& run, int start_token, std::span<const int> targets,
                 const DropoutContext& dropout, LossResult& acc) {
  const int vocab = params.config().output_vocab_size;
  const std::vector<LstmState>* state = &run.init;
  int prev = start_token;
  run.steps.resize(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    StepTrace& st = run.steps[t];
    st.input = prev;
    st.target = targets[t];
    if (st.target < 0 || st.target >= vocab) {
      throw VocabularyError("target token id " + std::to_string(st.target) +
                            " outside the output vocabulary");
    }
    st.states = stack_forward(params.decoder_layers,
                              decoder_input(params, prev, run.parent), *state,
                              dropout, &st.stack);
    head_forward(params, st.states.back().h, enc, dropout, st.head);
    acc.loss += nn::cross_entropy(st.head.probs, st.target);
    acc.log_prob += std::log(st.head.probs[st.target]);
    ++acc.num_tokens;
    state = &st.states;
    prev = st.target;
  }
}

// Backpropagates one run. `extra` adds gradients arriving at a step's output
// state from child runs. Returns the gradient at the run's initial state and
// accumulates the parent-vector gradient into dparent.
StateGrad run_backward(ModelParameters& params, const EncoderOutput& enc,
                       const RunTrace& run, const std::map<int, StateGrad>& extra,
                       Eigen::MatrixXd& dtop, Vec& dparent) {
  const ModelConfig& cfg = params.config();
  StateGrad g{zero_vecs(cfg.num_layers, cfg.hidden_dim),
              zero_vecs(cfg.num_layers, cfg.hidden_dim)};
  for (std::size_t t = run.steps.size(); t-- > 0;) {
    const StepTrace& st = run.steps[t];
    if (auto it = extra.find(static_cast<int>(t)); it != extra.end()) {
      for (int l = 0; l < cfg.num_layers; ++l) {
        g.dh[l] += it->second.dh[l];
        g.dc[l] += it->second.dc[l];
      }
    }
    Vec dz = nn::softmax_cross_entropy_backward(st.head.probs, st.target);
    g.dh.back() += head_backward(params, st.states.back().h, enc, st.head, dz, dtop);
    Vec dx = stack_backward(params.decoder_layers, st.stack, g.dh, g.dc);
    params.output_embeddings.grad.col(st.input) += dx.head(cfg.embed_dim);
    if (run.parent.size() > 0) dparent += dx.tail(run.parent.size());
  }
  return g;
}

struct ForwardTrace {
  EncoderTrace enc_trace;
  EncoderOutput enc;
  std::vector<RunTrace> runs;
  LossResult loss;
};

ForwardTrace forward_tree(const ModelParameters& params, std::span<const int> input,
                          const EncodedTree& tree, const DropoutContext& dropout,
                          int max_depth) {
  if (tree.empty()) throw StructureError("empty target tree");
  const bool tree_mode = params.config().decoder == DecoderKind::kTree;
  if (!tree_mode && tree.size() > 1) {
    throw ConfigError("a sequence-decoder model cannot score a multi-level tree");
  }
  ForwardTrace fw;
  fw.enc = encode_impl(params, input, dropout, &fw.enc_trace);
  std::map<int, int> run_of_node;
  std::vector<int> depth(tree.size(), 1);
  fw.runs.resize(tree.size());
  for (std::size_t k = 0; k < tree.size(); ++k) {
    const IdLevelSequence& seq = tree[k];
    if (seq.tokens.empty() || seq.tokens.back() != Vocabulary::kEnd) {
      throw StructureError("level sequence " + std::to_string(seq.node_id) +
                           " does not end with </s>");
    }
    RunTrace& run = fw.runs[k];
    int start = Vocabulary::kStart;
    if (seq.parent_id < 0) {
      if (k != 0) throw StructureError("root sequence must come first");
      run.init = fw.enc.final_state;
      if (tree_mode) run.parent = fw.enc.final_state.back().h;
    } else {
      auto it = run_of_node.find(seq.parent_id);
      if (it == run_of_node.end()) {
        throw StructureError("sequence " + std::to_string(seq.node_id) +
                             " precedes its parent");
      }
      const RunTrace& parent = fw.runs[it->second];
      if (seq.parent_position < 0 ||
          static_cast<std::size_t>(seq.parent_position) >= parent.steps.size() ||
          parent.steps[seq.parent_position].target != Vocabulary::kNonterminal) {
        throw StructureError("sequence " + std::to_string(seq.node_id) +
                             " is not attached to a <n>");
      }
      depth[k] = depth[it->second] + 1;
      if (max_depth > 0 && depth[k] > max_depth) {
        throw StructureError("tree depth exceeds the cap of " +
                             std::to_string(max_depth));
      }
      run.parent_run = it->second;
      run.parent_step = seq.parent_position;
      run.init = parent.steps[seq.parent_position].states;
      run.parent = run.init.back().h;
      start = Vocabulary::kSubtreeStart;
    }
    run_of_node[seq.node_id] = static_cast<int>(k);
    run_forward(params, fw.enc, run, start, seq.tokens, dropout, fw.loss);
  }
  return fw;
}

void backward_tree(ModelParameters& params, const ForwardTrace& fw) {
  const ModelConfig& cfg = params.config();
  Eigen::MatrixXd dtop = Eigen::MatrixXd::Zero(fw.enc.top_hiddens.rows(),
                                               fw.enc.top_hiddens.cols());
  StateGrad final_grad{zero_vecs(cfg.num_layers, cfg.hidden_dim),
                       zero_vecs(cfg.num_layers, cfg.hidden_dim)};
  std::vector<std::map<int, StateGrad>> extra(fw.runs.size());
  for (std::size_t r = fw.runs.size(); r-- > 0;) {
    const RunTrace& run = fw.runs[r];
    Vec dparent = Vec::Zero(run.parent.size());
    StateGrad g = run_backward(params, fw.enc, run, extra[r], dtop, dparent);
    StateGrad* target = &final_grad;
    if (run.parent_run >= 0) {
      auto [it, inserted] = extra[run.parent_run].try_emplace(run.parent_step);
      if (inserted) {
        it->second = StateGrad{zero_vecs(cfg.num_layers, cfg.hidden_dim),
                               zero_vecs(cfg.num_layers, cfg.hidden_dim)};
      }
      target = &it->second;
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      target->dh[l] += g.dh[l];
      target->dc[l] += g.dc[l];
    }
    if (dparent.size() > 0) target->dh.back() += dparent;
  }
  encode_backward(params, fw.enc_trace, dtop, std::move(final_grad.dh),
                  std::move(final_grad.dc));
}

EncodedTree as_single_sequence(std::span<const int> target) {
  return {IdLevelSequence{0, -1, -1, std::vector<int>(target.begin(), target.end())}};
}

}  // namespace

// --- public forward API ---------------------------------------------------------

EncoderOutput encode(const ModelParameters& params, std::span<const int> tokens) {
  return encode_impl(params, tokens, DropoutContext{}, nullptr);
}

AttentionResult attend(const Vec& query, const EncoderOutput& enc) {
  AttentionResult out;
  out.scores = nn::softmax(enc.top_hiddens.transpose() * query);
  out.context = enc.top_hiddens * out.scores;
  return out;
}

DecoderState initial_decoder_state(const ModelParameters& params,
                                   const EncoderOutput& enc) {
  DecoderState s;
  s.layers = enc.final_state;
  if (params.config().decoder == DecoderKind::kTree) {
    s.parent = enc.final_state.back().h;
  }
  return s;
}

DecoderState child_decoder_state(const DecoderState& snapshot) {
  DecoderState s;
  s.layers = snapshot.layers;
  s.parent = snapshot.layers.back().h;
  return s;
}

DecoderState decoder_step(const ModelParameters& params,
                          const DecoderState& state, int input_token) {
  DecoderState next;
  next.layers = stack_forward(params.decoder_layers,
                              decoder_input(params, input_token, state.parent),
                              state.layers, DropoutContext{}, nullptr);
  next.parent = state.parent;
  return next;
}

Vec predict_distribution(const ModelParameters& params,
                         const DecoderState& state, const EncoderOutput& enc,
                         Vec* scores) {
  HeadTrace tr;
  head_forward(params, state.layers.back().h, enc, DropoutContext{}, tr);
  if (scores != nullptr) *scores = std::move(tr.scores);
  return std::move(tr.probs);
}

double seq_log_prob(const ModelParameters& params, std::span<const int> input,
                    std::span<const int> target, DropoutContext dropout) {
  return forward_tree(params, input, as_single_sequence(target), dropout, 0).loss.log_prob;
}

double tree_log_prob(const ModelParameters& params, std::span<const int> input,
                     const EncodedTree& tree, DropoutContext dropout,
                     int max_depth) {
  if (params.config().decoder != DecoderKind::kTree) {
    throw ConfigError("tree_log_prob requires a tree-decoder model");
  }
  return forward_tree(params, input, tree, dropout, max_depth).loss.log_prob;
}

LossResult seq_loss_and_gradients(ModelParameters& params,
                                  std::span<const int> input,
                                  std::span<const int> target,
                                  DropoutContext dropout) {
  ForwardTrace fw = forward_tree(params, input, as_single_sequence(target), dropout, 0);
  backward_tree(params, fw);
  return fw.loss;
}

LossResult tree_loss_and_gradients(ModelParameters& params,
                                   std::span<const int> input,
                                   const EncodedTree& tree,
                                   DropoutContext dropout, int max_depth) {
  if (params.config().decoder != DecoderKind::kTree) {
    throw ConfigError("tree_loss_and_gradients requires a tree-decoder model");
  }
  ForwardTrace fw = forward_tree(params, input, tree, dropout, max_depth);
  backward_tree(params, fw);
  return fw.loss;
}

// --- decoding -----------------------------------------------------------------

int argmax(const Vec& v) {
  int best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = static_cast<int>(k);
  }
  return best;
}

SeqDecodeResult greedy_decode_seq(const ModelParameters& params,
                                  std::span<const int> input, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  const EncoderOutput enc = encode(params, input);
  DecoderState state = initial_decoder_state(params, enc);
  SeqDecodeResult out;
  int prev = Vocabulary::kStart;
  for (int step = 0; step < max_len; ++step) {
    state = decoder_step(params, state, prev);
    Vec row;
    Vec probs = predict_distribution(params, state, enc, &row);
    const int tok = argmax(probs);
    out.log_prob += std::log(probs[tok]);
    if (row.size() > 0) out.attention.rows.push_back(std::move(row));
    if (tok == Vocabulary::kEnd) return out;
    out.tokens.push_back(tok);
    prev = tok;
  }
  out.truncated = true;
  return out;
}

SeqDecodeResult beam_decode_seq(const ModelParameters& params,
                                std::span<const int> input, int beam,
                                int max_len) {
  if (beam < 1) throw ConfigError("beam size must be at least 1");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  struct Hyp {
    std::vector<int> tokens;
    DecoderState state;
    double score = 0.0;
    bool finished = false;
    int last = Vocabulary::kStart;
    AttentionRecord attention;
  };
  struct Candidate {
    double score;
    int hyp;
    double token_log_prob;
    int token;  // -1 carries a finished hypothesis over unchanged
  };
  const EncoderOutput enc = encode(params, input);
  std::vector<Hyp> hyps(1);
  hyps[0].state = initial_decoder_state(params, enc);

  for (int step = 0; step < max_len; ++step) {
    std::vector<Candidate> cands;
    std::vector<DecoderState> next_states(hyps.size());
    std::vector<Vec> rows(hyps.size());
    for (std::size_t h = 0; h < hyps.size(); ++h) {
      const Hyp& hyp = hyps[h];
      if (hyp.finished) {
        cands.push_back({hyp.score, static_cast<int>(h), 0.0, -1});
        continue;
      }
      next_states[h] = decoder_step(params, hyp.state, hyp.last);
      Vec probs = predict_distribution(params, next_states[h], enc, &rows[h]);
      for (Eigen::Index v = 0; v < probs.size(); ++v) {
        const double lp = std::log(probs[v]);
        cands.push_back({hyp.score + lp, static_cast<int>(h), lp, static_cast<int>(v)});
      }
    }
    const std::size_t keep = std::min<std::size_t>(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        if (a.token_log_prob != b.token_log_prob) {
                          return a.token_log_prob > b.token_log_prob;
                        }
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      Hyp h = hyps[c.hyp];
      if (c.token >= 0) {
        h.state = next_states[c.hyp];
        h.score = c.score;
        if (rows[c.hyp].size() > 0) h.attention.rows.push_back(rows[c.hyp]);
        if (c.token == Vocabulary::kEnd) {
          h.finished = true;
        } else {
          h.tokens.push_back(c.token);
          h.last = c.token;
        }
      }
      next.push_back(std::move(h));
    }
    hyps = std::move(next);
    if (std::all_of(hyps.begin(), hyps.end(), [](const Hyp& h) { return h.finished; })) {
      break;
    }
  }
  // hyps are sorted best-first; prefer the best finished one.
  const Hyp* best = nullptr;
  for (const Hyp& h : hyps) {
    if (h.finished) {
      best = &h;
      break;
    }
  }
  SeqDecodeResult out;
  if (best == nullptr) {
    best = &hyps.front();
    out.truncated = true;
  }
  out.tokens = best->tokens;
  out.attention = best->attention;
  out.log_prob = best->score;
  return out;
}

namespace {

struct TreeJob {
  int node_id = 0;
  int depth = 1;
  int parent_id = -1;
  int parent_position = -1;
  DecoderState state;
  int start_token = Vocabulary::kSubtreeStart;
};

struct JobOutput {
  std::vector<int> tokens;
  std::vector<std::pair<int, DecoderState>> snapshots;  // (<n> position, state)
  std::vector<Vec> rows;
  bool finished = false;
};

JobOutput decode_job(const ModelParameters& params, const EncoderOutput& enc,
                     const TreeJob& job, int max_len) {
  JobOutput out;
  DecoderState state = job.state;
  int prev = job.start_token;
  for (int step = 0; step < max_len; ++step) {
    state = decoder_step(params, state, prev);
    Vec row;
    const int tok = argmax(predict_distribution(params, state, enc, &row));
    if (row.size() > 0) out.rows.push_back(std::move(row));
    if (tok == Vocabulary::kNonterminal) {
      out.snapshots.emplace_back(static_cast<int>(out.tokens.size()), state);
    }
    out.tokens.push_back(tok);
    if (tok == Vocabulary::kEnd) {
      out.finished = true;
      break;
    }
    prev = tok;
  }
  return out;
}

std::vector<JobOutput> decode_job_batch(const ModelParameters& params,
                                        const EncoderOutput& enc,
                                        std::span<const TreeJob> jobs,
                                        int max_len) {
  const ModelConfig& cfg = params.config();
  const int n = cfg.hidden_dim;
  const int e = cfg.embed_dim;
  const auto batch = static_cast<Eigen::Index>(jobs.size());
  std::vector<Mat> h(cfg.num_layers, Mat(n, batch));
  std::vector<Mat> c(cfg.num_layers, Mat(n, batch));
  Mat parent(n, batch);
  std::vector<int> prev(jobs.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const TreeJob& job = jobs[b];
    for (int l = 0; l < cfg.num_layers; ++l) {
      h[l].col(b) = job.state.layers[l].h;
      c[l].col(b) = job.state.layers[l].c;
    }
    parent.col(b) = job.state.parent;
    prev[b] = job.start_token;
  }

  std::vector<JobOutput> outs(jobs.size());
  std::vector<bool> active(jobs.size(), true);
  std::size_t remaining = jobs.size();
  Mat x(params.decoder_input_dim(), batch);
  for (int step = 0; step < max_len && remaining > 0; ++step) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      x.col(b).head(e) = params.output_embeddings.value.col(prev[b]);
      x.col(b).tail(n) = parent.col(b);
    }
    Mat layer_in = x;
    for (int l = 0; l < cfg.num_layers; ++l) {
      nn::lstm_cell_batch(params.decoder_layers[l], layer_in, h[l], c[l]);
      layer_in = h[l];
    }
    const Mat& top = h.back();
    Eigen::MatrixXd scores;
    Mat feature;
    if (cfg.attention) {
      Eigen::MatrixXd logits = enc.top_hiddens.transpose() * top;
      scores.resize(logits.rows(), logits.cols());
      for (Eigen::Index b = 0; b < batch; ++b) {
        scores.col(b) = nn::softmax(logits.col(b));
      }
      Mat context = enc.top_hiddens * scores;
      Mat pre = params.attn_hidden.value * top;
      pre.noalias() += params.attn_context.value * context;
      feature = pre.array().tanh().matrix();
    } else {
      feature = top;
    }
    Mat logits = params.output_projection.value * feature;
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (!active[b]) continue;
      JobOutput& out = outs[b];
      const int tok = argmax(nn::softmax(logits.col(b)));
      if (cfg.attention) out.rows.push_back(scores.col(b));
      if (tok == Vocabulary::kNonterminal) {
        DecoderState snap;
        snap.parent = parent.col(b);
        for (int l = 0; l < cfg.num_layers; ++l) {
          snap.layers.push_back({h[l].col(b), c[l].col(b)});
        }
        out.snapshots.emplace_back(static_cast<int>(out.tokens.size()), std::move(snap));
      }
      out.tokens.push_back(tok);
      if (tok == Vocabulary::kEnd) {
        out.finished = true;
        active[b] = false;
        --remaining;
      }
      prev[b] = tok;
    }
  }
  return outs;
}

}  // namespace

TreeDecodeResult decode_tree(const ModelParameters& params,
                             std::span<const int> input,
                             const TreeDecodeOptions& options) {
  if (params.config().decoder != DecoderKind::kTree) {
    throw ConfigError("decode_tree requires a tree-decoder model");
  }
  if (options.max_seq_len < 1 || options.max_depth < 1 || options.max_nodes < 1) {
    throw ConfigError("tree decoding caps must be positive");
  }
  const EncoderOutput enc = encode(params, input);
  TreeDecodeResult result;
  std::deque<TreeJob> queue;
  int node_count = 1;

  auto absorb = [&](const TreeJob& job, JobOutput& out) {
    result.sequences.push_back(
        {job.node_id, job.parent_id, job.parent_position, std::move(out.tokens)});
    for (Vec& row : out.rows) result.attention.rows.push_back(std::move(row));
    if (!out.finished) result.truncated = true;
    for (auto& [pos, snapshot] : out.snapshots) {
      if (job.depth + 1 > options.max_depth || node_count >= options.max_nodes) {
        result.truncated = true;
        continue;
      }
      TreeJob child;
      child.node_id = node_count++;
      child.depth = job.depth + 1;
      child.parent_id = job.node_id;
      child.parent_position = pos;
      child.state = child_decoder_state(snapshot);
      queue.push_back(std::move(child));
    }
  };

  TreeJob root;
  root.node_id = 0;
  root.state = initial_decoder_state(params, enc);
  root.start_token = Vocabulary::kStart;
  JobOutput root_out = decode_job(params, enc, root, options.max_seq_len);
  absorb(root, root_out);

  while (!queue.empty()) {
    if (options.batched) {
      std::vector<TreeJob> level;
      const int depth = queue.front().depth;
      while (!queue.empty() && queue.front().depth == depth) {
        level.push_back(std::move(queue.front()));
        queue.pop_front();
      }
      std::vector<JobOutput> outs =
          decode_job_batch(params, enc, level, options.max_seq_len);
      for (std::size_t k = 0; k < level.size(); ++k) absorb(level[k], outs[k]);
    } else {
      TreeJob job = std::move(queue.front());
      queue.pop_front();
      JobOutput out = decode_job(params, enc, job, options.max_seq_len);
      absorb(job, out);
    }
  }
  return result;
}

LfTree assemble_tree(const TreeDecodeResult& result, const Vocabulary& vocab) {
  std::map<std::pair<int, int>, bool> expanded;
  for (const IdLevelSequence& s : result.sequences) {
    if (s.parent_id >= 0) expanded[{s.parent_id, s.parent_position}] = true;
  }
  std::vector<LevelSequence> seqs;
  for (const IdLevelSequence& s : result.sequences) {
    LevelSequence ls{s.node_id, s.parent_id, s.parent_position, {}};
    for (std::size_t p = 0; p < s.tokens.size(); ++p) {
      const int id = s.tokens[p];
      if (id == Vocabulary::kEnd) break;
      if (id == Vocabulary::kNonterminal) {
        ls.tokens.push_back(expanded.count({s.node_id, static_cast<int>(p)})
                                ? std::string(Vocabulary::kNonterminalToken)
                                : std::string("<trunc>"));
      } else if (id < Vocabulary::kNumSpecials) {
        ls.tokens.emplace_back(Vocabulary::kUnkToken);
      } else {
        ls.tokens.push_back(vocab.token(id));
      }
    }
    if (ls.tokens.empty()) ls.tokens.emplace_back("<empty>");
    ls.tokens.emplace_back(Vocabulary::kEndToken);
    seqs.push_back(std::move(ls));
  }
  return from_level_sequences(seqs);
}

}  // namespace semparse
