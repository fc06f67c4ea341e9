#pragma once

// Random tiny models and a scalar-loop reference implementation of the
// encoder, attention and decoder, used as independent oracles.

#include <cmath>
#include <vector>

#include "semparse/lf_tree.hpp"
#include "semparse/model.hpp"
#include "semparse/rng.hpp"

namespace semparse::testing {

struct TinySpec {
  DecoderKind decoder = DecoderKind::kSequence;
  bool attention = true;
  int layers = 1;
  int input_vocab = 9;
  int output_vocab = 8;
  int embed = 3;
  int hidden = 4;
  double scale = 0.5;
};

inline ModelParameters random_model(const TinySpec& spec, Rng& rng) {
  ModelConfig cfg;
  cfg.input_vocab_size = spec.input_vocab;
  cfg.output_vocab_size = spec.output_vocab;
  cfg.embed_dim = spec.embed;
  cfg.hidden_dim = spec.hidden;
  cfg.num_layers = spec.layers;
  cfg.decoder = spec.decoder;
  cfg.attention = spec.attention;
  ModelParameters m(cfg);
  nn::init_uniform(m.parameters(), spec.scale, rng);
  return m;
}

inline std::vector<int> random_input(Rng& rng, int vocab, int min_len, int max_len) {
  const int len = min_len + static_cast<int>(rng.below(max_len - min_len + 1));
  std::vector<int> out(len);
  for (int& t : out) t = static_cast<int>(rng.below(vocab));
  return out;
}

/// Output vocabulary with specials followed by t0..t{k-1}.
inline Vocabulary toy_vocab(int k) {
  std::vector<std::string> tokens{"<unk>", "<s>", "</s>", "<n>", "<("};
  for (int i = 0; i < k; ++i) tokens.push_back("t" + std::to_string(i));
  return Vocabulary::from_tokens(tokens, 1);
}

inline LfNode random_node(Rng& rng, const Vocabulary& vocab, int depth_left) {
  const int first = Vocabulary::kNumSpecials;
  const int count = static_cast<int>(vocab.size()) - first;
  if (depth_left <= 1 || rng.uniform() < 0.6) {
    return LfNode::leaf(vocab.token(first + static_cast<int>(rng.below(count))));
  }
  std::vector<LfNode> kids;
  const int width = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < width; ++k) kids.push_back(random_node(rng, vocab, depth_left - 1));
  return LfNode::subtree(std::move(kids));
}

inline LfTree random_tree(Rng& rng, const Vocabulary& vocab, int max_depth) {
  LfTree t;
  const int width = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < width; ++k) t.root_children.push_back(random_node(rng, vocab, max_depth));
  return t;
}

// --- scalar reference ---------------------------------------------------------
// Templated on the scalar type so gradient checks can evaluate the loss in
// long double.

namespace ref {

template <typename T>
using V = std::vector<T>;

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
V<T> matvec(const nn::Mat& w, const V<T>& x) {
  V<T> out(w.rows(), T(0));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    T s = 0;
    for (Eigen::Index c = 0; c < w.cols(); ++c) s += static_cast<T>(w(r, c)) * x[c];
    out[r] = s;
  }
  return out;
}

template <typename T>
V<T> softmax(const V<T>& z) {
  T m = z[0];
  for (T v : z) m = std::max(m, v);
  V<T> out(z.size());
  T total = 0;
  for (std::size_t k = 0; k < z.size(); ++k) total += out[k] = std::exp(z[k] - m);
  for (T& v : out) v /= total;
  return out;
}

template <typename T>
struct Cell {
  V<T> h, c;
};

template <typename T>
Cell<T> lstm(const nn::LstmLayerParams& p, const V<T>& x, const Cell<T>& prev) {
  const int n = p.hidden_dim();
  V<T> a = matvec(p.input_weights.value, x);
  V<T> b = matvec(p.recurrent_weights.value, prev.h);
  Cell<T> out{V<T>(n), V<T>(n)};
  for (int j = 0; j < n; ++j) {
    auto pre = [&](int g) {
      return a[g * n + j] + b[g * n + j] + static_cast<T>(p.biases.value(g * n + j, 0));
    };
    const T c = sigmoid(pre(1)) * prev.c[j] + sigmoid(pre(0)) * std::tanh(pre(3));
    out.c[j] = c;
    out.h[j] = sigmoid(pre(2)) * std::tanh(c);
  }
  return out;
}

template <typename T>
V<T> column(const nn::Mat& m, int col) {
  V<T> out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[r] = static_cast<T>(m(r, col));
  return out;
}

template <typename T>
struct State {
  std::vector<Cell<T>> cells;
  V<T> parent;
};

template <typename T>
struct Encoded {
  std::vector<V<T>> tops;
  State<T> final_state;
};

template <typename T = double>
Encoded<T> encode(const ModelParameters& m, const std::vector<int>& input) {
  const auto& cfg = m.config();
  std::vector<Cell<T>> cells(cfg.num_layers,
                             Cell<T>{V<T>(cfg.hidden_dim, T(0)), V<T>(cfg.hidden_dim, T(0))});
  Encoded<T> out;
  for (int tok : input) {
    V<T> x = column<T>(m.input_embeddings.value, tok);
    for (int l = 0; l < cfg.num_layers; ++l) {
      cells[l] = lstm(m.encoder_layers[l], x, cells[l]);
      x = cells[l].h;
    }
    out.tops.push_back(cells.back().h);
  }
  out.final_state.cells = cells;
  if (cfg.decoder == DecoderKind::kTree) out.final_state.parent = cells.back().h;
  return out;
}

template <typename T>
State<T> step(const ModelParameters& m, const State<T>& s, int token) {
  V<T> x = column<T>(m.output_embeddings.value, token);
  x.insert(x.end(), s.parent.begin(), s.parent.end());
  State<T> out{s.cells, s.parent};
  for (std::size_t l = 0; l < s.cells.size(); ++l) {
    out.cells[l] = lstm(m.decoder_layers[l], x, s.cells[l]);
    x = out.cells[l].h;
  }
  return out;
}

template <typename T>
V<T> distribution(const ModelParameters& m, const State<T>& s, const Encoded<T>& enc) {
  const V<T>& h = s.cells.back().h;
  V<T> feature = h;
  if (m.config().attention) {
    V<T> dots;
    for (const V<T>& k : enc.tops) {
      T d = 0;
      for (std::size_t j = 0; j < h.size(); ++j) d += k[j] * h[j];
      dots.push_back(d);
    }
    V<T> att = softmax(dots);
    V<T> ctx(h.size(), T(0));
    for (std::size_t k = 0; k < enc.tops.size(); ++k) {
      for (std::size_t j = 0; j < h.size(); ++j) ctx[j] += att[k] * enc.tops[k][j];
    }
    V<T> a = matvec(m.attn_hidden.value, h);
    V<T> b = matvec(m.attn_context.value, ctx);
    for (std::size_t j = 0; j < h.size(); ++j) feature[j] = std::tanh(a[j] + b[j]);
  }
  return softmax(matvec(m.output_projection.value, feature));
}

/// log p(target | input) as a product of per-step distributions.
template <typename T = double>
T seq_log_prob(const ModelParameters& m, const std::vector<int>& input,
               const std::vector<int>& target) {
  Encoded<T> enc = encode<T>(m, input);
  State<T> s = enc.final_state;
  int prev = Vocabulary::kStart;
  T total = 0;
  for (int tok : target) {
    s = step(m, s, prev);
    total += std::log(distribution(m, s, enc)[tok]);
    prev = tok;
  }
  return total;
}

/// Scores each level sequence in a separate pass, starting children from the
/// states recorded while scoring their parents.
template <typename T = double>
T tree_log_prob(const ModelParameters& m, const std::vector<int>& input,
                const EncodedTree& tree) {
  Encoded<T> enc = encode<T>(m, input);
  std::vector<std::vector<State<T>>> recorded(tree.size());
  T total = 0;
  for (std::size_t k = 0; k < tree.size(); ++k) {
    const IdLevelSequence& seq = tree[k];
    State<T> s;
    int prev;
    if (seq.parent_id < 0) {
      s = enc.final_state;
      prev = Vocabulary::kStart;
    } else {
      s = recorded[seq.parent_id][seq.parent_position];
      s.parent = s.cells.back().h;
      prev = Vocabulary::kSubtreeStart;
    }
    for (int tok : seq.tokens) {
      s = step(m, s, prev);
      recorded[k].push_back(s);
      total += std::log(distribution(m, s, enc)[tok]);
      prev = tok;
    }
  }
  return total;
}

}  // namespace ref
}  // namespace semparse::testing
