#include "semparse/nn.hpp"

#include <cmath>
#include <sstream>

#include "semparse/error.hpp"

namespace semparse::nn {

namespace {

std::string shape_of(const Mat& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

std::string shape_of(const Vec& v) {
  std::ostringstream os;
  os << "[" << v.size() << "]";
  return os.str();
}

template <typename A, typename B>
[[noreturn]] void throw_mismatch(const char* op, const char* lhs, const A& a,
                                 const char* rhs, const B& b) {
  throw DimensionError(std::string(op) + ": " + lhs + " " + shape_of(a) +
                       " does not conform to " + rhs + " " + shape_of(b));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Parameter::Parameter(std::string name, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(name)),
      value(Mat::Zero(rows, cols)),
      grad(Mat::Zero(rows, cols)),
      cache(Mat::Zero(rows, cols)) {}

LstmLayerParams::LstmLayerParams(const std::string& prefix, int input_dim,
                                 int hidden_dim)
    : input_weights(prefix + ".input_weights", 4 * hidden_dim, input_dim),
      recurrent_weights(prefix + ".recurrent_weights", 4 * hidden_dim,
                        hidden_dim),
      biases(prefix + ".biases", 4 * hidden_dim, 1) {}

void LstmLayerParams::append_to(ParameterList& out) {
  out.push_back(&input_weights);
  out.push_back(&recurrent_weights);
  out.push_back(&biases);
}

Vec affine(const Mat& w, const Vec& x, const Vec& b) {
  if (w.cols() != x.size()) throw_mismatch("affine", "W", w, "x", x);
  if (w.rows() != b.size()) throw_mismatch("affine", "W", w, "b", b);
  return w * x + b;
}

Vec affine_backward(Parameter& w, Parameter& b, const Vec& x, const Vec& dy) {
  if (w.cols() != x.size()) throw_mismatch("affine_backward", "W", w.value, "x", x);
  if (w.rows() != dy.size()) throw_mismatch("affine_backward", "W", w.value, "dy", dy);
  w.grad.noalias() += dy * x.transpose();
  b.grad.col(0) += dy;
  return w.value.transpose() * dy;
}

Vec softmax(const Vec& z) {
  if (z.size() == 0) throw DimensionError("softmax: empty input");
  Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double cross_entropy(const Vec& dist, int target_index) {
  if (target_index < 0 || target_index >= dist.size()) {
    throw IndexError("cross_entropy: target index " +
                     std::to_string(target_index) + " outside [0, " +
                     std::to_string(dist.size()) + ")");
  }
  return -std::log(dist[target_index] + kLogEpsilon);
}

Vec softmax_cross_entropy_backward(const Vec& probs, int target_index) {
  if (target_index < 0 || target_index >= probs.size()) {
    throw IndexError("softmax_cross_entropy_backward: target index " +
                     std::to_string(target_index) + " out of range");
  }
  // d/dz_j of -log(p_t + eps) = p_t / (p_t + eps) * (p_j - [j == t])
  const double pt = probs[target_index];
  Vec dz = probs * (pt / (pt + kLogEpsilon));
  dz[target_index] -= pt / (pt + kLogEpsilon);
  return dz;
}

LstmState lstm_cell(const LstmLayerParams& params, const Vec& x,
                    const Vec& h_prev, const Vec& c_prev, LstmCache* cache) {
  const Eigen::Index n = params.hidden_dim();
  if (x.size() != params.input_dim()) {
    throw_mismatch("lstm_cell", "input_weights", params.input_weights.value, "x", x);
  }
  if (h_prev.size() != n) {
    throw_mismatch("lstm_cell", "recurrent_weights", params.recurrent_weights.value,
                   "h_prev", h_prev);
  }
  if (c_prev.size() != n) {
    throw_mismatch("lstm_cell", "recurrent_weights", params.recurrent_weights.value,
                   "c_prev", c_prev);
  }
  Vec gates = params.input_weights.value * x;
  gates.noalias() += params.recurrent_weights.value * h_prev;
  gates += params.biases.value.col(0);
  for (Eigen::Index k = 0; k < 3 * n; ++k) gates[k] = sigmoid(gates[k]);
  gates.segment(3 * n, n) = gates.segment(3 * n, n).array().tanh();

  LstmState out;
  out.c = gates.segment(n, n).cwiseProduct(c_prev) +
          gates.segment(0, n).cwiseProduct(gates.segment(3 * n, n));
  Vec tanh_c = out.c.array().tanh();
  out.h = gates.segment(2 * n, n).cwiseProduct(tanh_c);
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gates = std::move(gates);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

void lstm_cell_batch(const LstmLayerParams& params, const Mat& x, Mat& h,
                     Mat& c) {
  const Eigen::Index n = params.hidden_dim();
  if (x.rows() != params.input_dim() || h.rows() != n || c.rows() != n ||
      x.cols() != h.cols() || h.cols() != c.cols()) {
    throw_mismatch("lstm_cell_batch", "x", x, "h", h);
  }
  Mat gates = params.input_weights.value * x;
  gates.noalias() += params.recurrent_weights.value * h;
  gates.colwise() += params.biases.value.col(0);
  gates.topRows(3 * n) =
      (1.0 / (1.0 + (-gates.topRows(3 * n).array()).exp())).matrix();
  gates.bottomRows(n) = gates.bottomRows(n).array().tanh().matrix();
  c = (gates.middleRows(n, n).array() * c.array() +
       gates.topRows(n).array() * gates.bottomRows(n).array())
          .matrix();
  h = (gates.middleRows(2 * n, n).array() * c.array().tanh()).matrix();
}

LstmGrads lstm_cell_backward(LstmLayerParams& params, const LstmCache& cache,
                             const Vec& dh, const Vec& dc) {
  const Eigen::Index n = params.hidden_dim();
  auto i = cache.gates.segment(0, n).array();
  auto f = cache.gates.segment(n, n).array();
  auto o = cache.gates.segment(2 * n, n).array();
  auto g = cache.gates.segment(3 * n, n).array();
  auto tc = cache.tanh_c.array();

  Vec dc_total = (dc.array() + dh.array() * o * (1.0 - tc * tc)).matrix();
  Vec dpre(4 * n);
  dpre.segment(0, n) = (dc_total.array() * g * i * (1.0 - i)).matrix();
  dpre.segment(n, n) = (dc_total.array() * cache.c_prev.array() * f * (1.0 - f)).matrix();
  dpre.segment(2 * n, n) = (dh.array() * tc * o * (1.0 - o)).matrix();
  dpre.segment(3 * n, n) = (dc_total.array() * i * (1.0 - g * g)).matrix();

  params.input_weights.grad.noalias() += dpre * cache.x.transpose();
  params.recurrent_weights.grad.noalias() += dpre * cache.h_prev.transpose();
  params.biases.grad.col(0) += dpre;

  LstmGrads out;
  out.dx.noalias() = params.input_weights.value.transpose() * dpre;
  out.dh_prev.noalias() = params.recurrent_weights.value.transpose() * dpre;
  out.dc_prev = (dc_total.array() * f).matrix();
  return out;
}

Vec dropout(const Vec& x, double rate, Rng& rng, bool training, Vec* mask) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    if (mask != nullptr) *mask = Vec::Ones(x.size());
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Vec m(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    m[k] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  }
  Vec out = x.cwiseProduct(m);
  if (mask != nullptr) *mask = std::move(m);
  return out;
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_gradients(std::span<Parameter* const> params, double threshold) {
  if (!(threshold > 0.0)) {
    throw ConfigError("clip threshold must be positive");
  }
  const double norm = global_grad_norm(params);
  if (norm > threshold) {
    const double scale = threshold / norm;
    for (Parameter* p : params) p->grad *= scale;
  }
  return norm;
}

void rmsprop_step(std::span<Parameter* const> params, double learning_rate,
                  double smoothing, double eps) {
  for (Parameter* p : params) {
    auto g = p->grad.array();
    auto cache = p->cache.array();
    cache = smoothing * cache + (1.0 - smoothing) * g.square();
    p->value.array() -= learning_rate * g / (cache.sqrt() + eps);
    p->grad.setZero();
  }
}

void init_uniform(std::span<Parameter* const> params, double half_range,
                  Rng& rng) {
  if (!(half_range > 0.0)) {
    throw ConfigError("init half range must be positive");
  }
  for (Parameter* p : params) {
    double* data = p->value.data();
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      data[k] = rng.uniform(-half_range, half_range);
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->grad.setZero();
}

}  // namespace semparse::nn
