#pragma once

// Dense kernels with explicit forward and backward passes, plus the RMSProp
// optimizer and global-norm gradient clipping.
//
// All arithmetic is double precision. Matrices are row-major so that
// Parameter storage matches the checkpoint payload layout.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semparse/rng.hpp"

namespace semparse::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor with its gradient accumulator and RMSProp cache.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat cache;

  Parameter() = default;
  Parameter(std::string name, Eigen::Index rows, Eigen::Index cols);

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

using ParameterList = std::vector<Parameter*>;

/// Gate blocks are stacked as [input, forget, output, candidate], each of
/// height hidden_dim, in both weight matrices and the bias.
struct LstmLayerParams {
  Parameter input_weights;      // 4n x input_dim
  Parameter recurrent_weights;  // 4n x n
  Parameter biases;             // 4n x 1

  LstmLayerParams() = default;
  LstmLayerParams(const std::string& prefix, int input_dim, int hidden_dim);

  int input_dim() const { return static_cast<int>(input_weights.cols()); }
  int hidden_dim() const { return static_cast<int>(recurrent_weights.cols()); }
  void append_to(ParameterList& out);
};

struct LstmState {
  Vec h;
  Vec c;
};

/// Everything lstm_cell_backward needs from the forward pass.
struct LstmCache {
  Vec x;
  Vec h_prev;
  Vec c_prev;
  Vec gates;  // activated [i; f; o; g]
  Vec c;
  Vec tanh_c;
};

struct LstmGrads {
  Vec dx;
  Vec dh_prev;
  Vec dc_prev;
};

// --- affine -----------------------------------------------------------------

Vec affine(const Mat& w, const Vec& x, const Vec& b);
/// Accumulates dW and db; returns dx.
Vec affine_backward(Parameter& w, Parameter& b, const Vec& x, const Vec& dy);

// --- softmax / cross entropy ------------------------------------------------

Vec softmax(const Vec& z);

/// Guards log(0) in cross_entropy.
inline constexpr double kLogEpsilon = 1e-12;

double cross_entropy(const Vec& dist, int target_index);
/// Gradient of cross_entropy(softmax(z), target) with respect to z, given the
/// already computed probs = softmax(z). Exact including the kLogEpsilon term.
Vec softmax_cross_entropy_backward(const Vec& probs, int target_index);

// --- LSTM -------------------------------------------------------------------

/// c = f*c_prev + i*g, h = o*tanh(c), with all four gates computed from one
/// affine map of [x; h_prev]. `cache` may be null at inference time.
LstmState lstm_cell(const LstmLayerParams& params, const Vec& x,
                    const Vec& h_prev, const Vec& c_prev,
                    LstmCache* cache = nullptr);

/// Batched inference step: each column of x/h/c is an independent cell.
void lstm_cell_batch(const LstmLayerParams& params, const Mat& x, Mat& h,
                     Mat& c);

LstmGrads lstm_cell_backward(LstmLayerParams& params, const LstmCache& cache,
                             const Vec& dh, const Vec& dc);

// --- dropout ----------------------------------------------------------------

/// Inverted dropout. When `mask` is non-null it receives the per-entry
/// multiplier (0 or 1/(1-rate)) so the backward pass can replay it.
Vec dropout(const Vec& x, double rate, Rng& rng, bool training,
            Vec* mask = nullptr);

// --- optimisation -----------------------------------------------------------

/// Global L2-norm clipping. Returns the norm measured before clipping.
double clip_gradients(std::span<Parameter* const> params, double threshold);

double global_grad_norm(std::span<Parameter* const> params);

void rmsprop_step(std::span<Parameter* const> params, double learning_rate,
                  double smoothing, double eps = 1e-8);

void init_uniform(std::span<Parameter* const> params, double half_range,
                  Rng& rng);

void zero_grads(std::span<Parameter* const> params);

}  // namespace semparse::nn
