// cvdetect/nn.h

// Copyright 2026  The cvdetect Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CVDETECT_NN_H_
#define CVDETECT_NN_H_

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cvdetect/matrix.h"
#include "cvdetect/rng.h"

namespace cvdetect {

/// A trainable tensor and its gradient accumulator (same shape).
struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(int rows, int cols) : value(rows, cols), grad(rows, cols) {}

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  void InitGlorot(Rng &rng, int fan_in, int fan_out);
};

// y += W x
void MatVecAdd(const Matrix &w, std::span<const double> x, std::span<double> y);
// dx += W^T dy
void MatTransVecAdd(const Matrix &w, std::span<const double> dy, std::span<double> dx);
// G += dy x^T
void OuterAdd(Matrix &g, std::span<const double> dy, std::span<const double> x);

inline double Sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

enum class Direction { kForward, kBackward };

/**
   Gated recurrent unit, zero initial state:

     z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
     r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
     c_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
     h_t = (1 - z_t) * h_{t-1} + z_t * c_t

   The reset gate multiplies the previous state before the recurrent
   matrix. A backward-direction layer runs over the reversed sequence; its
   output row t is still aligned with input row t.
 */
struct GruLayer {
  int input_dim = 0;
  int hidden_dim = 0;
  Param w_z, u_z, b_z;
  Param w_r, u_r, b_r;
  Param w_h, u_h, b_h;

  GruLayer() = default;
  GruLayer(int input_dim, int hidden_dim);

  void Init(Rng &rng);
  std::vector<Param *> Params();
};

/// Activations kept by GruForward for GruBackward, indexed by time step.
struct GruCache {
  Direction direction = Direction::kForward;
  Matrix input;
  Matrix z, r, cand, h;
};

/// T x input_dim -> T x hidden_dim.
Matrix GruForward(const GruLayer &layer, const Matrix &seq, Direction direction,
                  GruCache *cache = nullptr);

/// Backpropagation through time. Accumulates parameter gradients into
/// `layer` and returns d(loss)/d(input).
Matrix GruBackward(GruLayer &layer, const GruCache &cache, const Matrix &d_output);

/// y = W x + b.
struct Dense {
  Param w;  // out x in
  Param b;  // out x 1

  Dense() = default;
  Dense(int input_dim, int output_dim) : w(output_dim, input_dim), b(output_dim, 1) {}

  int input_dim() const { return w.value.cols(); }
  int output_dim() const { return w.value.rows(); }

  void Init(Rng &rng);
  std::vector<double> Forward(std::span<const double> x) const;
  /// Accumulates dW, db; returns dx.
  std::vector<double> Backward(std::span<const double> x, std::span<const double> dy);
  std::vector<Param *> Params() { return {&w, &b}; }
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Numerically stable softmax (max-shifted).
std::vector<double> Softmax(std::span<const double> logits);

/// -log softmax(logits)[target]; grad w.r.t. logits.
LossAndGrad SoftmaxCrossEntropy(std::span<const double> logits, int target);

constexpr double kProbClamp = 1e-7;

/// -[y log p + (1-y) log(1-p)] with p clamped to [1e-7, 1-1e-7]. The
/// returned derivative is w.r.t. p (zero where the clamp is active).
struct BinaryLoss {
  double loss = 0.0;
  double d_prob = 0.0;
};
BinaryLoss BinaryCrossEntropy(double prob, int label);

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise 1/(1-rate). All ones when not training or rate == 0.
std::vector<double> DropoutMask(size_t n, double rate, Rng &rng, bool training);
std::vector<double> Dropout(std::span<const double> x, double rate, Rng &rng,
                            bool training);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamOptions options;
  int64_t step = 0;
  std::vector<Matrix> m;  // first moments, one per parameter
  std::vector<Matrix> v;  // second moments
};

/// One Adam update with decoupled weight decay: every value is first
/// scaled by (1 - lr * wd), then moved by the bias-corrected Adam step.
/// Gradients are zeroed afterwards. Throws RuntimeError on a non-finite
/// gradient, leaving parameters untouched.
void AdamStep(std::span<Param *const> params, AdamState &state);

struct GradCheckOptions {
  double eps = 1e-5;
  /// Check at most this many entries (chosen uniformly at random); 0
  /// means all. Sampling is only used when there are more entries.
  size_t max_entries = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  size_t entries_checked = 0;
};

/// Compares analytic gradients against central differences
/// (L(p+eps) - L(p-eps)) / (2 eps). `loss` evaluates the model at the
/// current parameter values; `backprop` must accumulate gradients into
/// the (zeroed) Param::grad buffers. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult GradCheck(std::span<Param *const> params,
                          const std::function<double()> &loss,
                          const std::function<void()> &backprop,
                          const GradCheckOptions &options = {});

}  // namespace cvdetect

#endif  // CVDETECT_NN_H_
