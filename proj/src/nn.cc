// src/nn.cc

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

#include "cvdetect/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvdetect/error.h"

namespace cvdetect {

void Param::InitGlorot(Rng &rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double &v : value.values()) v = rng.Uniform(-limit, limit);
  grad.SetZero();
}

void MatVecAdd(const Matrix &w, std::span<const double> x, std::span<double> y) {
  const int rows = w.rows(), cols = w.cols();
  const double *pw = w.values().data();
  for (int i = 0; i < rows; ++i) {
    const double *row = pw + static_cast<size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

void MatTransVecAdd(const Matrix &w, std::span<const double> dy, std::span<double> dx) {
  const int rows = w.rows(), cols = w.cols();
  const double *pw = w.values().data();
  for (int i = 0; i < rows; ++i) {
    const double g = dy[i];
    if (g == 0.0) continue;
    const double *row = pw + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) dx[j] += row[j] * g;
  }
}

void OuterAdd(Matrix &g, std::span<const double> dy, std::span<const double> x) {
  const int rows = g.rows(), cols = g.cols();
  double *pg = g.values().data();
  for (int i = 0; i < rows; ++i) {
    const double d = dy[i];
    if (d == 0.0) continue;
    double *row = pg + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) row[j] += d * x[j];
  }
}

GruLayer::GruLayer(int in, int hid)
    : input_dim(in), hidden_dim(hid),
      w_z(hid, in), u_z(hid, hid), b_z(hid, 1),
      w_r(hid, in), u_r(hid, hid), b_r(hid, 1),
      w_h(hid, in), u_h(hid, hid), b_h(hid, 1) {}

void GruLayer::Init(Rng &rng) {
  for (Param *w : {&w_z, &w_r, &w_h}) w->InitGlorot(rng, input_dim, hidden_dim);
  for (Param *u : {&u_z, &u_r, &u_h}) u->InitGlorot(rng, hidden_dim, hidden_dim);
  for (Param *b : {&b_z, &b_r, &b_h}) {
    b->value.SetZero();
    b->grad.SetZero();
  }
}

std::vector<Param *> GruLayer::Params() {
  return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h};
}

Matrix GruForward(const GruLayer &layer, const Matrix &seq, Direction direction,
                  GruCache *cache) {
  const int steps = seq.rows(), hid = layer.hidden_dim;
  if (steps < 1) throw ValidationError("GRU input sequence is empty");
  if (seq.cols() != layer.input_dim)
    throw ValidationError("GRU input dim " + std::to_string(seq.cols()) +
                          " does not match layer (" + std::to_string(layer.input_dim) + ")");
  Matrix z(steps, hid), r(steps, hid), cand(steps, hid), h(steps, hid);
  std::vector<double> zero(hid, 0.0), rh(hid), az(hid), ar(hid), ah(hid);
  const bool fwd = direction == Direction::kForward;
  for (int s = 0; s < steps; ++s) {
    const int t = fwd ? s : steps - 1 - s;
    std::span<const double> h_prev =
        s == 0 ? std::span<const double>(zero) : h.Row(fwd ? t - 1 : t + 1);
    auto x = seq.Row(t);
    for (int i = 0; i < hid; ++i) {
      az[i] = layer.b_z.value(i, 0);
      ar[i] = layer.b_r.value(i, 0);
      ah[i] = layer.b_h.value(i, 0);
    }
    MatVecAdd(layer.w_z.value, x, az);
    MatVecAdd(layer.u_z.value, h_prev, az);
    MatVecAdd(layer.w_r.value, x, ar);
    MatVecAdd(layer.u_r.value, h_prev, ar);
    auto zt = z.Row(t), rt = r.Row(t);
    for (int i = 0; i < hid; ++i) {
      zt[i] = Sigmoid(az[i]);
      rt[i] = Sigmoid(ar[i]);
      rh[i] = rt[i] * h_prev[i];
    }
    MatVecAdd(layer.w_h.value, x, ah);
    MatVecAdd(layer.u_h.value, rh, ah);
    auto ct = cand.Row(t), ht = h.Row(t);
    for (int i = 0; i < hid; ++i) {
      ct[i] = std::tanh(ah[i]);
      ht[i] = (1.0 - zt[i]) * h_prev[i] + zt[i] * ct[i];
    }
  }
  if (cache) {
    cache->direction = direction;
    cache->input = seq;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->cand = std::move(cand);
    cache->h = h;
  }
  return h;
}

Matrix GruBackward(GruLayer &layer, const GruCache &cache, const Matrix &d_output) {
  const int steps = cache.h.rows(), hid = layer.hidden_dim;
  if (steps == 0) throw ValidationError("GRU backward called without a forward cache");
  if (d_output.rows() != steps || d_output.cols() != hid)
    throw ValidationError("GRU upstream gradient has the wrong shape");
  const bool fwd = cache.direction == Direction::kForward;
  Matrix d_input(steps, layer.input_dim);
  std::vector<double> zero(hid, 0.0), dh(hid), dh_next(hid, 0.0), rh(hid);
  std::vector<double> da_z(hid), da_r(hid), da_h(hid), d_rh(hid);
  for (int s = steps - 1; s >= 0; --s) {
    const int t = fwd ? s : steps - 1 - s;
    std::span<const double> h_prev =
        s == 0 ? std::span<const double>(zero) : cache.h.Row(fwd ? t - 1 : t + 1);
    auto x = cache.input.Row(t);
    auto z = cache.z.Row(t), r = cache.r.Row(t), c = cache.cand.Row(t);
    auto dout = d_output.Row(t);
    for (int i = 0; i < hid; ++i) dh[i] = dout[i] + dh_next[i];

    // h = (1 - z) h_prev + z c
    for (int i = 0; i < hid; ++i) {
      const double dc = dh[i] * z[i];
      da_h[i] = dc * (1.0 - c[i] * c[i]);
      da_z[i] = dh[i] * (c[i] - h_prev[i]) * z[i] * (1.0 - z[i]);
      dh_next[i] = dh[i] * (1.0 - z[i]);
      rh[i] = r[i] * h_prev[i];
      d_rh[i] = 0.0;
    }
    // candidate path
    OuterAdd(layer.w_h.grad, da_h, x);
    OuterAdd(layer.u_h.grad, da_h, rh);
    for (int i = 0; i < hid; ++i) layer.b_h.grad(i, 0) += da_h[i];
    MatTransVecAdd(layer.u_h.value, da_h, d_rh);
    for (int i = 0; i < hid; ++i) {
      da_r[i] = d_rh[i] * h_prev[i] * r[i] * (1.0 - r[i]);
      dh_next[i] += d_rh[i] * r[i];
    }
    // gates
    OuterAdd(layer.w_z.grad, da_z, x);
    OuterAdd(layer.u_z.grad, da_z, h_prev);
    OuterAdd(layer.w_r.grad, da_r, x);
    OuterAdd(layer.u_r.grad, da_r, h_prev);
    for (int i = 0; i < hid; ++i) {
      layer.b_z.grad(i, 0) += da_z[i];
      layer.b_r.grad(i, 0) += da_r[i];
    }
    MatTransVecAdd(layer.u_z.value, da_z, dh_next);
    MatTransVecAdd(layer.u_r.value, da_r, dh_next);

    auto dx = d_input.Row(t);
    MatTransVecAdd(layer.w_h.value, da_h, dx);
    MatTransVecAdd(layer.w_z.value, da_z, dx);
    MatTransVecAdd(layer.w_r.value, da_r, dx);
  }
  return d_input;
}

void Dense::Init(Rng &rng) {
  w.InitGlorot(rng, input_dim(), output_dim());
  b.value.SetZero();
  b.grad.SetZero();
}

std::vector<double> Dense::Forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim())
    throw ValidationError("dense layer input dim " + std::to_string(x.size()) +
                          " does not match " + std::to_string(input_dim()));
  std::vector<double> y(b.value.values());
  MatVecAdd(w.value, x, y);
  return y;
}

std::vector<double> Dense::Backward(std::span<const double> x, std::span<const double> dy) {
  OuterAdd(w.grad, dy, x);
  for (int i = 0; i < output_dim(); ++i) b.grad(i, 0) += dy[i];
  std::vector<double> dx(input_dim(), 0.0);
  MatTransVecAdd(w.value, dy, dx);
  return dx;
}

std::vector<double> Softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
  for (double &v : p) v /= sum;
  return p;
}

LossAndGrad SoftmaxCrossEntropy(std::span<const double> logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw ValidationError("class index " + std::to_string(target) + " out of range [0, " +
                          std::to_string(logits.size()) + ")");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  LossAndGrad out;
  out.loss = log_z - logits[target];
  out.grad.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - log_z);
  out.grad[target] -= 1.0;
  return out;
}

BinaryLoss BinaryCrossEntropy(double prob, int label) {
  const bool clamped = !(prob > kProbClamp && prob < 1.0 - kProbClamp);
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  BinaryLoss out;
  if (label) {
    out.loss = -std::log(p);
    out.d_prob = clamped ? 0.0 : -1.0 / p;
  } else {
    out.loss = -std::log(1.0 - p);
    out.d_prob = clamped ? 0.0 : 1.0 / (1.0 - p);
  }
  return out;
}

std::vector<double> DropoutMask(size_t n, double rate, Rng &rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ValidationError("dropout rate must lie in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (!training || rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double &m : mask) m = rng.Uniform() < rate ? 0.0 : keep;
  return mask;
}

std::vector<double> Dropout(std::span<const double> x, double rate, Rng &rng,
                            bool training) {
  std::vector<double> mask = DropoutMask(x.size(), rate, rng, training);
  for (size_t i = 0; i < x.size(); ++i) mask[i] *= x[i];
  return mask;
}

void AdamStep(std::span<Param *const> params, AdamState &state) {
  for (size_t p = 0; p < params.size(); ++p)
    for (double g : params[p]->grad.values())
      if (!std::isfinite(g))
        throw RuntimeError("non-finite gradient in parameter " + std::to_string(p) +
                           " at optimizer step " + std::to_string(state.step + 1));
  if (state.m.empty()) {
    for (Param *p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.m.size() != params.size())
    throw ValidationError("Adam state does not match the parameter list");
  const AdamOptions &o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - o.learning_rate * o.weight_decay;
  for (size_t p = 0; p < params.size(); ++p) {
    auto &value = params[p]->value.values();
    auto &grad = params[p]->grad.values();
    auto &m = state.m[p].values();
    auto &v = state.v[p].values();
    for (size_t i = 0; i < value.size(); ++i) {
      if (o.weight_decay != 0.0) value[i] *= decay;
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / c1, v_hat = v[i] / c2;
      value[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
      grad[i] = 0.0;
    }
  }
}

GradCheckResult GradCheck(std::span<Param *const> params,
                          const std::function<double()> &loss,
                          const std::function<void()> &backprop,
                          const GradCheckOptions &options) {
  for (Param *p : params) p->grad.SetZero();
  backprop();
  std::vector<std::pair<Param *, size_t>> entries;
  for (Param *p : params)
    for (size_t i = 0; i < p->value.size(); ++i) entries.emplace_back(p, i);
  if (options.max_entries > 0 && entries.size() > options.max_entries) {
    Rng rng(options.seed);
    // Partial Fisher-Yates: the first max_entries are a uniform sample.
    for (size_t i = 0; i < options.max_entries; ++i) {
      size_t j = i + rng.UniformInt(entries.size() - i);
      std::swap(entries[i], entries[j]);
    }
    entries.resize(options.max_entries);
  }
  GradCheckResult result;
  for (auto [param, i] : entries) {
    double &theta = param->value.values()[i];
    const double saved = theta;
    theta = saved + options.eps;
    const double plus = loss();
    theta = saved - options.eps;
    const double minus = loss();
    theta = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus))
      throw RuntimeError("non-finite loss during gradient check");
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double analytic = param->grad.values()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.entries_checked;
  }
  return result;
}

}  // namespace cvdetect
