#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvs2s/rng.hpp"
#include "dvs2s/tensor.hpp"

namespace dvs2s {

// Softmax over the positions with mask bit set; masked-out positions are
// exactly zero. Stabilized by subtracting the max selected score.
Tensor masked_softmax(const Tensor& scores, const std::vector<uint8_t>& mask);

// log(sum_j exp(s_j)) over a contiguous score vector, max-stabilized.
double log_sum_exp(const double* s, int64_t n);

enum class InitScheme { XavierUniform, Zeros };

// Deterministic init: matrices get U(-a, a) with a = sqrt(6 / (fan_in +
// fan_out)), fan_in = cols, fan_out = rows; rank-1 tensors (biases) are zero.
Tensor init_tensor(const std::vector<int64_t>& shape, Rng& rng, InitScheme scheme);

struct OptimizerState {
  double rho = 0.95;
  double eps = 1e-6;
  std::vector<Tensor> grad_sq;   // E[g^2]
  std::vector<Tensor> delta_sq;  // E[dx^2]

  bool initialized() const { return !grad_sq.empty(); }
  void init_like(const std::vector<const Tensor*>& params);
};

// One AdaDelta update over a parameter list:
//   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//   dx      = -(sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps)) g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//   param   <- param + lr_scale * dx
// lr_scale multiplies only the applied step, so accumulators keep evolving
// even at lr_scale = 0.
void adadelta_step(const std::vector<Tensor*>& params,
                   const std::vector<const Tensor*>& grads, OptimizerState& state,
                   double lr_scale);

// A scalar loss over a set of parameter tensors, with its analytic gradient.
// Used by the finite-difference checker; `value` is evaluated at the current
// contents of `params`, `gradients` must return one tensor per parameter in
// the same order.
struct DiffProblem {
  std::vector<Tensor*> params;
  std::function<double()> value;
  std::function<std::vector<Tensor>()> gradients;
};

// Max over all coordinates of |analytic - numeric| / max(1e-8, |analytic| +
// |numeric|), with numeric = (L(th + eps) - L(th - eps)) / (2 eps).
double gradient_check(DiffProblem& problem, double eps);

void check_finite(const Tensor& t, const std::string& context);

// Deterministic parallel map: fn(i) for i in [0, n), split over `workers`
// threads. Results must be written to per-index slots; the caller reduces in
// index order so worker count never changes the outcome.
void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn);

}  // namespace dvs2s
