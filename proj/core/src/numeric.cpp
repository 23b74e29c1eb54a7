#include "dvs2s/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace dvs2s {

Tensor masked_softmax(const Tensor& scores, const std::vector<uint8_t>& mask) {
  if (scores.data.size() != mask.size())
    throw_shape_mismatch("masked_softmax");
  double max_sel = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!std::isfinite(scores[static_cast<int64_t>(i)]))
      throw std::invalid_argument("masked_softmax: non-finite score");
    any = true;
    max_sel = std::max(max_sel, scores[static_cast<int64_t>(i)]);
  }
  if (!any) throw std::invalid_argument("masked_softmax: empty mask");

  Tensor out = zeros_like(scores);
  double denom = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double e = std::exp(scores[static_cast<int64_t>(i)] - max_sel);
    out[static_cast<int64_t>(i)] = e;
    denom += e;
  }
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out[static_cast<int64_t>(i)] /= denom;
  return out;
}

double log_sum_exp(const double* s, int64_t n) {
  double m = s[0];
  for (int64_t i = 1; i < n; ++i) m = std::max(m, s[i]);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::exp(s[i] - m);
  return m + std::log(acc);
}

Tensor init_tensor(const std::vector<int64_t>& shape, Rng& rng, InitScheme scheme) {
  Tensor t(shape);
  if (scheme == InitScheme::Zeros || shape.size() < 2) return t;
  const double a = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

void OptimizerState::init_like(const std::vector<const Tensor*>& params) {
  grad_sq.clear();
  delta_sq.clear();
  grad_sq.reserve(params.size());
  delta_sq.reserve(params.size());
  for (const Tensor* p : params) {
    grad_sq.push_back(zeros_like(*p));
    delta_sq.push_back(zeros_like(*p));
  }
}

void adadelta_step(const std::vector<Tensor*>& params,
                   const std::vector<const Tensor*>& grads, OptimizerState& state,
                   double lr_scale) {
  if (params.size() != grads.size())
    throw_shape_mismatch("adadelta_step");
  if (!state.initialized()) state.init_like({grads.begin(), grads.end()});
  if (state.grad_sq.size() != params.size())
    throw_shape_mismatch("adadelta_step");

  const double rho = state.rho, eps = state.eps;
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& eg2 = state.grad_sq[k];
    Tensor& edx2 = state.delta_sq[k];
    if (!p.same_shape(g) || !p.same_shape(eg2))
      throw_shape_mismatch("adadelta_step");
    for (int64_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      eg2[i] = rho * eg2[i] + (1.0 - rho) * gi * gi;
      const double dx = -(std::sqrt(edx2[i] + eps) / std::sqrt(eg2[i] + eps)) * gi;
      edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
      p[i] += lr_scale * dx;
    }
  }
}

double gradient_check(DiffProblem& problem, double eps) {
  const std::vector<Tensor> analytic = problem.gradients();
  if (analytic.size() != problem.params.size())
    throw_shape_mismatch("gradient_check");

  double worst = 0.0;
  for (size_t k = 0; k < problem.params.size(); ++k) {
    Tensor& p = *problem.params[k];
    for (int64_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = problem.value();
      p[i] = saved - eps;
      const double down = problem.value();
      p[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("gradient_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

void check_finite(const Tensor& t, const std::string& context) {
  if (!t.all_finite())
    throw std::runtime_error(context + ": non-finite value");
}

void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int w = static_cast<int>(std::min<int64_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(w));
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t]() {
      for (int64_t i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dvs2s
