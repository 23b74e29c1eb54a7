#include "dvs2s/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "dvs2s/numeric.hpp"

namespace dvs2s {

Tape::Var Tape::push(Tensor val, bool needs_grad, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = nodes_[static_cast<size_t>(v)];
  if (n.grad.data.empty()) n.grad = zeros_like(n.val);
  return n.grad;
}

const Tensor& Tape::gradient(Var v) { return grad_buf(v); }

Tape::Var Tape::leaf(const Tensor& value, bool needs_grad) {
  return push(value, needs_grad, nullptr);
}

Tape::Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw_shape_mismatch("Tape::add");
  Tensor out = va;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const bool ng = wants(a) || wants(b);
  return push(std::move(out), ng, [a, b](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    if (t.wants(a)) axpy(1.0, g.data.data(), t.grad_buf(a).data.data(), g.size());
    if (t.wants(b)) axpy(1.0, g.data.data(), t.grad_buf(b).data.data(), g.size());
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw_shape_mismatch("Tape::mul");
  Tensor out = va;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const bool ng = wants(a) || wants(b);
  return push(std::move(out), ng, [a, b](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (t.wants(a)) {
      Tensor& ga = t.grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.wants(b)) {
      Tensor& gb = t.grad_buf(b);
      for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Tape::Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  return push(std::move(out), wants(a), [a, c](Tape& t, Node& self) {
    if (!t.wants(a)) return;
    Tensor& ga = t.grad_buf(a);
    axpy(c, self.grad.data.data(), ga.data.data(), self.grad.size());
  });
}

Tape::Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(out), wants(a), [a](Tape& t, Node& self) {
    if (!t.wants(a)) return;
    Tensor& ga = t.grad_buf(a);
    for (int64_t i = 0; i < self.val.size(); ++i) {
      const double y = self.val[i];
      ga[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tape::Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  return push(std::move(out), wants(a), [a](Tape& t, Node& self) {
    if (!t.wants(a)) return;
    Tensor& ga = t.grad_buf(a);
    for (int64_t i = 0; i < self.val.size(); ++i) {
      const double y = self.val[i];
      ga[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tape::Var Tape::clip(Var a, double lo, double hi) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return push(std::move(out), wants(a), [a, lo, hi](Tape& t, Node& self) {
    if (!t.wants(a)) return;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_buf(a);
    for (int64_t i = 0; i < va.size(); ++i)
      if (va[i] > lo && va[i] < hi) ga[i] += self.grad[i];
  });
}

Tape::Var Tape::concat(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  Tensor out = Tensor::vec(va.size() + vb.size());
  std::copy(va.data.begin(), va.data.end(), out.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.data.size());
  const bool ng = wants(a) || wants(b);
  const int64_t na = va.size();
  return push(std::move(out), ng, [a, b, na](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    if (t.wants(a)) axpy(1.0, g.data.data(), t.grad_buf(a).data.data(), na);
    if (t.wants(b))
      axpy(1.0, g.data.data() + na, t.grad_buf(b).data.data(), g.size() - na);
  });
}

Tape::Var Tape::dot(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.size() != vb.size()) throw_shape_mismatch("Tape::dot");
  Tensor out = Tensor::scalar(dot_kernel(va.data.data(), vb.data.data(), va.size()));
  const bool ng = wants(a) || wants(b);
  return push(std::move(out), ng, [a, b](Tape& t, Node& self) {
    const double g = self.grad[0];
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (t.wants(a)) axpy(g, vb.data.data(), t.grad_buf(a).data.data(), va.size());
    if (t.wants(b)) axpy(g, va.data.data(), t.grad_buf(b).data.data(), vb.size());
  });
}

Tape::Var Tape::pick(Var v, int64_t i) {
  Tensor out = Tensor::scalar(value(v)[i]);
  return push(std::move(out), wants(v), [v, i](Tape& t, Node& self) {
    if (t.wants(v)) t.grad_buf(v)[i] += self.grad[0];
  });
}

Tape::Var Tape::sum(Var v) {
  const Tensor& vv = value(v);
  double acc = 0.0;
  for (double x : vv.data) acc += x;
  return push(Tensor::scalar(acc), wants(v), [v](Tape& t, Node& self) {
    if (!t.wants(v)) return;
    Tensor& g = t.grad_buf(v);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Tape::Var Tape::stack(const std::vector<Var>& scalars) {
  Tensor out = Tensor::vec(static_cast<int64_t>(scalars.size()));
  bool ng = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    out[static_cast<int64_t>(i)] = value(scalars[i])[0];
    ng = ng || wants(scalars[i]);
  }
  return push(std::move(out), ng, [parents = scalars](Tape& t, Node& self) {
    for (size_t i = 0; i < parents.size(); ++i)
      if (t.wants(parents[i])) t.grad_buf(parents[i])[0] += self.grad[static_cast<int64_t>(i)];
  });
}

Tape::Var Tape::softmax(Var scores) {
  const Tensor& s = value(scores);
  Tensor out = zeros_like(s);
  double m = s[0];
  for (int64_t i = 1; i < s.size(); ++i) m = std::max(m, s[i]);
  double denom = 0.0;
  for (int64_t i = 0; i < s.size(); ++i) {
    out[i] = std::exp(s[i] - m);
    denom += out[i];
  }
  for (int64_t i = 0; i < s.size(); ++i) out[i] /= denom;
  return push(std::move(out), wants(scores), [scores](Tape& t, Node& self) {
    if (!t.wants(scores)) return;
    const Tensor& p = self.val;
    const Tensor& g = self.grad;
    const double gp = dot_kernel(g.data.data(), p.data.data(), p.size());
    Tensor& gs = t.grad_buf(scores);
    for (int64_t i = 0; i < p.size(); ++i) gs[i] += p[i] * (g[i] - gp);
  });
}

Tape::Var Tape::log_softmax(Var scores) {
  const Tensor& s = value(scores);
  const double lse = log_sum_exp(s.data.data(), s.size());
  Tensor out = s;
  for (double& v : out.data) v -= lse;
  return push(std::move(out), wants(scores), [scores](Tape& t, Node& self) {
    if (!t.wants(scores)) return;
    const Tensor& g = self.grad;
    double gsum = 0.0;
    for (double v : g.data) gsum += v;
    Tensor& gs = t.grad_buf(scores);
    for (int64_t i = 0; i < g.size(); ++i)
      gs[i] += g[i] - std::exp(self.val[i]) * gsum;
  });
}

Tape::Var Tape::gate_mix(Var z, Var cand, Var prev) {
  const Tensor& vz = value(z);
  const Tensor& vc = value(cand);
  const Tensor& vp = value(prev);
  if (!vz.same_shape(vc) || !vz.same_shape(vp)) throw_shape_mismatch("Tape::gate_mix");
  Tensor out = zeros_like(vz);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = vz[i] * vc[i] + (1.0 - vz[i]) * vp[i];
  const bool ng = wants(z) || wants(cand) || wants(prev);
  return push(std::move(out), ng, [z, cand, prev](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& vz = t.value(z);
    const Tensor& vc = t.value(cand);
    const Tensor& vp = t.value(prev);
    if (t.wants(z)) {
      Tensor& gz = t.grad_buf(z);
      for (int64_t i = 0; i < g.size(); ++i) gz[i] += g[i] * (vc[i] - vp[i]);
    }
    if (t.wants(cand)) {
      Tensor& gc = t.grad_buf(cand);
      for (int64_t i = 0; i < g.size(); ++i) gc[i] += g[i] * vz[i];
    }
    if (t.wants(prev)) {
      Tensor& gp = t.grad_buf(prev);
      for (int64_t i = 0; i < g.size(); ++i) gp[i] += g[i] * (1.0 - vz[i]);
    }
  });
}

Tape::Var Tape::matvec(Var w, Var x) {
  const Tensor& vw = value(w);
  const Tensor& vx = value(x);
  if (vw.cols() != vx.size()) throw_shape_mismatch("Tape::matvec");
  Tensor out = Tensor::vec(vw.rows());
  dvs2s::matvec(vw, vx.data.data(), out.data.data());
  const bool ng = wants(w) || wants(x);
  return push(std::move(out), ng, [w, x](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& vw = t.value(w);
    const Tensor& vx = t.value(x);
    const int64_t r = vw.rows(), c = vw.cols();
    if (t.wants(w)) {
      Tensor& gw = t.grad_buf(w);
      for (int64_t i = 0; i < r; ++i)
        axpy(g[i], vx.data.data(), gw.row_ptr(i), c);
    }
    if (t.wants(x)) {
      Tensor& gx = t.grad_buf(x);
      for (int64_t i = 0; i < r; ++i)
        axpy(g[i], vw.row_ptr(i), gx.data.data(), c);
    }
  });
}

Tape::Var Tape::matvec_cols(Var w, Var x, int64_t lo, int64_t hi) {
  const Tensor& vw = value(w);
  const Tensor& vx = value(x);
  if (hi - lo != vx.size() || hi > vw.cols()) throw_shape_mismatch("Tape::matvec_cols");
  Tensor out = Tensor::vec(vw.rows());
  dvs2s::matvec_cols(vw, lo, hi, vx.data.data(), out.data.data());
  const bool ng = wants(w) || wants(x);
  return push(std::move(out), ng, [w, x, lo, hi](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& vw = t.value(w);
    const Tensor& vx = t.value(x);
    const int64_t r = vw.rows(), n = hi - lo;
    if (t.wants(w)) {
      Tensor& gw = t.grad_buf(w);
      for (int64_t i = 0; i < r; ++i)
        axpy(g[i], vx.data.data(), gw.row_ptr(i) + lo, n);
    }
    if (t.wants(x)) {
      Tensor& gx = t.grad_buf(x);
      for (int64_t i = 0; i < r; ++i)
        axpy(g[i], vw.row_ptr(i) + lo, gx.data.data(), n);
    }
  });
}

Tape::Var Tape::row(Var m, int64_t r) {
  const Tensor& vm = value(m);
  Tensor out = Tensor::vec(vm.cols());
  std::copy(vm.row_ptr(r), vm.row_ptr(r) + vm.cols(), out.data.begin());
  return push(std::move(out), wants(m), [m, r](Tape& t, Node& self) {
    if (!t.wants(m)) return;
    Tensor& gm = t.grad_buf(m);
    axpy(1.0, self.grad.data.data(), gm.row_ptr(r), self.grad.size());
  });
}

Tape::Var Tape::affine_rows(Var w, Var b, Var x, std::vector<int32_t> rows) {
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  const Tensor& vx = value(x);
  if (vw.cols() != vx.size() || vb.size() != vw.rows())
    throw_shape_mismatch("Tape::affine_rows");
  Tensor out = Tensor::vec(static_cast<int64_t>(rows.size()));
  for (size_t k = 0; k < rows.size(); ++k)
    out[static_cast<int64_t>(k)] =
        dot_kernel(vw.row_ptr(rows[k]), vx.data.data(), vw.cols()) + vb[rows[k]];
  const bool ng = wants(w) || wants(b) || wants(x);
  return push(std::move(out), ng, [w, b, x, rs = std::move(rows)](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& vw = t.value(w);
    const Tensor& vx = t.value(x);
    const int64_t c = vw.cols();
    if (t.wants(w)) {
      Tensor& gw = t.grad_buf(w);
      for (size_t k = 0; k < rs.size(); ++k)
        axpy(g[static_cast<int64_t>(k)], vx.data.data(), gw.row_ptr(rs[k]), c);
    }
    if (t.wants(b)) {
      Tensor& gb = t.grad_buf(b);
      for (size_t k = 0; k < rs.size(); ++k) gb[rs[k]] += g[static_cast<int64_t>(k)];
    }
    if (t.wants(x)) {
      Tensor& gx = t.grad_buf(x);
      for (size_t k = 0; k < rs.size(); ++k)
        axpy(g[static_cast<int64_t>(k)], vw.row_ptr(rs[k]), gx.data.data(), c);
    }
  });
}

Tape::Var Tape::weighted_sum(Var weights, std::vector<Var> vectors) {
  const Tensor& vwt = value(weights);
  if (static_cast<size_t>(vwt.size()) != vectors.size())
    throw_shape_mismatch("Tape::weighted_sum");
  Tensor out = Tensor::vec(value(vectors[0]).size());
  bool ng = wants(weights);
  for (size_t j = 0; j < vectors.size(); ++j) {
    axpy(vwt[static_cast<int64_t>(j)], value(vectors[j]).data.data(), out.data.data(),
         out.size());
    ng = ng || wants(vectors[j]);
  }
  return push(std::move(out), ng, [weights, vs = std::move(vectors)](Tape& t, Node& self) {
    const Tensor& g = self.grad;
    const Tensor& vwt = t.value(weights);
    for (size_t j = 0; j < vs.size(); ++j) {
      const Tensor& hj = t.value(vs[j]);
      if (t.wants(weights))
        t.grad_buf(weights)[static_cast<int64_t>(j)] +=
            dot_kernel(g.data.data(), hj.data.data(), g.size());
      if (t.wants(vs[j]))
        axpy(vwt[static_cast<int64_t>(j)], g.data.data(), t.grad_buf(vs[j]).data.data(),
             g.size());
    }
  });
}

Tape::Var Tape::bernoulli_log_prob(Var x, std::vector<uint8_t> bits) {
  const Tensor& vx = value(x);
  if (static_cast<size_t>(vx.size()) != bits.size())
    throw_shape_mismatch("Tape::bernoulli_log_prob");
  double acc = 0.0;
  for (size_t i = 0; i < bits.size(); ++i) {
    const double p = vx[static_cast<int64_t>(i)];
    acc += bits[i] ? std::log(p) : std::log(1.0 - p);
  }
  return push(Tensor::scalar(acc), wants(x), [x, bs = std::move(bits)](Tape& t, Node& self) {
    if (!t.wants(x)) return;
    const double g = self.grad[0];
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad_buf(x);
    for (size_t i = 0; i < bs.size(); ++i) {
      const double p = vx[static_cast<int64_t>(i)];
      gx[static_cast<int64_t>(i)] += g * (bs[i] ? 1.0 / p : -1.0 / (1.0 - p));
    }
  });
}

void Tape::backward(Var root, double seed) {
  Node& r = nodes_[static_cast<size_t>(root)];
  if (r.val.size() != 1)
    throw std::invalid_argument("Tape::backward: root must be scalar");
  for (Node& n : nodes_)
    if (!n.grad.data.empty()) n.grad.fill(0.0);
  grad_buf(root)[0] = seed;
  for (Var v = root; v >= 0; --v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (!n.needs_grad || !n.back || n.grad.data.empty()) continue;
    n.back(*this, n);
  }
}

}  // namespace dvs2s
