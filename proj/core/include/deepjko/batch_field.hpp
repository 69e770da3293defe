#pragma once

// Batched closed-form spatial gradient and Laplacian of the potential
// network, written once against an "ops" policy so the same arithmetic runs
// eagerly (flow integration) and on the tape (training loss).

#include <cstddef>
#include <vector>

#include "deepjko/activation.hpp"
#include "deepjko/potential_net.hpp"
#include "deepjko/tape.hpp"
#include "deepjko/tensor.hpp"

namespace deepjko {

// Network parameters in the form the batched evaluation consumes.
template <class V>
struct NetView {
  std::size_t dim = 0;
  std::size_t layers = 0;
  V W0x;                // m × d
  V W0t;                // m × 1
  std::vector<V> W0col; // d entries, m × 1
  V W0x_sq_rowsum;      // m × 1, Σ_i W0[:, i]² over spatial columns
  V b0;
  std::vector<V> W;
  std::vector<V> b;
  V w;
};

template <class V>
struct FieldEval {
  V phi;        // 1 × N
  V grad;       // d × N, ∇_x φ
  V laplacian;  // 1 × N, tr ∇²_x φ
};

struct EagerOps {
  using Value = ad::Tensor;

  Value constant(ad::Tensor t) { return t; }
  Value matmul(const Value& a, const Value& b) { return ad::matmul(a, b); }
  Value matmul_tn(const Value& a, const Value& b) { return ad::matmul_tn(a, b); }
  Value add(const Value& a, const Value& b) { return ad::add(a, b); }
  Value sub(const Value& a, const Value& b) { return ad::sub(a, b); }
  Value mul(const Value& a, const Value& b) { return ad::mul(a, b); }
  Value scale(const Value& a, double s) { return ad::scale(a, s); }
  Value add_col(const Value& a, const Value& c) { return ad::add_col(a, c); }
  Value scale_rows(const Value& a, const Value& c) { return ad::scale_rows(a, c); }
  Value col_sum(const Value& a) { return ad::col_sum(a); }
  Value row_sum(const Value& a) { return ad::row_sum(a); }
  Value columns(const Value& a, std::size_t first, std::size_t n) { return ad::columns(a, first, n); }
  Value unary(const Value& a, const std::shared_ptr<const ad::UnaryKernel>& k) {
    return ad::apply_unary(a, *k);
  }
  std::size_t cols(const Value& a) const { return a.cols(); }
  std::size_t rows(const Value& a) const { return a.rows(); }
};

struct TapedOps {
  using Value = ad::Var;
  ad::Tape& tape;

  Value constant(ad::Tensor t) { return tape.constant(std::move(t)); }
  Value matmul(Value a, Value b) { return tape.matmul(a, b); }
  Value matmul_tn(Value a, Value b) { return tape.matmul_tn(a, b); }
  Value add(Value a, Value b) { return tape.add(a, b); }
  Value sub(Value a, Value b) { return tape.sub(a, b); }
  Value mul(Value a, Value b) { return tape.mul(a, b); }
  Value scale(Value a, double s) { return tape.scale(a, s); }
  Value add_col(Value a, Value c) { return tape.add_col(a, c); }
  Value scale_rows(Value a, Value c) { return tape.scale_rows(a, c); }
  Value col_sum(Value a) { return tape.col_sum(a); }
  Value row_sum(Value a) { return tape.row_sum(a); }
  Value columns(Value a, std::size_t first, std::size_t n) { return tape.columns(a, first, n); }
  Value unary(Value a, const std::shared_ptr<const ad::UnaryKernel>& k) { return tape.unary(a, k); }
  std::size_t cols(Value a) const { return tape.value(a).cols(); }
  std::size_t rows(Value a) const { return tape.value(a).rows(); }
};

// Builds the view from raw parameter values (W0 etc.) already lifted into the ops domain.
template <class Ops>
NetView<typename Ops::Value> make_view(Ops& ops, const ResNetPotential& net,
                                       const std::vector<typename Ops::Value>& params) {
  using V = typename Ops::Value;
  NetView<V> view;
  view.dim = net.dim;
  view.layers = net.layers;
  const V& W0 = params[0];
  view.W0x = ops.columns(W0, 0, net.dim);
  view.W0t = ops.columns(W0, net.dim, 1);
  for (std::size_t i = 0; i < net.dim; ++i) view.W0col.push_back(ops.columns(W0, i, 1));
  view.W0x_sq_rowsum = ops.row_sum(ops.mul(view.W0x, view.W0x));
  view.b0 = params[1];
  for (std::size_t l = 1; l < net.layers; ++l) {
    view.W.push_back(params[2 * l]);
    view.b.push_back(params[2 * l + 1]);
  }
  view.w = params.back();
  return view;
}

inline NetView<ad::Tensor> eager_view(const ResNetPotential& net) {
  EagerOps ops;
  std::vector<ad::Tensor> params;
  for (const ad::Tensor* p : net.parameters()) params.push_back(*p);
  return make_view(ops, net, params);
}

// Registers the network parameters on the tape (ids follow parameters() order).
inline NetView<ad::Var> taped_view(TapedOps& ops, const ResNetPotential& net) {
  std::vector<ad::Var> params;
  const auto ps = net.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) params.push_back(ops.tape.parameter(i, *ps[i]));
  return make_view(ops, net, params);
}

// x is d × N. Returns φ, ∇_x φ and tr ∇²_x φ for every column at inner time tau.
template <class Ops>
FieldEval<typename Ops::Value> evaluate_field(Ops& ops, const NetView<typename Ops::Value>& net,
                                              const typename Ops::Value& x, double tau) {
  using V = typename Ops::Value;
  const std::size_t n = ops.cols(x);
  const std::size_t L = net.layers;

  std::vector<V> pre;
  pre.reserve(L);
  pre.push_back(ops.add_col(ops.matmul(net.W0x, x), ops.add(ops.scale(net.W0t, tau), net.b0)));
  V u = ops.unary(pre[0], sigma_kernel());
  for (std::size_t l = 1; l < L; ++l) {
    pre.push_back(ops.add_col(ops.matmul(net.W[l - 1], u), net.b[l - 1]));
    u = ops.add(u, ops.unary(pre[l], sigma_kernel()));
  }
  FieldEval<V> out;
  out.phi = ops.matmul_tn(net.w, u);

  std::vector<V> slope(L);  // σ'(a_l)
  std::vector<V> adj(L + 1);
  adj[L] = ops.add_col(ops.constant(ad::Tensor(ops.rows(net.w), n)), net.w);
  for (std::size_t l = L - 1; l >= 1; --l) {
    slope[l] = ops.unary(pre[l], sigma_prime_kernel());
    adj[l] = ops.add(adj[l + 1], ops.matmul_tn(net.W[l - 1], ops.mul(slope[l], adj[l + 1])));
  }
  slope[0] = ops.unary(pre[0], sigma_prime_kernel());
  out.grad = ops.matmul_tn(net.W0x, ops.mul(slope[0], adj[1]));

  // Input block: W₀ᵀ diag(σ''(a₀) ⊙ z₁) W₀ restricted to the spatial diagonal.
  V curvature = ops.mul(ops.unary(pre[0], sigma_second_kernel()), adj[1]);
  V lap = ops.col_sum(ops.scale_rows(curvature, net.W0x_sq_rowsum));

  // Residual blocks: Kᵀ diag(σ''(a_l) ⊙ z_{l+1}) K with K = W_l J_l, J_l = ∂u_l/∂x.
  std::vector<V> jac;
  jac.reserve(net.dim);
  for (std::size_t i = 0; i < net.dim; ++i) jac.push_back(ops.scale_rows(slope[0], net.W0col[i]));
  for (std::size_t l = 1; l < L; ++l) {
    V weight = ops.mul(ops.unary(pre[l], sigma_second_kernel()), adj[l + 1]);
    V sq;
    for (std::size_t i = 0; i < net.dim; ++i) {
      V k = ops.matmul(net.W[l - 1], jac[i]);
      V k2 = ops.mul(k, k);
      sq = i == 0 ? k2 : ops.add(sq, k2);
      if (l + 1 < L) jac[i] = ops.add(jac[i], ops.mul(slope[l], k));
    }
    lap = ops.add(lap, ops.col_sum(ops.mul(weight, sq)));
  }
  out.laplacian = lap;
  return out;
}

}  // namespace deepjko
