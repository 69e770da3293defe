#pragma once

#include <cstddef>
#include <optional>

namespace deepjko {

enum class Integrator { ForwardEuler, RK4 };

// Coupled inner-time state: positions z (d × N), log-determinants l (1 × N)
// and, when training, the accumulated kinetic cost (1 × N).
template <class V>
struct InnerState {
  V z;
  V l;
  std::optional<V> kinetic;
};

// Advances (z, l) over [k dτ, (k+1) dτ] for dz/dτ = -∇_x φ, dl/dτ = -tr ∇²_x φ.
// `eval(z, τ)` returns a FieldEval; `kinetic(grad, l_stage)` returns the
// running-cost integrand, or is never called when `track_kinetic` is false.
// The kinetic cost is integrated with the same stages and weights as (z, l).
template <class Ops, class EvalFn, class KineticFn>
void inner_step(Ops& ops, EvalFn&& eval, KineticFn&& kinetic, InnerState<typename Ops::Value>& st,
                std::size_t k, double dtau, Integrator integrator, bool track_kinetic) {
  using V = typename Ops::Value;
  const double tau = static_cast<double>(k) * dtau;
  auto add_kinetic = [&](const V& term) {
    st.kinetic = st.kinetic ? ops.add(*st.kinetic, term) : term;
  };

  if (integrator == Integrator::ForwardEuler) {
    auto e = eval(st.z, tau);
    if (track_kinetic) add_kinetic(ops.scale(kinetic(e.grad, st.l), dtau));
    st.z = ops.add(st.z, ops.scale(e.grad, -dtau));
    st.l = ops.add(st.l, ops.scale(e.laplacian, -dtau));
    return;
  }

  const double half = 0.5 * dtau;
  auto e1 = eval(st.z, tau);
  V z2 = ops.add(st.z, ops.scale(e1.grad, -half));
  V l2 = ops.add(st.l, ops.scale(e1.laplacian, -half));
  auto e2 = eval(z2, tau + half);
  V z3 = ops.add(st.z, ops.scale(e2.grad, -half));
  V l3 = ops.add(st.l, ops.scale(e2.laplacian, -half));
  auto e3 = eval(z3, tau + half);
  V z4 = ops.add(st.z, ops.scale(e3.grad, -dtau));
  V l4 = ops.add(st.l, ops.scale(e3.laplacian, -dtau));
  auto e4 = eval(z4, tau + dtau);

  auto combine = [&](const V& a, const V& b, const V& c, const V& d) {
    return ops.add(ops.add(a, ops.scale(ops.add(b, c), 2.0)), d);
  };
  const double w = dtau / 6.0;
  if (track_kinetic) {
    add_kinetic(ops.scale(combine(kinetic(e1.grad, st.l), kinetic(e2.grad, l2),
                                  kinetic(e3.grad, l3), kinetic(e4.grad, l4)),
                          w));
  }
  st.z = ops.add(st.z, ops.scale(combine(e1.grad, e2.grad, e3.grad, e4.grad), -w));
  st.l = ops.add(st.l, ops.scale(combine(e1.laplacian, e2.laplacian, e3.laplacian, e4.laplacian), -w));
}

}  // namespace deepjko
