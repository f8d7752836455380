#include "ernn/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ernn {

namespace {

constexpr double kNewtonTol = 1e-12;

void check_residual_dims(const CellParams& p, const Vector& h, const Vector& h_prev,
                         const Vector& x) {
  if (p.kind != CellKind::ernn)
    throw InvalidInputError("equilibrium analysis requires an ernn cell");
  if (h.size() != p.D || h_prev.size() != p.D)
    throw InvalidInputError("residual: state dim mismatch");
  if (x.size() != p.d) throw InvalidInputError("residual: input dim mismatch");
}

// Pre-activation P[U(h+h_prev) + W x + b].
Vector pre_activation(const CellParams& p, const Vector& h, const Vector& h_prev,
                      const Vector& x) {
  const Vector z = h + h_prev;
  const Vector uz = z + p.V * (p.H * z);
  const Vector lin = uz + p.W * x + p.b;
  if (!p.tied_projection) return lin;
  return lin + p.V * (p.H * lin);
}

}  // namespace

Vector residual_F(const CellParams& p, const Vector& h, const Vector& h_prev, const Vector& x) {
  check_residual_dims(p, h, h_prev, x);
  return apply_activation(p.act, pre_activation(p, h, h_prev, x)) - p.gamma * (h + h_prev);
}

Matrix residual_jacobian(const CellParams& p, const Vector& h, const Vector& h_prev,
                         const Vector& x, int* kink_events) {
  check_residual_dims(p, h, h_prev, x);
  const Vector pre = pre_activation(p, h, h_prev, x);
  if (p.act == Activation::relu && kink_events != nullptr)
    *kink_events += static_cast<int>((pre.array() == 0.0).count());
  const Vector dphi = activation_derivative(p.act, pre);
  const Matrix u = p.effective_u();
  const Matrix pu = p.tied_projection ? Matrix(u * u) : u;
  return dphi.asDiagonal() * pu -
         p.gamma * Matrix(Matrix::Identity(p.D, p.D));
}

EquilibriumPoint oracle_equilibrium(const CellParams& p, const Vector& h_prev, const Vector& x) {
  Vector h = Vector::Zero(p.D);
  Vector f = residual_F(p, h, h_prev, x);
  EquilibriumPoint best{h, f.lpNorm<Eigen::Infinity>(), 0};

  for (int it = 0; it < 100; ++it) {
    const double fmax = f.lpNorm<Eigen::Infinity>();
    if (fmax <= kNewtonTol) return {h, fmax, it};
    if (fmax < best.residual_norm) best = {h, fmax, it};

    const Matrix j = residual_jacobian(p, h, h_prev, x);
    const Vector step = lu_solve(j, Vector(-f));

    const double fnorm = f.norm();
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const Vector candidate = h + alpha * step;
      const Vector fc = residual_F(p, candidate, h_prev, x);
      if (fc.allFinite() && fc.norm() < fnorm) {
        h = candidate;
        f = fc;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw EquilibriumNonConvergence(
          "oracle_equilibrium: line search failed to reduce the residual at iteration " +
              std::to_string(it),
          best);
  }
  const double fmax = f.lpNorm<Eigen::Infinity>();
  if (fmax <= kNewtonTol) return {h, fmax, 100};
  if (fmax < best.residual_norm) best = {h, fmax, 100};
  throw EquilibriumNonConvergence("oracle_equilibrium: no convergence in 100 iterations", best);
}

ConvergenceReport iterate_euler(const CellParams& p, const Vector& h_prev, const Vector& x,
                                int K, const EquilibriumPoint& oracle) {
  check_residual_dims(p, Vector::Zero(p.D), h_prev, x);
  if (K < 1) throw InvalidInputError("iterate_euler: K must be >= 1");
  if (static_cast<int>(p.step_sizes.size()) < K)
    throw InvalidInputError("iterate_euler: step_sizes shorter than K");

  // Same tape emission as training, with the iterates recorded.
  ModelSlots slots;
  Params params = flatten_params(p, nullptr, K, false, slots);
  Tape tape;
  const int xn = tape.constant(x);
  const int hp = tape.constant(h_prev);
  std::vector<int> iterate_nodes;
  try {
    emit_cell_step(tape, p, slots, hp, xn, 0, &iterate_nodes);
    tape.forward(params);
  } catch (const NumericOverflowError&) {
    const int failed = tape.last_failure_node();
    const auto it = std::lower_bound(iterate_nodes.begin(), iterate_nodes.end(), failed);
    throw NumericOverflowError("iterate_euler: non-finite iterate at iteration " +
                               std::to_string(it - iterate_nodes.begin()));
  }

  ConvergenceReport rep;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int node : iterate_nodes) rep.iterates.push_back(tape.value(node));

  for (const Vector& h : rep.iterates) {
    rep.residual_norms.push_back(residual_F(p, h, h_prev, x).lpNorm<Eigen::Infinity>());
    rep.oracle_distances.push_back((h - oracle.h_star).norm());
  }

  const double resolution = 1e-12 * (1.0 + oracle.h_star.norm());
  rep.contraction_ratios.assign(K + 1, nan);
  for (int i = 0; i < K; ++i)
    if (rep.oracle_distances[i] > resolution)
      rep.contraction_ratios[i] = rep.oracle_distances[i + 1] / rep.oracle_distances[i];

  rep.tau_bound = nan;
  for (double r : rep.contraction_ratios)
    if (std::isfinite(r)) rep.tau_bound = std::isfinite(rep.tau_bound) ? std::max(rep.tau_bound, r) : r;

  rep.descent_condition_holds.assign(K + 1, false);
  for (int i = 0; i < K; ++i) {
    const Vector f = residual_F(p, rep.iterates[i], h_prev, x);
    const Matrix j = residual_jacobian(p, rep.iterates[i], h_prev, x);
    const Vector jf = j * f;
    const double eta = p.step_sizes[i];
    rep.descent_condition_holds[i] =
        eta * eta * jf.squaredNorm() + 2.0 * eta * f.dot(jf) < 0.0;
  }
  return rep;
}

double contraction_check(const CellParams& p, const Vector& h, const Vector& h_prev,
                         const Vector& x, double eta) {
  const Matrix j = residual_jacobian(p, h, h_prev, x);
  return spectral_norm(Matrix(Matrix::Identity(p.D, p.D) + eta * j));
}

Matrix implicit_state_jacobian(const CellParams& p, const EquilibriumPoint& eq,
                               const Vector& h_prev, const Vector& x) {
  if (!(eq.residual_norm <= 1e-10))
    throw InvalidInputError("implicit_state_jacobian: point is not an equilibrium (residual " +
                            std::to_string(eq.residual_norm) + ")");
  const Matrix j = residual_jacobian(p, eq.h_star, h_prev, x);
  // dF/dh (J + I) = 0  =>  J = solve(dF/dh, -dF/dh). Solving instead of
  // returning -I keeps near-singularity observable.
  return lu_solve(j, Matrix(-j));
}

Spectrum stability_spectrum(const CellParams& p, const Vector& h, const Vector& h_prev,
                            const Vector& x) {
  return eig(residual_jacobian(p, h, h_prev, x));
}

std::vector<double> bptt_norm_profile(const CellParams& p, const std::vector<Vector>& inputs,
                                      int K) {
  const int T = static_cast<int>(inputs.size());
  if (T < 2) throw InvalidInputError("bptt_norm_profile: need at least 2 time steps");

  UnrolledModel model =
      build_unrolled(p, nullptr, T, p.kind == CellKind::ernn ? K : 1, false, LossHead::none);
  Matrix seq(T, p.d);
  for (int t = 0; t < T; ++t) {
    if (inputs[t].size() != p.d) throw InvalidInputError("bptt_norm_profile: input dim mismatch");
    seq.row(t) = inputs[t].transpose();
  }
  bind_sequence(model, seq);
  model.tape.forward(model.params);

  // One reverse sweep per basis vector of h_T fills row i of every J_n.
  std::vector<Matrix> jacobians(T - 1, Matrix(p.D, p.D));
  const auto& states = model.tape.state_nodes();  // h_0 .. h_T
  for (int i = 0; i < p.D; ++i) {
    Vector seed = Vector::Zero(p.D);
    seed[i] = 1.0;
    GradientSet g = model.tape.backward_from(states[T], seed);
    for (int n = 1; n < T; ++n) jacobians[n - 1].row(i) = g.node_adjoints[states[n]].transpose();
  }

  std::vector<double> norms;
  norms.reserve(T - 1);
  for (const Matrix& j : jacobians) norms.push_back(spectral_norm(j));
  return norms;
}

}  // namespace ernn
