#pragma once

#include <vector>

#include "ernn/cells.hpp"
#include "ernn/numerics.hpp"

namespace ernn {

// A root of the step residual found by the damped-Newton oracle.
struct EquilibriumPoint {
  Vector h_star;
  double residual_norm = 0.0;  // max-norm of the residual at h_star
  int newton_iterations = 0;
};

struct EquilibriumNonConvergence : ConvergenceError {
  EquilibriumNonConvergence(const std::string& msg, EquilibriumPoint best_in)
      : ConvergenceError(msg), best(std::move(best_in)) {}
  EquilibriumPoint best;
};

// Per-iteration record of the Euler fixed-point run measured against the
// oracle. All sequences have K+1 entries (one per iterate); entries that
// only make sense for a transition (ratio, descent flag) carry NaN/false in
// the final slot, and ratios are NaN wherever the distance has already
// collapsed below resolution.
struct ConvergenceReport {
  std::vector<Vector> iterates;
  std::vector<double> residual_norms;      // max-norm of F at each iterate
  std::vector<double> oracle_distances;    // Euclidean distance to h_star
  std::vector<double> contraction_ratios;  // distances[i+1] / distances[i]
  double tau_bound = 0.0;                  // max over defined ratios
  std::vector<bool> descent_condition_holds;
};

// F(h) = phi(P[U(h+h_prev) + W x + b]) - gamma (h+h_prev) for the ernn cell.
Vector residual_F(const CellParams& p, const Vector& h, const Vector& h_prev, const Vector& x);

// Analytic Jacobian dF/dh = grad(phi) P U - gamma I. For relu the
// subgradient at 0 is 0; coordinates sitting exactly on the kink are
// counted into *kink_events when given.
Matrix residual_jacobian(const CellParams& p, const Vector& h, const Vector& h_prev,
                         const Vector& x, int* kink_events = nullptr);

// Damped Newton from h = 0: solve J s = -F, halve the step until the
// residual decreases (at most 40 times), stop at max-norm 1e-12 or fail
// after 100 iterations with the best iterate attached.
EquilibriumPoint oracle_equilibrium(const CellParams& p, const Vector& h_prev, const Vector& x);

// Runs the exact ernn_step iteration for K steps, measuring residuals,
// oracle distances, contraction ratios, and the per-transition descent
// condition eta^2 ||JF||^2 + 2 eta F.JF < 0.
ConvergenceReport iterate_euler(const CellParams& p, const Vector& h_prev, const Vector& x,
                                int K, const EquilibriumPoint& oracle);

// ||I + eta dF/dh|| — below 1 means the Euler map contracts locally.
double contraction_check(const CellParams& p, const Vector& h, const Vector& h_prev,
                         const Vector& x, double eta);

// Solves dF/dh (J + I) = 0 at the equilibrium, returning J (= -I whenever
// the solve succeeds). Near-singular Jacobians surface as solver errors
// instead of being asserted away.
Matrix implicit_state_jacobian(const CellParams& p, const EquilibriumPoint& eq,
                               const Vector& h_prev, const Vector& x);

// Eigenvalues of dF/dh at the given point.
Spectrum stability_spectrum(const CellParams& p, const Vector& h, const Vector& h_prev,
                            const Vector& x);

// Spectral norms of d h_T / d h_n for n = 1..T-1 over the unrolled
// sequence, any cell kind.
std::vector<double> bptt_norm_profile(const CellParams& p, const std::vector<Vector>& inputs,
                                      int K);

}  // namespace ernn
