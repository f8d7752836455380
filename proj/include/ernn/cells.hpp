#pragma once

#include <string>
#include <vector>

#include "ernn/autodiff.hpp"
#include "ernn/numerics.hpp"

namespace ernn {

enum class CellKind { vanilla, fastrnn, antisymmetric, ernn };

CellKind cell_kind_from_string(const std::string& name);
std::string to_string(CellKind k);

// All learnable symbols of one recurrent cell. U doubles as the skew base
// for the antisymmetric cell; the ernn transition is never materialized as
// a parameter, products go through I + V*H.
struct CellParams {
  CellKind kind = CellKind::vanilla;
  int D = 0;   // hidden dim
  int d = 0;   // input dim
  int d1 = 0;  // low-rank factor width (ernn)
  Activation act = Activation::relu;
  double gamma = 1.0;
  // ernn applies P to the bracket before the activation. Tied means
  // P = U = I + V*H; untied means P = I, which the scalar reference
  // configurations in the tests rely on.
  bool tied_projection = true;
  Matrix U;
  Matrix V, H;
  Matrix W;
  Vector b;
  std::vector<double> step_sizes;  // eta per fixed-point iteration

  // Materialized transition for analysis: U, U - U^T - gamma*I, or I + V*H.
  Matrix effective_u() const;
};

struct ReadoutParams {
  Matrix W_out;  // C x D
  Vector b_out;  // C
};

CellParams init_cell_params(CellKind kind, int D, int d, int d1, int K, Activation act,
                            double gamma, Rng& rng);
ReadoutParams init_readout(int classes, int D, Rng& rng);

// Rescales the effective transition to the given spectral norm. For ernn
// this redraws U = target * A/||A|| through full-rank factors (requires
// d1 = D), with the sign fixed so trace >= 0.
void set_transition_norm(CellParams& p, double target, Rng& rng);

// Eager single-step evaluations. These route through the same tape emission
// as training, so both paths are bit-identical by construction.
Vector vanilla_step(const CellParams& p, const Vector& h_prev, const Vector& x);
Vector fastrnn_step(const CellParams& p, const Vector& h_prev, const Vector& x);
Vector antisymmetric_step(const CellParams& p, const Vector& h_prev, const Vector& x);
Vector ernn_step(const CellParams& p, const Vector& h_prev, const Vector& x, int K);
Vector readout_logits(const ReadoutParams& r, const Vector& h);

// Where each parameter landed in the flat Params list.
struct ModelSlots {
  int U = -1, V = -1, H = -1, W = -1, b = -1;
  std::vector<int> eta;  // one slot per step size
  bool per_step_eta = false;
  int k_steps = 0;
  int W_out = -1, b_out = -1;
};

// Flattens cell (+ optional readout) parameters into the tape's Params
// list. k_steps is the fixed-point iteration count (ernn); per_step_eta
// expects step_sizes to hold T blocks of k_steps entries.
Params flatten_params(const CellParams& c, const ReadoutParams* r, int k_steps,
                      bool per_step_eta, ModelSlots& slots);
void unflatten_params(const Params& params, const ModelSlots& slots, CellParams& c,
                      ReadoutParams* r);

// Appends one recurrent step at time index t; returns the new state node.
// For ernn, iterate_nodes (when non-null) receives the K+1 iterates h^(0..K).
int emit_cell_step(Tape& tape, const CellParams& shape, const ModelSlots& slots, int h_prev,
                   int x_node, int t, std::vector<int>* iterate_nodes = nullptr);

enum class LossHead { none, cross_entropy };

// A reusable unrolled graph over T steps: rebind the input constants (and
// label) per sample, then forward/backward.
struct UnrolledModel {
  Tape tape;
  ModelSlots slots;
  Params params;  // flattened initial values, updated in place by training
  std::vector<int> input_nodes;
  int h0_node = -1;
  int hT_node = -1;
  int logits_node = -1;
  int loss_node = -1;
};

UnrolledModel build_unrolled(const CellParams& shape, const ReadoutParams* readout, int T,
                             int k_steps, bool per_step_eta, LossHead head);

// Copies sequence rows (T x d) into the model's input constants.
void bind_sequence(UnrolledModel& model, const Matrix& sequence);

}  // namespace ernn
