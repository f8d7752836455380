#pragma once

#include <string>
#include <vector>

#include "ernn/numerics.hpp"

namespace ernn {

enum class Activation { identity, tanh_fn, sigmoid, relu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

Vector apply_activation(Activation a, const Vector& pre);
// Elementwise derivative evaluated at the pre-activation. relu uses
// subgradient 0 at the kink.
Vector activation_derivative(Activation a, const Vector& pre);

enum class OpKind {
  constant,      // value bound from outside the tape
  param_vector,  // leaf reading a vector-shaped parameter slot
  matmul,        // parameter matrix times node, optionally transposed
  add,
  sub,
  scale,        // node times scalar: either a 1x1 parameter slot or a literal
  activation,   // elementwise nonlinearity
  readout,      // affine head: W h + b with both W and b trainable
  reduce_sum,   // sum of entries, yields a length-1 vector
  cross_entropy // softmax + negative log likelihood against a class label
};

struct Node {
  OpKind kind;
  int a = -1;              // first input node
  int b = -1;              // second input node
  int param = -1;          // parameter slot (matmul/scale/param_vector/readout W)
  int param2 = -1;         // second slot (readout bias)
  bool transposed = false; // matmul by the slot's transpose
  double literal = 1.0;    // scale factor when param < 0
  Activation act = Activation::identity;
  int label = -1;          // cross_entropy target class
};

// Parameters live outside the tape as a flat list of matrices; vectors are
// n x 1 and scalars 1 x 1 so one container serves every slot.
using Params = std::vector<Matrix>;

struct GradientSet {
  Params param_grads;                // same shapes as the bound parameters
  std::vector<Vector> node_adjoints; // adjoint of every node's value
};

class Tape {
 public:
  // Graph construction. Each call appends a node and returns its id.
  int constant(Vector v);
  int param_vector(int slot);
  int matmul(int slot, int node, bool transposed = false);
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int node, double literal);
  int scale_by_param(int node, int slot);
  int activation(Activation act, int node);
  int readout(int node, int w_slot, int b_slot);
  int reduce_sum(int node);
  int cross_entropy(int node, int label);

  // Rebinding between forward passes so one graph serves many samples.
  void set_constant(int node, Vector v);
  void set_label(int node, int label);

  // Hidden-state bookkeeping for time-indexed Jacobians.
  void mark_state(int node);
  const std::vector<int>& state_nodes() const { return state_nodes_; }

  // Evaluates every node in insertion order. Throws NumericOverflowError
  // naming the first non-finite node.
  const Vector& forward(const Params& params);

  // Reverse sweep from the last node (or an explicit one). Requires a
  // completed forward pass on this graph.
  GradientSet backward(const Vector& seed) const;
  GradientSet backward_from(int node, const Vector& seed) const;

  // d state[m] / d state[n] for step indices into state_nodes(), m > n.
  Matrix state_jacobian(int n, int m) const;

  const Vector& value(int node) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }
  bool has_forward() const { return forward_done_; }

  // Node at which the most recent forward threw, or -1.
  int last_failure_node() const { return failed_node_; }

  // Testing seam: adds a constant bias to one slot's gradient so negative
  // controls can exercise the checking tools.
  void set_gradient_bias_for_tests(int slot, double bias);

  // Sign pattern of every relu input from the last forward pass, used to
  // detect kink crossings during finite differencing.
  std::vector<std::uint8_t> relu_pattern() const;

 private:
  int push(Node n);
  void check_node(int id, const char* where) const;

  std::vector<Node> nodes_;
  std::vector<Vector> values_;
  const Params* bound_ = nullptr;
  std::vector<int> state_nodes_;
  bool forward_done_ = false;
  int failed_node_ = -1;
  int bias_slot_ = -1;
  double bias_value_ = 0.0;
};

// Convenience wrappers in the free-function style of the rest of the API.
inline const Vector& forward(Tape& tape, const Params& params) { return tape.forward(params); }
inline GradientSet backward(const Tape& tape, const Vector& seed) { return tape.backward(seed); }

struct GradcheckReport {
  double max_rel_error = 0.0;
  int checked = 0;   // coordinates compared
  int excluded = 0;  // coordinates skipped because a relu branch flipped
  std::vector<double> per_slot_max;  // worst relative error per parameter slot
};

// Central finite differences of the tape's scalar output against the
// reverse-mode gradient. step must lie in [1e-7, 1e-3]. Coordinates whose
// perturbation flips any relu branch are excluded rather than compared.
GradcheckReport gradcheck(Tape& tape, Params& params, double step);

}  // namespace ernn
