#include "ernn/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace ernn {

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh_fn;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "relu") return Activation::relu;
  throw InvalidInputError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh_fn: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

Vector apply_activation(Activation a, const Vector& pre) {
  switch (a) {
    case Activation::identity: return pre;
    case Activation::tanh_fn: return pre.array().tanh().matrix();
    case Activation::sigmoid: return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    case Activation::relu: return pre.cwiseMax(0.0);
  }
  throw InvalidInputError("apply_activation: bad activation");
}

Vector activation_derivative(Activation a, const Vector& pre) {
  switch (a) {
    case Activation::identity: return Vector::Ones(pre.size());
    case Activation::tanh_fn: {
      Eigen::ArrayXd t = pre.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Activation::sigmoid: {
      Eigen::ArrayXd s = 1.0 / (1.0 + (-pre.array()).exp());
      return (s * (1.0 - s)).matrix();
    }
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
  }
  throw InvalidInputError("activation_derivative: bad activation");
}

namespace {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::constant: return "constant";
    case OpKind::param_vector: return "param_vector";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::scale: return "scale";
    case OpKind::activation: return "activation";
    case OpKind::readout: return "readout";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

double log_sum_exp(const Vector& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(n);
  values_.emplace_back();
  forward_done_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_node(int id, const char* where) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw InvalidInputError(std::string(where) + ": node id " + std::to_string(id) +
                            " out of range");
}

int Tape::constant(Vector v) {
  Node n{OpKind::constant};
  const int id = push(n);
  values_[id] = std::move(v);
  return id;
}

int Tape::param_vector(int slot) {
  Node n{OpKind::param_vector};
  n.param = slot;
  return push(n);
}

int Tape::matmul(int slot, int node, bool transposed) {
  check_node(node, "matmul");
  Node n{OpKind::matmul};
  n.a = node;
  n.param = slot;
  n.transposed = transposed;
  return push(n);
}

int Tape::add(int a, int b) {
  check_node(a, "add");
  check_node(b, "add");
  Node n{OpKind::add};
  n.a = a;
  n.b = b;
  return push(n);
}

int Tape::sub(int a, int b) {
  check_node(a, "sub");
  check_node(b, "sub");
  Node n{OpKind::sub};
  n.a = a;
  n.b = b;
  return push(n);
}

int Tape::scale(int node, double literal) {
  check_node(node, "scale");
  Node n{OpKind::scale};
  n.a = node;
  n.literal = literal;
  return push(n);
}

int Tape::scale_by_param(int node, int slot) {
  check_node(node, "scale_by_param");
  Node n{OpKind::scale};
  n.a = node;
  n.param = slot;
  return push(n);
}

int Tape::activation(Activation act, int node) {
  check_node(node, "activation");
  Node n{OpKind::activation};
  n.a = node;
  n.act = act;
  return push(n);
}

int Tape::readout(int node, int w_slot, int b_slot) {
  check_node(node, "readout");
  Node n{OpKind::readout};
  n.a = node;
  n.param = w_slot;
  n.param2 = b_slot;
  return push(n);
}

int Tape::reduce_sum(int node) {
  check_node(node, "reduce_sum");
  Node n{OpKind::reduce_sum};
  n.a = node;
  return push(n);
}

int Tape::cross_entropy(int node, int label) {
  check_node(node, "cross_entropy");
  Node n{OpKind::cross_entropy};
  n.a = node;
  n.label = label;
  return push(n);
}

void Tape::set_constant(int node, Vector v) {
  check_node(node, "set_constant");
  if (nodes_[node].kind != OpKind::constant)
    throw InvalidInputError("set_constant: node is not a constant");
  values_[node] = std::move(v);
  forward_done_ = false;
}

void Tape::set_label(int node, int label) {
  check_node(node, "set_label");
  if (nodes_[node].kind != OpKind::cross_entropy)
    throw InvalidInputError("set_label: node is not a cross_entropy node");
  nodes_[node].label = label;
  forward_done_ = false;
}

void Tape::mark_state(int node) {
  check_node(node, "mark_state");
  state_nodes_.push_back(node);
}

const Vector& Tape::forward(const Params& params) {
  if (nodes_.empty()) throw StateError("forward: tape is empty");
  bound_ = &params;
  failed_node_ = -1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::constant:
        if (values_[i].size() == 0)
          throw StateError("forward: constant node " + std::to_string(i) + " never bound");
        break;
      case OpKind::param_vector:
        values_[i] = params.at(n.param);
        break;
      case OpKind::matmul: {
        const Matrix& p = params.at(n.param);
        values_[i] = n.transposed ? Vector(p.transpose() * values_[n.a]) : Vector(p * values_[n.a]);
        break;
      }
      case OpKind::add:
      case OpKind::sub:
        if (values_[n.a].size() != values_[n.b].size())
          throw InvalidInputError("forward: node " + std::to_string(i) + " (" +
                                  op_name(n.kind) + ") mixes lengths " +
                                  std::to_string(values_[n.a].size()) + " and " +
                                  std::to_string(values_[n.b].size()));
        values_[i] = n.kind == OpKind::add ? Vector(values_[n.a] + values_[n.b])
                                           : Vector(values_[n.a] - values_[n.b]);
        break;
      case OpKind::scale: {
        const double s = n.param >= 0 ? params.at(n.param)(0, 0) : n.literal;
        values_[i] = s * values_[n.a];
        break;
      }
      case OpKind::activation:
        values_[i] = apply_activation(n.act, values_[n.a]);
        break;
      case OpKind::readout:
        values_[i] = params.at(n.param) * values_[n.a] + params.at(n.param2);
        break;
      case OpKind::reduce_sum:
        values_[i] = Vector::Constant(1, values_[n.a].sum());
        break;
      case OpKind::cross_entropy: {
        const Vector& z = values_[n.a];
        if (n.label < 0 || n.label >= z.size())
          throw InvalidInputError("cross_entropy: label " + std::to_string(n.label) +
                                  " outside logit range");
        values_[i] = Vector::Constant(1, log_sum_exp(z) - z[n.label]);
        break;
      }
    }
    if (!values_[i].allFinite()) {
      failed_node_ = static_cast<int>(i);
      throw NumericOverflowError("forward: non-finite value at node " + std::to_string(i) + " (" +
                                 op_name(n.kind) + ")");
    }
  }
  forward_done_ = true;
  return values_.back();
}

GradientSet Tape::backward(const Vector& seed) const {
  return backward_from(static_cast<int>(nodes_.size()) - 1, seed);
}

GradientSet Tape::backward_from(int node, const Vector& seed) const {
  if (!forward_done_) throw StateError("backward: no forward pass on this tape");
  check_node(node, "backward");
  if (seed.size() != values_[node].size())
    throw InvalidInputError("backward: seed size " + std::to_string(seed.size()) +
                            " does not match node value size " +
                            std::to_string(values_[node].size()));

  GradientSet g;
  g.param_grads.reserve(bound_->size());
  for (const Matrix& p : *bound_) g.param_grads.emplace_back(Matrix::Zero(p.rows(), p.cols()));
  g.node_adjoints.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    g.node_adjoints[i] = Vector::Zero(values_[i].size());
  g.node_adjoints[node] = seed;

  for (int i = node; i >= 0; --i) {
    const Vector& adj = g.node_adjoints[i];
    if (adj.isZero(0.0)) continue;
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::constant:
        break;
      case OpKind::param_vector:
        g.param_grads[n.param] += adj;
        break;
      case OpKind::matmul: {
        const Matrix& p = (*bound_)[n.param];
        if (n.transposed) {
          g.node_adjoints[n.a] += p * adj;
          g.param_grads[n.param] += values_[n.a] * adj.transpose();
        } else {
          g.node_adjoints[n.a] += p.transpose() * adj;
          g.param_grads[n.param] += adj * values_[n.a].transpose();
        }
        break;
      }
      case OpKind::add:
        g.node_adjoints[n.a] += adj;
        g.node_adjoints[n.b] += adj;
        break;
      case OpKind::sub:
        g.node_adjoints[n.a] += adj;
        g.node_adjoints[n.b] -= adj;
        break;
      case OpKind::scale: {
        const double s = n.param >= 0 ? (*bound_)[n.param](0, 0) : n.literal;
        g.node_adjoints[n.a] += s * adj;
        if (n.param >= 0) g.param_grads[n.param](0, 0) += adj.dot(values_[n.a]);
        break;
      }
      case OpKind::activation:
        g.node_adjoints[n.a] +=
            activation_derivative(n.act, values_[n.a]).cwiseProduct(adj);
        break;
      case OpKind::readout: {
        const Matrix& w = (*bound_)[n.param];
        g.node_adjoints[n.a] += w.transpose() * adj;
        g.param_grads[n.param] += adj * values_[n.a].transpose();
        g.param_grads[n.param2] += adj;
        break;
      }
      case OpKind::reduce_sum:
        g.node_adjoints[n.a].array() += adj[0];
        break;
      case OpKind::cross_entropy: {
        const Vector& z = values_[n.a];
        Vector p = (z.array() - log_sum_exp(z)).exp().matrix();
        p[n.label] -= 1.0;
        g.node_adjoints[n.a] += adj[0] * p;
        break;
      }
    }
  }
  if (bias_slot_ >= 0 && bias_slot_ < static_cast<int>(g.param_grads.size()))
    g.param_grads[bias_slot_].array() += bias_value_;
  return g;
}

void Tape::set_gradient_bias_for_tests(int slot, double bias) {
  bias_slot_ = slot;
  bias_value_ = bias;
}

Matrix Tape::state_jacobian(int n, int m) const {
  const int count = static_cast<int>(state_nodes_.size());
  if (n < 0 || m < 0 || n >= count || m >= count)
    throw InvalidInputError("state_jacobian: step index outside recorded states");
  if (m <= n) throw InvalidInputError("state_jacobian: requires m > n");
  if (!forward_done_) throw StateError("state_jacobian: no forward pass on this tape");

  const int from = state_nodes_[n];
  const int to = state_nodes_[m];
  const int rows = static_cast<int>(values_[to].size());
  const int cols = static_cast<int>(values_[from].size());
  Matrix j(rows, cols);
  for (int i = 0; i < rows; ++i) {
    Vector seed = Vector::Zero(rows);
    seed[i] = 1.0;
    GradientSet g = backward_from(to, seed);
    j.row(i) = g.node_adjoints[from].transpose();
  }
  return j;
}

const Vector& Tape::value(int node) const {
  check_node(node, "value");
  if (!forward_done_ && nodes_[node].kind != OpKind::constant)
    throw StateError("value: no forward pass on this tape");
  return values_[node];
}

std::vector<std::uint8_t> Tape::relu_pattern() const {
  if (!forward_done_) throw StateError("relu_pattern: no forward pass on this tape");
  std::vector<std::uint8_t> pattern;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::activation || n.act != Activation::relu) continue;
    const Vector& pre = values_[n.a];
    for (Eigen::Index k = 0; k < pre.size(); ++k)
      pattern.push_back(pre[k] > 0.0 ? 1 : 0);
  }
  return pattern;
}

GradcheckReport gradcheck(Tape& tape, Params& params, double step) {
  if (step < 1e-7 || step > 1e-3)
    throw InvalidInputError("gradcheck: step must lie in [1e-7, 1e-3]");
  if (tape.node_count() == 0) throw StateError("gradcheck: tape is empty");

  const Vector& base = tape.forward(params);
  if (base.size() != 1) throw InvalidInputError("gradcheck: tape output must be scalar");
  GradientSet analytic = tape.backward(Vector::Ones(1));

  GradcheckReport report;
  report.per_slot_max.assign(params.size(), 0.0);
  for (std::size_t s = 0; s < params.size(); ++s) {
    Matrix& p = params[s];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double orig = p(r, c);

        p(r, c) = orig + step;
        const double f_plus = tape.forward(params)[0];
        const auto pattern_plus = tape.relu_pattern();

        p(r, c) = orig - step;
        const double f_minus = tape.forward(params)[0];
        const auto pattern_minus = tape.relu_pattern();

        p(r, c) = orig;

        if (pattern_plus != pattern_minus) {
          ++report.excluded;
          continue;
        }
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        if (!std::isfinite(numeric))
          throw NumericOverflowError("gradcheck: non-finite finite difference");
        const double exact = analytic.param_grads[s](r, c);
        const double rel =
            std::abs(numeric - exact) / std::max({1.0, std::abs(numeric), std::abs(exact)});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.per_slot_max[s] = std::max(report.per_slot_max[s], rel);
        ++report.checked;
      }
    }
  }
  // Leave the tape consistent with the unperturbed parameters.
  tape.forward(params);
  return report;
}

}  // namespace ernn
