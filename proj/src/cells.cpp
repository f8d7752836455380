#include "ernn/cells.hpp"

#include <algorithm>
#include <cmath>

namespace ernn {

CellKind cell_kind_from_string(const std::string& name) {
  if (name == "vanilla") return CellKind::vanilla;
  if (name == "fastrnn") return CellKind::fastrnn;
  if (name == "antisymmetric") return CellKind::antisymmetric;
  if (name == "ernn") return CellKind::ernn;
  throw InvalidInputError("unknown cell kind '" + name + "'");
}

std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::vanilla: return "vanilla";
    case CellKind::fastrnn: return "fastrnn";
    case CellKind::antisymmetric: return "antisymmetric";
    case CellKind::ernn: return "ernn";
  }
  return "?";
}

Matrix CellParams::effective_u() const {
  switch (kind) {
    case CellKind::vanilla:
    case CellKind::fastrnn:
      return U;
    case CellKind::antisymmetric:
      return U - Matrix(U.transpose()) - gamma * Matrix(Matrix::Identity(D, D));
    case CellKind::ernn:
      return Matrix(Matrix::Identity(D, D)) + V * H;
  }
  throw InvalidInputError("effective_u: bad cell kind");
}

CellParams init_cell_params(CellKind kind, int D, int d, int d1, int K, Activation act,
                            double gamma, Rng& rng) {
  if (D < 1 || d < 1) throw InvalidInputError("init_cell_params: D and d must be >= 1");
  if (gamma <= 0.0) throw InvalidInputError("init_cell_params: gamma must be > 0");
  if (K < 1) throw InvalidInputError("init_cell_params: K must be >= 1");
  CellParams p;
  p.kind = kind;
  p.D = D;
  p.d = d;
  p.act = act;
  p.gamma = gamma;
  if (kind == CellKind::ernn) {
    if (d1 < 1) throw InvalidInputError("init_cell_params: ernn needs d1 >= 1");
    p.d1 = d1;
    p.V = rng.gaussian_matrix(D, d1, 0.05);
    p.H = rng.gaussian_matrix(d1, D, 0.05);
  } else {
    p.U = rng.gaussian_matrix(D, D, 1.0 / std::sqrt(static_cast<double>(D)));
  }
  // The W variance is 1/sqrt(d), written out as a standard deviation.
  p.W = rng.gaussian_matrix(D, d, std::pow(static_cast<double>(d), -0.25));
  p.b = Vector::Zero(D);
  const int n_eta = kind == CellKind::ernn ? K : 1;
  p.step_sizes.assign(n_eta, 1e-2);
  return p;
}

ReadoutParams init_readout(int classes, int D, Rng& rng) {
  if (classes < 2) throw InvalidInputError("init_readout: need at least 2 classes");
  ReadoutParams r;
  r.W_out = rng.gaussian_matrix(classes, D, std::pow(static_cast<double>(D), -0.25));
  r.b_out = Vector::Zero(classes);
  return r;
}

void set_transition_norm(CellParams& p, double target, Rng& rng) {
  if (target <= 0.0) throw InvalidInputError("set_transition_norm: target must be > 0");
  switch (p.kind) {
    case CellKind::vanilla:
    case CellKind::fastrnn: {
      const double s = spectral_norm(p.U);
      if (s == 0.0) throw InvalidInputError("set_transition_norm: zero transition");
      p.U *= target / s;
      return;
    }
    case CellKind::antisymmetric: {
      const Matrix skew = p.U - Matrix(p.U.transpose());
      const double s = spectral_norm(skew);
      if (s == 0.0) throw InvalidInputError("set_transition_norm: zero skew part");
      p.U *= target / s;
      return;
    }
    case CellKind::ernn: {
      if (p.d1 != p.D)
        throw InvalidInputError(
            "set_transition_norm: ernn rescaling needs full rank (rank = hidden_dim), since "
            "||I + VH|| >= 1 whenever rank < hidden_dim");
      Matrix a = rng.gaussian_matrix(p.D, p.D, 1.0 / std::sqrt(static_cast<double>(p.D)));
      Matrix u = (target / spectral_norm(a)) * a;
      if (u.trace() < 0.0) u = -u;
      p.V = u - Matrix(Matrix::Identity(p.D, p.D));
      p.H = Matrix::Identity(p.D, p.D);
      return;
    }
  }
  throw InvalidInputError("set_transition_norm: bad cell kind");
}

Params flatten_params(const CellParams& c, const ReadoutParams* r, int k_steps,
                      bool per_step_eta, ModelSlots& slots) {
  if (c.kind == CellKind::ernn && k_steps < 1)
    throw InvalidInputError("flatten_params: ernn needs k_steps >= 1");
  slots = ModelSlots{};
  slots.k_steps = k_steps;
  slots.per_step_eta = per_step_eta;
  Params params;
  auto put = [&params](const Matrix& m) {
    params.push_back(m);
    return static_cast<int>(params.size()) - 1;
  };
  if (c.kind == CellKind::ernn) {
    slots.V = put(c.V);
    slots.H = put(c.H);
  } else {
    slots.U = put(c.U);
  }
  slots.W = put(c.W);
  slots.b = put(c.b);
  if (c.kind != CellKind::vanilla) {
    for (double eta : c.step_sizes) {
      Matrix m(1, 1);
      m(0, 0) = eta;
      slots.eta.push_back(put(m));
    }
    const int per_step = c.kind == CellKind::ernn ? k_steps : 1;
    if (per_step_eta) {
      if (slots.eta.empty() || static_cast<int>(slots.eta.size()) % per_step != 0)
        throw InvalidInputError("flatten_params: per-step eta list must hold T blocks of " +
                                std::to_string(per_step));
    } else if (static_cast<int>(slots.eta.size()) < per_step) {
      throw InvalidInputError("flatten_params: step_sizes shorter than the iteration count");
    }
  }
  if (r != nullptr) {
    slots.W_out = put(r->W_out);
    slots.b_out = put(r->b_out);
  }
  return params;
}

void unflatten_params(const Params& params, const ModelSlots& slots, CellParams& c,
                      ReadoutParams* r) {
  if (c.kind == CellKind::ernn) {
    c.V = params.at(slots.V);
    c.H = params.at(slots.H);
  } else {
    c.U = params.at(slots.U);
  }
  c.W = params.at(slots.W);
  c.b = params.at(slots.b);
  if (!slots.eta.empty()) {
    c.step_sizes.clear();
    for (int slot : slots.eta) c.step_sizes.push_back(params.at(slot)(0, 0));
  }
  if (r != nullptr && slots.W_out >= 0) {
    r->W_out = params.at(slots.W_out);
    r->b_out = params.at(slots.b_out);
  }
}

namespace {

int eta_slot(const ModelSlots& slots, int t, int i, int per_step) {
  const int idx = slots.per_step_eta ? t * per_step + i : i;
  if (idx < 0 || idx >= static_cast<int>(slots.eta.size()))
    throw InvalidInputError("emit_cell_step: step size index " + std::to_string(idx) +
                            " outside the flattened list");
  return slots.eta[idx];
}

}  // namespace

int emit_cell_step(Tape& tape, const CellParams& shape, const ModelSlots& slots, int h_prev,
                   int x_node, int t, std::vector<int>* iterate_nodes) {
  const int wx = tape.matmul(slots.W, x_node);
  const int wxb = tape.add(wx, tape.param_vector(slots.b));
  switch (shape.kind) {
    case CellKind::vanilla: {
      const int pre = tape.add(tape.matmul(slots.U, h_prev), wxb);
      return tape.activation(shape.act, pre);
    }
    case CellKind::fastrnn: {
      const int pre = tape.add(tape.matmul(slots.U, h_prev), wxb);
      const int phi = tape.activation(shape.act, pre);
      return tape.add(h_prev, tape.scale_by_param(phi, eta_slot(slots, t, 0, 1)));
    }
    case CellKind::antisymmetric: {
      const int uh = tape.matmul(slots.U, h_prev);
      const int uth = tape.matmul(slots.U, h_prev, true);
      const int skew = tape.sub(uh, uth);
      const int damped = tape.sub(skew, tape.scale(h_prev, shape.gamma));
      const int pre = tape.add(damped, wxb);
      const int phi = tape.activation(shape.act, pre);
      return tape.add(h_prev, tape.scale_by_param(phi, eta_slot(slots, t, 0, 1)));
    }
    case CellKind::ernn: {
      int h = tape.constant(Vector::Zero(shape.D));
      if (iterate_nodes != nullptr) iterate_nodes->push_back(h);
      for (int i = 0; i < slots.k_steps; ++i) {
        const int z = tape.add(h, h_prev);
        const int uz = tape.add(z, tape.matmul(slots.V, tape.matmul(slots.H, z)));
        const int lin = tape.add(uz, wxb);
        const int proj = shape.tied_projection
                             ? tape.add(lin, tape.matmul(slots.V, tape.matmul(slots.H, lin)))
                             : lin;
        const int phi = tape.activation(shape.act, proj);
        const int f = tape.sub(phi, tape.scale(z, shape.gamma));
        h = tape.add(h, tape.scale_by_param(f, eta_slot(slots, t, i, slots.k_steps)));
        if (iterate_nodes != nullptr) iterate_nodes->push_back(h);
      }
      return h;
    }
  }
  throw InvalidInputError("emit_cell_step: bad cell kind");
}

namespace {

void check_step_dims(const CellParams& p, const Vector& h_prev, const Vector& x) {
  if (h_prev.size() != p.D)
    throw InvalidInputError("cell step: h_prev has dim " + std::to_string(h_prev.size()) +
                            ", expected " + std::to_string(p.D));
  if (x.size() != p.d)
    throw InvalidInputError("cell step: x has dim " + std::to_string(x.size()) + ", expected " +
                            std::to_string(p.d));
}

Vector run_single_step(const CellParams& p, const Vector& h_prev, const Vector& x, int k_steps,
                       std::vector<int>* iterates, Tape* out_tape = nullptr) {
  check_step_dims(p, h_prev, x);
  ModelSlots slots;
  Params params = flatten_params(p, nullptr, k_steps, false, slots);
  Tape local;
  Tape& tape = out_tape != nullptr ? *out_tape : local;
  const int xn = tape.constant(x);
  const int hp = tape.constant(h_prev);
  const int out = emit_cell_step(tape, p, slots, hp, xn, 0, iterates);
  tape.forward(params);
  return tape.value(out);
}

}  // namespace

Vector vanilla_step(const CellParams& p, const Vector& h_prev, const Vector& x) {
  if (p.kind != CellKind::vanilla) throw InvalidInputError("vanilla_step: wrong cell kind");
  return run_single_step(p, h_prev, x, 1, nullptr);
}

Vector fastrnn_step(const CellParams& p, const Vector& h_prev, const Vector& x) {
  if (p.kind != CellKind::fastrnn) throw InvalidInputError("fastrnn_step: wrong cell kind");
  if (p.step_sizes.empty()) throw InvalidInputError("fastrnn_step: no step size");
  return run_single_step(p, h_prev, x, 1, nullptr);
}

Vector antisymmetric_step(const CellParams& p, const Vector& h_prev, const Vector& x) {
  if (p.kind != CellKind::antisymmetric)
    throw InvalidInputError("antisymmetric_step: wrong cell kind");
  if (p.step_sizes.empty()) throw InvalidInputError("antisymmetric_step: no step size");
  return run_single_step(p, h_prev, x, 1, nullptr);
}

Vector ernn_step(const CellParams& p, const Vector& h_prev, const Vector& x, int K) {
  if (p.kind != CellKind::ernn) throw InvalidInputError("ernn_step: wrong cell kind");
  if (K < 1) throw InvalidInputError("ernn_step: K must be >= 1");
  std::vector<int> iterates;
  Tape tape;
  try {
    return run_single_step(p, h_prev, x, K, &iterates, &tape);
  } catch (const NumericOverflowError&) {
    const int failed = tape.last_failure_node();
    const auto it = std::lower_bound(iterates.begin(), iterates.end(), failed);
    const long iteration = it == iterates.end() ? K : it - iterates.begin();
    throw NumericOverflowError("ernn_step: non-finite iterate at iteration " +
                               std::to_string(iteration));
  }
}

Vector readout_logits(const ReadoutParams& r, const Vector& h) {
  if (r.W_out.cols() != h.size())
    throw InvalidInputError("readout_logits: hidden dim " + std::to_string(h.size()) +
                            " does not match readout with " + std::to_string(r.W_out.cols()) +
                            " columns");
  return r.W_out * h + r.b_out;
}

UnrolledModel build_unrolled(const CellParams& shape, const ReadoutParams* readout, int T,
                             int k_steps, bool per_step_eta, LossHead head) {
  if (T < 1) throw InvalidInputError("build_unrolled: T must be >= 1");
  if (head == LossHead::cross_entropy && readout == nullptr)
    throw InvalidInputError("build_unrolled: loss head needs readout parameters");
  UnrolledModel m;
  m.params = flatten_params(shape, readout, k_steps, per_step_eta, m.slots);
  m.h0_node = m.tape.constant(Vector::Zero(shape.D));
  m.tape.mark_state(m.h0_node);
  int h = m.h0_node;
  for (int t = 0; t < T; ++t) {
    const int x = m.tape.constant(Vector::Zero(shape.d));
    m.input_nodes.push_back(x);
    h = emit_cell_step(m.tape, shape, m.slots, h, x, t, nullptr);
    m.tape.mark_state(h);
  }
  m.hT_node = h;
  if (readout != nullptr) {
    m.logits_node = m.tape.readout(m.hT_node, m.slots.W_out, m.slots.b_out);
    if (head == LossHead::cross_entropy) m.loss_node = m.tape.cross_entropy(m.logits_node, 0);
  }
  return m;
}

void bind_sequence(UnrolledModel& model, const Matrix& sequence) {
  if (sequence.rows() != static_cast<Eigen::Index>(model.input_nodes.size()))
    throw InvalidInputError("bind_sequence: sequence has " + std::to_string(sequence.rows()) +
                            " steps, model expects " +
                            std::to_string(model.input_nodes.size()));
  for (Eigen::Index t = 0; t < sequence.rows(); ++t)
    model.tape.set_constant(model.input_nodes[t], sequence.row(t).transpose());
}

}  // namespace ernn
