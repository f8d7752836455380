#include "ernn/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ernn {

using nlohmann::json;

double cross_entropy(const Vector& logits, int label) {
  if (logits.size() < 2) throw InvalidInputError("cross_entropy: need at least 2 logits");
  if (label < 0 || label >= logits.size())
    throw InvalidInputError("cross_entropy: label " + std::to_string(label) + " out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[label];
}

void adam_step(AdamState& state, Params& params, const Params& grads, double lr) {
  if (params.size() != grads.size())
    throw InvalidInputError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Matrix& p : params) {
      state.m.emplace_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.emplace_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size())
    throw InvalidInputError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
      throw InvalidInputError("adam_step: gradient shape mismatch at slot " + std::to_string(i));
    if (!grads[i].allFinite())
      throw NumericOverflowError("adam_step: non-finite gradient at slot " + std::to_string(i) +
                                 ", parameters untouched");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i].cwiseProduct(grads[i]);
    const Matrix mhat = state.m[i] / bc1;
    const Matrix vhat = state.v[i] / bc2;
    params[i] -= lr * (mhat.array() / (vhat.array().sqrt() + kAdamEps)).matrix();
  }
}

double lr_schedule(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw InvalidInputError("lr_schedule: epoch must be >= 0");
  return config.lr * std::pow(0.5, epoch / config.lr_halve_every);
}

void validate(const TrainConfig& c) {
  if (c.hidden_dim < 1) throw ConfigError("model.hidden_dim", "must be >= 1");
  if (c.kind == CellKind::ernn && c.rank < 1) throw ConfigError("model.rank", "must be >= 1");
  if (c.k_steps < 1) throw ConfigError("model.k_steps", "must be >= 1");
  if (!(c.gamma > 0.0)) throw ConfigError("model.gamma", "must be > 0");
  if (!(c.eta_init > 0.0) || !std::isfinite(c.eta_init))
    throw ConfigError("model.eta", "must be a positive number");
  if (c.u_norm && !(*c.u_norm > 0.0)) throw ConfigError("model.u_norm", "must be > 0");
  if (!(c.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
  if (c.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (c.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (c.lr_halve_every < 1) throw ConfigError("train.lr_halve_every", "must be >= 1");

  switch (c.task.kind) {
    case TaskKind::noise_padded:
      if (c.task.T < 1) throw ConfigError("data.seq_len", "must be >= 1");
      if (c.task.d < 1) throw ConfigError("data.input_dim", "must be >= 1");
      if (c.task.C < 2) throw ConfigError("data.classes", "must be >= 2");
      if (c.task.informative_steps < 1 || c.task.informative_steps > c.task.T)
        throw ConfigError("data.informative_steps", "must lie in [1, data.seq_len]");
      if (c.task.noise_std < 0.0) throw ConfigError("data.noise_std", "must be >= 0");
      if (c.n_train < 1) throw ConfigError("data.n_train", "must be >= 1");
      if (c.n_test < 1) throw ConfigError("data.n_test", "must be >= 1");
      break;
    case TaskKind::random_walk:
      if (c.task.d != 1) throw ConfigError("data.input_dim", "must be 1 for random_walk");
      if (c.task.noise_std < 0.0) throw ConfigError("data.noise_std", "must be >= 0");
      break;
    case TaskKind::csv:
      if (c.task.csv_path.empty()) throw ConfigError("data.csv_path", "required for csv task");
      if (c.task.T < 1) throw ConfigError("data.seq_len", "must be >= 1");
      if (c.task.d < 1) throw ConfigError("data.input_dim", "must be >= 1");
      if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        throw ConfigError("data.train_fraction", "must lie in (0, 1)");
      break;
  }
}

namespace {

TrainConfig default_config() {
  TrainConfig c;
  c.task.kind = TaskKind::noise_padded;
  c.task.T = 200;
  c.task.d = 4;
  c.task.C = 2;
  c.task.informative_steps = 10;
  c.task.noise_std = 1.0;
  return c;
}

long as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  return v.get<long>();
}

double as_num(const std::string& key, const json& v) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

std::string as_str(const std::string& key, const json& v) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

std::uint64_t as_u64(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0)
    return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(key, "expected a nonnegative integer");
}

}  // namespace

TrainConfig config_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin, std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin, "top level must be a JSON object");

  TrainConfig c = default_config();
  bool seed_seen = false, data_seed_seen = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      c.seed = as_u64(key, value);
      seed_seen = true;
    } else if (key == "model.kind") {
      try {
        c.kind = cell_kind_from_string(as_str(key, value));
      } catch (const InvalidInputError& e) {
        throw ConfigError(key, e.what());
      }
    } else if (key == "model.hidden_dim") {
      c.hidden_dim = static_cast<int>(as_int(key, value));
    } else if (key == "model.rank") {
      c.rank = static_cast<int>(as_int(key, value));
    } else if (key == "model.k_steps") {
      c.k_steps = static_cast<int>(as_int(key, value));
    } else if (key == "model.activation") {
      try {
        c.activation = activation_from_string(as_str(key, value));
      } catch (const InvalidInputError& e) {
        throw ConfigError(key, e.what());
      }
    } else if (key == "model.gamma") {
      c.gamma = as_num(key, value);
    } else if (key == "model.eta") {
      c.eta_init = as_num(key, value);
    } else if (key == "model.u_norm") {
      c.u_norm = as_num(key, value);
    } else if (key == "model.projection") {
      const std::string s = as_str(key, value);
      if (s == "tied")
        c.tied_projection = true;
      else if (s == "identity")
        c.tied_projection = false;
      else
        throw ConfigError(key, "expected 'tied' or 'identity'");
    } else if (key == "model.per_step_eta") {
      c.per_step_eta = as_bool(key, value);
    } else if (key == "train.lr") {
      c.lr = as_num(key, value);
    } else if (key == "train.batch_size") {
      c.batch_size = static_cast<int>(as_int(key, value));
    } else if (key == "train.epochs") {
      c.epochs = static_cast<int>(as_int(key, value));
    } else if (key == "train.lr_halve_every") {
      c.lr_halve_every = static_cast<int>(as_int(key, value));
    } else if (key == "train.record_timing") {
      c.record_timing = as_bool(key, value);
    } else if (key == "data.task") {
      try {
        c.task.kind = task_kind_from_string(as_str(key, value));
      } catch (const InvalidInputError& e) {
        throw ConfigError(key, e.what());
      }
    } else if (key == "data.seq_len") {
      c.task.T = static_cast<int>(as_int(key, value));
    } else if (key == "data.input_dim") {
      c.task.d = static_cast<int>(as_int(key, value));
    } else if (key == "data.classes") {
      c.task.C = static_cast<int>(as_int(key, value));
    } else if (key == "data.informative_steps") {
      c.task.informative_steps = static_cast<int>(as_int(key, value));
    } else if (key == "data.noise_std") {
      c.task.noise_std = as_num(key, value);
    } else if (key == "data.random_offset") {
      c.task.random_offset = as_bool(key, value);
    } else if (key == "data.csv_path") {
      c.task.csv_path = as_str(key, value);
    } else if (key == "data.csv_header") {
      c.csv_header = as_bool(key, value);
    } else if (key == "data.seed") {
      c.task.seed = as_u64(key, value);
      data_seed_seen = true;
    } else if (key == "data.n_train") {
      c.n_train = static_cast<int>(as_int(key, value));
    } else if (key == "data.n_test") {
      c.n_test = static_cast<int>(as_int(key, value));
    } else if (key == "data.train_fraction") {
      c.train_fraction = as_num(key, value);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  if (seed_seen && !data_seed_seen) c.task.seed = c.seed;
  validate(c);
  return c;
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model.kind"] = to_string(c.kind);
  j["model.hidden_dim"] = c.hidden_dim;
  j["model.rank"] = c.rank;
  j["model.k_steps"] = c.k_steps;
  j["model.activation"] = to_string(c.activation);
  j["model.gamma"] = c.gamma;
  j["model.eta"] = c.eta_init;
  if (c.u_norm) j["model.u_norm"] = *c.u_norm;
  j["model.projection"] = c.tied_projection ? "tied" : "identity";
  j["model.per_step_eta"] = c.per_step_eta;
  j["train.lr"] = c.lr;
  j["train.batch_size"] = c.batch_size;
  j["train.epochs"] = c.epochs;
  j["train.lr_halve_every"] = c.lr_halve_every;
  j["train.record_timing"] = c.record_timing;
  j["data.task"] = to_string(c.task.kind);
  j["data.seq_len"] = c.task.T;
  j["data.input_dim"] = c.task.d;
  j["data.classes"] = c.task.C;
  j["data.informative_steps"] = c.task.informative_steps;
  j["data.noise_std"] = c.task.noise_std;
  j["data.random_offset"] = c.task.random_offset;
  if (!c.task.csv_path.empty()) j["data.csv_path"] = c.task.csv_path;
  j["data.csv_header"] = c.csv_header;
  j["data.seed"] = c.task.seed;
  j["data.n_train"] = c.n_train;
  j["data.n_test"] = c.n_test;
  j["data.train_fraction"] = c.train_fraction;
  return j.dump(2);
}

Checkpoint init_checkpoint(const TrainConfig& config, int T, int input_dim, int classes) {
  validate(config);
  if (T < 1 || input_dim < 1) throw InvalidInputError("init_checkpoint: bad data shape");
  if (classes < 2) throw InvalidInputError("init_checkpoint: need at least 2 classes");

  Rng rng(config.seed);
  CellParams cell = init_cell_params(config.kind, config.hidden_dim, input_dim, config.rank,
                                     config.k_steps, config.activation, config.gamma, rng);
  cell.tied_projection = config.tied_projection;
  for (double& eta : cell.step_sizes) eta = config.eta_init;
  if (config.u_norm) set_transition_norm(cell, *config.u_norm, rng);
  ReadoutParams readout = init_readout(classes, config.hidden_dim, rng);

  if (config.per_step_eta) {
    const std::vector<double> block = cell.step_sizes;
    cell.step_sizes.clear();
    for (int t = 0; t < T; ++t)
      cell.step_sizes.insert(cell.step_sizes.end(), block.begin(), block.end());
  }

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.cell = std::move(cell);
  ckpt.readout = std::move(readout);
  ckpt.rng_state = rng.state();
  ckpt.epoch = 0;
  return ckpt;
}

namespace {

struct EvalNumbers {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalNumbers run_eval(UnrolledModel& model, const SequenceDataset& data) {
  EvalNumbers out;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    bind_sequence(model, data.sequences[i]);
    model.tape.forward(model.params);
    const Vector& logits = model.tape.value(model.logits_node);
    out.loss += cross_entropy(logits, data.labels[i]);
    Eigen::Index pred = 0;
    logits.maxCoeff(&pred);
    out.accuracy += pred == data.labels[i] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(data.sequences.size());
  out.loss /= n;
  out.accuracy /= n;
  return out;
}

void check_dataset(const SequenceDataset& data, int classes, const char* which) {
  if (data.sequences.empty())
    throw InvalidInputError(std::string("fit: ") + which + " dataset is empty");
  for (int label : data.labels)
    if (label < 0 || label >= classes)
      throw InvalidInputError(std::string("fit: ") + which + " label outside class range");
}

}  // namespace

FitResult fit_resume(const Checkpoint& start, const SequenceDataset& train,
                     const SequenceDataset& test, const EpochCallback& on_epoch) {
  const TrainConfig& config = start.config;
  validate(config);
  check_dataset(train, start.readout.W_out.rows(), "train");
  check_dataset(test, start.readout.W_out.rows(), "test");
  if (train.d != start.cell.d || test.d != start.cell.d)
    throw InvalidInputError("fit: dataset feature dim does not match the model");

  UnrolledModel model = build_unrolled(start.cell, &start.readout, train.T, config.k_steps,
                                       config.per_step_eta, LossHead::cross_entropy);
  Rng rng(config.seed);
  rng.set_state(start.rng_state);
  AdamState adam = start.adam;
  std::vector<Metrics> history = start.history;
  const int n = static_cast<int>(train.sequences.size());

  Checkpoint current = start;
  for (int epoch = start.epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_now = lr_schedule(config, epoch);
    const std::vector<int> order = rng.permutation(n);

    double loss_sum = 0.0;
    Params grads;
    for (const Matrix& p : model.params) grads.emplace_back(Matrix::Zero(p.rows(), p.cols()));

    for (int begin = 0; begin < n; begin += config.batch_size) {
      const int end = std::min(n, begin + config.batch_size);
      for (Matrix& g : grads) g.setZero();
      for (int i = begin; i < end; ++i) {
        const int idx = order[i];
        bind_sequence(model, train.sequences[idx]);
        model.tape.set_label(model.loss_node, train.labels[idx]);
        const Vector& loss = model.tape.forward(model.params);
        loss_sum += loss[0];
        GradientSet g = model.tape.backward(Vector::Ones(1));
        for (std::size_t s = 0; s < grads.size(); ++s) grads[s] += g.param_grads[s];
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (Matrix& g : grads) g *= scale;
      adam_step(adam, model.params, grads, lr_now);
    }

    const EvalNumbers test_eval = run_eval(model, test);

    // Gradient-flow diagnostic on the first test sequence.
    bind_sequence(model, test.sequences[0]);
    model.tape.forward(model.params);
    const int t_last = static_cast<int>(model.tape.state_nodes().size()) - 1;
    const double bptt = spectral_norm(model.tape.state_jacobian(1, t_last));

    Metrics row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.test_loss = test_eval.loss;
    row.test_acc = test_eval.accuracy;
    row.lr = lr_now;
    row.bptt_norm = bptt;
    if (config.record_timing) {
      const auto t1 = std::chrono::steady_clock::now();
      row.seconds = std::chrono::duration<double>(t1 - t0).count();
    }
    history.push_back(row);

    unflatten_params(model.params, model.slots, current.cell, &current.readout);
    current.adam = adam;
    current.rng_state = rng.state();
    current.epoch = epoch + 1;
    current.history = history;
    if (on_epoch) on_epoch(current, row);
  }
  return {current, history};
}

FitResult fit(const TrainConfig& config, const SequenceDataset& train,
              const SequenceDataset& test, const EpochCallback& on_epoch) {
  if (train.sequences.empty()) throw InvalidInputError("fit: train dataset is empty");
  const Checkpoint fresh = init_checkpoint(config, train.T, train.d, std::max(train.C, 2));
  return fit_resume(fresh, train, test, on_epoch);
}

Metrics evaluate(const Checkpoint& ckpt, const SequenceDataset& data) {
  if (data.sequences.empty()) throw InvalidInputError("evaluate: dataset is empty");
  UnrolledModel model = build_unrolled(ckpt.cell, &ckpt.readout, data.T, ckpt.config.k_steps,
                                       ckpt.config.per_step_eta, LossHead::none);
  const EvalNumbers e = run_eval(model, data);
  Metrics m;
  m.epoch = ckpt.epoch;
  m.test_loss = e.loss;
  m.test_acc = e.accuracy;
  return m;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw InvalidInputError("checkpoint: malformed matrix '" + name + "'");
  const Eigen::Index rows = j["rows"].get<Eigen::Index>();
  const Eigen::Index cols = j["cols"].get<Eigen::Index>();
  const auto& data = j["data"];
  if (rows < 0 || cols < 0 || !data.is_array() ||
      data.size() != static_cast<std::size_t>(rows * cols))
    throw InvalidInputError("checkpoint: matrix '" + name + "' has inconsistent shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[k++].get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  Matrix m(v.size(), 1);
  m.col(0) = v;
  return matrix_to_json(m);
}

Vector vector_from_json(const json& j, const std::string& name) {
  const Matrix m = matrix_from_json(j, name);
  if (m.cols() != 1) throw InvalidInputError("checkpoint: '" + name + "' is not a vector");
  return m.col(0);
}

json params_list_to_json(const Params& params) {
  json arr = json::array();
  for (const Matrix& p : params) arr.push_back(matrix_to_json(p));
  return arr;
}

Params params_list_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw InvalidInputError("checkpoint: '" + name + "' must be an array");
  Params out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(matrix_from_json(j[i], name + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["schema_version"] = ckpt.schema_version;
  j["config"] = json::parse(config_to_json(ckpt.config));

  json params;
  const CellParams& c = ckpt.cell;
  if (c.kind == CellKind::ernn) {
    params["V"] = matrix_to_json(c.V);
    params["H"] = matrix_to_json(c.H);
  } else {
    params["U"] = matrix_to_json(c.U);
  }
  params["W"] = matrix_to_json(c.W);
  params["b"] = vector_to_json(c.b);
  params["step_sizes"] = c.step_sizes;
  params["W_out"] = matrix_to_json(ckpt.readout.W_out);
  params["b_out"] = vector_to_json(ckpt.readout.b_out);
  j["params"] = std::move(params);

  j["adam"] = json{{"t", ckpt.adam.t},
                   {"m", params_list_to_json(ckpt.adam.m)},
                   {"v", params_list_to_json(ckpt.adam.v)}};
  j["rng_state"] = ckpt.rng_state;
  j["epoch"] = ckpt.epoch;

  json metrics = json::array();
  for (const Metrics& m : ckpt.history)
    metrics.push_back(json{{"epoch", m.epoch},
                           {"train_loss", m.train_loss},
                           {"test_loss", m.test_loss},
                           {"test_acc", m.test_acc},
                           {"lr", m.lr},
                           {"seconds", m.seconds},
                           {"bptt_norm", m.bptt_norm}});
  j["metrics"] = std::move(metrics);

  std::ofstream out(path);
  if (!out) throw InvalidInputError("save_checkpoint: cannot open " + path);
  out << j.dump(2) << '\n';
  if (!out) throw InvalidInputError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("load_checkpoint: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();

  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::exception& e) {
    throw InvalidInputError("load_checkpoint: " + path + " is malformed: " + e.what());
  }

  try {
    Checkpoint ckpt;
    ckpt.schema_version = j.at("schema_version").get<int>();
    if (ckpt.schema_version != 1)
      throw InvalidInputError("load_checkpoint: unsupported schema_version " +
                              std::to_string(ckpt.schema_version));
    ckpt.config = config_from_json_text(j.at("config").dump(), path);

    const json& params = j.at("params");
    CellParams& c = ckpt.cell;
    c.kind = ckpt.config.kind;
    c.D = ckpt.config.hidden_dim;
    c.d = ckpt.config.task.d;
    c.d1 = ckpt.config.rank;
    c.act = ckpt.config.activation;
    c.gamma = ckpt.config.gamma;
    c.tied_projection = ckpt.config.tied_projection;
    if (c.kind == CellKind::ernn) {
      c.V = matrix_from_json(params.at("V"), "V");
      c.H = matrix_from_json(params.at("H"), "H");
      if (c.V.rows() != c.D || c.H.cols() != c.D || c.V.cols() != c.H.rows())
        throw InvalidInputError("load_checkpoint: V/H shapes inconsistent with config");
      c.d1 = static_cast<int>(c.V.cols());
    } else {
      c.U = matrix_from_json(params.at("U"), "U");
      if (c.U.rows() != c.D || c.U.cols() != c.D)
        throw InvalidInputError("load_checkpoint: U shape inconsistent with config");
    }
    c.W = matrix_from_json(params.at("W"), "W");
    if (c.W.rows() != c.D) throw InvalidInputError("load_checkpoint: W shape mismatch");
    c.d = static_cast<int>(c.W.cols());
    c.b = vector_from_json(params.at("b"), "b");
    if (c.b.size() != c.D) throw InvalidInputError("load_checkpoint: b shape mismatch");
    c.step_sizes = params.at("step_sizes").get<std::vector<double>>();
    ckpt.readout.W_out = matrix_from_json(params.at("W_out"), "W_out");
    ckpt.readout.b_out = vector_from_json(params.at("b_out"), "b_out");
    if (ckpt.readout.W_out.cols() != c.D || ckpt.readout.b_out.size() != ckpt.readout.W_out.rows())
      throw InvalidInputError("load_checkpoint: readout shape mismatch");

    const json& adam = j.at("adam");
    ckpt.adam.t = adam.at("t").get<long>();
    ckpt.adam.m = params_list_from_json(adam.at("m"), "adam.m");
    ckpt.adam.v = params_list_from_json(adam.at("v"), "adam.v");

    const auto rng_words = j.at("rng_state").get<std::vector<std::uint64_t>>();
    if (rng_words.size() != 4)
      throw InvalidInputError("load_checkpoint: rng_state must hold 4 words");
    std::copy(rng_words.begin(), rng_words.end(), ckpt.rng_state.begin());
    ckpt.epoch = j.at("epoch").get<int>();

    for (const json& row : j.at("metrics")) {
      Metrics m;
      m.epoch = row.at("epoch").get<int>();
      m.train_loss = row.at("train_loss").get<double>();
      m.test_loss = row.at("test_loss").get<double>();
      m.test_acc = row.at("test_acc").get<double>();
      m.lr = row.at("lr").get<double>();
      m.seconds = row.at("seconds").get<double>();
      m.bptt_norm = row.at("bptt_norm").get<double>();
      ckpt.history.push_back(m);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw InvalidInputError("load_checkpoint: " + path + " is missing fields: " + e.what());
  }
}

}  // namespace ernn
