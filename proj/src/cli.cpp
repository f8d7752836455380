#include "ernn/cli.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

#include "ernn/equilibrium.hpp"
#include "ernn/train.hpp"

namespace ernn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_blob_hash(const std::string& bytes) {
  std::string blob = "blob " + std::to_string(bytes.size());
  blob.push_back('\0');
  blob += bytes;

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw Error("config_blob_hash: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Shape that satisfies the gradcheck dimension caps out of the box.
constexpr const char* kGradcheckDefaults = R"({
  "model.hidden_dim": 4,
  "model.rank": 2,
  "model.k_steps": 2,
  "data.seq_len": 3,
  "data.informative_steps": 2
})";

struct RunContext {
  std::string command;
  CliOptions options;
  TrainConfig config;
  std::string config_origin;
  std::string config_hash;
  std::string started;
  std::vector<std::string> outputs;
  bool manifest_written = false;

  fs::path dir() const { return fs::path(options.out_dir); }

  void add_output(const std::string& name) { outputs.push_back(name); }

  void write_manifest() {
    if (manifest_written) return;
    json j;
    j["command"] = command;
    j["config_path"] = config_origin;
    j["config_sha1"] = config_hash;
    j["seed"] = config.seed;
    j["started"] = started;
    j["finished"] = utc_now();
    j["outputs"] = outputs;
    std::ofstream out(dir() / "manifest.json");
    if (!out) throw InvalidInputError("cannot write manifest.json in " + options.out_dir);
    out << j.dump(2) << '\n';
    manifest_written = true;
  }
};

RunContext make_context(const std::string& command, const CliOptions& options) {
  RunContext ctx;
  ctx.command = command;
  ctx.options = options;
  if (options.config_path.empty()) {
    ctx.config_origin = "<defaults>";
    const std::string text = command == "gradcheck" ? kGradcheckDefaults : "{}";
    ctx.config = config_from_json_text(text, ctx.config_origin);
    ctx.config_hash = config_blob_hash(text);
  } else {
    const std::string text = read_file(options.config_path);
    ctx.config_origin = options.config_path;
    ctx.config = config_from_json_text(text, options.config_path);
    ctx.config_hash = config_blob_hash(text);
  }
  if (options.seed) {
    const bool data_seed_distinct = ctx.config.task.seed != ctx.config.seed;
    ctx.config.seed = *options.seed;
    if (!data_seed_distinct) ctx.config.task.seed = *options.seed;
  }
  std::error_code ec;
  fs::create_directories(ctx.dir(), ec);
  if (ec) throw InvalidInputError("cannot create output directory " + options.out_dir);
  ctx.started = utc_now();
  return ctx;
}

struct CsvWriter {
  std::ofstream out;
  std::string name;
  long rows = 0;

  CsvWriter(const fs::path& path, const std::string& header) : name(path.string()) {
    out.open(path);
    if (!out) throw InvalidInputError("cannot open " + name);
    out << header << '\n';
  }
  void field(std::string& line, const std::string& cell) {
    if (!line.empty()) line.push_back(',');
    line += cell;
  }
  void row(const std::vector<std::string>& cells) {
    std::string line;
    for (const std::string& c : cells) field(line, c);
    out << line << '\n';
    ++rows;
    if (!out) throw InvalidInputError("write failed for " + name);
  }
};

std::string fmt_int(long v) { return std::to_string(v); }

std::pair<SequenceDataset, SequenceDataset> train_test_data(const TrainConfig& cfg) {
  if (cfg.task.kind == TaskKind::random_walk)
    throw ConfigError("data.task", "random_walk carries no labels; use noise_padded or csv");
  if (cfg.task.kind == TaskKind::noise_padded) {
    Rng rng(cfg.task.seed);
    SequenceDataset train = gen_noise_padded(cfg.task, cfg.n_train, rng);
    SequenceDataset test = gen_noise_padded(cfg.task, cfg.n_test, rng);
    return {std::move(train), std::move(test)};
  }
  const SequenceDataset all =
      load_csv_sequences(cfg.task.csv_path, cfg.task.T, cfg.task.d, cfg.csv_header);
  Rng rng(cfg.task.seed);
  return split_normalize(all, cfg.train_fraction, rng);
}

// Inputs only; works for every task kind.
Matrix first_sequence(const TrainConfig& cfg) {
  Rng rng(cfg.task.seed);
  switch (cfg.task.kind) {
    case TaskKind::random_walk: {
      const std::vector<Vector> walk = gen_random_walk(cfg.task, cfg.task.T, rng);
      Matrix seq(static_cast<Eigen::Index>(walk.size()), 1);
      for (std::size_t k = 0; k < walk.size(); ++k) seq(static_cast<Eigen::Index>(k), 0) = walk[k][0];
      return seq;
    }
    case TaskKind::noise_padded:
      return gen_noise_padded(cfg.task, 1, rng).sequences.at(0);
    case TaskKind::csv:
      return load_csv_sequences(cfg.task.csv_path, cfg.task.T, cfg.task.d, cfg.csv_header)
          .sequences.at(0);
  }
  throw StateError("first_sequence: unreachable");
}

int cmd_train(RunContext& ctx, std::ostream& out) {
  const auto [train_set, test_set] = train_test_data(ctx.config);

  CsvWriter metrics(ctx.dir() / "metrics.csv", "epoch,train_loss,test_loss,test_acc,lr,seconds");
  ctx.add_output("metrics.csv");
  const std::string ckpt_path = (ctx.dir() / "checkpoint.json").string();
  bool ckpt_listed = false;

  const FitResult result =
      fit(ctx.config, train_set, test_set, [&](const Checkpoint& ckpt, const Metrics& m) {
        metrics.row({fmt_int(m.epoch), format_double(m.train_loss), format_double(m.test_loss),
                     format_double(m.test_acc), format_double(m.lr), format_double(m.seconds)});
        metrics.out.flush();
        save_checkpoint(ckpt, ckpt_path);
        if (!ckpt_listed) {
          ctx.add_output("checkpoint.json");
          ckpt_listed = true;
        }
      });

  const Metrics& last = result.history.back();
  out << "trained " << to_string(ctx.config.kind) << " for " << result.checkpoint.epoch
      << " epochs; test_acc " << format_double(last.test_acc) << ", test_loss "
      << format_double(last.test_loss) << "\n";
  return 0;
}

int cmd_phase_space(RunContext& ctx, std::ostream& out) {
  const TrainConfig& cfg = ctx.config;
  constexpr int kSteps = 1000;
  constexpr int kDim = 2;

  TaskSpec walk_spec = cfg.task;
  walk_spec.kind = TaskKind::random_walk;
  walk_spec.d = 1;
  Rng walk_rng(walk_spec.seed);
  const std::vector<Vector> walk = gen_random_walk(walk_spec, kSteps, walk_rng);

  // One parameter draw shared by all three models.
  Rng prng(cfg.seed);
  CellParams base =
      init_cell_params(CellKind::vanilla, kDim, 1, kDim, 1, cfg.activation, cfg.gamma, prng);
  if (cfg.u_norm) set_transition_norm(base, *cfg.u_norm, prng);

  CellParams fast = base;
  fast.kind = CellKind::fastrnn;
  fast.step_sizes.assign(1, cfg.eta_init);

  CellParams eq = base;
  eq.kind = CellKind::ernn;
  eq.d1 = kDim;
  eq.V = base.U - Matrix::Identity(kDim, kDim);
  eq.H = Matrix::Identity(kDim, kDim);
  eq.U.resize(0, 0);
  eq.tied_projection = cfg.tied_projection;
  eq.step_sizes.assign(static_cast<std::size_t>(cfg.k_steps), cfg.eta_init);

  CsvWriter csv(ctx.dir() / "trajectories.csv", "step,model,h1,h2");
  const auto emit = [&](int step, const char* model, const Vector& h) {
    csv.row({fmt_int(step), model, format_double(h[0]), format_double(h[1])});
  };

  Vector h = Vector::Zero(kDim);
  for (int k = 0; k < kSteps; ++k) {
    h = vanilla_step(base, h, walk[k]);
    emit(k + 1, "vanilla", h);
  }
  h.setZero();
  for (int k = 0; k < kSteps; ++k) {
    h = fastrnn_step(fast, h, walk[k]);
    emit(k + 1, "fastrnn", h);
  }
  // The ernn column plots the equilibrium iterate z_k = h_k + h_{k-1}, the
  // quantity the fixed-point solve drives to the manifold.
  Vector h_prev = Vector::Zero(kDim);
  for (int k = 0; k < kSteps; ++k) {
    const Vector h_k = ernn_step(eq, h_prev, walk[k], cfg.k_steps);
    emit(k + 1, "ernn", h_k + h_prev);
    h_prev = h_k;
  }

  ctx.add_output("trajectories.csv");
  out << "wrote trajectories.csv (" << csv.rows << " rows)\n";
  return 0;
}

int cmd_grad_flow(RunContext& ctx, std::ostream& out) {
  const Matrix seq = first_sequence(ctx.config);
  const int T = static_cast<int>(seq.rows());
  std::vector<Vector> inputs;
  inputs.reserve(T);
  for (int t = 0; t < T; ++t) inputs.push_back(seq.row(t).transpose());

  CsvWriter csv(ctx.dir() / "gradnorms.csv", "n,model,spectral_norm_dhT_dhn");
  for (const CellKind kind : {CellKind::ernn, CellKind::vanilla}) {
    TrainConfig cfg = ctx.config;
    cfg.kind = kind;
    const Checkpoint ckpt = init_checkpoint(cfg, T, static_cast<int>(seq.cols()), 2);
    const std::vector<double> norms = bptt_norm_profile(ckpt.cell, inputs, cfg.k_steps);
    for (int n = 1; n < T; ++n)
      csv.row({fmt_int(n), to_string(kind), format_double(norms[n - 1])});
  }

  ctx.add_output("gradnorms.csv");
  out << "wrote gradnorms.csv (" << csv.rows << " rows)\n";
  return 0;
}

int cmd_fixed_point(RunContext& ctx, std::ostream& out) {
  const TrainConfig& cfg = ctx.config;
  if (cfg.kind != CellKind::ernn)
    throw ConfigError("model.kind", "fixed-point analysis needs the ernn cell");

  const Matrix seq = first_sequence(cfg);
  const Checkpoint ckpt = init_checkpoint(cfg, 1, static_cast<int>(seq.cols()), 2);
  const Vector x = seq.row(0).transpose();
  const Vector h_prev = Vector::Zero(cfg.hidden_dim);

  const EquilibriumPoint oracle = oracle_equilibrium(ckpt.cell, h_prev, x);
  const ConvergenceReport rep = iterate_euler(ckpt.cell, h_prev, x, cfg.k_steps, oracle);

  CsvWriter csv(ctx.dir() / "convergence.csv",
                "i,residual_norm,oracle_distance,ratio,descent_condition");
  for (std::size_t i = 0; i < rep.iterates.size(); ++i) {
    csv.row({fmt_int(static_cast<long>(i)), format_double(rep.residual_norms[i]),
             format_double(rep.oracle_distances[i]), format_double(rep.contraction_ratios[i]),
             rep.descent_condition_holds[i] ? "1" : "0"});
    if (rep.oracle_distances[i] <= 1e-12) break;  // already at the equilibrium
  }

  ctx.add_output("convergence.csv");
  out << "wrote convergence.csv (" << csv.rows << " rows); newton_iterations="
      << oracle.newton_iterations << " tau_bound=" << format_double(rep.tau_bound) << "\n";
  return 0;
}

int cmd_stability(RunContext& ctx, std::ostream& out) {
  const TrainConfig& cfg = ctx.config;
  if (cfg.kind != CellKind::ernn)
    throw ConfigError("model.kind", "stability analysis needs the ernn cell");

  // Evaluation points: final transition of each sequence in a batch, or
  // every transition along one walk for the random_walk task.
  struct Point {
    Vector h, h_prev, x;
  };
  std::vector<Point> points;
  int input_dim = cfg.task.d;

  if (cfg.task.kind == TaskKind::random_walk) {
    const Matrix seq = first_sequence(cfg);
    input_dim = static_cast<int>(seq.cols());
    const Checkpoint ckpt = init_checkpoint(cfg, 1, input_dim, 2);
    Vector h_prev = Vector::Zero(cfg.hidden_dim);
    for (int t = 0; t < seq.rows(); ++t) {
      const Vector x = seq.row(t).transpose();
      const Vector h = ernn_step(ckpt.cell, h_prev, x, cfg.k_steps);
      points.push_back({h, h_prev, x});
      h_prev = h;
    }
  } else {
    SequenceDataset batch;
    if (cfg.task.kind == TaskKind::noise_padded) {
      Rng rng(cfg.task.seed);
      batch = gen_noise_padded(cfg.task, cfg.n_test, rng);
    } else {
      batch = load_csv_sequences(cfg.task.csv_path, cfg.task.T, cfg.task.d, cfg.csv_header);
    }
    input_dim = batch.d;
    const Checkpoint ckpt = init_checkpoint(cfg, 1, input_dim, 2);
    for (const Matrix& seq : batch.sequences) {
      Vector h_prev = Vector::Zero(cfg.hidden_dim);
      Vector h = h_prev, x = Vector::Zero(input_dim);
      for (int t = 0; t < seq.rows(); ++t) {
        x = seq.row(t).transpose();
        const Vector h_next = ernn_step(ckpt.cell, h_prev, x, cfg.k_steps);
        if (t + 1 < seq.rows()) h_prev = h_next;
        h = h_next;
      }
      points.push_back({h, h_prev, x});
    }
  }

  const Checkpoint ckpt = init_checkpoint(cfg, 1, input_dim, 2);
  CsvWriter csv(ctx.dir() / "spectrum.csv", "sample,eig_index,re,im");
  double max_re = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < points.size(); ++s) {
    const Spectrum sp = stability_spectrum(ckpt.cell, points[s].h, points[s].h_prev, points[s].x);
    for (std::size_t j = 0; j < sp.eigenvalues.size(); ++j) {
      const std::complex<double> ev = sp.eigenvalues[j];
      max_re = std::max(max_re, ev.real());
      csv.row({fmt_int(static_cast<long>(s)), fmt_int(static_cast<long>(j)),
               format_double(ev.real()), format_double(ev.imag())});
    }
  }

  ctx.add_output("spectrum.csv");
  out << "wrote spectrum.csv (" << csv.rows << " rows); max_re=" << format_double(max_re) << "\n";
  return 0;
}

std::string slot_name(const ModelSlots& slots, int s) {
  if (s == slots.U) return "U";
  if (s == slots.V) return "V";
  if (s == slots.H) return "H";
  if (s == slots.W) return "W";
  if (s == slots.b) return "b";
  if (s == slots.W_out) return "W_out";
  if (s == slots.b_out) return "b_out";
  for (std::size_t k = 0; k < slots.eta.size(); ++k)
    if (s == slots.eta[k]) return "eta[" + std::to_string(k) + "]";
  return "slot" + std::to_string(s);
}

int cmd_gradcheck(RunContext& ctx, std::ostream& out) {
  const TrainConfig& cfg = ctx.config;
  if (cfg.hidden_dim > 8) throw ConfigError("model.hidden_dim", "gradcheck caps hidden_dim at 8");
  if (cfg.task.T > 4) throw ConfigError("data.seq_len", "gradcheck caps seq_len at 4");
  if (cfg.task.kind == TaskKind::random_walk)
    throw ConfigError("data.task", "random_walk carries no labels; use noise_padded or csv");

  SequenceDataset sample;
  if (cfg.task.kind == TaskKind::noise_padded) {
    Rng rng(cfg.task.seed);
    sample = gen_noise_padded(cfg.task, 1, rng);
  } else {
    sample = load_csv_sequences(cfg.task.csv_path, cfg.task.T, cfg.task.d, cfg.csv_header);
  }
  const Matrix& seq = sample.sequences.at(0);
  const int label = sample.labels.at(0);

  constexpr double kTol = 1e-6;
  bool all_ok = true;
  for (const CellKind kind :
       {CellKind::vanilla, CellKind::fastrnn, CellKind::antisymmetric, CellKind::ernn}) {
    TrainConfig kcfg = cfg;
    kcfg.kind = kind;
    const Checkpoint ckpt =
        init_checkpoint(kcfg, sample.T, sample.d, std::max(sample.C, 2));
    UnrolledModel model = build_unrolled(ckpt.cell, &ckpt.readout, sample.T, kcfg.k_steps,
                                         kcfg.per_step_eta, LossHead::cross_entropy);
    bind_sequence(model, seq);
    model.tape.set_label(model.loss_node, label);
    if (ctx.options.corrupt_backward)
      model.tape.set_gradient_bias_for_tests(model.slots.W, 1e-3);

    const GradcheckReport rep = gradcheck(model.tape, model.params, 1e-5);
    out << to_string(kind) << ": max_rel_error=" << format_double(rep.max_rel_error)
        << " checked=" << rep.checked << " excluded=" << rep.excluded << "\n";
    if (!(rep.max_rel_error <= kTol)) {
      all_ok = false;
      out << "  offending blocks:";
      for (std::size_t s = 0; s < rep.per_slot_max.size(); ++s)
        if (!(rep.per_slot_max[s] <= kTol)) out << ' ' << slot_name(model.slots, static_cast<int>(s));
      out << "\n";
    }
  }
  out << (all_ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err) {
  std::unique_ptr<RunContext> ctx;
  try {
    ctx = std::make_unique<RunContext>(make_context(command, options));
    int rc = 0;
    if (command == "train")
      rc = cmd_train(*ctx, out);
    else if (command == "phase-space")
      rc = cmd_phase_space(*ctx, out);
    else if (command == "grad-flow")
      rc = cmd_grad_flow(*ctx, out);
    else if (command == "fixed-point")
      rc = cmd_fixed_point(*ctx, out);
    else if (command == "stability")
      rc = cmd_stability(*ctx, out);
    else if (command == "gradcheck")
      rc = cmd_gradcheck(*ctx, out);
    else
      throw InvalidInputError("unknown command: " + command);
    ctx->write_manifest();
    return rc;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericOverflowError& e) {
    err << "numeric failure: " << e.what() << "\n";
    if (ctx) try {
        ctx->write_manifest();
      } catch (...) {
      }
    return 3;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << "\n";
    if (ctx) try {
        ctx->write_manifest();
      } catch (...) {
      }
    return 3;
  } catch (const InvalidInputError& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace ernn
