// End-to-end acceptance gate. Each check prints one [PASS]/[FAIL] line with
// the measured quantity and its elapsed time; the process exits nonzero when
// any required check fails. The optional real-data check (9) runs only when
// a dataset is supplied via --har2 and never affects the exit code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ernn/cells.hpp"
#include "ernn/cli.hpp"
#include "ernn/equilibrium.hpp"
#include "ernn/numerics.hpp"
#include "ernn/tasks.hpp"
#include "ernn/train.hpp"

using namespace ernn;
namespace fs = std::filesystem;

namespace {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_check(int index, const std::string& label, double budget_seconds,
               const std::function<CheckResult()>& body, bool required = true) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (elapsed > budget_seconds) {
    r.pass = false;
    r.detail += (r.detail.empty() ? "" : "; ") + std::string("over time budget of ") +
                format_double(budget_seconds) + "s";
  }
  if (!r.pass && required) ++g_failures;
  std::printf("[%s] %d. %s — %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", index, label.c_str(),
              r.detail.c_str(), elapsed);
  std::fflush(stdout);
}

void skip_check(int index, const std::string& label, const std::string& why) {
  std::printf("[SKIP] %d. %s — %s\n", index, label.c_str(), why.c_str());
}

CellParams tanh_ernn(int D, int d, int d1, int K, double u_norm, double eta, std::uint64_t seed) {
  Rng rng(seed);
  CellParams p = init_cell_params(CellKind::ernn, D, d, d1, K, Activation::tanh_fn, 1.0, rng);
  if (u_norm > 0.0) set_transition_norm(p, u_norm, rng);
  for (double& e : p.step_sizes) e = eta;
  return p;
}

// 1-d cell with identity activation and untied projection: the update is
// h <- h + eta (u (h + h_prev) + x - (h + h_prev)), a linear map whose
// distance to the fixed point shrinks by exactly 1 - eta (1 - u) per step.
CellParams scalar_linear(double u, double eta, int K) {
  Rng rng(0);
  CellParams p = init_cell_params(CellKind::ernn, 1, 1, 1, K, Activation::identity, 1.0, rng);
  p.V = Matrix::Constant(1, 1, u - 1.0);
  p.H = Matrix::Identity(1, 1);
  p.W = Matrix::Identity(1, 1);
  p.b = Vector::Zero(1);
  p.tied_projection = false;
  p.step_sizes.assign(static_cast<std::size_t>(K), eta);
  return p;
}

double infinity_norm(const Matrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ernn_acceptance_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("acceptance: missing " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// test_acc is the fourth column of metrics.csv.
std::vector<double> accuracy_column(const fs::path& metrics) {
  std::ifstream in(metrics);
  if (!in) throw InvalidInputError("acceptance: missing " + metrics.string());
  std::vector<double> acc;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < 4 && std::getline(ss, cell, ','); ++c) {
    }
    acc.push_back(std::stod(cell));
  }
  return acc;
}

int run_cli(const std::string& command, const fs::path& config, const fs::path& out_dir,
            std::string* stdout_text = nullptr) {
  CliOptions opt;
  opt.config_path = config.string();
  opt.out_dir = out_dir.string();
  std::ostringstream out, err;
  const int rc = run_command(command, opt, out, err);
  if (stdout_text) *stdout_text = out.str();
  if (rc != 0 && stdout_text) *stdout_text += err.str();
  return rc;
}

// Noise-padded classification with a 10-step signal buried in 200 steps.
// The twin runs differ only in the cell kind; everything else is shared.
std::string long_horizon_config(const std::string& kind) {
  return std::string("{\n"
                     "  \"seed\": 1,\n"
                     "  \"model.kind\": \"") +
         kind +
         "\",\n"
         "  \"model.hidden_dim\": 16,\n"
         "  \"model.rank\": 16,\n"
         "  \"model.k_steps\": 3,\n"
         "  \"model.activation\": \"relu\",\n"
         "  \"model.gamma\": 1.0,\n"
         "  \"model.eta\": 1.0,\n"
         "  \"model.u_norm\": 0.9,\n"
         "  \"train.lr\": 0.01,\n"
         "  \"train.batch_size\": 32,\n"
         "  \"train.epochs\": 30,\n"
         "  \"train.lr_halve_every\": 10,\n"
         "  \"data.task\": \"noise_padded\",\n"
         "  \"data.seq_len\": 200,\n"
         "  \"data.input_dim\": 4,\n"
         "  \"data.classes\": 2,\n"
         "  \"data.informative_steps\": 10,\n"
         "  \"data.noise_std\": 0.1,\n"
         "  \"data.n_train\": 2000,\n"
         "  \"data.n_test\": 1000\n"
         "}\n";
}

CheckResult check_identity_gradient() {
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    CellParams p = init_cell_params(CellKind::ernn, 8, 4, 2, 5, Activation::tanh_fn, 1.0, rng);
    const Vector h_prev = gaussian(rng, 8, 1.0);
    const Vector x = gaussian(rng, 4, 1.0);
    const EquilibriumPoint eq = oracle_equilibrium(p, h_prev, x);
    const Matrix J = implicit_state_jacobian(p, eq, h_prev, x);
    worst = std::max(worst, infinity_norm(J + Matrix::Identity(8, 8)));
  }
  return {worst <= 1e-8, "max |J + I|_inf = " + format_double(worst) + " over 20 seeds"};
}

CheckResult check_norm_preservation() {
  Rng input_rng(7);
  std::vector<Vector> inputs;
  for (int t = 0; t < 128; ++t) inputs.push_back(gaussian(input_rng, 4, 1.0));

  const CellParams eq_cell = tanh_ernn(16, 4, 16, 5, 0.5, 1.0, 42);
  const std::vector<double> eq_norms = bptt_norm_profile(eq_cell, inputs, 5);
  double lo = eq_norms.front(), hi = eq_norms.front();
  for (double v : eq_norms) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  Rng vrng(42);
  CellParams vanilla =
      init_cell_params(CellKind::vanilla, 16, 4, 16, 1, Activation::tanh_fn, 1.0, vrng);
  set_transition_norm(vanilla, 0.5, vrng);
  const double first = bptt_norm_profile(vanilla, inputs, 1).front();

  const bool pass = lo >= 0.5 && hi <= 2.0 && first <= 1e-2;
  return {pass, "equilibrium norms in [" + format_double(lo) + ", " + format_double(hi) +
                    "] over 127 steps; contractive baseline |dh_T/dh_1| = " +
                    format_double(first)};
}

CheckResult check_linear_convergence() {
  // Exact scalar rate.
  const CellParams scalar = scalar_linear(0.5, 0.1, 10);
  const Vector zero = Vector::Zero(1);
  const Vector x = Vector::Constant(1, 1.0);
  const ConvergenceReport srep = iterate_euler(scalar, zero, x, 10, oracle_equilibrium(scalar, zero, x));
  double scalar_err = 0.0;
  for (double r : srep.contraction_ratios)
    if (!std::isnan(r)) scalar_err = std::max(scalar_err, std::abs(r - 0.95));
  if (scalar_err > 1e-12)
    return {false, "scalar ratio off 0.95 by " + format_double(scalar_err)};

  // Ten random cells: distance-to-oracle must be log-linear over iterations
  // 3..10 with a near-constant per-step ratio.
  double worst_r2 = 1.0, worst_spread = 0.0;
  for (int s = 0; s < 10; ++s) {
    const CellParams p = tanh_ernn(8, 3, 8, 12, 0.3, 0.3, 2000 + static_cast<std::uint64_t>(s));
    Rng rng(500 + static_cast<std::uint64_t>(s));
    const Vector h_prev = gaussian(rng, 8, 0.5);
    const Vector xi = gaussian(rng, 3, 1.0);
    const ConvergenceReport rep =
        iterate_euler(p, h_prev, xi, 12, oracle_equilibrium(p, h_prev, xi));

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 3; i <= 10; ++i) {
      const double y = std::log(rep.oracle_distances[static_cast<std::size_t>(i)]);
      sx += i;
      sy += y;
      sxx += 1.0 * i * i;
      sxy += i * y;
      syy += y * y;
    }
    const int n = 8;
    const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
    worst_r2 = std::min(worst_r2, cov * cov / (vx * vy));

    double lo = 1e300, hi = 0.0;
    for (int i = 3; i <= 9; ++i) {
      const double r = rep.contraction_ratios[static_cast<std::size_t>(i)];
      if (std::isnan(r)) continue;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    worst_spread = std::max(worst_spread, hi - lo);
  }
  const bool pass = worst_r2 >= 0.99 && worst_spread <= 0.05;
  return {pass, "scalar rate 0.95 exact (err " + format_double(scalar_err) + "); worst R^2 = " +
                    format_double(worst_r2) + ", worst ratio spread = " +
                    format_double(worst_spread) + " over 10 seeds"};
}

CheckResult check_contraction_bound() {
  double worst_excess = -1e300;
  for (int s = 0; s < 10; ++s) {
    const CellParams p = tanh_ernn(6, 3, 6, 8, 0.6, 0.8, 3000 + static_cast<std::uint64_t>(s));
    Rng rng(700 + static_cast<std::uint64_t>(s));
    const Vector h_prev = gaussian(rng, 6, 0.5);
    const Vector x = gaussian(rng, 3, 1.0);
    const ConvergenceReport rep =
        iterate_euler(p, h_prev, x, 8, oracle_equilibrium(p, h_prev, x));

    double max_check = 0.0;
    for (const Vector& h : rep.iterates)
      max_check = std::max(max_check, contraction_check(p, h, h_prev, x, 0.8));
    if (max_check >= 1.0) continue;  // bound not in force at this draw
    for (double r : rep.contraction_ratios)
      if (!std::isnan(r)) worst_excess = std::max(worst_excess, r - max_check);
  }
  if (worst_excess > 0.05)
    return {false, "measured ratio exceeds the bound by " + format_double(worst_excess)};

  // Sharp side: a step size pushing the check above 1 must stop contracting.
  const CellParams big = scalar_linear(0.5, 10.0, 3);
  const Vector zero = Vector::Zero(1);
  const Vector x = Vector::Constant(1, 1.0);
  const double check = contraction_check(big, zero, zero, x, 10.0);
  const ConvergenceReport rep = iterate_euler(big, zero, x, 3, oracle_equilibrium(big, zero, x));
  double min_ratio = 1e300;
  for (double r : rep.contraction_ratios)
    if (!std::isnan(r)) min_ratio = std::min(min_ratio, r);
  const bool diverges = check > 1.0 && min_ratio > 1.0;
  return {diverges, "ratio - bound <= " + format_double(std::max(worst_excess, 0.0)) +
                        " when bound < 1; at check = " + format_double(check) +
                        " the iteration expands by " + format_double(min_ratio) + "x"};
}

CheckResult check_spectrum() {
  double max_re = -1e300;
  for (int s = 0; s < 100; ++s) {
    const CellParams p = tanh_ernn(8, 4, 8, 6, 0.9, 0.5, 4000 + static_cast<std::uint64_t>(s));
    Rng rng(900 + static_cast<std::uint64_t>(s));
    const Vector h_prev = gaussian(rng, 8, 1.0);
    const Vector x = gaussian(rng, 4, 1.0);
    const Vector h = ernn_step(p, h_prev, x, 6);
    const Spectrum sp = stability_spectrum(p, h, h_prev, x);
    for (const std::complex<double>& ev : sp.eigenvalues) max_re = std::max(max_re, ev.real());
  }
  return {max_re < 0.0, "max eigenvalue real part = " + format_double(max_re) + " over 100 seeds"};
}

CheckResult check_gradients() {
  const fs::path dir = scratch_dir("gradcheck");
  std::string text;
  CliOptions opt;
  opt.out_dir = dir.string();
  std::ostringstream out, err;
  const int rc = run_command("gradcheck", opt, out, err);
  text = out.str();
  double worst = 0.0;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const std::size_t at = line.find("max_rel_error=");
    if (at != std::string::npos) worst = std::max(worst, std::stod(line.substr(at + 14)));
  }
  return {rc == 0, "exit " + std::to_string(rc) + ", max relative error " + format_double(worst) +
                       " across vanilla/fastrnn/antisymmetric/ernn"};
}

CheckResult check_long_horizon() {
  const fs::path dir = scratch_dir("long_horizon");
  std::string log;
  const fs::path eq_cfg = write_text(dir / "eq.json", long_horizon_config("ernn"));
  if (run_cli("train", eq_cfg, dir / "eq", &log) != 0) return {false, "equilibrium run: " + log};
  const fs::path va_cfg = write_text(dir / "vanilla.json", long_horizon_config("vanilla"));
  if (run_cli("train", va_cfg, dir / "vanilla", &log) != 0) return {false, "vanilla run: " + log};

  double eq_best = 0.0, va_best = 0.0;
  for (double a : accuracy_column(dir / "eq" / "metrics.csv")) eq_best = std::max(eq_best, a);
  for (double a : accuracy_column(dir / "vanilla" / "metrics.csv")) va_best = std::max(va_best, a);
  const bool pass = eq_best >= 0.90 && va_best <= 0.65;
  return {pass, "best test accuracy over 30 epochs: equilibrium " + format_double(eq_best) +
                    ", vanilla " + format_double(va_best)};
}

CheckResult check_determinism() {
  const fs::path dir = scratch_dir("determinism");
  const fs::path cfg = write_text(dir / "config.json", R"({
    "seed": 9,
    "model.kind": "ernn", "model.hidden_dim": 8, "model.rank": 8,
    "model.k_steps": 3, "model.activation": "relu", "model.u_norm": 0.9,
    "model.eta": 1.0,
    "train.lr": 0.01, "train.batch_size": 16, "train.epochs": 3,
    "data.task": "noise_padded", "data.seq_len": 20, "data.input_dim": 4,
    "data.classes": 2, "data.informative_steps": 5, "data.noise_std": 0.1,
    "data.n_train": 64, "data.n_test": 32})");
  std::string log;
  if (run_cli("train", cfg, dir / "a", &log) != 0) return {false, "first run: " + log};
  if (run_cli("train", cfg, dir / "b", &log) != 0) return {false, "second run: " + log};
  const bool metrics_equal = slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv");
  const bool ckpt_equal =
      slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json");
  return {metrics_equal && ckpt_equal,
          std::string("metrics.csv ") + (metrics_equal ? "identical" : "DIFFER") +
              ", checkpoint.json " + (ckpt_equal ? "identical" : "DIFFER")};
}

CheckResult check_real_data(const std::string& csv_path) {
  const fs::path dir = scratch_dir("har2");
  const std::string cfg_text = std::string("{\n"
                                           "  \"seed\": 1,\n"
                                           "  \"model.kind\": \"ernn\",\n"
                                           "  \"model.k_steps\": 5,\n"
                                           "  \"train.epochs\": 200,\n"
                                           "  \"data.task\": \"csv\",\n"
                                           "  \"data.csv_path\": \"") +
                               csv_path +
                               "\",\n"
                               "  \"data.seq_len\": 128,\n"
                               "  \"data.input_dim\": 9\n"
                               "}\n";
  const fs::path cfg = write_text(dir / "config.json", cfg_text);
  std::string log;
  if (run_cli("train", cfg, dir / "out", &log) != 0) return {false, log};
  double best = 0.0;
  for (double a : accuracy_column(dir / "out" / "metrics.csv")) best = std::max(best, a);
  return {best >= 0.93, "best test accuracy " + format_double(best) + " within 200 epochs"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string har2_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--har2" && i + 1 < argc) {
      har2_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--har2 <flattened-csv>]\n", argv[0]);
      return 2;
    }
  }

  run_check(1, "implicit step gradient is exactly -I at equilibrium", 10.0,
            check_identity_gradient);
  run_check(2, "unrolled gradient norms hold near 1 over 128 steps", 120.0,
            check_norm_preservation);
  run_check(3, "fixed-point solver converges at a constant linear rate", 30.0,
            check_linear_convergence);
  run_check(4, "contraction bound caps measured ratios and is sharp", 30.0,
            check_contraction_bound);
  run_check(5, "equilibrium spectra stay in the open left half-plane", 60.0, check_spectrum);
  run_check(6, "reverse-mode gradients match finite differences", 30.0, check_gradients);
  run_check(7, "long-horizon task: equilibrium cell learns, vanilla stalls", 900.0,
            check_long_horizon);
  run_check(8, "training is byte-reproducible given config and seed", 300.0, check_determinism);

  if (har2_path.empty())
    skip_check(9, "real-data spot check", "no --har2 <csv> supplied; optional");
  else
    run_check(9, "real-data spot check", 24 * 3600.0,
              [&] { return check_real_data(har2_path); }, /*required=*/false);

  if (g_failures > 0) {
    std::printf("%d required check(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all required checks passed\n");
  return 0;
}
