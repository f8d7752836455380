#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ernn/train.hpp"

using namespace ernn;

namespace {

Vector vecn(std::initializer_list<double> vals) {
  Vector v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return v;
}

// Small ernn classification setup that trains in well under a second.
TrainConfig tiny_config(int epochs, std::uint64_t seed) {
  TrainConfig c;
  c.kind = CellKind::ernn;
  c.hidden_dim = 4;
  c.rank = 2;
  c.k_steps = 2;
  c.activation = Activation::tanh_fn;
  c.lr = 1e-2;
  c.batch_size = 8;
  c.epochs = epochs;
  c.lr_halve_every = 10;
  c.seed = seed;
  c.task.kind = TaskKind::noise_padded;
  c.task.T = 6;
  c.task.d = 2;
  c.task.C = 2;
  c.task.informative_steps = 3;
  c.task.noise_std = 0.5;
  c.task.seed = seed;
  return c;
}

SequenceDataset tiny_data(const TrainConfig& c, int n, std::uint64_t seed) {
  Rng rng(seed);
  return gen_noise_padded(c.task, n, rng);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool params_equal(const Params& a, const Params& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return false;
    if (a[i].size() > 0 && (a[i] - b[i]).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

bool cells_equal(const CellParams& a, const CellParams& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           (x.size() == 0 || (x - y).cwiseAbs().maxCoeff() == 0.0);
  };
  return same(a.U, b.U) && same(a.V, b.V) && same(a.H, b.H) && same(a.W, b.W) &&
         same(a.b, b.b) && a.step_sizes == b.step_sizes;
}

}  // namespace

TEST_CASE("cross_entropy: uniform, near-one-hot, shift invariance, bounds") {
  CHECK(cross_entropy(Vector::Zero(4), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(cross_entropy(vecn({10.0, -10.0}), 0) ==
        doctest::Approx(2.061153622438558e-09).epsilon(1e-6));

  const Vector logits = vecn({0.3, -1.2, 2.0});
  const Vector shifted = logits.array() + 17.0;
  CHECK(std::abs(cross_entropy(logits, 1) - cross_entropy(shifted, 1)) <= 1e-12);

  CHECK(cross_entropy(vecn({5.0, 0.0}), 0) > 0.0);
  CHECK(cross_entropy(vecn({1000.0, 0.0}), 0) == 0.0);  // one-hot limit

  CHECK_THROWS_AS(cross_entropy(logits, 3), InvalidInputError);
  CHECK_THROWS_AS(cross_entropy(logits, -1), InvalidInputError);
}

TEST_CASE("adam_step: first-step closed form, zero grad, overflow, determinism") {
  AdamState st;
  Params params{Matrix::Zero(2, 2)};
  Params grads{Matrix(2, 2)};
  grads[0] << 3.0, -0.5, 0.0, 1e-4;
  const Params before = params;
  adam_step(st, params, grads, 1e-2);
  CHECK(st.t == 1);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const double g = grads[0](r, c);
      const double want = -1e-2 * g / (std::abs(g) + 1e-8);
      CHECK(std::abs(params[0](r, c) - want) <= 1e-9);
    }
  for (const Matrix& v : st.v) CHECK(v.minCoeff() >= 0.0);

  AdamState zst;
  Params zp{Matrix::Constant(2, 2, 0.7)};
  adam_step(zst, zp, Params{Matrix::Zero(2, 2)}, 1e-2);
  CHECK(zst.t == 1);
  CHECK((zp[0].array() == 0.7).all());

  AdamState bst;
  Params bp{Matrix::Constant(1, 1, 0.25)};
  Params bad{Matrix::Constant(1, 1, std::numeric_limits<double>::infinity())};
  CHECK_THROWS_AS(adam_step(bst, bp, bad, 1e-2), NumericOverflowError);
  CHECK(bp[0](0, 0) == 0.25);  // parameters untouched on failure

  CHECK_THROWS_AS(adam_step(bst, bp, Params{Matrix::Zero(2, 1)}, 1e-2), InvalidInputError);

  auto run = [] {
    AdamState s;
    Params p{Matrix::Constant(3, 1, 1.0)};
    Params g{Matrix(3, 1)};
    g[0] << 0.4, -1.7, 0.02;
    for (int i = 0; i < 5; ++i) adam_step(s, p, g, 3e-3);
    return p;
  };
  CHECK(params_equal(run(), run()));
}

TEST_CASE("lr_schedule halves periodically") {
  TrainConfig c;
  c.lr = 1e-2;
  c.lr_halve_every = 10;
  CHECK(lr_schedule(c, 0) == 1e-2);
  CHECK(lr_schedule(c, 9) == 1e-2);
  CHECK(lr_schedule(c, 10) == 5e-3);
  CHECK(lr_schedule(c, 25) == doctest::Approx(2.5e-3).epsilon(1e-15));
  c.lr_halve_every = 100;
  CHECK(lr_schedule(c, 42) == 1e-2);
}

TEST_CASE("validate rejects bad configs with field names") {
  TrainConfig good = tiny_config(1, 1);
  CHECK_NOTHROW(validate(good));

  auto expect_reject = [&](void (*mutate)(TrainConfig&), const std::string& field) {
    TrainConfig c = tiny_config(1, 1);
    mutate(c);
    try {
      validate(c);
      FAIL("expected rejection for ", field);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  expect_reject([](TrainConfig& c) { c.lr = 0.0; }, "train.lr");
  expect_reject([](TrainConfig& c) { c.batch_size = 0; }, "train.batch_size");
  expect_reject([](TrainConfig& c) { c.hidden_dim = 0; }, "model.hidden_dim");
  expect_reject([](TrainConfig& c) { c.k_steps = 0; }, "model.k_steps");
  expect_reject([](TrainConfig& c) { c.gamma = -1.0; }, "model.gamma");
  expect_reject([](TrainConfig& c) { c.eta_init = 0.0; }, "model.eta");
  expect_reject([](TrainConfig& c) { c.task.informative_steps = 99; },
                "data.informative_steps");
}

TEST_CASE("config json round-trip is byte-stable") {
  TrainConfig c = tiny_config(3, 42);
  c.u_norm = 0.9;
  const std::string once = config_to_json(c);
  const TrainConfig back = config_from_json_text(once, "test");
  CHECK(config_to_json(back) == once);

  CHECK_THROWS_AS(config_from_json_text("{\"train.learning_rate\": 0.1}", "test"), ConfigError);
  CHECK_THROWS_AS(config_from_json_text("not json", "test"), ConfigError);
}

TEST_CASE("fit: single-sample loss decreases, evaluation is pure") {
  TrainConfig c = tiny_config(1, 3);
  c.batch_size = 1;
  SequenceDataset one = tiny_data(c, 1, 77);

  Checkpoint init = init_checkpoint(c, one.T, one.d, one.C);
  const double before = evaluate(init, one).test_loss;
  FitResult res = fit(c, one, one, nullptr);
  const double after = evaluate(res.checkpoint, one).test_loss;
  CHECK(after < before);

  const Metrics m1 = evaluate(res.checkpoint, one);
  const Metrics m2 = evaluate(res.checkpoint, one);
  CHECK(m1.test_loss == m2.test_loss);
  CHECK(m1.test_acc == m2.test_acc);
}

TEST_CASE("fit memorizes a single sample") {
  TrainConfig c = tiny_config(40, 5);
  c.batch_size = 1;
  c.lr = 0.05;
  SequenceDataset one = tiny_data(c, 1, 9);
  FitResult res = fit(c, one, one, nullptr);
  CHECK(evaluate(res.checkpoint, one).test_acc == 1.0);
}

TEST_CASE("a random readout scores near chance on balanced data") {
  TrainConfig c = tiny_config(1, 11);
  SequenceDataset ds = tiny_data(c, 1000, 13);
  Checkpoint init = init_checkpoint(c, ds.T, ds.d, ds.C);
  const double acc = evaluate(init, ds).test_acc;
  CHECK(acc >= 0.44);
  CHECK(acc <= 0.56);
}

TEST_CASE("single fixed batch at lr 1e-4 strictly decreases the loss") {
  for (CellKind kind : {CellKind::ernn, CellKind::vanilla, CellKind::fastrnn,
                        CellKind::antisymmetric}) {
    TrainConfig c = tiny_config(1, 17);
    c.kind = kind;
    c.lr = 1e-4;
    c.batch_size = 8;
    SequenceDataset batch = tiny_data(c, 8, 19);
    Checkpoint init = init_checkpoint(c, batch.T, batch.d, batch.C);
    const double before = evaluate(init, batch).test_loss;
    FitResult res = fit(c, batch, batch, nullptr);
    CHECK(evaluate(res.checkpoint, batch).test_loss < before);
  }
}

TEST_CASE("seed-fixed double run gives identical histories and parameters") {
  TrainConfig c = tiny_config(3, 23);
  SequenceDataset train = tiny_data(c, 24, 29);
  SequenceDataset test = tiny_data(c, 8, 31);
  FitResult a = fit(c, train, test, nullptr);
  FitResult b = fit(c, train, test, nullptr);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].test_loss == b.history[i].test_loss);
    CHECK(a.history[i].test_acc == b.history[i].test_acc);
    CHECK(a.history[i].bptt_norm == b.history[i].bptt_norm);
  }
  CHECK(cells_equal(a.checkpoint.cell, b.checkpoint.cell));
  CHECK(a.checkpoint.rng_state == b.checkpoint.rng_state);
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  TrainConfig c = tiny_config(2, 37);
  SequenceDataset train = tiny_data(c, 16, 41);
  SequenceDataset test = tiny_data(c, 8, 43);
  FitResult res = fit(c, train, test, nullptr);

  const std::string p1 = temp_path("ernn_ckpt_a.json");
  const std::string p2 = temp_path("ernn_ckpt_b.json");
  save_checkpoint(res.checkpoint, p1);
  Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(read_file(p1) == read_file(p2));

  CHECK(cells_equal(loaded.cell, res.checkpoint.cell));
  CHECK(loaded.epoch == res.checkpoint.epoch);
  CHECK(loaded.rng_state == res.checkpoint.rng_state);
  CHECK(loaded.adam.t == res.checkpoint.adam.t);
  CHECK(params_equal(loaded.adam.m, res.checkpoint.adam.m));
  CHECK(params_equal(loaded.adam.v, res.checkpoint.adam.v));

  // Truncation breaks the parse with a malformed-file diagnostic.
  const std::string full = read_file(p1);
  {
    std::ofstream out(p1, std::ios::binary);
    out << full.substr(0, full.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(p1), InvalidInputError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("ernn_no_ckpt.json")), InvalidInputError);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("resume from checkpoint matches the uninterrupted trajectory") {
  TrainConfig four = tiny_config(4, 47);
  SequenceDataset train = tiny_data(four, 24, 53);
  SequenceDataset test = tiny_data(four, 8, 59);
  FitResult straight = fit(four, train, test, nullptr);

  TrainConfig two = four;
  two.epochs = 2;
  FitResult half = fit(two, train, test, nullptr);
  const std::string path = temp_path("ernn_ckpt_resume.json");
  save_checkpoint(half.checkpoint, path);
  Checkpoint loaded = load_checkpoint(path);
  loaded.config.epochs = 4;
  FitResult resumed = fit_resume(loaded, train, test, nullptr);
  std::remove(path.c_str());

  CHECK(cells_equal(resumed.checkpoint.cell, straight.checkpoint.cell));
  CHECK(resumed.checkpoint.rng_state == straight.checkpoint.rng_state);
  // The carried history is extended in place, so all four epochs line up.
  REQUIRE(resumed.history.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(resumed.history[e].train_loss == straight.history[e].train_loss);
    CHECK(resumed.history[e].test_acc == straight.history[e].test_acc);
  }
}

TEST_CASE("per-epoch callback sees every epoch in order") {
  TrainConfig c = tiny_config(3, 61);
  SequenceDataset train = tiny_data(c, 16, 67);
  SequenceDataset test = tiny_data(c, 8, 71);
  std::vector<int> epochs;
  fit(c, train, test, [&](const Checkpoint& ck, const Metrics& m) {
    epochs.push_back(m.epoch);
    CHECK(ck.epoch == m.epoch + 1);
    CHECK(m.test_acc >= 0.0);
    CHECK(m.test_acc <= 1.0);
  });
  CHECK(epochs == std::vector<int>{0, 1, 2});
}
