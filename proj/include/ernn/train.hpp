#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ernn/cells.hpp"
#include "ernn/tasks.hpp"

namespace ernn {

struct TrainConfig {
  CellKind kind = CellKind::ernn;
  int hidden_dim = 16;
  int rank = 8;
  int k_steps = 3;
  Activation activation = Activation::relu;
  double gamma = 1.0;
  double eta_init = 1e-2;
  std::optional<double> u_norm;  // rescale the transition's spectral norm after init
  bool tied_projection = true;
  bool per_step_eta = false;  // separate step sizes per time step

  double lr = 1e-2;
  int batch_size = 128;
  int epochs = 1;
  int lr_halve_every = 10;
  bool record_timing = false;  // off: seconds column pinned to 0 for byte-stable outputs

  std::uint64_t seed = 0;
  TaskSpec task;
  int n_train = 2000;
  int n_test = 1000;
  double train_fraction = 0.8;  // csv task split
  bool csv_header = false;
};

// Throws ConfigError naming the offending key (config-file spelling).
void validate(const TrainConfig& config);

// Flat-key JSON, same schema as the CLI config files.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json_text(const std::string& text, const std::string& origin);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  Params m, v;
  long t = 0;
};

struct Metrics {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  double bptt_norm = 0.0;  // sampled ||d h_T / d h_1|| diagnostic
};

struct Checkpoint {
  int schema_version = 1;
  TrainConfig config;
  CellParams cell;
  ReadoutParams readout;
  AdamState adam;
  std::array<std::uint64_t, 4> rng_state{};
  int epoch = 0;
  std::vector<Metrics> history;
};

// -log softmax(logits)[label] with max subtraction.
double cross_entropy(const Vector& logits, int label);

// Bias-corrected Adam update in place; throws on non-finite gradients
// before touching the parameters.
void adam_step(AdamState& state, Params& params, const Params& grads, double lr);

double lr_schedule(const TrainConfig& config, int epoch);

// Freshly initialized model + optimizer state for the given data shape,
// positioned at epoch 0.
Checkpoint init_checkpoint(const TrainConfig& config, int T, int input_dim, int classes);

struct FitResult {
  Checkpoint checkpoint;
  std::vector<Metrics> history;
};

using EpochCallback = std::function<void(const Checkpoint&, const Metrics&)>;

FitResult fit(const TrainConfig& config, const SequenceDataset& train,
              const SequenceDataset& test, const EpochCallback& on_epoch = {});
// Continues from a checkpoint; bit-identical to the uninterrupted run.
FitResult fit_resume(const Checkpoint& start, const SequenceDataset& train,
                     const SequenceDataset& test, const EpochCallback& on_epoch = {});

Metrics evaluate(const Checkpoint& ckpt, const SequenceDataset& data);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ernn
