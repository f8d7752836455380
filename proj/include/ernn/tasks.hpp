#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ernn/numerics.hpp"

namespace ernn {

enum class TaskKind { noise_padded, random_walk, csv };

TaskKind task_kind_from_string(const std::string& name);
std::string to_string(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::noise_padded;
  int T = 0;                  // sequence length
  int d = 0;                  // features per step
  int C = 2;                  // classes
  int informative_steps = 0;  // label-bearing prefix length
  double noise_std = 1.0;     // padding noise scale; walk increments scale with it too
  std::uint64_t seed = 0;
  bool random_offset = false;  // place the informative segment at a random start
  std::string csv_path;
};

struct SequenceDataset {
  std::vector<Matrix> sequences;  // each T x d
  std::vector<int> labels;
  int T = 0;
  int d = 0;
  int C = 0;
  // Filled by split_normalize from the training split.
  Vector feature_mean, feature_std;
  std::vector<int> constant_features;  // zero-variance columns left unscaled
};

// Class-balanced sequences: an informative prefix of class-conditional
// means (+/- 0.5 per dimension, jitter 0.1), then i.i.d. N(0, noise_std)
// padding for the rest.
SequenceDataset gen_noise_padded(const TaskSpec& spec, int n, Rng& rng);

// Scalar random walk x_k = x_{k-1} + increment, x_0 = 0, increment variance
// 10 * noise_std^2 (the reference walk uses noise_std = 1).
std::vector<Vector> gen_random_walk(const TaskSpec& spec, int steps, Rng& rng);

// Rows of T*d features (time-major) followed by an integer label.
SequenceDataset load_csv_sequences(const std::string& path, int T, int d, bool header = false);
void save_csv_sequences(const SequenceDataset& data, const std::string& path);

// Seeded shuffle split; z-score statistics from the train side applied to
// both. Zero-variance features pass through and are reported.
std::pair<SequenceDataset, SequenceDataset> split_normalize(const SequenceDataset& data,
                                                            double train_fraction, Rng& rng);

}  // namespace ernn
