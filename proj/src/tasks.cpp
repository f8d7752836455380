#include "ernn/tasks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace ernn {

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "noise_padded") return TaskKind::noise_padded;
  if (name == "random_walk") return TaskKind::random_walk;
  if (name == "csv") return TaskKind::csv;
  throw InvalidInputError("unknown task '" + name + "'");
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::noise_padded: return "noise_padded";
    case TaskKind::random_walk: return "random_walk";
    case TaskKind::csv: return "csv";
  }
  return "?";
}

SequenceDataset gen_noise_padded(const TaskSpec& spec, int n, Rng& rng) {
  if (spec.kind != TaskKind::noise_padded)
    throw InvalidInputError("gen_noise_padded: spec kind mismatch");
  if (spec.informative_steps < 1)
    throw InvalidInputError(
        "gen_noise_padded: informative_steps must be >= 1, the label would be undecodable");
  if (spec.informative_steps > spec.T)
    throw InvalidInputError("gen_noise_padded: informative_steps exceeds sequence length");
  if (spec.C < 2) throw InvalidInputError("gen_noise_padded: need at least 2 classes");
  if (spec.d < 1 || n < 1) throw InvalidInputError("gen_noise_padded: empty shape");
  if (spec.noise_std < 0.0) throw InvalidInputError("gen_noise_padded: negative noise_std");

  int bits = 1;
  while ((1 << bits) < spec.C) ++bits;

  SequenceDataset out;
  out.T = spec.T;
  out.d = spec.d;
  out.C = spec.C;
  out.sequences.reserve(n);
  out.labels.reserve(n);

  for (int i = 0; i < n; ++i) {
    const int label = i % spec.C;
    int offset = 0;
    if (spec.random_offset && spec.T > spec.informative_steps)
      offset = static_cast<int>(rng.next_u64() %
                                static_cast<std::uint64_t>(spec.T - spec.informative_steps + 1));
    Matrix seq(spec.T, spec.d);
    for (int t = 0; t < spec.T; ++t) {
      const bool informative = t >= offset && t < offset + spec.informative_steps;
      for (int j = 0; j < spec.d; ++j) {
        if (informative) {
          const double mean = ((label >> (j % bits)) & 1) != 0 ? 0.5 : -0.5;
          seq(t, j) = mean + 0.1 * rng.normal();
        } else {
          seq(t, j) = spec.noise_std * rng.normal();
        }
      }
    }
    out.sequences.push_back(std::move(seq));
    out.labels.push_back(label);
  }
  return out;
}

std::vector<Vector> gen_random_walk(const TaskSpec& spec, int steps, Rng& rng) {
  if (spec.kind != TaskKind::random_walk)
    throw InvalidInputError("gen_random_walk: spec kind mismatch");
  if (spec.d != 1) throw InvalidInputError("gen_random_walk: d must be 1");
  if (steps < 1) throw InvalidInputError("gen_random_walk: steps must be >= 1");
  const double inc_std = spec.noise_std * std::sqrt(10.0);
  std::vector<Vector> walk;
  walk.reserve(steps);
  double x = 0.0;
  for (int k = 0; k < steps; ++k) {
    x += inc_std * rng.normal();
    walk.push_back(Vector::Constant(1, x));
  }
  return walk;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, std::size_t column,
                             const std::string& what) {
  throw InvalidInputError(path + ":" + std::to_string(line) + ": column " +
                          std::to_string(column) + ": " + what);
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line,
                  std::size_t column) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    parse_fail(path, line, column, "not a number: '" + cell + "'");
  return v;
}

std::vector<std::string> split_row(const std::string& row) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = row.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(row.substr(start));
      return cells;
    }
    cells.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

SequenceDataset load_csv_sequences(const std::string& path, int T, int d, bool header) {
  if (T < 1 || d < 1) throw InvalidInputError("load_csv_sequences: T and d must be >= 1");
  std::ifstream in(path);
  if (!in) throw InvalidInputError("load_csv_sequences: cannot open " + path);

  SequenceDataset out;
  out.T = T;
  out.d = d;
  const std::size_t want = static_cast<std::size_t>(T) * d + 1;

  std::string row;
  std::size_t line = 0;
  int max_label = -1;
  while (std::getline(in, row)) {
    ++line;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    if (header && line == 1) continue;

    const auto cells = split_row(row);
    if (cells.size() != want)
      parse_fail(path, line, cells.size(),
                 "expected " + std::to_string(want) + " cells (T*d features + label), got " +
                     std::to_string(cells.size()));

    Matrix seq(T, d);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < d; ++j) {
        const std::size_t c = static_cast<std::size_t>(t) * d + j;
        seq(t, j) = parse_cell(cells[c], path, line, c + 1);
      }
    const std::string& label_cell = cells.back();
    int label = 0;
    const auto res =
        std::from_chars(label_cell.data(), label_cell.data() + label_cell.size(), label);
    if (res.ec != std::errc{} || res.ptr != label_cell.data() + label_cell.size() || label < 0)
      parse_fail(path, line, want, "label must be a nonnegative integer, got '" + label_cell + "'");

    out.sequences.push_back(std::move(seq));
    out.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (out.sequences.empty()) throw InvalidInputError("load_csv_sequences: no data rows in " + path);
  out.C = max_label + 1;
  return out;
}

void save_csv_sequences(const SequenceDataset& data, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw InvalidInputError("save_csv_sequences: cannot open " + path);
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const Matrix& seq = data.sequences[i];
    for (Eigen::Index t = 0; t < seq.rows(); ++t)
      for (Eigen::Index j = 0; j < seq.cols(); ++j)
        outf << format_double(seq(t, j)) << ',';
    outf << data.labels[i] << '\n';
  }
  if (!outf) throw InvalidInputError("save_csv_sequences: write failed for " + path);
}

std::pair<SequenceDataset, SequenceDataset> split_normalize(const SequenceDataset& data,
                                                            double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidInputError("split_normalize: train_fraction must lie in (0, 1)");
  const int n = static_cast<int>(data.sequences.size());
  const int n_train = static_cast<int>(std::llround(n * train_fraction));
  if (n_train < 1 || n_train >= n)
    throw InvalidInputError("split_normalize: a split side would be empty");

  const std::vector<int> perm = rng.permutation(n);

  auto take = [&data](const std::vector<int>& perm, int from, int to) {
    SequenceDataset side;
    side.T = data.T;
    side.d = data.d;
    side.C = data.C;
    for (int i = from; i < to; ++i) {
      side.sequences.push_back(data.sequences[perm[i]]);
      side.labels.push_back(data.labels[perm[i]]);
    }
    return side;
  };
  SequenceDataset train = take(perm, 0, n_train);
  SequenceDataset test = take(perm, n_train, n);

  // Per-feature statistics over every (sequence, step) of the train side.
  Vector mean = Vector::Zero(data.d);
  for (const Matrix& seq : train.sequences) mean += seq.colwise().sum().transpose();
  const double count = static_cast<double>(train.sequences.size()) * data.T;
  mean /= count;
  Vector var = Vector::Zero(data.d);
  for (const Matrix& seq : train.sequences)
    var += (seq.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  var /= count;
  Vector std = var.cwiseSqrt();

  std::vector<int> constant;
  for (int j = 0; j < data.d; ++j)
    if (std[j] <= 1e-12) constant.push_back(j);

  auto apply = [&](SequenceDataset& side) {
    for (Matrix& seq : side.sequences)
      for (int j = 0; j < data.d; ++j) {
        if (std[j] <= 1e-12) continue;
        seq.col(j) = (seq.col(j).array() - mean[j]) / std[j];
      }
    side.feature_mean = mean;
    side.feature_std = std;
    side.constant_features = constant;
  };
  apply(train);
  apply(test);
  return {train, test};
}

}  // namespace ernn
