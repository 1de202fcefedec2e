#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dbsn {

// Plain row-major matrix for non-differentiable data (features, probabilities).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

enum class DatasetKind { TwoMoons, Spirals, Blobs, BlobsShiftedOod };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind k);

struct DatasetOptions {
  int num_classes = 2;   // blobs only
  double ood_offset = 8.0;  // center translation for blobs_shifted_ood, in noise units
};

struct Dataset {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  int num_classes = 2;
  // per-feature bounds over train+test; the data domain used for clamping
  std::vector<double> feat_min;
  std::vector<double> feat_max;
  std::string provenance;

  int dim() const { return train_x.cols; }
  void recompute_bounds();
  void validate() const;
};

// Deterministic synthetic generators. `noise` is the per-coordinate Gaussian
// noise scale; points are laid out on deterministic parameter grids so that
// noise = 0 gives exact geometric shapes.
Dataset gen_dataset(DatasetKind kind, int n_train, int n_test, double noise, std::uint64_t seed,
                    const DatasetOptions& opts = {});

// CSV with header f0,...,f{d-1},label; 17 significant digits, lossless for
// 64-bit doubles. Malformed rows are reported with their line number.
void save_csv(const Matrix& x, const std::vector<int>& y, const std::string& path);
void load_csv(const std::string& path, Matrix& x, std::vector<int>& y);

Dataset dataset_from_csv(const std::string& train_path, const std::string& test_path);

}  // namespace dbsn
