#include "dbsn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dbsn/rng.hpp"

namespace dbsn {

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "two_moons") return DatasetKind::TwoMoons;
  if (s == "spirals") return DatasetKind::Spirals;
  if (s == "blobs") return DatasetKind::Blobs;
  if (s == "blobs_shifted_ood") return DatasetKind::BlobsShiftedOod;
  throw std::invalid_argument("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::TwoMoons: return "two_moons";
    case DatasetKind::Spirals: return "spirals";
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::BlobsShiftedOod: return "blobs_shifted_ood";
  }
  return "?";
}

void Dataset::recompute_bounds() {
  const int d = train_x.cols;
  feat_min.assign(d, 0.0);
  feat_max.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < train_x.rows; ++i) {
      lo = std::min(lo, train_x.at(i, j));
      hi = std::max(hi, train_x.at(i, j));
    }
    for (int i = 0; i < test_x.rows; ++i) {
      lo = std::min(lo, test_x.at(i, j));
      hi = std::max(hi, test_x.at(i, j));
    }
    feat_min[j] = lo;
    feat_max[j] = hi;
  }
}

void Dataset::validate() const {
  if (train_x.rows != static_cast<int>(train_y.size()) ||
      test_x.rows != static_cast<int>(test_y.size())) {
    throw std::invalid_argument("dataset: feature/label count mismatch");
  }
  if (test_x.rows > 0 && test_x.cols != train_x.cols) {
    throw std::invalid_argument("dataset: train/test dimension mismatch");
  }
  for (int y : train_y)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: train label out of range");
  for (int y : test_y)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: test label out of range");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct RawPoints {
  std::vector<double> xy;  // 2 per point
  std::vector<int> labels;
};

// Parameter grids are deterministic; noise = 0 gives exact geometry.
RawPoints make_two_moons(int n, double noise, Rng& rng) {
  RawPoints out;
  const int n0 = (n + 1) / 2, n1 = n / 2;
  for (int i = 0; i < n0; ++i) {
    const double t = n0 > 1 ? kPi * i / (n0 - 1) : 0.0;
    out.xy.push_back(std::cos(t) + noise * rng.normal());
    out.xy.push_back(std::sin(t) + noise * rng.normal());
    out.labels.push_back(0);
  }
  for (int i = 0; i < n1; ++i) {
    const double t = n1 > 1 ? kPi * i / (n1 - 1) : 0.0;
    out.xy.push_back(1.0 - std::cos(t) + noise * rng.normal());
    out.xy.push_back(0.5 - std::sin(t) + noise * rng.normal());
    out.labels.push_back(1);
  }
  return out;
}

RawPoints make_spirals(int n, double noise, Rng& rng) {
  RawPoints out;
  const int per = n / 2;
  for (int c = 0; c < 2; ++c) {
    const int m = c == 0 ? n - per : per;
    for (int i = 0; i < m; ++i) {
      const double t = m > 1 ? static_cast<double>(i) / (m - 1) : 0.0;
      const double r = 0.2 + 0.8 * t;
      const double phi = 3.0 * kPi * t + c * kPi;
      out.xy.push_back(r * std::cos(phi) + noise * rng.normal());
      out.xy.push_back(r * std::sin(phi) + noise * rng.normal());
      out.labels.push_back(c);
    }
  }
  return out;
}

// Class centers sit on a circle of radius 2*noise starting at -45 degrees; the
// OOD variant translates every center along +45 degrees by offset*noise, i.e.
// orthogonally to the two-class axis.
RawPoints make_blobs(int n, double noise, Rng& rng, int num_classes, double shift) {
  RawPoints out;
  const double r = 2.0 * noise;
  const double sx = shift * noise * std::cos(kPi / 4);
  const double sy = shift * noise * std::sin(kPi / 4);
  for (int i = 0; i < n; ++i) {
    const int c = i % num_classes;
    const double ang = -kPi / 4 + 2.0 * kPi * c / num_classes;
    out.xy.push_back(r * std::cos(ang) + sx + noise * rng.normal());
    out.xy.push_back(r * std::sin(ang) + sy + noise * rng.normal());
    out.labels.push_back(c);
  }
  return out;
}

}  // namespace

Dataset gen_dataset(DatasetKind kind, int n_train, int n_test, double noise, std::uint64_t seed,
                    const DatasetOptions& opts) {
  const int n = n_train + n_test;
  if (n < 2) throw std::invalid_argument("gen_dataset: need at least 2 points");
  if (noise < 0) throw std::invalid_argument("gen_dataset: noise must be >= 0");

  Rng rng = substream(seed, {stream::kData, 0});
  RawPoints raw;
  int num_classes = 2;
  switch (kind) {
    case DatasetKind::TwoMoons: raw = make_two_moons(n, noise, rng); break;
    case DatasetKind::Spirals: raw = make_spirals(n, noise, rng); break;
    case DatasetKind::Blobs:
      num_classes = opts.num_classes;
      raw = make_blobs(n, noise, rng, num_classes, 0.0);
      break;
    case DatasetKind::BlobsShiftedOod:
      num_classes = opts.num_classes;
      raw = make_blobs(n, noise, rng, num_classes, opts.ood_offset);
      break;
  }

  // seeded permutation, then split
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng shuffle_rng = substream(seed, {stream::kData, 1});
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.train_x = Matrix(n_train, 2);
  ds.test_x = Matrix(n_test, 2);
  ds.train_y.resize(n_train);
  ds.test_y.resize(n_test);
  for (int i = 0; i < n; ++i) {
    const int src = perm[i];
    if (i < n_train) {
      ds.train_x.at(i, 0) = raw.xy[2 * src];
      ds.train_x.at(i, 1) = raw.xy[2 * src + 1];
      ds.train_y[i] = raw.labels[src];
    } else {
      ds.test_x.at(i - n_train, 0) = raw.xy[2 * src];
      ds.test_x.at(i - n_train, 1) = raw.xy[2 * src + 1];
      ds.test_y[i - n_train] = raw.labels[src];
    }
  }
  ds.recompute_bounds();
  ds.provenance = to_string(kind) + "(n=" + std::to_string(n) + ",noise=" + std::to_string(noise) +
                  ",seed=" + std::to_string(seed) + ")";
  ds.validate();
  return ds;
}

void save_csv(const Matrix& x, const std::vector<int>& y, const std::string& path) {
  if (x.rows != static_cast<int>(y.size())) {
    throw std::invalid_argument("save_csv: feature/label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (int j = 0; j < x.cols; ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[64];
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", x.at(i, j));
      out << buf << ",";
    }
    out << y[i] << "\n";
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

void load_csv(const std::string& path, Matrix& x, std::vector<int>& y) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.back() != "label") {
    throw std::runtime_error("load_csv: " + path + ": header must end with column 'label'");
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    if (header[j] != "f" + std::to_string(j)) {
      throw std::runtime_error("load_csv: " + path + ": expected column f" + std::to_string(j) +
                               ", got '" + header[j] + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(d + 1) + " cells, got " + std::to_string(cells.size()));
    }
    for (int j = 0; j < d; ++j) {
      try {
        std::size_t pos = 0;
        values.push_back(std::stod(cells[j], &pos));
        if (pos != cells[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_no) +
                                 ": bad numeric cell '" + cells[j] + "'");
      }
    }
    try {
      std::size_t pos = 0;
      const int label = std::stoi(cells[d], &pos);
      if (pos != cells[d].size() || label < 0) throw std::invalid_argument("bad label");
      labels.push_back(label);
    } catch (const std::exception&) {
      throw std::runtime_error("load_csv: " + path + ":" + std::to_string(line_no) +
                               ": bad label cell '" + cells[d] + "'");
    }
  }
  if (labels.empty()) throw std::runtime_error("load_csv: " + path + ": no data rows (empty dataset)");

  x = Matrix(static_cast<int>(labels.size()), d);
  x.data = std::move(values);
  y = std::move(labels);
}

Dataset dataset_from_csv(const std::string& train_path, const std::string& test_path) {
  Dataset ds;
  load_csv(train_path, ds.train_x, ds.train_y);
  load_csv(test_path, ds.test_x, ds.test_y);
  int max_label = 0;
  for (int y : ds.train_y) max_label = std::max(max_label, y);
  for (int y : ds.test_y) max_label = std::max(max_label, y);
  ds.num_classes = max_label + 1;
  ds.recompute_bounds();
  ds.provenance = "csv(" + train_path + "," + test_path + ")";
  ds.validate();
  return ds;
}

}  // namespace dbsn
