#include "dsgd/topology.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dsgd/eigen.hpp"

namespace dsgd {

namespace {

constexpr int kMaxNodes = 4096;
constexpr double kEntryTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
constexpr double kBuiltinRowTol = 1e-12;
constexpr double kCustomRowTol = 1e-9;
constexpr double kPi = 3.14159265358979323846;

void validate(const std::vector<double>& w, int n, double row_tol) {
  if (n < 1) throw std::invalid_argument("weight matrix: node count must be >= 1");
  if (n > kMaxNodes)
    throw std::invalid_argument("weight matrix: node count exceeds cap of " +
                                std::to_string(kMaxNodes));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = w[static_cast<std::size_t>(i) * n + j];
      if (!(v >= -kEntryTol))
        throw std::invalid_argument("weight matrix: negative entry at (" + std::to_string(i) +
                                    "," + std::to_string(j) + "): " + std::to_string(v));
      if (!(v <= 1.0 + kEntryTol))
        throw std::invalid_argument("weight matrix: entry > 1 at (" + std::to_string(i) + "," +
                                    std::to_string(j) + "): " + std::to_string(v));
    }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double a = w[static_cast<std::size_t>(i) * n + j];
      const double b = w[static_cast<std::size_t>(j) * n + i];
      if (std::abs(a - b) > kSymmetryTol)
        throw std::invalid_argument("weight matrix: not symmetric at (" + std::to_string(i) +
                                    "," + std::to_string(j) + "): " + std::to_string(a) +
                                    " vs " + std::to_string(b));
    }
  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) row_sum += w[static_cast<std::size_t>(i) * n + j];
    if (std::abs(row_sum - 1.0) > row_tol)
      throw std::invalid_argument("weight matrix: row " + std::to_string(i) + " sums to " +
                                  std::to_string(row_sum) + ", expected 1");
  }
}

}  // namespace

WeightMatrix::WeightMatrix(int n, std::vector<double> w)
    : n_(n), w_(std::move(w)), cache_(std::make_shared<SpectrumCache>()) {}

WeightMatrix WeightMatrix::ring(int n) {
  if (n < 1) throw std::invalid_argument("ring: node count must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    // self plus both ring neighbors; coincident slots accumulate
    w[static_cast<std::size_t>(i) * n + i] += 1.0 / 3.0;
    w[static_cast<std::size_t>(i) * n + ((i + 1) % n)] += 1.0 / 3.0;
    w[static_cast<std::size_t>(i) * n + ((i - 1 + n) % n)] += 1.0 / 3.0;
  }
  validate(w, n, kBuiltinRowTol);
  return WeightMatrix(n, std::move(w));
}

WeightMatrix WeightMatrix::complete(int n) {
  if (n < 1) throw std::invalid_argument("complete: node count must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(n) * n, 1.0 / n);
  validate(w, n, kBuiltinRowTol);
  return WeightMatrix(n, std::move(w));
}

WeightMatrix WeightMatrix::identity(int n) {
  if (n < 1) throw std::invalid_argument("identity: node count must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i) * n + i] = 1.0;
  return WeightMatrix(n, std::move(w));
}

WeightMatrix WeightMatrix::from_entries(const std::vector<std::vector<double>>& entries) {
  const int n = static_cast<int>(entries.size());
  if (n < 1) throw std::invalid_argument("weight matrix: empty entries");
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(entries[i].size()) != n)
      throw std::invalid_argument("weight matrix: not square, row " + std::to_string(i) +
                                  " has " + std::to_string(entries[i].size()) + " of " +
                                  std::to_string(n) + " columns");
    w.insert(w.end(), entries[i].begin(), entries[i].end());
  }
  validate(w, n, kCustomRowTol);
  return WeightMatrix(n, std::move(w));
}

WeightMatrix WeightMatrix::load_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("weight matrix: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return from_entries(rows);
}

void WeightMatrix::save_text(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("weight matrix: cannot write " + path);
  char buf[32];
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", at(i, j));
      out << buf << (j + 1 < n_ ? " " : "\n");
    }
  }
}

const std::vector<double>& WeightMatrix::eigenvalues() const {
  std::call_once(cache_->once, [this] {
    Spectrum s;
    s.eigenvalues = symmetric_eigenvalues(w_, n_);
    if (n_ == 1) {
      s.rho = 0.0;  // single node: no second eigenvalue
    } else {
      const double second = std::max(std::abs(s.eigenvalues[1]), std::abs(s.eigenvalues[n_ - 1]));
      s.rho = second * second;
    }
    cache_->value = std::move(s);
  });
  return cache_->value.eigenvalues;
}

double WeightMatrix::rho() const {
  eigenvalues();
  return cache_->value.rho;
}

int WeightMatrix::max_degree() const {
  int deg = 0;
  for (int i = 0; i < n_; ++i) {
    int d = 0;
    for (int j = 0; j < n_; ++j)
      if (j != i && at(i, j) > 0.0) ++d;
    deg = std::max(deg, d);
  }
  return deg;
}

std::optional<std::string> WeightMatrix::spectral_warning() const {
  if (rho() >= 1.0 - 1e-12)
    return "rho = " + std::to_string(rho()) + " is not < 1: matrix cannot mix";
  return std::nullopt;
}

MixingDecay mixing_decay(const WeightMatrix& w, int k, int node) {
  if (k < 0) throw std::invalid_argument("mixing_decay: k must be >= 0");
  auto curve = mixing_decay_curve(w, k, node);
  return curve.back();
}

std::vector<MixingDecay> mixing_decay_curve(const WeightMatrix& w, int k_max, int node) {
  if (k_max < 0) throw std::invalid_argument("mixing_decay: k must be >= 0");
  const int n = w.size();
  if (node < 0 || node >= n) throw std::invalid_argument("mixing_decay: node out of range");
  const double rho = w.rho();

  std::vector<double> v(n, 0.0);
  v[node] = 1.0;
  std::vector<double> next(n);
  std::vector<MixingDecay> out;
  out.reserve(k_max + 1);
  double bound = 1.0;
  for (int k = 0; k <= k_max; ++k) {
    double lhs = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = 1.0 / n - v[i];
      lhs += d * d;
    }
    out.push_back({lhs, bound});
    if (k == k_max) break;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += w.at(i, j) * v[j];
      next[i] = s;
    }
    v.swap(next);
    bound *= rho;
  }
  return out;
}

RingRhoFit ring_rho_asymptotic_fit(const std::vector<int>& n_values) {
  if (n_values.size() < 2)
    throw std::invalid_argument("ring_rho_asymptotic_fit: need at least 2 values");
  for (int n : n_values)
    if (n < 5)
      throw std::invalid_argument("ring_rho_asymptotic_fit: all n must be >= 5, got " +
                                  std::to_string(n));
  RingRhoFit fit;
  fit.taylor_c = 8.0 * kPi * kPi / 3.0;
  fit.doubled_taylor_c = 16.0 * kPi * kPi / 3.0;
  double sum = 0.0;
  for (int n : n_values) {
    const double rho = WeightMatrix::ring(n).rho();
    const double y = (1.0 - rho) * static_cast<double>(n) * n;
    fit.samples.emplace_back(n, y);
    sum += y;
  }
  fit.fitted_c = sum / static_cast<double>(n_values.size());
  return fit;
}

}  // namespace dsgd
