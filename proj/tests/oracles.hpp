// Plain-loop reference computations used as independent oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "medex/random.hpp"
#include "medex/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const medex::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline medex::Tensor from_matrix(const Matrix& m, bool requires_grad = false) {
  std::vector<double> flat;
  for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
  return medex::Tensor({m.size(), m.front().size()}, flat, requires_grad);
}

inline Matrix random_matrix(std::size_t r, std::size_t c, medex::Rng& rng, double scale = 1.0) {
  Matrix m(r, std::vector<double>(c));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform(-scale, scale);
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

// Naive log(sum(exp)) in long double with its own shift.
inline double log_sum_exp(const std::vector<double>& xs) {
  long double m = -std::numeric_limits<long double>::infinity();
  for (double x : xs) m = std::max<long double>(m, x);
  long double s = 0;
  for (double x : xs) s += std::exp(static_cast<long double>(x) - m);
  return static_cast<double>(m + std::log(s));
}

inline std::vector<double> softmax(const std::vector<double>& xs) {
  const double lse = log_sum_exp(xs);
  std::vector<double> out;
  for (double x : xs) out.push_back(std::exp(x - lse));
  return out;
}

struct CrfInstance {
  Matrix e;  // n x K
  Matrix t;  // K x K
  std::vector<double> start, stop;
};

inline double path_score(const CrfInstance& c, const std::vector<std::size_t>& y) {
  double s = c.start[y[0]] + c.stop[y.back()];
  for (std::size_t i = 0; i < y.size(); ++i) s += c.e[i][y[i]];
  for (std::size_t i = 1; i < y.size(); ++i) s += c.t[y[i - 1]][y[i]];
  return s;
}

// Visits every tag sequence in odometer order (position 0 fastest).
inline void for_each_path(std::size_t n, std::size_t k,
                          const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> y(n, 0);
  while (true) {
    visit(y);
    std::size_t i = 0;
    while (i < n && ++y[i] == k) y[i++] = 0;
    if (i == n) return;
  }
}

struct CrfTruth {
  double log_z;
  double best_score;
  std::vector<std::vector<std::size_t>> argmax_set;  // all sequences within 1e-12 of best
  Matrix marginals;                                  // n x K
};

inline CrfTruth crf_truth(const CrfInstance& c) {
  const std::size_t n = c.e.size(), k = c.t.size();
  std::vector<double> scores;
  std::vector<std::vector<std::size_t>> paths;
  for_each_path(n, k, [&](const std::vector<std::size_t>& y) {
    scores.push_back(path_score(c, y));
    paths.push_back(y);
  });
  CrfTruth out;
  out.log_z = log_sum_exp(scores);
  out.best_score = *std::max_element(scores.begin(), scores.end());
  out.marginals.assign(n, std::vector<double>(k, 0.0));
  for (std::size_t p = 0; p < paths.size(); ++p) {
    if (scores[p] >= out.best_score - 1e-12) out.argmax_set.push_back(paths[p]);
    const double prob = std::exp(scores[p] - out.log_z);
    for (std::size_t i = 0; i < n; ++i) out.marginals[i][paths[p][i]] += prob;
  }
  return out;
}

inline CrfInstance random_crf(std::size_t n, std::size_t k, medex::Rng& rng, double scale = 2.0) {
  CrfInstance c;
  c.e = random_matrix(n, k, rng, scale);
  c.t = random_matrix(k, k, rng, scale);
  for (std::size_t j = 0; j < k; ++j) {
    c.start.push_back(rng.uniform(-scale, scale));
    c.stop.push_back(rng.uniform(-scale, scale));
  }
  return c;
}

inline medex::Tensor vec(const std::vector<double>& v, bool requires_grad = false) {
  return medex::Tensor({v.size()}, v, requires_grad);
}

}  // namespace oracle
