#include "medex/crf.hpp"

#include <cmath>
#include <limits>

#include "medex/errors.hpp"

namespace medex {

namespace {

struct CrfShape {
  std::size_t n;
  std::size_t k;
};

CrfShape check_crf_inputs(const Tensor& e, const Tensor& transitions, const Tensor& start,
                          const Tensor& stop) {
  const std::size_t k = e.cols();
  if (transitions.rank() != 2 || transitions.rows() != k || transitions.cols() != k ||
      start.numel() != k || stop.numel() != k) {
    throw ShapeError("crf: emissions " + shape_string(e.shape()) + " incompatible with transitions " +
                     shape_string(transitions.shape()) + ", start " + shape_string(start.shape()) +
                     ", stop " + shape_string(stop.shape()));
  }
  return {e.rows(), k};
}

double* grad_sink(detail::Node& node, std::size_t i) {
  auto& in = *node.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

}  // namespace

NamedTensors CrfParams::named() const {
  return {{"crf.emit_weight", emit_weight},
          {"crf.emit_bias", emit_bias},
          {"crf.transitions", transitions},
          {"crf.start", start},
          {"crf.stop", stop}};
}

CrfParams init_crf(std::size_t d_model, std::size_t num_tags, std::uint64_t seed) {
  Rng rng(seed);
  CrfParams p;
  p.emit_weight = glorot_uniform(d_model, num_tags, rng);
  p.emit_bias = Tensor({num_tags}, true);
  p.transitions = Tensor({num_tags, num_tags}, true);
  p.start = Tensor({num_tags}, true);
  p.stop = Tensor({num_tags}, true);
  return p;
}

Tensor emissions(const Tensor& h, const CrfParams& params) {
  return add_row(matmul(h, params.emit_weight), params.emit_bias);
}

Tensor sequence_score(const Tensor& e, const Tensor& transitions, const Tensor& start,
                      const Tensor& stop, std::span<const TagIndex> tags) {
  const auto [n, k] = check_crf_inputs(e, transitions, start, stop);
  if (tags.size() != n) {
    throw ShapeError("sequence_score: " + std::to_string(tags.size()) + " tags for " +
                     std::to_string(n) + " positions");
  }
  for (auto t : tags) {
    if (t >= k) throw ContractError("sequence_score: tag " + std::to_string(t) + " out of range");
  }
  auto ev = e.values();
  auto tv = transitions.values();
  double s = start[tags[0]] + ev[tags[0]];
  for (std::size_t i = 1; i < n; ++i) {
    s = s + tv[tags[i - 1] * k + tags[i]] + ev[i * k + tags[i]];
  }
  s = s + stop[tags[n - 1]];
  std::vector<TagIndex> y(tags.begin(), tags.end());
  return detail::make_result(
      "sequence_score", {1}, {s}, {e, transitions, start, stop},
      [n = n, k = k, y = std::move(y)](detail::Node& self) {
        const double g = self.grad[0];
        if (double* ge = grad_sink(self, 0))
          for (std::size_t i = 0; i < n; ++i) ge[i * k + y[i]] += g;
        if (double* gt = grad_sink(self, 1))
          for (std::size_t i = 1; i < n; ++i) gt[y[i - 1] * k + y[i]] += g;
        if (double* gs = grad_sink(self, 2)) gs[y[0]] += g;
        if (double* gp = grad_sink(self, 3)) gp[y[n - 1]] += g;
      });
}

Tensor log_partition(const Tensor& e, const Tensor& transitions, const Tensor& start,
                     const Tensor& stop) {
  const auto [n, k] = check_crf_inputs(e, transitions, start, stop);
  auto ev = e.values();
  auto tv = transitions.values();
  std::vector<double> alpha(n * k);
  std::vector<double> scratch(k);
  for (std::size_t b = 0; b < k; ++b) alpha[b] = start[b] + ev[b];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t b = 0; b < k; ++b) {
      for (std::size_t a = 0; a < k; ++a) scratch[a] = alpha[(i - 1) * k + a] + tv[a * k + b];
      alpha[i * k + b] = ev[i * k + b] + logsumexp(scratch);
    }
  }
  for (std::size_t b = 0; b < k; ++b) scratch[b] = alpha[(n - 1) * k + b] + stop[b];
  const double log_z = logsumexp(scratch);

  return detail::make_result(
      "log_partition", {1}, {log_z}, {e, transitions, start, stop},
      [n = n, k = k, log_z, alpha = std::move(alpha)](detail::Node& self) {
        const auto& ev = self.inputs[0]->value;
        const auto& tv = self.inputs[1]->value;
        const auto& stop = self.inputs[3]->value;
        std::vector<double> beta(n * k);
        std::vector<double> scratch(k);
        for (std::size_t b = 0; b < k; ++b) beta[(n - 1) * k + b] = stop[b];
        for (std::size_t i = n - 1; i-- > 0;) {
          for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b)
              scratch[b] = tv[a * k + b] + ev[(i + 1) * k + b] + beta[(i + 1) * k + b];
            beta[i * k + a] = logsumexp(scratch);
          }
        }
        const double g = self.grad[0];
        double* ge = grad_sink(self, 0);
        double* gt = grad_sink(self, 1);
        double* gs = grad_sink(self, 2);
        double* gp = grad_sink(self, 3);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t b = 0; b < k; ++b) {
            const double marginal = std::exp(alpha[i * k + b] + beta[i * k + b] - log_z);
            if (ge) ge[i * k + b] += g * marginal;
            if (gs && i == 0) gs[b] += g * marginal;
            if (gp && i == n - 1) gp[b] += g * marginal;
          }
        }
        if (gt) {
          for (std::size_t i = 1; i < n; ++i)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b)
                gt[a * k + b] += g * std::exp(alpha[(i - 1) * k + a] + tv[a * k + b] +
                                              ev[i * k + b] + beta[i * k + b] - log_z);
        }
      });
}

Tensor crf_nll(const Tensor& e, const Tensor& transitions, const Tensor& start,
               const Tensor& stop, std::span<const TagIndex> tags) {
  return sub(log_partition(e, transitions, start, stop),
             sequence_score(e, transitions, start, stop, tags));
}

Tensor crf_nll(const Tensor& e, const CrfParams& params, std::span<const TagIndex> tags) {
  return crf_nll(e, params.transitions, params.start, params.stop, tags);
}

Decoded viterbi(const Tensor& e, const Tensor& transitions, const Tensor& start,
                const Tensor& stop) {
  const auto [n, k] = check_crf_inputs(e, transitions, start, stop);
  auto ev = e.values();
  auto tv = transitions.values();
  std::vector<double> delta(n * k);
  std::vector<std::size_t> back(n * k, 0);
  for (std::size_t b = 0; b < k; ++b) delta[b] = start[b] + ev[b];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t b = 0; b < k; ++b) {
      std::size_t best = 0;
      double best_score = delta[(i - 1) * k] + tv[b];
      for (std::size_t a = 1; a < k; ++a) {
        const double s = delta[(i - 1) * k + a] + tv[a * k + b];
        if (s > best_score) {
          best_score = s;
          best = a;
        }
      }
      delta[i * k + b] = best_score + ev[i * k + b];
      back[i * k + b] = best;
    }
  }
  Decoded out;
  out.tags.assign(n, 0);
  out.score = delta[(n - 1) * k] + stop[0];
  for (std::size_t b = 1; b < k; ++b) {
    const double s = delta[(n - 1) * k + b] + stop[b];
    if (s > out.score) {
      out.score = s;
      out.tags[n - 1] = b;
    }
  }
  for (std::size_t i = n - 1; i > 0; --i) out.tags[i - 1] = back[i * k + out.tags[i]];
  return out;
}

Decoded viterbi(const Tensor& e, const CrfParams& params) {
  return viterbi(e, params.transitions, params.start, params.stop);
}

OracleResult brute_force_oracle(const Tensor& e, const Tensor& transitions, const Tensor& start,
                                const Tensor& stop) {
  const auto [n, k] = check_crf_inputs(e, transitions, start, stop);
  double count = std::pow(static_cast<double>(k), static_cast<double>(n));
  if (count > 100000.0) {
    throw ContractError("brute_force_oracle: " + std::to_string(k) + "^" + std::to_string(n) +
                        " sequences exceeds the 100000 limit");
  }
  auto ev = e.values();
  auto tv = transitions.values();
  std::vector<TagIndex> y(n, 0);
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(count));
  OracleResult out;
  out.best_score = -std::numeric_limits<double>::infinity();
  // Reverse-lexicographic comparison: the last position is most significant.
  auto preferred = [](const std::vector<TagIndex>& a, const std::vector<TagIndex>& b) {
    for (std::size_t i = a.size(); i-- > 0;) {
      if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
  };
  while (true) {
    double s = start[y[0]] + ev[y[0]];
    for (std::size_t i = 1; i < n; ++i) s = s + tv[y[i - 1] * k + y[i]] + ev[i * k + y[i]];
    s = s + stop[y[n - 1]];
    scores.push_back(s);
    if (out.best.empty() || s > out.best_score || (s == out.best_score && preferred(y, out.best))) {
      out.best_score = s;
      out.best = y;
    }
    std::size_t pos = 0;
    while (pos < n && ++y[pos] == k) y[pos++] = 0;
    if (pos == n) break;
  }
  out.log_partition = logsumexp(scores);
  return out;
}

}  // namespace medex
