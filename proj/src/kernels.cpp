#include "triage/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#ifdef TRIAGE_HAVE_OPENMP
#include <omp.h>
#endif

namespace triage::kernels {

int max_threads() {
#ifdef TRIAGE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  // Four independent accumulators; fixed order keeps results reproducible.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

double angular_from_dot(double d) {
  const double sq = 2.0 - 2.0 * d;
  return sq <= 0.0 ? 0.0 : std::min(2.0, std::sqrt(sq));
}

void scan_angular(std::span<const float> items, std::size_t dim,
                  std::span<const float> query, std::span<double> out,
                  Exec exec) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  assert(items.size() == out.size() * dim);
  const bool par = exec == Exec::parallel;
  (void)par;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = angular_distance(items.subspan(i * dim, dim), query);
  }
}

void pairwise_angular(std::span<const float> points, std::size_t dim,
                      std::span<double> out, Exec exec) {
  const std::size_t n = dim == 0 ? 0 : points.size() / dim;
  assert(out.size() == n * n);
  const bool par = exec == Exec::parallel;
  (void)par;
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8) if (par)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const auto a = points.subspan(i * dim, dim);
    out[i * n + i] = 0.0;
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < n; ++j) {
      out[i * n + j] = angular_distance(a, points.subspan(j * dim, dim));
    }
  }
  // Mirror the upper triangle.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = out[j * n + i];
  }
}

SparseRow to_sparse(std::span<const float> dense) {
  SparseRow row;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0f) {
      row.index.push_back(static_cast<std::uint32_t>(i));
      row.value.push_back(dense[i]);
    }
  }
  return row;
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - m);
    sum += z;
  }
  for (auto& z : logits) z /= sum;
}

namespace {

// Class probabilities for one example, and its cross-entropy loss.
double example_probs(const SparseRow& row, std::uint32_t label,
                     std::span<const double> weights,
                     std::span<const double> bias, std::span<double> probs) {
  const std::size_t classes = bias.size();
  std::copy(bias.begin(), bias.end(), probs.begin());
  for (std::size_t k = 0; k < row.index.size(); ++k) {
    const double x = row.value[k];
    const double* w = weights.data() + row.index[k] * classes;
    for (std::size_t c = 0; c < classes; ++c) probs[c] += x * w[c];
  }
  softmax_inplace(probs);
  return -std::log(std::max(probs[label], 1e-300));
}

}  // namespace

double softmax_batch_gradient(std::span<const SparseRow> rows,
                              std::span<const std::uint32_t> labels,
                              std::span<const std::size_t> batch,
                              std::span<const double> weights,
                              std::span<const double> bias,
                              std::span<double> grad_weights,
                              std::span<double> grad_bias, Exec exec) {
  const std::size_t classes = bias.size();
  std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);

  if (exec == Exec::serial) {
    std::vector<double> probs(classes);
    double loss = 0.0;
    for (std::size_t i : batch) {
      const auto& row = rows[i];
      loss += example_probs(row, labels[i], weights, bias, probs);
      probs[labels[i]] -= 1.0;
      for (std::size_t k = 0; k < row.index.size(); ++k) {
        const double x = row.value[k];
        double* g = grad_weights.data() + row.index[k] * classes;
        for (std::size_t c = 0; c < classes; ++c) g[c] += x * probs[c];
      }
      for (std::size_t c = 0; c < classes; ++c) grad_bias[c] += probs[c];
    }
    return loss;
  }

  // Phase 1: per-example residuals (independent rows).
  const auto nb = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<double> residual(batch.size() * classes);
  std::vector<double> losses(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t i = batch[b];
    auto probs = std::span<double>(residual).subspan(b * classes, classes);
    losses[b] = example_probs(rows[i], labels[i], weights, bias, probs);
    probs[labels[i]] -= 1.0;
  }
  double loss = 0.0;
  for (double l : losses) loss += l;

  // Phase 2: each class column is owned by one thread and accumulated in
  // batch order, matching the serial loop element by element.
  const auto nc = static_cast<std::ptrdiff_t>(classes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    double gb = 0.0;
    for (std::ptrdiff_t b = 0; b < nb; ++b) {
      const auto& row = rows[batch[b]];
      const double r = residual[b * classes + c];
      for (std::size_t k = 0; k < row.index.size(); ++k) {
        grad_weights[row.index[k] * classes + c] += row.value[k] * r;
      }
      gb += r;
    }
    grad_bias[c] = gb;
  }
  return loss;
}

}  // namespace triage::kernels
