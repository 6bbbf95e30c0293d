#pragma once

// Data-parallel inner loops. Every kernel takes an Exec flag: Exec::serial
// is the reference implementation the tests compare against, Exec::parallel
// runs the same arithmetic under OpenMP. Parallel variants partition work so
// that each output element is accumulated in the same order as the serial
// loop, which makes the two paths bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace triage::kernels {

enum class Exec { serial, parallel };

// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

double dot(std::span<const float> a, std::span<const float> b);

// sqrt(2 - 2 cos) for unit vectors, clamped into [0, 2].
double angular_from_dot(double dot);

inline double angular_distance(std::span<const float> a,
                               std::span<const float> b) {
  return angular_from_dot(dot(a, b));
}

// Distances from `query` to each row of the row-major `items` matrix
// (n rows of `dim` floats). out.size() must be n.
void scan_angular(std::span<const float> items, std::size_t dim,
                  std::span<const float> query, std::span<double> out,
                  Exec exec);

// Full n x n angular distance matrix, row-major into `out` (size n*n).
void pairwise_angular(std::span<const float> points, std::size_t dim,
                      std::span<double> out, Exec exec);

// Non-zero entries of one feature vector.
struct SparseRow {
  std::vector<std::uint32_t> index;
  std::vector<float> value;
};

SparseRow to_sparse(std::span<const float> dense);

// Softmax cross-entropy over a mini-batch. Weights are row-major D x C.
// Writes the summed (not averaged) gradient into grad_weights / grad_bias,
// which are overwritten, and returns the summed loss.
double softmax_batch_gradient(std::span<const SparseRow> rows,
                              std::span<const std::uint32_t> labels,
                              std::span<const std::size_t> batch,
                              std::span<const double> weights,
                              std::span<const double> bias,
                              std::span<double> grad_weights,
                              std::span<double> grad_bias, Exec exec);

// In-place numerically stable softmax.
void softmax_inplace(std::span<double> logits);

}  // namespace triage::kernels
