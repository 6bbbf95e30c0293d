// Serial reference vs OpenMP kernels. Pass --benchmark_filter to pick one.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "triage/ann_index.hpp"
#include "triage/encoder.hpp"
#include "triage/kernels.hpp"
#include "triage/synth.hpp"

using namespace triage;
using kernels::Exec;

namespace {

std::vector<float> random_unit_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<float> out(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = std::span<float>(out).subspan(i * dim, dim);
    for (auto& x : row) x = g(rng);
    normalize(row);
  }
  return out;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_ScanAngular(benchmark::State& state) {
  const std::size_t n = 20000, dim = 512;
  const auto items = random_unit_rows(n, dim, 1);
  const auto q = random_unit_rows(1, dim, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    kernels::scan_angular(items, dim, q, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

void BM_PairwiseAngular(benchmark::State& state) {
  const std::size_t n = 1000, dim = 512;
  const auto pts = random_unit_rows(n, dim, 3);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    kernels::pairwise_angular(pts, dim, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_SoftmaxBatchGradient(benchmark::State& state) {
  const std::size_t dim = 512, classes = 140, batch = 256;
  const auto dense = random_unit_rows(batch, dim, 4);
  std::vector<kernels::SparseRow> rows;
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < batch; ++i) {
    auto row = std::span<const float>(dense).subspan(i * dim, dim);
    // Keep ~30 non-zeros per row, as hashed TF-IDF vectors have.
    std::vector<float> sparse(row.begin(), row.end());
    for (std::size_t d = 0; d < dim; ++d) if (d % 17 != i % 17) sparse[d] = 0.0f;
    rows.push_back(kernels::to_sparse(sparse));
    labels.push_back(static_cast<std::uint32_t>(i % classes));
    idx.push_back(i);
  }
  std::vector<double> w(dim * classes, 0.01), b(classes, 0.0), gw(dim * classes), gb(classes);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::softmax_batch_gradient(rows, labels, idx, w, b, gw, gb, exec_of(state)));
  }
}

void BM_EncodeBatch(benchmark::State& state) {
  const auto corpus = synth_corpus({20, 7, 40, 5000, 0.1}, 5);
  std::vector<std::vector<std::string>> docs;
  for (const auto& t : corpus.tickets) docs.push_back(t.tokens);
  const auto model = fit_encoder(docs, 512, 9);
  for (auto _ : state) {
    auto out = encode_batch(model, docs, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ForestBuild(benchmark::State& state) {
  const std::size_t n = 5000, dim = 128;
  const auto data = random_unit_rows(n, dim, 6);
  std::vector<AnnItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({std::to_string(i), "", Embedding(data.begin() + i * dim, data.begin() + (i + 1) * dim)});
  }
  for (auto _ : state) {
    auto index = AnnIndex::build(items, {16, 64, 7}, exec_of(state));
    benchmark::DoNotOptimize(index.size());
  }
}

}  // namespace

BENCHMARK(BM_ScanAngular)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseAngular)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftmaxBatchGradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EncodeBatch)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestBuild)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
