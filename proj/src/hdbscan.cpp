#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "triage/discovery.hpp"
#include "triage/errors.hpp"

namespace triage {
namespace {

// Zero mutual-reachability distances (duplicate points) map to this
// density instead of infinity so stabilities stay finite.
constexpr double kMaxLambda = 1e12;

double to_lambda(double distance) {
  return distance > 1.0 / kMaxLambda ? 1.0 / distance : kMaxLambda;
}

struct Edge {
  std::size_t a, b;
  double weight;
};

// Prim's algorithm on the dense mutual-reachability graph.
std::vector<Edge> mutual_reachability_mst(const std::vector<double>& dist,
                                          const std::vector<double>& core,
                                          std::size_t n) {
  std::vector<Edge> edges;
  edges.reserve(n - 1);
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    double next_w = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double mr = std::max({core[current], core[j], dist[current * n + j]});
      if (mr < best[j]) {
        best[j] = mr;
        from[j] = current;
      }
      if (best[j] < next_w) {
        next_w = best[j];
        next = j;
      }
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, next_w});
    current = next;
  }
  return edges;
}

// Single-linkage dendrogram in scipy layout: nodes < n are points, node
// n + i is created by the i-th merge.
struct Dendrogram {
  std::vector<std::size_t> left, right, size;
  std::vector<double> distance;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void link(std::size_t child, std::size_t root) { parent_[child] = root; }
  std::size_t grow() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }

 private:
  std::vector<std::size_t> parent_;
};

Dendrogram single_linkage(std::vector<Edge> edges, std::size_t n) {
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& x, const Edge& y) { return x.weight < y.weight; });
  Dendrogram t;
  std::vector<std::size_t> size(n, 1);
  UnionFind uf(n);
  for (const Edge& e : edges) {
    const std::size_t ra = uf.find(e.a);
    const std::size_t rb = uf.find(e.b);
    const std::size_t node = uf.grow();
    uf.link(ra, node);
    uf.link(rb, node);
    const std::size_t s = size[ra] + size[rb];
    size.push_back(s);
    t.left.push_back(ra);
    t.right.push_back(rb);
    t.size.push_back(s);
    t.distance.push_back(e.weight);
  }
  return t;
}

struct CondensedEntry {
  std::size_t parent;  // cluster id
  std::size_t child;   // point id (< n) or cluster id (>= n)
  double lambda;
  std::size_t child_size;
};

class Condenser {
 public:
  Condenser(const Dendrogram& t, std::size_t n, std::size_t min_cluster_size)
      : t_(t), n_(n), mcs_(min_cluster_size) {}

  // Cluster ids start at n (the root) and grow in creation order, so a
  // child's id is always larger than its parent's.
  std::vector<CondensedEntry> run() {
    std::vector<CondensedEntry> out;
    const std::size_t root = n_ + t_.left.size() - 1;
    std::size_t next_cluster = n_ + 1;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, n_}};
    while (!stack.empty()) {
      auto [node, cluster] = stack.back();
      stack.pop_back();
      if (node < n_) continue;
      const std::size_t i = node - n_;
      const double lambda = to_lambda(t_.distance[i]);
      const std::size_t l = t_.left[i], r = t_.right[i];
      const std::size_t ls = node_size(l), rs = node_size(r);
      if (ls >= mcs_ && rs >= mcs_) {
        const std::size_t lc = next_cluster++;
        const std::size_t rc = next_cluster++;
        out.push_back({cluster, lc, lambda, ls});
        out.push_back({cluster, rc, lambda, rs});
        stack.emplace_back(r, rc);
        stack.emplace_back(l, lc);
      } else if (ls < mcs_ && rs < mcs_) {
        emit_points(l, cluster, lambda, out);
        emit_points(r, cluster, lambda, out);
      } else if (ls < mcs_) {
        emit_points(l, cluster, lambda, out);
        stack.emplace_back(r, cluster);
      } else {
        emit_points(r, cluster, lambda, out);
        stack.emplace_back(l, cluster);
      }
    }
    return out;
  }

 private:
  std::size_t node_size(std::size_t node) const {
    return node < n_ ? 1 : t_.size[node - n_];
  }

  void emit_points(std::size_t node, std::size_t cluster, double lambda,
                   std::vector<CondensedEntry>& out) const {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      if (x < n_) {
        out.push_back({cluster, x, lambda, 1});
      } else {
        stack.push_back(t_.right[x - n_]);
        stack.push_back(t_.left[x - n_]);
      }
    }
  }

  const Dendrogram& t_;
  std::size_t n_;
  std::size_t mcs_;
};

}  // namespace

std::vector<int> cluster_topic(std::span<const Embedding> points,
                               const HdbscanParams& params,
                               kernels::Exec exec) {
  const std::size_t n = points.size();
  const std::size_t mcs = std::max<std::size_t>(params.min_cluster_size, 2);
  std::vector<int> labels(n, kNoise);
  if (n < mcs || n < 2) return labels;

  const std::size_t dim = points.front().size();
  std::vector<float> flat;
  flat.reserve(n * dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw DimensionMismatch(dim, p.size());
    flat.insert(flat.end(), p.begin(), p.end());
  }
  std::vector<double> dist(n * n);
  kernels::pairwise_angular(flat, dim, dist, exec);

  const std::size_t k = std::min(params.min_samples ? params.min_samples : mcs, n);
  std::vector<double> core(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(dist.begin() + i * n, dist.begin() + (i + 1) * n, row.begin());
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    core[i] = row[k - 1];
  }

  const Dendrogram tree = single_linkage(mutual_reachability_mst(dist, core, n), n);
  dist.clear();
  dist.shrink_to_fit();
  const auto condensed = Condenser(tree, n, mcs).run();

  std::size_t max_cluster = n;
  for (const auto& e : condensed) {
    if (e.child >= n) max_cluster = std::max(max_cluster, e.child);
  }
  const std::size_t n_clusters = max_cluster - n + 1;
  const auto cid = [&](std::size_t c) { return c - n; };

  std::vector<double> birth(n_clusters, 0.0);
  std::vector<std::size_t> parent_of(n_clusters, 0);
  std::vector<std::vector<std::size_t>> children(n_clusters);
  for (const auto& e : condensed) {
    if (e.child >= n) {
      birth[cid(e.child)] = e.lambda;
      parent_of[cid(e.child)] = e.parent;
      children[cid(e.parent)].push_back(e.child);
    }
  }
  std::vector<double> stability(n_clusters, 0.0);
  for (const auto& e : condensed) {
    stability[cid(e.parent)] += (e.lambda - birth[cid(e.parent)]) * static_cast<double>(e.child_size);
  }

  // Excess-of-mass selection, leaves upward. Children ids exceed parents'.
  std::vector<bool> selected(n_clusters, false);
  std::vector<double> subtree(n_clusters, 0.0);
  const std::size_t first = params.allow_single_cluster ? 0 : 1;
  for (std::size_t c = n_clusters; c-- > 0;) {
    double child_sum = 0.0;
    for (auto ch : children[c]) child_sum += subtree[cid(ch)];
    if (c < first) break;
    if (children[c].empty() || stability[c] > child_sum) {
      selected[c] = true;
      subtree[c] = stability[c];
      // Deselect everything below.
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const std::size_t x = cid(stack.back());
        stack.pop_back();
        selected[x] = false;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    } else {
      subtree[c] = child_sum;
    }
  }
  if (!params.allow_single_cluster) selected[0] = false;

  // Number selected clusters in id order.
  std::vector<int> flat_label(n_clusters, kNoise);
  int next = 0;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    if (selected[c]) flat_label[c] = next++;
  }
  const bool root_selected = selected[0];
  double root_max_lambda = 0.0;
  for (const auto& e : condensed) {
    if (e.parent == n) root_max_lambda = std::max(root_max_lambda, e.lambda);
  }
  for (const auto& e : condensed) {
    if (e.child >= n) continue;
    std::size_t c = e.parent;
    while (true) {
      if (selected[cid(c)]) break;
      if (c == n) break;
      c = parent_of[cid(c)];
    }
    if (!selected[cid(c)]) continue;
    // A selected root labels only the points that persist to its densest
    // level; the rest of it is noise.
    if (c == n && root_selected && e.lambda < root_max_lambda) continue;
    labels[e.child] = flat_label[cid(c)];
  }
  return labels;
}

}  // namespace triage
