#include "triage/ann_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>

#include "triage/binary_io.hpp"
#include "triage/errors.hpp"
#include "triage/text.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDAANN1";
constexpr int kSplitAttempts = 8;

class TreeBuilder {
 public:
  TreeBuilder(std::span<const float> data, std::size_t dim,
              std::uint32_t leaf_size, std::uint64_t seed)
      : data_(data), dim_(dim), leaf_size_(leaf_size), rng_(seed) {}

  AnnIndex::Tree build(std::size_t n) {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    tree_.nodes.emplace_back();
    split(0, std::move(all));
    return std::move(tree_);
  }

 private:
  std::span<const float> row(std::uint32_t i) const {
    return data_.subspan(std::size_t{i} * dim_, dim_);
  }

  void make_leaf(std::size_t node, const std::vector<std::uint32_t>& items) {
    AnnIndex::Node& n = tree_.nodes[node];
    n.left = n.right = -1;
    n.leaf_begin = static_cast<std::uint32_t>(tree_.leaf_items.size());
    n.leaf_count = static_cast<std::uint32_t>(items.size());
    tree_.leaf_items.insert(tree_.leaf_items.end(), items.begin(), items.end());
  }

  // Writes a unit hyperplane normal and offset for the bisector of two
  // random distinct points. Returns false if every sampled pair coincides.
  bool choose_plane(const std::vector<std::uint32_t>& items,
                    std::vector<float>& normal, float& offset) {
    std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
    for (int attempt = 0; attempt < kSplitAttempts; ++attempt) {
      const std::size_t a = pick(rng_);
      std::size_t b = pick(rng_);
      if (a == b) b = (b + 1) % items.size();
      const auto pa = row(items[a]);
      const auto pb = row(items[b]);
      double sq = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        normal[d] = pa[d] - pb[d];
        sq += static_cast<double>(normal[d]) * normal[d];
      }
      if (sq <= 1e-20) continue;
      const double inv = 1.0 / std::sqrt(sq);
      double off = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        normal[d] = static_cast<float>(normal[d] * inv);
        off += 0.5 * normal[d] * (static_cast<double>(pa[d]) + pb[d]);
      }
      offset = static_cast<float>(off);
      return true;
    }
    return false;
  }

  void split(std::size_t root, std::vector<std::uint32_t> root_items) {
    std::vector<std::pair<std::size_t, std::vector<std::uint32_t>>> stack;
    stack.emplace_back(root, std::move(root_items));
    std::vector<float> normal(dim_);
    while (!stack.empty()) {
      auto [node, items] = std::move(stack.back());
      stack.pop_back();
      if (items.size() <= leaf_size_) {
        make_leaf(node, items);
        continue;
      }
      float offset = 0.0f;
      std::vector<std::uint32_t> left, right;
      const bool planar = choose_plane(items, normal, offset);
      if (planar) {
        for (auto i : items) {
          const double m = kernels::dot(normal, row(i)) - offset;
          (m > 0.0 ? right : left).push_back(i);
        }
      }
      if (!planar || left.empty() || right.empty()) {
        // Degenerate point set: a zero normal sends each point to a fixed
        // side, so split the list in half instead.
        std::fill(normal.begin(), normal.end(), 0.0f);
        offset = 0.0f;
        std::shuffle(items.begin(), items.end(), rng_);
        left.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(items.size() / 2));
        right.assign(items.begin() + static_cast<std::ptrdiff_t>(items.size() / 2), items.end());
      }
      const auto normal_at = static_cast<std::uint32_t>(tree_.normals.size());
      tree_.normals.insert(tree_.normals.end(), normal.begin(), normal.end());
      const auto l = static_cast<std::int32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      const auto r = static_cast<std::int32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      AnnIndex::Node& n = tree_.nodes[node];
      n.left = l;
      n.right = r;
      n.normal = normal_at;
      n.offset = offset;
      stack.emplace_back(static_cast<std::size_t>(r), std::move(right));
      stack.emplace_back(static_cast<std::size_t>(l), std::move(left));
    }
  }

  std::span<const float> data_;
  std::size_t dim_;
  std::uint32_t leaf_size_;
  std::mt19937_64 rng_;
  AnnIndex::Tree tree_;
};

void check_index(const AnnIndex& index, std::size_t vector_size) {
  if (index.size() == 0) throw InvalidArgument("ANN index is empty");
  if (vector_size != index.dimension()) {
    throw DimensionMismatch(index.dimension(), vector_size);
  }
}

}  // namespace

AnnIndex AnnIndex::build(std::vector<AnnItem> items, const ForestParams& params,
                         kernels::Exec exec) {
  if (items.empty()) throw InvalidArgument("build_index: no vectors");
  if (params.num_trees == 0 || params.leaf_size == 0) {
    throw InvalidArgument("build_index: num_trees and leaf_size must be >= 1");
  }
  AnnIndex index;
  index.dimension_ = items.front().vector.size();
  index.params_ = params;
  index.ids_.reserve(items.size());
  index.labels_.reserve(items.size());
  index.data_.reserve(items.size() * index.dimension_);
  for (auto& item : items) {
    if (item.vector.size() != index.dimension_) {
      throw DimensionMismatch(index.dimension_, item.vector.size());
    }
    index.ids_.push_back(std::move(item.id));
    index.labels_.push_back(std::move(item.label));
    index.data_.insert(index.data_.end(), item.vector.begin(), item.vector.end());
  }

  index.trees_.resize(params.num_trees);
  const auto n_trees = static_cast<std::ptrdiff_t>(params.num_trees);
  const bool par = exec == kernels::Exec::parallel;
  (void)par;
#pragma omp parallel for schedule(dynamic, 1) if (par)
  for (std::ptrdiff_t t = 0; t < n_trees; ++t) {
    TreeBuilder builder(index.data_, index.dimension_, params.leaf_size,
                        mix64(params.seed + static_cast<std::uint64_t>(t)));
    index.trees_[t] = builder.build(index.ids_.size());
  }
  return index;
}

std::vector<Neighbor> AnnIndex::query(std::span<const float> q, std::size_t k,
                                      std::size_t search_budget,
                                      QueryStats* stats) const {
  check_index(*this, q.size());
  if (k < 1) throw InvalidArgument("query: k must be >= 1");
  if (search_budget < k) throw InvalidArgument("query: search_budget must be >= k");

  struct Entry {
    double priority;
    std::uint32_t tree;
    std::int32_t node;
    bool operator<(const Entry& o) const { return priority < o.priority; }
  };
  std::priority_queue<Entry> frontier;
  for (std::uint32_t t = 0; t < trees_.size(); ++t) {
    frontier.push({std::numeric_limits<double>::infinity(), t, 0});
  }

  std::vector<std::uint8_t> seen(size(), 0);
  std::vector<std::uint32_t> candidates;
  candidates.reserve(std::min(search_budget, size()));
  QueryStats local;
  while (!frontier.empty() && candidates.size() < search_budget) {
    const Entry top = frontier.top();
    frontier.pop();
    const Tree& tree = trees_[top.tree];
    const Node& node = tree.nodes[static_cast<std::size_t>(top.node)];
    if (node.is_leaf()) {
      ++local.leaves_touched;
      for (std::uint32_t j = 0; j < node.leaf_count; ++j) {
        const std::uint32_t item = tree.leaf_items[node.leaf_begin + j];
        if (seen[item]) continue;
        seen[item] = 1;
        candidates.push_back(item);
        if (candidates.size() >= search_budget) break;
      }
      continue;
    }
    const auto normal = std::span<const float>(tree.normals).subspan(node.normal, dimension_);
    const double margin = kernels::dot(normal, q) - node.offset;
    frontier.push({std::min(top.priority, margin), top.tree, node.right});
    frontier.push({std::min(top.priority, -margin), top.tree, node.left});
  }
  local.candidates_inspected = candidates.size();

  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(candidates.size());
  for (auto c : candidates) scored.emplace_back(kernels::angular_distance(vector(c), q), c);
  const std::size_t take = std::min(k, scored.size());
  const auto by_distance = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids_[a.second] < ids_[b.second];
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), by_distance);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({ids_[scored[i].second], labels_[scored[i].second], scored[i].first});
  }
  if (stats) *stats = local;
  return out;
}

std::string AnnIndex::serialize() const {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kAnnFormatVersion);
  w.u32(static_cast<std::uint32_t>(dimension_));
  w.u64(size());
  w.u32(params_.num_trees);
  w.u32(params_.leaf_size);
  w.u64(params_.seed);
  for (std::size_t i = 0; i < size(); ++i) {
    w.str(ids_[i]);
    w.str(labels_[i]);
    for (float x : vector(i)) w.f32(x);
  }
  for (const Tree& tree : trees_) {
    w.u64(tree.nodes.size());
    for (const Node& n : tree.nodes) {
      w.i32(n.left);
      w.i32(n.right);
      w.u32(n.leaf_begin);
      w.u32(n.leaf_count);
      w.u32(n.normal);
      w.f32(n.offset);
    }
    w.f32s(tree.normals);
    w.u32s(tree.leaf_items);
  }
  return std::move(w).take();
}

AnnIndex AnnIndex::deserialize(std::string_view bytes) {
  io::BinaryReader r(bytes, "ANN index");
  r.expect_magic(kMagic);
  r.expect_version(kAnnFormatVersion);
  AnnIndex index;
  index.dimension_ = r.u32();
  const std::uint64_t count = r.u64();
  index.params_.num_trees = r.u32();
  index.params_.leaf_size = r.u32();
  index.params_.seed = r.u64();
  if (index.dimension_ == 0 || count == 0 ||
      count > bytes.size() / (4 * index.dimension_)) {
    throw FormatError("ANN index: implausible header (dimension " +
                      std::to_string(index.dimension_) + ", count " +
                      std::to_string(count) + ")");
  }
  index.ids_.reserve(count);
  index.labels_.reserve(count);
  index.data_.reserve(count * index.dimension_);
  for (std::uint64_t i = 0; i < count; ++i) {
    index.ids_.push_back(r.str());
    index.labels_.push_back(r.str());
    for (std::size_t d = 0; d < index.dimension_; ++d) index.data_.push_back(r.f32());
  }
  index.trees_.resize(index.params_.num_trees);
  for (Tree& tree : index.trees_) {
    const std::uint64_t n_nodes = r.u64();
    if (n_nodes == 0 || n_nodes > bytes.size()) {
      throw FormatError("ANN index: implausible node count");
    }
    tree.nodes.resize(n_nodes);
    for (Node& n : tree.nodes) {
      n.left = r.i32();
      n.right = r.i32();
      n.leaf_begin = r.u32();
      n.leaf_count = r.u32();
      n.normal = r.u32();
      n.offset = r.f32();
    }
    tree.normals = r.f32s();
    tree.leaf_items = r.u32s();
    for (const Node& n : tree.nodes) {
      const bool bad_leaf = n.is_leaf() &&
          std::uint64_t{n.leaf_begin} + n.leaf_count > tree.leaf_items.size();
      const bool bad_inner = !n.is_leaf() &&
          (static_cast<std::uint64_t>(n.left) >= n_nodes ||
           static_cast<std::uint64_t>(n.right) >= n_nodes ||
           std::uint64_t{n.normal} + index.dimension_ > tree.normals.size());
      if (bad_leaf || bad_inner) throw FormatError("ANN index: corrupt tree node");
    }
    for (auto item : tree.leaf_items) {
      if (item >= count) throw FormatError("ANN index: leaf item out of range");
    }
  }
  r.expect_end();
  return index;
}

void AnnIndex::save(const std::filesystem::path& path) const {
  io::write_file(path, serialize());
}

AnnIndex AnnIndex::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

std::vector<Neighbor> brute_force_knn(std::span<const AnnItem> items,
                                      std::span<const float> query,
                                      std::size_t k, kernels::Exec exec) {
  if (items.empty()) return {};
  const std::size_t dim = query.size();
  std::vector<float> flat;
  flat.reserve(items.size() * dim);
  for (const auto& it : items) {
    if (it.vector.size() != dim) throw DimensionMismatch(dim, it.vector.size());
    flat.insert(flat.end(), it.vector.begin(), it.vector.end());
  }
  std::vector<double> dist(items.size());
  kernels::scan_angular(flat, dim, query, dist, exec);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, items.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return items[a].id < items[b].id;
                    });
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({items[order[i]].id, items[order[i]].label, dist[order[i]]});
  }
  return out;
}

}  // namespace triage
