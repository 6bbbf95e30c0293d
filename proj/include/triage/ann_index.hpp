#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/encoder.hpp"
#include "triage/kernels.hpp"

namespace triage {

struct AnnItem {
  std::string id;
  std::string label;  // resolver of the ticket; may be empty
  Embedding vector;
};

struct Neighbor {
  std::string ticket_id;
  std::string resolver;
  double distance = 0.0;  // angular, sqrt(2 - 2 cos)

  bool operator==(const Neighbor&) const = default;
};

struct ForestParams {
  std::uint32_t num_trees = 32;
  std::uint32_t leaf_size = 64;
  std::uint64_t seed = 0;

  bool operator==(const ForestParams&) const = default;
};

struct QueryStats {
  std::size_t candidates_inspected = 0;
  std::size_t leaves_touched = 0;
};

// Forest of random-projection trees. Each internal node splits on the
// hyperplane bisecting two randomly chosen points; leaves hold at most
// leaf_size items. Immutable after build, so concurrent queries are safe.
class AnnIndex {
 public:
  struct Node {
    // Internal nodes: children >= 0. Leaves: left == right == -1 and
    // [leaf_begin, leaf_begin + leaf_count) indexes Tree::leaf_items.
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t leaf_begin = 0;
    std::uint32_t leaf_count = 0;
    std::uint32_t normal = 0;  // offset into Tree::normals, in floats
    float offset = 0.0f;

    bool is_leaf() const noexcept { return left < 0; }
    bool operator==(const Node&) const = default;
  };

  struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root
    std::vector<float> normals;
    std::vector<std::uint32_t> leaf_items;

    bool operator==(const Tree&) const = default;
  };

  // Throws InvalidArgument for an empty item list and DimensionMismatch for
  // ragged vectors. Trees are seeded independently, so parallel build is
  // deterministic.
  static AnnIndex build(std::vector<AnnItem> items, const ForestParams& params,
                        kernels::Exec exec = kernels::Exec::parallel);

  // Best-first descent over all trees; stops once `search_budget` distinct
  // candidates are collected, then ranks them by exact distance (ties by id).
  std::vector<Neighbor> query(std::span<const float> vector, std::size_t k,
                              std::size_t search_budget,
                              QueryStats* stats = nullptr) const;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::span<const float> vector(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dimension_, dimension_);
  }

  std::string serialize() const;
  static AnnIndex deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static AnnIndex load(const std::filesystem::path& path);

  bool operator==(const AnnIndex&) const = default;

 private:
  std::size_t dimension_ = 0;
  ForestParams params_;
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  std::vector<float> data_;  // row-major size() x dimension()
  std::vector<Tree> trees_;
};

constexpr std::uint32_t kAnnFormatVersion = 1;

// Exact k nearest by full scan; ascending distance, ties by ascending id.
// k is clamped to the item count.
std::vector<Neighbor> brute_force_knn(std::span<const AnnItem> items,
                                      std::span<const float> query,
                                      std::size_t k,
                                      kernels::Exec exec = kernels::Exec::serial);

}  // namespace triage
