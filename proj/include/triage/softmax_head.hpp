#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "triage/binary_io.hpp"
#include "triage/encoder.hpp"
#include "triage/kernels.hpp"

namespace triage {

// Ordered set of class labels with a label <-> index bijection.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  // Keeps the given order; throws InvalidArgument on duplicates.
  explicit LabelVocabulary(std::vector<std::string> labels);
  // Sorted unique labels of an observation list.
  static LabelVocabulary from_observed(std::span<const std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<std::size_t> find(std::string_view label) const;
  // Throws InvalidArgument naming the label if absent.
  std::size_t at(std::string_view label) const;

  bool operator==(const LabelVocabulary& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Probabilities indexed by some LabelVocabulary known from context.
using ProbVector = std::vector<double>;

struct LabeledProb {
  std::string label;
  double probability = 0.0;
  bool operator==(const LabeledProb&) const = default;
};
using Ranking = std::vector<LabeledProb>;

struct HeadHyper {
  double lr = 10.0;
  std::size_t batch = 32;
  std::size_t epochs = 50;
  double l2 = 1e-6;
  std::size_t patience = 5;
  // Step size at epoch e is lr / (1 + lr_decay * e).
  double lr_decay = 0.1;
  // Share of the training data carved off for early stopping when no
  // validation set is supplied.
  double validation_fraction = 0.1;
  double init_scale = 0.01;
};

// Multinomial logistic regression layer: probs = softmax(W^T x + b).
class SoftmaxHead {
 public:
  SoftmaxHead() = default;
  SoftmaxHead(LabelVocabulary vocabulary, std::size_t dimension, double l2);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t classes() const noexcept { return vocabulary_.size(); }
  const LabelVocabulary& vocabulary() const noexcept { return vocabulary_; }
  double l2() const noexcept { return l2_; }

  // Row-major dimension() x classes().
  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> bias() noexcept { return bias_; }
  std::span<const double> bias() const noexcept { return bias_; }

  std::vector<double> logits(std::span<const float> embedding) const;
  // Throws DimensionMismatch if the embedding length differs.
  ProbVector predict_proba(std::span<const float> embedding) const;

  bool operator==(const SoftmaxHead&) const = default;

 private:
  LabelVocabulary vocabulary_;
  std::size_t dimension_ = 0;
  double l2_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct HeadValidation {
  std::span<const Embedding> embeddings;
  std::span<const std::string> labels;
};

struct HeadTrainReport {
  std::vector<double> train_loss;       // full objective after each epoch
  std::vector<double> validation_loss;  // mean cross-entropy after each epoch
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// Mini-batch gradient descent on mean cross-entropy + (l2/2)|W|^2 with early
// stopping on validation loss. The label vocabulary is the sorted set of
// training labels; validation examples with unseen labels are ignored.
// Throws InvalidArgument for fewer than two classes and DivergenceError when
// the loss becomes non-finite.
SoftmaxHead train_head(std::span<const Embedding> embeddings,
                       std::span<const std::string> labels,
                       const HeadHyper& hyper, std::uint64_t seed,
                       const HeadValidation* validation = nullptr,
                       HeadTrainReport* report = nullptr,
                       kernels::Exec exec = kernels::Exec::parallel);

// Mean cross-entropy + (l2/2)|W|^2 over a labeled set.
double head_objective(const SoftmaxHead& head,
                      std::span<const kernels::SparseRow> rows,
                      std::span<const std::uint32_t> labels);
// Analytic gradient of head_objective.
void head_objective_gradient(const SoftmaxHead& head,
                             std::span<const kernels::SparseRow> rows,
                             std::span<const std::uint32_t> labels,
                             std::span<double> grad_weights,
                             std::span<double> grad_bias);

// Highest-probability labels, descending; ties go to the lower vocabulary
// index. Throws InvalidArgument unless 1 <= k <= probs.size().
Ranking top_k(std::span<const double> probs, const LabelVocabulary& vocabulary,
              std::size_t k);

std::string serialize(const SoftmaxHead& head);
SoftmaxHead deserialize_head(std::string_view bytes);

void write_vocabulary(io::BinaryWriter& w, const LabelVocabulary& v);
LabelVocabulary read_vocabulary(io::BinaryReader& r);

}  // namespace triage
