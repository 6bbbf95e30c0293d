#include "triage/softmax_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "triage/errors.hpp"

namespace triage {
namespace {

constexpr std::string_view kMagic = "TDAHEAD";
constexpr std::uint32_t kVersion = 1;

struct EncodedSet {
  std::vector<kernels::SparseRow> rows;
  std::vector<std::uint32_t> labels;
};

EncodedSet encode_labeled(std::span<const Embedding> x,
                          std::span<const std::string> y,
                          const LabelVocabulary& vocab, std::size_t dim,
                          bool skip_unknown) {
  EncodedSet out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != dim) throw DimensionMismatch(dim, x[i].size());
    const auto idx = vocab.find(y[i]);
    if (!idx) {
      if (skip_unknown) continue;
      throw InvalidArgument("unknown label '" + y[i] + "'");
    }
    out.rows.push_back(kernels::to_sparse(x[i]));
    out.labels.push_back(static_cast<std::uint32_t>(*idx));
  }
  return out;
}

double mean_cross_entropy(const SoftmaxHead& head,
                          std::span<const kernels::SparseRow> rows,
                          std::span<const std::uint32_t> labels) {
  if (rows.empty()) return 0.0;
  std::vector<double> probs(head.classes());
  const auto w = head.weights();
  const auto b = head.bias();
  const std::size_t c = head.classes();
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(b.begin(), b.end(), probs.begin());
    for (std::size_t k = 0; k < rows[i].index.size(); ++k) {
      const double x = rows[i].value[k];
      const double* wr = w.data() + rows[i].index[k] * c;
      for (std::size_t j = 0; j < c; ++j) probs[j] += x * wr[j];
    }
    kernels::softmax_inplace(probs);
    total += -std::log(std::max(probs[labels[i]], 1e-300));
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace

LabelVocabulary::LabelVocabulary(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  index_.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw InvalidArgument("duplicate label '" + labels_[i] + "'");
    }
  }
}

LabelVocabulary LabelVocabulary::from_observed(
    std::span<const std::string> labels) {
  std::set<std::string> unique(labels.begin(), labels.end());
  return LabelVocabulary(std::vector<std::string>(unique.begin(), unique.end()));
}

std::optional<std::size_t> LabelVocabulary::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelVocabulary::at(std::string_view label) const {
  const auto i = find(label);
  if (!i) throw InvalidArgument("unknown label '" + std::string(label) + "'");
  return *i;
}

SoftmaxHead::SoftmaxHead(LabelVocabulary vocabulary, std::size_t dimension,
                         double l2)
    : vocabulary_(std::move(vocabulary)),
      dimension_(dimension),
      l2_(l2),
      weights_(dimension * vocabulary_.size(), 0.0),
      bias_(vocabulary_.size(), 0.0) {}

std::vector<double> SoftmaxHead::logits(std::span<const float> x) const {
  if (x.size() != dimension_) throw DimensionMismatch(dimension_, x.size());
  const std::size_t c = classes();
  std::vector<double> z(bias_.begin(), bias_.end());
  for (std::size_t d = 0; d < dimension_; ++d) {
    if (x[d] == 0.0f) continue;
    const double xd = x[d];
    const double* w = weights_.data() + d * c;
    for (std::size_t j = 0; j < c; ++j) z[j] += xd * w[j];
  }
  return z;
}

ProbVector SoftmaxHead::predict_proba(std::span<const float> x) const {
  auto z = logits(x);
  kernels::softmax_inplace(z);
  return z;
}

double head_objective(const SoftmaxHead& head,
                      std::span<const kernels::SparseRow> rows,
                      std::span<const std::uint32_t> labels) {
  double sq = 0.0;
  for (double w : head.weights()) sq += w * w;
  return mean_cross_entropy(head, rows, labels) + 0.5 * head.l2() * sq;
}

void head_objective_gradient(const SoftmaxHead& head,
                             std::span<const kernels::SparseRow> rows,
                             std::span<const std::uint32_t> labels,
                             std::span<double> grad_weights,
                             std::span<double> grad_bias) {
  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), 0);
  kernels::softmax_batch_gradient(rows, labels, all, head.weights(),
                                  head.bias(), grad_weights, grad_bias,
                                  kernels::Exec::serial);
  const double inv_n = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
  const auto w = head.weights();
  for (std::size_t i = 0; i < grad_weights.size(); ++i) {
    grad_weights[i] = grad_weights[i] * inv_n + head.l2() * w[i];
  }
  for (auto& g : grad_bias) g *= inv_n;
}

SoftmaxHead train_head(std::span<const Embedding> embeddings,
                       std::span<const std::string> labels,
                       const HeadHyper& hyper, std::uint64_t seed,
                       const HeadValidation* validation,
                       HeadTrainReport* report, kernels::Exec exec) {
  if (embeddings.size() != labels.size()) {
    throw InvalidArgument("train_head: embeddings and labels differ in length");
  }
  if (embeddings.empty()) throw InvalidArgument("train_head: no examples");
  if (hyper.batch == 0 || hyper.epochs == 0 || !(hyper.lr > 0.0)) {
    throw InvalidArgument("train_head: batch, epochs and lr must be positive");
  }
  const std::size_t dim = embeddings.front().size();
  std::mt19937_64 rng(seed);

  // Carve a validation slice when none is supplied.
  std::vector<std::size_t> train_idx(embeddings.size());
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<Embedding> carved_x;
  std::vector<std::string> carved_y;
  HeadValidation carved;
  if (validation == nullptr) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(hyper.validation_fraction * static_cast<double>(train_idx.size())));
    for (std::size_t i = train_idx.size() - n_val; i < train_idx.size(); ++i) {
      carved_x.push_back(embeddings[train_idx[i]]);
      carved_y.push_back(labels[train_idx[i]]);
    }
    train_idx.resize(train_idx.size() - n_val);
    std::sort(train_idx.begin(), train_idx.end());
    carved = {carved_x, carved_y};
    validation = &carved;
  }

  std::vector<std::string> train_labels;
  train_labels.reserve(train_idx.size());
  for (std::size_t i : train_idx) train_labels.push_back(labels[i]);
  auto vocab = LabelVocabulary::from_observed(train_labels);
  if (vocab.size() < 2) {
    throw InvalidArgument("train_head: need at least 2 distinct labels, got " +
                          std::to_string(vocab.size()));
  }

  EncodedSet train;
  for (std::size_t i : train_idx) {
    if (embeddings[i].size() != dim) throw DimensionMismatch(dim, embeddings[i].size());
    train.rows.push_back(kernels::to_sparse(embeddings[i]));
    train.labels.push_back(static_cast<std::uint32_t>(vocab.at(labels[i])));
  }
  const EncodedSet val = encode_labeled(validation->embeddings,
                                        validation->labels, vocab, dim, true);

  SoftmaxHead head(vocab, dim, hyper.l2);
  {
    std::normal_distribution<double> init(0.0, hyper.init_scale);
    for (auto& w : head.weights()) w = init(rng);
  }

  const std::size_t classes = vocab.size();
  std::vector<double> grad_w(dim * classes), grad_b(classes);
  std::vector<std::size_t> order(train.rows.size());
  std::iota(order.begin(), order.end(), 0);

  HeadTrainReport local;
  SoftmaxHead best = head;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double step = hyper.lr / (1.0 + hyper.lr_decay * static_cast<double>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      const auto batch = std::span<const std::size_t>(order).subspan(start, end - start);
      kernels::softmax_batch_gradient(train.rows, train.labels, batch,
                                      head.weights(), head.bias(), grad_w,
                                      grad_b, exec);
      const double scale = step / static_cast<double>(batch.size());
      auto w = head.weights();
      const double decay = 1.0 - step * hyper.l2;
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = w[i] * decay - scale * grad_w[i];
      }
      auto b = head.bias();
      for (std::size_t j = 0; j < classes; ++j) b[j] -= scale * grad_b[j];
    }

    const double train_loss = head_objective(head, train.rows, train.labels);
    if (!std::isfinite(train_loss)) throw DivergenceError(epoch);
    local.train_loss.push_back(train_loss);
    local.epochs_run = epoch + 1;

    const double val_loss = val.rows.empty()
                                ? train_loss
                                : mean_cross_entropy(head, val.rows, val.labels);
    if (!std::isfinite(val_loss)) throw DivergenceError(epoch);
    local.validation_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = head;
      local.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  if (report) *report = std::move(local);
  return best;
}

Ranking top_k(std::span<const double> probs, const LabelVocabulary& vocabulary,
              std::size_t k) {
  if (k < 1 || k > probs.size()) {
    throw InvalidArgument("top_k: k=" + std::to_string(k) +
                          " out of range [1, " + std::to_string(probs.size()) + "]");
  }
  if (probs.size() != vocabulary.size()) {
    throw DimensionMismatch(vocabulary.size(), probs.size());
  }
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), better);
  Ranking out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({vocabulary.label(idx[i]), probs[idx[i]]});
  }
  return out;
}

void write_vocabulary(io::BinaryWriter& w, const LabelVocabulary& v) {
  w.strs(v.labels());
}

LabelVocabulary read_vocabulary(io::BinaryReader& r) {
  try {
    return LabelVocabulary(r.strs());
  } catch (const InvalidArgument& e) {
    throw FormatError(r.what() + ": " + e.what());
  }
}

std::string serialize(const SoftmaxHead& head) {
  io::BinaryWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u64(head.dimension());
  w.f64(head.l2());
  write_vocabulary(w, head.vocabulary());
  w.f64s(head.weights());
  w.f64s(head.bias());
  return std::move(w).take();
}

SoftmaxHead deserialize_head(std::string_view bytes) {
  io::BinaryReader r(bytes, "softmax head");
  r.expect_magic(kMagic);
  r.expect_version(kVersion);
  const auto dim = static_cast<std::size_t>(r.u64());
  const double l2 = r.f64();
  auto vocab = read_vocabulary(r);
  SoftmaxHead head(std::move(vocab), dim, l2);
  const auto w = r.f64s();
  const auto b = r.f64s();
  r.expect_end();
  if (w.size() != head.weights().size() || b.size() != head.bias().size()) {
    throw FormatError("softmax head: weight shape does not match vocabulary");
  }
  std::copy(w.begin(), w.end(), head.weights().begin());
  std::copy(b.begin(), b.end(), head.bias().begin());
  return head;
}

}  // namespace triage
