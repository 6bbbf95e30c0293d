#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"

namespace triage {

struct ModelBundle;

// Share of examples whose true label is among the first k ranked labels.
// Throws InvalidArgument for empty or ragged input and for k == 0.
double top_k_accuracy(std::span<const std::vector<std::string>> rankings,
                      std::span<const std::string> truth, std::size_t k);

struct EvalRow {
  std::string table;  // "group" or "resolver"
  std::string model;
  std::array<std::size_t, 3> ks{};
  std::array<double, 3> accuracy{};
  double train_seconds = 0.0;
  double inference_seconds = 0.0;  // median per ticket
};

struct EvalReport {
  std::size_t examples = 0;
  // Group classifier first (k = 1, 2, 3), then resolver, resolver-list,
  // group, similar, ensemble (k = 1, 3, 5).
  std::vector<EvalRow> rows;
  // Published reference points, printed for context only.
  double reference_group_top3 = 0.952;
  double reference_ensemble_top5 = 0.790;

  // Throws InvalidArgument if absent.
  const EvalRow& row(std::string_view table, std::string_view model) const;
};

EvalReport evaluate_all(const ModelBundle& bundle, std::span<const CleanTicket> test);

// Aligned text table with a reference footer.
std::string format_report(const EvalReport& report);
// One JSON object per row.
void write_report_jsonl(std::ostream& out, const EvalReport& report);

}  // namespace triage
