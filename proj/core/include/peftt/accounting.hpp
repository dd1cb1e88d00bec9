#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peftt/encoder.hpp"

namespace peftt {

struct AccountingRow {
    std::string scenario;
    int64_t trainable = 0;
    int64_t full = 0;       // displayed full-fine-tuning total
    double ratio = 0.0;     // trainable / ratio basis
    std::string ratio_str;  // 6 significant digits ("0.174666%", "1")
    std::string notes;
};

/// Parallel low-rank adapters at both per-layer injection slots:
/// L*(2*d*r) + L*(r*d_ff + r*d).
int64_t adapter_count(const EncoderConfig& config, int rank);

/// Exact integer rank with adapter_count(config, r) == target, if any.
std::optional<int> solve_rank(const EncoderConfig& config, int64_t target);

/// Percent with 6 significant digits; whole ratios print bare ("1").
std::string format_ratio(double ratio);

/// Adapter-scenario accounting for a catalog model.
AccountingRow ratio_report(const std::string& model_key, int rank);

/// Full / prompt / adapter / adapter+prompt rows for a catalog model, with
/// computed-vs-published full-count discrepancies in the notes.
std::vector<AccountingRow> account_table(const std::string& model_key, int rank);

/// Accounting for an arbitrary config (computed full count, no published
/// numbers).
AccountingRow ratio_report_custom(const std::string& name, const EncoderConfig& config,
                                  int rank, HeadKind head, int n_classes);

std::string render_table(const std::vector<AccountingRow>& rows);

}  // namespace peftt
