#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace peftt {

/// Row = gold class, column = predicted class.
struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<int64_t> counts;  // n_classes * n_classes, row-major

    int64_t& at(int gold, int pred);
    int64_t at(int gold, int pred) const;
    int64_t total() const;
    int64_t tp(int c) const;  // diagonal
    int64_t fp(int c) const;  // column minus diagonal
    int64_t fn(int c) const;  // row minus diagonal
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds,
                          int n_classes);

/// Fraction of exact matches.
double accuracy(std::span<const int> preds, std::span<const int> golds);

/// Unweighted mean of per-class F1 over all n_classes (classes absent from
/// the golds included); any zero denominator contributes 0.
double macro_f1(std::span<const int> preds, std::span<const int> golds, int n_classes);
double macro_f1(const ConfusionMatrix& cm);

}  // namespace peftt
