#include "peftt/metrics.hpp"

#include <stdexcept>
#include <string>

namespace peftt {

namespace {

void check_lengths(std::span<const int> preds, std::span<const int> golds) {
    if (preds.size() != golds.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(preds.size()) +
                                    " predictions vs " + std::to_string(golds.size()) +
                                    " golds");
    }
    if (preds.empty()) throw std::invalid_argument("metrics: empty input");
}

void check_range(std::span<const int> v, int n_classes, const char* what) {
    for (int x : v) {
        if (x < 0 || x >= n_classes) {
            throw std::out_of_range(std::string("metrics: ") + what + " label " +
                                    std::to_string(x) + " out of range [0, " +
                                    std::to_string(n_classes) + ")");
        }
    }
}

}  // namespace

int64_t& ConfusionMatrix::at(int gold, int pred) {
    return counts[static_cast<size_t>(gold) * n_classes + pred];
}

int64_t ConfusionMatrix::at(int gold, int pred) const {
    return counts[static_cast<size_t>(gold) * n_classes + pred];
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

int64_t ConfusionMatrix::tp(int c) const { return at(c, c); }

int64_t ConfusionMatrix::fp(int c) const {
    int64_t col = 0;
    for (int g = 0; g < n_classes; ++g) col += at(g, c);
    return col - tp(c);
}

int64_t ConfusionMatrix::fn(int c) const {
    int64_t row = 0;
    for (int p = 0; p < n_classes; ++p) row += at(c, p);
    return row - tp(c);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds,
                          int n_classes) {
    check_lengths(preds, golds);
    if (n_classes < 2) throw std::invalid_argument("metrics: need n_classes >= 2");
    check_range(preds, n_classes, "predicted");
    check_range(golds, n_classes, "gold");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(static_cast<size_t>(n_classes) * n_classes, 0);
    for (size_t i = 0; i < preds.size(); ++i) cm.at(golds[i], preds[i])++;
    return cm;
}

double accuracy(std::span<const int> preds, std::span<const int> golds) {
    check_lengths(preds, golds);
    int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) correct += preds[i] == golds[i];
    return double(correct) / double(preds.size());
}

double macro_f1(std::span<const int> preds, std::span<const int> golds, int n_classes) {
    check_lengths(preds, golds);
    if (n_classes < 2) throw std::invalid_argument("metrics: need n_classes >= 2");
    check_range(preds, n_classes, "predicted");
    check_range(golds, n_classes, "gold");
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            const bool p = preds[i] == c, g = golds[i] == c;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
        const double f1 = precision + recall == 0.0
                              ? 0.0
                              : 2.0 * precision * recall / (precision + recall);
        sum += f1;
    }
    return sum / n_classes;
}

double macro_f1(const ConfusionMatrix& cm) {
    if (cm.n_classes < 2) throw std::invalid_argument("metrics: need n_classes >= 2");
    double sum = 0.0;
    for (int c = 0; c < cm.n_classes; ++c) {
        const int64_t tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c);
        const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
        const double f1 = precision + recall == 0.0
                              ? 0.0
                              : 2.0 * precision * recall / (precision + recall);
        sum += f1;
    }
    return sum / cm.n_classes;
}

}  // namespace peftt
