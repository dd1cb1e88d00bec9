#pragma once

#include <string>
#include <vector>

#include "peftt/training.hpp"

namespace peftt {

std::string report_to_json(const TrainReport& report);

/// Aligned text table with the accounting column names
/// (Situation, Training Parameters, Dev/Test acc and macro-F1, ratio).
std::string report_table(const std::vector<TrainReport>& reports);

struct RepeatSummary {
    int runs = 0;
    double mean_test_acc = 0.0, min_test_acc = 0.0, max_test_acc = 0.0;
    double mean_test_f1 = 0.0, min_test_f1 = 0.0, max_test_f1 = 0.0;
};

RepeatSummary summarize_repeats(const std::vector<TrainReport>& reports);
std::string repeat_summary_text(const RepeatSummary& s);

}  // namespace peftt
