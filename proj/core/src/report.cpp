#include "peftt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace peftt {

std::string report_to_json(const TrainReport& r) {
    nlohmann::json j;
    j["scenario"] = r.scenario_name;
    j["model"] = r.model_key;
    j["mode"] = mode_name(r.mode);
    j["trainable_params"] = r.trainable_params;
    j["full_params"] = r.full_params;
    j["ratio"] = r.ratio;
    j["ratio_str"] = r.ratio_str;
    j["lr"] = r.lr;
    j["batch_size"] = r.batch_size;
    j["epochs"] = r.epochs;
    j["rank"] = r.rank;
    j["seed"] = r.seed;
    j["added_label_tokens"] = r.added_label_tokens;
    j["best_epoch"] = r.best_epoch;
    j["dev_acc"] = r.best_val_acc;
    j["dev_macro_f1"] = r.best_val_macro_f1;
    j["test_acc"] = r.test_acc;
    j["test_macro_f1"] = r.test_macro_f1;
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochStats& e : r.epoch_stats) {
        epochs.push_back({{"epoch", e.epoch},
                          {"loss", e.mean_loss},
                          {"val_acc", e.val_acc},
                          {"val_macro_f1", e.val_macro_f1}});
    }
    j["epoch_stats"] = epochs;
    return j.dump(2);
}

std::string report_table(const std::vector<TrainReport>& reports) {
    std::ostringstream os;
    char line[512];
    std::snprintf(line, sizeof(line), "%-16s %20s %9s %13s %9s %14s %26s\n", "Situation",
                  "Training Parameters", "Dev_acc", "Dev_macro_f1", "Test_acc",
                  "Test_macro_f1", "Training Parameters Ratio");
    os << line;
    for (const TrainReport& r : reports) {
        std::snprintf(line, sizeof(line), "%-16s %20lld %9.5f %13.5f %9.5f %14.5f %26s\n",
                      r.scenario_name.c_str(), static_cast<long long>(r.trainable_params),
                      r.best_val_acc, r.best_val_macro_f1, r.test_acc, r.test_macro_f1,
                      r.ratio_str.c_str());
        os << line;
    }
    return os.str();
}

RepeatSummary summarize_repeats(const std::vector<TrainReport>& reports) {
    RepeatSummary s;
    s.runs = static_cast<int>(reports.size());
    if (reports.empty()) return s;
    s.min_test_acc = s.max_test_acc = reports[0].test_acc;
    s.min_test_f1 = s.max_test_f1 = reports[0].test_macro_f1;
    for (const TrainReport& r : reports) {
        s.mean_test_acc += r.test_acc;
        s.mean_test_f1 += r.test_macro_f1;
        s.min_test_acc = std::min(s.min_test_acc, r.test_acc);
        s.max_test_acc = std::max(s.max_test_acc, r.test_acc);
        s.min_test_f1 = std::min(s.min_test_f1, r.test_macro_f1);
        s.max_test_f1 = std::max(s.max_test_f1, r.test_macro_f1);
    }
    s.mean_test_acc /= s.runs;
    s.mean_test_f1 /= s.runs;
    return s;
}

std::string repeat_summary_text(const RepeatSummary& s) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%d runs: test_acc mean %.5f [%.5f, %.5f], test_macro_f1 mean %.5f "
                  "[%.5f, %.5f]\n",
                  s.runs, s.mean_test_acc, s.min_test_acc, s.max_test_acc, s.mean_test_f1,
                  s.min_test_f1, s.max_test_f1);
    return buf;
}

}  // namespace peftt
