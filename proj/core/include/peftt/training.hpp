#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peftt/adapter.hpp"
#include "peftt/data.hpp"
#include "peftt/encoder.hpp"
#include "peftt/prompt.hpp"

namespace peftt {

enum class FineTuneMode { full, prompt, adapter, adapter_prompt };

const char* mode_name(FineTuneMode mode);
std::optional<FineTuneMode> parse_mode(std::string_view name);
bool mode_uses_prompt(FineTuneMode mode);
bool mode_uses_adapters(FineTuneMode mode);

struct Hyperparams {
    double lr = 0.0;  // 0 resolves to default_lr(mode, family)
    int batch_size = 16;
    int epochs = 30;
    int max_len = 108;
    int rank = 8;
    uint64_t seed = 1;
    AdapterMode adapter_mode = AdapterMode::parallel_lora;
};

/// One fine-tuning run: a model config bound to a mode and hyperparameters.
struct Scenario {
    std::string name;
    std::string model_key;
    std::string family = "bert";  // "cino" or "bert"; picks the lr defaults
    EncoderConfig config;         // vocab_size is filled from the corpus
    FineTuneMode mode = FineTuneMode::adapter_prompt;
    Hyperparams hp;
};

/// Scenario-dependent defaults: full 5e-6; prompt 6e-6; adapter 1e-4 (cino)
/// or 3e-4; adapter+prompt 1.5e-4 (cino) or 5e-4.
double default_lr(FineTuneMode mode, std::string_view family);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over the trainable tensors. Aborts with a
/// diagnostic naming the tensor if a gradient goes non-finite.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

    void step();
    void zero_grad();
    int64_t step_count() const { return t_; }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<float>> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double val_acc = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainReport {
    std::string scenario_name;
    std::string model_key;
    FineTuneMode mode = FineTuneMode::full;
    int64_t trainable_params = 0;
    int64_t full_params = 0;
    double ratio = 0.0;
    std::string ratio_str;
    double lr = 0.0;
    int batch_size = 0;
    int epochs = 0;
    int rank = 0;
    uint64_t seed = 0;
    int added_label_tokens = 0;
    std::vector<EpochStats> epoch_stats;
    int best_epoch = 0;  // 1-based
    double best_val_acc = 0.0;
    double best_val_macro_f1 = 0.0;
    double test_acc = 0.0;
    double test_macro_f1 = 0.0;
};

/// Everything needed to keep evaluating or to persist the run. The model
/// holds the best-epoch weights (selected by validation macro-F1).
struct TrainResult {
    TrainReport report;
    EncoderModel model;
    std::optional<AdapterSet> adapters;
    Tokenizer tokenizer;
    std::optional<Template> tmpl;
    std::optional<Verbalizer> verbalizer;
    std::vector<std::string> label_names;
};

struct TrainOptions {
    std::ostream* log = nullptr;  // per-epoch progress lines
};

/// The four fine-tuning scenarios as one parameterized loop: preprocess,
/// build model + tokenizer, add missing verbalizer tokens, resize
/// embeddings, bind template/verbalizer, build the loader, inject adapters
/// when the mode asks for them, then epochs of forward / cross-entropy /
/// backward / Adam with per-epoch validation metrics.
TrainResult run_training(const Scenario& scenario, const CorpusSplits& corpus,
                         std::optional<Template> tmpl, std::optional<Verbalizer> verbalizer,
                         const TrainOptions& options = {});

/// Gradient-free scoring of a split: (accuracy, macro_f1). Prompt scoring
/// when a template + verbalizer are given, first-position classifier scoring
/// otherwise.
std::pair<double, double> evaluate(const EncoderModel& model, const AdapterSet* adapters,
                                   const Tokenizer& tokenizer, const Template* tmpl,
                                   const Verbalizer* verbalizer,
                                   std::span<const Example> split, int max_len, int n_classes);

/// Per-example predictions behind evaluate().
std::vector<int> predict(const EncoderModel& model, const AdapterSet* adapters,
                         const Tokenizer& tokenizer, const Template* tmpl,
                         const Verbalizer* verbalizer, std::span<const Example> split,
                         int max_len);

}  // namespace peftt
