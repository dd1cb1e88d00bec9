#include "peftt/training.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "peftt/accounting.hpp"
#include "peftt/metrics.hpp"

namespace peftt {

const char* mode_name(FineTuneMode mode) {
    switch (mode) {
        case FineTuneMode::full: return "full";
        case FineTuneMode::prompt: return "prompt";
        case FineTuneMode::adapter: return "adapter";
        case FineTuneMode::adapter_prompt: return "adapter_prompt";
    }
    return "?";
}

std::optional<FineTuneMode> parse_mode(std::string_view name) {
    if (name == "full") return FineTuneMode::full;
    if (name == "prompt") return FineTuneMode::prompt;
    if (name == "adapter") return FineTuneMode::adapter;
    if (name == "adapter_prompt" || name == "adapter-prompt") return FineTuneMode::adapter_prompt;
    return std::nullopt;
}

bool mode_uses_prompt(FineTuneMode mode) {
    return mode == FineTuneMode::prompt || mode == FineTuneMode::adapter_prompt;
}

bool mode_uses_adapters(FineTuneMode mode) {
    return mode == FineTuneMode::adapter || mode == FineTuneMode::adapter_prompt;
}

double default_lr(FineTuneMode mode, std::string_view family) {
    const bool cino = family == "cino";
    switch (mode) {
        case FineTuneMode::full: return 5e-6;
        case FineTuneMode::prompt: return 6e-6;
        case FineTuneMode::adapter: return cino ? 1e-4 : 3e-4;
        case FineTuneMode::adapter_prompt: return cino ? 1.5e-4 : 5e-4;
    }
    return 0.0;
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             AdamConfig config)
    : params_(std::move(params)), cfg_(config) {
    if (cfg_.lr <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, t] : params_) {
        m_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        Tensor& t = params_[p].second;
        if (!t.has_grad()) continue;  // untouched this step
        auto grad = t.grad();
        auto data = t.data();
        auto& m = m_[p];
        auto& v = v_[p];
        for (size_t i = 0; i < grad.size(); ++i) {
            const float g = grad[i];
            if (!std::isfinite(g)) {
                throw std::runtime_error("adam: non-finite gradient in tensor '" +
                                         params_[p].first + "'");
            }
            m[i] = float(cfg_.beta1) * m[i] + float(1.0 - cfg_.beta1) * g;
            v[i] = float(cfg_.beta2) * v[i] + float(1.0 - cfg_.beta2) * g * g;
            const double m_hat = double(m[i]) / bc1;
            const double v_hat = double(v[i]) / bc2;
            data[i] -= static_cast<float>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

namespace {

struct Pipeline {
    const EncoderModel* model;
    const AdapterSet* adapters;
    const Tokenizer* tokenizer;
    const Template* tmpl;            // null in classifier modes
    const Verbalizer* verbalizer;    // null in classifier modes
    int max_len;
};

EncodedExample encode_example(const Pipeline& p, const Example& ex) {
    if (p.tmpl) return encode_with_template(ex, *p.tmpl, *p.tokenizer, p.max_len);
    return encode_for_classifier(ex, *p.tokenizer, p.max_len);
}

// Class-score row [1 x n_classes] for one encoded example.
Tensor class_scores(const Pipeline& p, const EncodedExample& e) {
    const int focus[1] = {e.focus_pos};
    Tensor logits = forward_logits_at(*p.model, e.token_ids, e.pad_mask, focus, p.adapters);
    if (p.verbalizer) return project_verbalizer(logits, *p.verbalizer);
    return logits;
}

std::vector<int> predict_encoded(const Pipeline& p, std::span<const EncodedExample> split) {
    NoGradGuard no_grad;
    std::vector<int> preds;
    preds.reserve(split.size());
    for (const EncodedExample& e : split) preds.push_back(classify(class_scores(p, e)));
    return preds;
}

std::pair<double, double> score_encoded(const Pipeline& p,
                                        std::span<const EncodedExample> split, int n_classes) {
    const std::vector<int> preds = predict_encoded(p, split);
    std::vector<int> golds;
    golds.reserve(split.size());
    for (const EncodedExample& e : split) golds.push_back(e.label);
    return {accuracy(preds, golds), macro_f1(preds, golds, n_classes)};
}

std::vector<std::vector<float>> snapshot(
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::vector<std::vector<float>> out;
    out.reserve(tensors.size());
    for (auto& [name, t] : tensors) out.emplace_back(t.data().begin(), t.data().end());
    return out;
}

void restore(std::vector<std::pair<std::string, Tensor>>& tensors,
             const std::vector<std::vector<float>>& snap) {
    for (size_t i = 0; i < tensors.size(); ++i) {
        auto data = tensors[i].second.data();
        std::copy(snap[i].begin(), snap[i].end(), data.begin());
    }
}

}  // namespace

TrainResult run_training(const Scenario& scenario, const CorpusSplits& corpus,
                         std::optional<Template> tmpl, std::optional<Verbalizer> verbalizer,
                         const TrainOptions& options) {
    const Hyperparams& hp = scenario.hp;
    if (hp.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (hp.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (corpus.train.empty()) throw std::invalid_argument("train: empty training split");
    if (corpus.validation.empty()) throw std::invalid_argument("train: empty validation split");
    const int n_classes = corpus.n_classes();
    if (n_classes < 2) throw std::invalid_argument("train: need at least 2 labels");
    const bool prompt = mode_uses_prompt(scenario.mode);
    if (prompt && !tmpl.has_value()) {
        throw std::invalid_argument("train: mode '" + std::string(mode_name(scenario.mode)) +
                                    "' requires a template");
    }
    if (prompt && !verbalizer.has_value()) {
        throw std::invalid_argument("train: mode '" + std::string(mode_name(scenario.mode)) +
                                    "' requires a verbalizer");
    }
    const double lr = hp.lr > 0.0 ? hp.lr : default_lr(scenario.mode, scenario.family);

    // Step 1: symbol preprocessing (idempotent; loaders already apply it).
    CorpusSplits data = corpus;
    for (auto* split : {&data.train, &data.validation, &data.test}) {
        for (Example& ex : *split) ex.text = preprocess_symbols(ex.text);
    }

    // Step 2: tokenizer from the training split, then the model.
    std::vector<std::string> train_texts;
    train_texts.reserve(data.train.size());
    for (const Example& ex : data.train) train_texts.push_back(ex.text);
    Tokenizer tokenizer = Tokenizer::build(train_texts);

    EncoderConfig config = scenario.config;
    config.vocab_size = tokenizer.vocab().size();
    EncoderModel model = make_encoder(config, prompt ? HeadKind::mlm : HeadKind::classifier,
                                      prompt ? 0 : n_classes, hp.seed);

    // Steps 3-5: add missing label-word tokens, resize embeddings, finalize
    // the verbalizer binding.
    int added_tokens = 0;
    if (prompt) {
        verbalizer->align_to(data.label_names);
        added_tokens = static_cast<int>(verbalizer->bind(tokenizer.vocab(), true).size());
        resize_embeddings(model, tokenizer.vocab().size(), hp.seed + 1);
    }

    // Step 6: loaders over pre-encoded examples.
    Pipeline pipe{&model, nullptr, &tokenizer, prompt ? &*tmpl : nullptr,
                  prompt ? &*verbalizer : nullptr, hp.max_len};
    std::vector<EncodedExample> train_enc, val_enc, test_enc;
    for (const Example& ex : data.train) train_enc.push_back(encode_example(pipe, ex));
    for (const Example& ex : data.validation) val_enc.push_back(encode_example(pipe, ex));
    for (const Example& ex : data.test) test_enc.push_back(encode_example(pipe, ex));
    BatchLoader loader(static_cast<int>(train_enc.size()), hp.batch_size, hp.seed + 3);

    // Step 7: adapters.
    std::optional<AdapterSet> adapters;
    if (mode_uses_adapters(scenario.mode)) {
        adapters = inject_adapters(model, hp.rank, hp.adapter_mode, hp.seed + 2);
        pipe.adapters = &*adapters;
    }

    auto trainables = trainable_parameters(model, pipe.adapters);
    AdamOptimizer optimizer(trainables, AdamConfig{lr});

    TrainReport report;
    report.scenario_name = scenario.name;
    report.model_key = scenario.model_key;
    report.mode = scenario.mode;
    report.trainable_params = trainable_parameter_count(model, pipe.adapters);
    report.full_params = model.parameter_count();
    report.ratio = double(report.trainable_params) / double(report.full_params);
    report.ratio_str = format_ratio(report.ratio);
    report.lr = lr;
    report.batch_size = hp.batch_size;
    report.epochs = hp.epochs;
    report.rank = mode_uses_adapters(scenario.mode) ? hp.rank : 0;
    report.seed = hp.seed;
    report.added_label_tokens = added_tokens;

    auto all_named = model.named_tensors();
    if (adapters) {
        for (auto& nt : adapters->named_tensors()) all_named.push_back(nt);
    }
    std::vector<std::vector<float>> best_snapshot;
    double best_f1 = -1.0;

    // Steps 8-15: the epoch loop.
    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        double loss_sum = 0.0;
        int batch_count = 0;
        for (const std::vector<int>& batch : loader.epoch(epoch - 1)) {
            Tape tape;
            std::vector<Tensor> rows;
            std::vector<int> targets;
            rows.reserve(batch.size());
            targets.reserve(batch.size());
            for (int idx : batch) {
                const EncodedExample& e = train_enc[static_cast<size_t>(idx)];
                rows.push_back(class_scores(pipe, e));
                targets.push_back(e.label);
            }
            Tensor logits = rows.size() == 1 ? rows[0] : concat_rows(rows);
            Tensor loss = cross_entropy(logits, targets);
            optimizer.zero_grad();
            backward(loss);
            optimizer.step();
            loss_sum += loss.item();
            ++batch_count;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / batch_count;
        auto [val_acc, val_f1] = score_encoded(pipe, val_enc, n_classes);
        stats.val_acc = val_acc;
        stats.val_macro_f1 = val_f1;
        report.epoch_stats.push_back(stats);

        if (val_f1 > best_f1) {
            best_f1 = val_f1;
            report.best_epoch = epoch;
            report.best_val_acc = val_acc;
            report.best_val_macro_f1 = val_f1;
            best_snapshot = snapshot(all_named);
        }
        if (options.log) {
            (*options.log) << scenario.name << " epoch " << epoch << "/" << hp.epochs
                           << "  loss " << stats.mean_loss << "  val_acc " << val_acc
                           << "  val_macro_f1 " << val_f1 << "\n";
        }
    }

    restore(all_named, best_snapshot);
    if (!test_enc.empty()) {
        auto [test_acc, test_f1] = score_encoded(pipe, test_enc, n_classes);
        report.test_acc = test_acc;
        report.test_macro_f1 = test_f1;
    }

    TrainResult result{std::move(report),    std::move(model),      std::move(adapters),
                       std::move(tokenizer), std::move(tmpl),       std::move(verbalizer),
                       data.label_names};
    return result;
}

std::vector<int> predict(const EncoderModel& model, const AdapterSet* adapters,
                         const Tokenizer& tokenizer, const Template* tmpl,
                         const Verbalizer* verbalizer, std::span<const Example> split,
                         int max_len) {
    if ((tmpl == nullptr) != (verbalizer == nullptr)) {
        throw std::invalid_argument("predict: template and verbalizer must come together");
    }
    Pipeline pipe{&model, adapters, &tokenizer, tmpl, verbalizer, max_len};
    std::vector<EncodedExample> enc;
    enc.reserve(split.size());
    for (const Example& ex : split) enc.push_back(encode_example(pipe, ex));
    return predict_encoded(pipe, enc);
}

std::pair<double, double> evaluate(const EncoderModel& model, const AdapterSet* adapters,
                                   const Tokenizer& tokenizer, const Template* tmpl,
                                   const Verbalizer* verbalizer,
                                   std::span<const Example> split, int max_len, int n_classes) {
    if (split.empty()) throw std::invalid_argument("evaluate: empty split");
    const std::vector<int> preds = predict(model, adapters, tokenizer, tmpl, verbalizer, split,
                                           max_len);
    std::vector<int> golds;
    golds.reserve(split.size());
    for (const Example& ex : split) golds.push_back(ex.label);
    return {accuracy(preds, golds), macro_f1(preds, golds, n_classes)};
}

}  // namespace peftt
