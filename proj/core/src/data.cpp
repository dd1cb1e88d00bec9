#include "peftt/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace peftt {

LoadedCorpus load_tncc(const std::string& path, char delimiter) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("corpus: cannot read " + path);
    return load_tncc(f, delimiter, path);
}

LoadedCorpus load_tncc(std::istream& in, char delimiter, const std::string& origin) {
    LoadedCorpus out;
    std::unordered_map<std::string, int> label_index;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t sep = line.find(delimiter);
        if (sep == std::string::npos) {
            throw std::invalid_argument("corpus: " + origin + ":" + std::to_string(line_no) +
                                        ": no '" + std::string(1, delimiter) + "' delimiter");
        }
        const std::string label_name = preprocess_symbols(line.substr(0, sep));
        const std::string text = preprocess_symbols(line.substr(sep + 1));
        if (label_name.empty()) {
            throw std::invalid_argument("corpus: " + origin + ":" + std::to_string(line_no) +
                                        ": empty label");
        }
        if (text.empty()) {
            ++out.skipped_empty;
            continue;
        }
        auto [it, fresh] = label_index.try_emplace(label_name,
                                                   static_cast<int>(out.label_names.size()));
        if (fresh) out.label_names.push_back(label_name);
        out.examples.push_back({text, it->second});
    }
    return out;
}

CorpusSplits split_corpus(std::vector<Example> examples, std::vector<std::string> label_names,
                          uint64_t seed, double r_train, double r_val) {
    if (r_train <= 0 || r_val <= 0 || r_train + r_val >= 1.0) {
        throw std::invalid_argument("split: ratios must be positive and leave a test share");
    }
    const size_t n = examples.size();
    if (n < 10) {
        throw std::invalid_argument("split: need at least 10 examples, got " +
                                    std::to_string(n));
    }
    Rng rng(seed);
    rng.shuffle(examples);
    const size_t n_train = static_cast<size_t>(r_train * double(n));
    const size_t n_val = static_cast<size_t>(r_val * double(n));
    CorpusSplits s;
    s.label_names = std::move(label_names);
    s.train.assign(examples.begin(), examples.begin() + n_train);
    s.validation.assign(examples.begin() + n_train, examples.begin() + n_train + n_val);
    s.test.assign(examples.begin() + n_train + n_val, examples.end());
    return s;
}

SynthSpec SynthSpec::parse(const std::string& spec) {
    SynthSpec s;
    char x = 0;
    std::istringstream in(spec);
    if (!(in >> s.n_classes >> x >> s.n_per_class) || x != 'x' || s.n_classes < 2 ||
        s.n_per_class < 1) {
        throw std::invalid_argument("synthetic spec: expected '<classes>x<per-class>', got '" +
                                    spec + "'");
    }
    char at = 0;
    if (in >> at) {
        uint64_t seed = 0;
        if (at != '@' || !(in >> seed)) {
            throw std::invalid_argument("synthetic spec: trailing garbage in '" + spec + "'");
        }
        s.seed = seed;
    }
    return s;
}

std::vector<std::string> synth_label_names(int n_classes) {
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "class%02d", c);
        names.emplace_back(buf);
    }
    return names;
}

std::vector<std::vector<std::string>> synth_signal_tokens(const SynthSpec& spec) {
    std::vector<std::vector<std::string>> sig(static_cast<size_t>(spec.n_classes));
    for (int c = 0; c < spec.n_classes; ++c) {
        for (int k = 0; k < spec.signal_tokens_per_class; ++k) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "sig%02d_%d", c, k);
            sig[static_cast<size_t>(c)].emplace_back(buf);
        }
    }
    return sig;
}

std::vector<Example> synthesize_corpus(const SynthSpec& spec) {
    if (spec.n_classes < 2) throw std::invalid_argument("synthesize: need n_classes >= 2");
    if (spec.signal_tokens_per_class < 1 || spec.min_tokens < 2 ||
        spec.max_tokens < spec.min_tokens) {
        throw std::invalid_argument("synthesize: degenerate spec");
    }
    if (!spec.class_weights.empty() &&
        static_cast<int>(spec.class_weights.size()) != spec.n_classes) {
        throw std::invalid_argument("synthesize: class_weights must have one entry per class");
    }

    const auto signals = synth_signal_tokens(spec);
    std::vector<std::string> fillers;
    for (int k = 0; k < spec.filler_tokens; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "fill%02d", k);
        fillers.emplace_back(buf);
    }

    Rng rng(spec.seed);
    std::vector<Example> out;
    for (int c = 0; c < spec.n_classes; ++c) {
        const double weight = spec.class_weights.empty()
                                  ? 1.0
                                  : spec.class_weights[static_cast<size_t>(c)];
        const int count = std::max(1, static_cast<int>(double(spec.n_per_class) * weight + 0.5));
        const auto& sig = signals[static_cast<size_t>(c)];
        for (int i = 0; i < count; ++i) {
            const int len = spec.min_tokens +
                            static_cast<int>(rng.below(
                                static_cast<uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
            // Majority of tokens carry the class signal; at least one always.
            int n_signal = std::max(1, (len * 2) / 3);
            std::vector<std::string> toks;
            for (int t = 0; t < n_signal; ++t)
                toks.push_back(sig[static_cast<size_t>(rng.below(sig.size()))]);
            while (static_cast<int>(toks.size()) < len)
                toks.push_back(fillers[static_cast<size_t>(rng.below(fillers.size()))]);
            rng.shuffle(toks);
            std::string text;
            for (size_t t = 0; t < toks.size(); ++t) {
                if (t) text.push_back(' ');
                text += toks[t];
            }
            out.push_back({std::move(text), c});
        }
    }
    rng.shuffle(out);
    return out;
}

void save_tsv(const std::string& path, std::span<const Example> examples,
              std::span<const std::string> label_names, char delimiter) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("corpus: cannot write " + path);
    for (const Example& ex : examples) {
        if (ex.label < 0 || ex.label >= static_cast<int>(label_names.size())) {
            throw std::out_of_range("corpus: label " + std::to_string(ex.label) +
                                    " has no name");
        }
        f << label_names[static_cast<size_t>(ex.label)] << delimiter << ex.text << '\n';
    }
}

EncodedExample encode_for_classifier(const Example& ex, const Tokenizer& tokenizer,
                                     int max_len) {
    EncodedExample e;
    e.token_ids.push_back(Vocabulary::cls_id);
    for (int id : tokenizer.encode(ex.text)) {
        if (static_cast<int>(e.token_ids.size()) >= max_len) break;
        e.token_ids.push_back(id);
    }
    e.pad_mask.assign(e.token_ids.size(), 1);
    e.focus_pos = 0;
    e.label = ex.label;
    return e;
}

EncodedExample encode_with_template(const Example& ex, const Template& tmpl,
                                    const Tokenizer& tokenizer, int max_len) {
    WrappedInput w = wrap(tmpl, ex.text, tokenizer, max_len);
    EncodedExample e;
    e.token_ids = std::move(w.token_ids);
    e.pad_mask = std::move(w.pad_mask);
    e.focus_pos = w.mask_pos;
    e.label = ex.label;
    return e;
}

BatchLoader::BatchLoader(int n_examples, int batch_size, uint64_t seed)
    : n_(n_examples), batch_size_(batch_size), seed_(seed) {
    if (n_ < 1) throw std::invalid_argument("batch loader: empty example set");
    if (batch_size_ < 1) throw std::invalid_argument("batch loader: batch_size must be >= 1");
}

int BatchLoader::batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

std::vector<std::vector<int>> BatchLoader::epoch(int epoch_index) const {
    std::vector<int> order(static_cast<size_t>(n_));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed_ + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch_index + 1));
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n_; start += batch_size_) {
        const int end = std::min(n_, start + batch_size_);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace peftt
