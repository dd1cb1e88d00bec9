#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "peftt/prompt.hpp"
#include "peftt/vocab.hpp"

namespace peftt {

struct Example {
    std::string text;
    int label = -1;
};

struct CorpusSplits {
    std::vector<Example> train, validation, test;
    std::vector<std::string> label_names;

    int n_classes() const { return static_cast<int>(label_names.size()); }
};

struct LoadedCorpus {
    std::vector<Example> examples;
    std::vector<std::string> label_names;  // indexed by first appearance
    int skipped_empty = 0;
};

/// One record per line: `label_name<DELIM>title`. Labels are indexed by first
/// appearance; text goes through preprocess_symbols. A line without the
/// delimiter is an error naming the line number; an empty title is skipped
/// and counted.
LoadedCorpus load_tncc(const std::string& path, char delimiter = '\t');
LoadedCorpus load_tncc(std::istream& in, char delimiter, const std::string& origin);

/// Deterministic shuffle + 8:1:1-style split: floor(r_train*n) /
/// floor(r_val*n) / remainder.
CorpusSplits split_corpus(std::vector<Example> examples, std::vector<std::string> label_names,
                          uint64_t seed, double r_train = 0.8, double r_val = 0.1);

struct SynthSpec {
    int n_classes = 12;
    int n_per_class = 50;
    uint64_t seed = 1;
    std::vector<double> class_weights;  // empty = balanced
    int signal_tokens_per_class = 1;
    int filler_tokens = 10;
    int min_tokens = 3;
    int max_tokens = 5;

    /// Parses "12x50" / "12x50@7".
    static SynthSpec parse(const std::string& spec);
};

/// Class-separable synthetic corpus: each class owns a disjoint signal-token
/// set planted into shared random filler; every text contains at least one
/// signal token of its class and none of any other class.
std::vector<Example> synthesize_corpus(const SynthSpec& spec);

std::vector<std::string> synth_label_names(int n_classes);

/// Signal-token lookup so tests can run the planted-token oracle classifier.
std::vector<std::vector<std::string>> synth_signal_tokens(const SynthSpec& spec);

void save_tsv(const std::string& path, std::span<const Example> examples,
              std::span<const std::string> label_names, char delimiter = '\t');

struct EncodedExample {
    std::vector<int> token_ids;
    std::vector<uint8_t> pad_mask;
    int focus_pos = 0;  // mask position in prompt mode, 0 ([CLS]) otherwise
    int label = -1;
};

/// [CLS]-prefixed encoding for the classifier head.
EncodedExample encode_for_classifier(const Example& ex, const Tokenizer& tokenizer, int max_len);

/// Template-wrapped encoding for the MLM head.
EncodedExample encode_with_template(const Example& ex, const Template& tmpl,
                                    const Tokenizer& tokenizer, int max_len);

/// Deterministic per-epoch batching: reshuffles from seed + epoch, keeps the
/// last partial batch.
class BatchLoader {
public:
    BatchLoader(int n_examples, int batch_size, uint64_t seed);

    int batches_per_epoch() const;
    std::vector<std::vector<int>> epoch(int epoch_index) const;

private:
    int n_;
    int batch_size_;
    uint64_t seed_;
};

}  // namespace peftt
