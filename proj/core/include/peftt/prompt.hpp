#pragma once

#include <string>
#include <vector>

#include "peftt/tensor.hpp"
#include "peftt/vocab.hpp"

namespace peftt {

/// Hard template with one {mask} slot and one {text} slot, e.g.
/// "News Classification: {mask} {text}". Template text survives truncation;
/// only the input text is ever cut.
struct Template {
    std::string prefix;  // before {mask}
    std::string middle;  // between {mask} and {text}
    std::string suffix;  // after {text}

    static Template parse(const std::string& spec);
    static Template load(const std::string& path);

    std::string render(const std::string& text, const std::string& mask_token = "[MASK]") const;
};

/// Ordered label -> label-word mapping. Scores a label by mean-pooling the
/// mask-position logits of its words (multi-token words pool first).
struct Verbalizer {
    struct Entry {
        std::string label_name;
        std::vector<std::string> words;
        std::vector<std::vector<int>> word_token_ids;  // filled by bind()
    };
    std::vector<Entry> entries;

    int n_classes() const { return static_cast<int>(entries.size()); }

    /// Parses "label<TAB>word1,word2,..." lines; ids are left unresolved.
    static Verbalizer parse(const std::string& file_text);
    static Verbalizer load(const std::string& path);

    /// Reorders entries to match label_names; every label must be covered.
    void align_to(const std::vector<std::string>& label_names);

    /// Resolves token ids: an existing single token wins, else a fully
    /// in-vocabulary segmentation, else (when add_missing) the whole word is
    /// added as one new token. Returns the ids of newly added tokens.
    std::vector<int> bind(Vocabulary& vocab, bool add_missing);

    /// Flattened per-class id groups for logit pooling.
    std::vector<std::vector<int>> label_word_ids() const;

    void save(const std::string& path) const;
};

struct WrappedInput {
    std::vector<int> token_ids;
    int mask_pos = -1;
    std::vector<uint8_t> pad_mask;  // 1 = real token
    int label = -1;
};

/// tokenize(prefix) ++ [MASK] ++ tokenize(middle) ++ tokenize(text)
/// ++ tokenize(suffix), with the input text truncated from its tail so the
/// whole sequence fits max_len. Throws if the template alone does not fit.
WrappedInput wrap(const Template& tmpl, const std::string& text, const Tokenizer& tokenizer,
                  int max_len);

/// Class scores from mask-position vocabulary logits: mean over each label's
/// word ids (mean over a word's tokens first, then over its word list).
Tensor project_verbalizer(const Tensor& vocab_logits, const Verbalizer& verbalizer);

/// Argmax; ties break toward the lowest label index.
int classify(const Tensor& scores);
int classify(std::span<const float> scores);

}  // namespace peftt
