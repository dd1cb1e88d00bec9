#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "peftt/encoder.hpp"

namespace peftt {

/// NFC-normalize, collapse whitespace runs to single spaces, strip ends,
/// drop control characters. Idempotent.
std::string preprocess_symbols(std::string_view text);

/// Whitespace split, then syllable split on the Tibetan tsek U+0F0B (which
/// stays attached to the preceding syllable). Other scripts split on
/// whitespace only.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;
    static constexpr int mask_id = 2;
    static constexpr int cls_id = 3;
    static constexpr int sep_id = 4;
    static constexpr int n_special = 5;

    Vocabulary();

    int size() const { return static_cast<int>(tokens_.size()); }
    bool contains(std::string_view token) const;
    int id_of(std::string_view token) const;  // unk_id when absent
    const std::string& token(int id) const;

    /// Appends tokens at the end; ids are consecutive from the current size.
    /// Rejects duplicates and empty strings by name.
    std::vector<int> add_tokens(std::span<const std::string> new_tokens);

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    static const std::string& special_token(int id);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Vocabulary + segmentation rules.
class Tokenizer {
public:
    explicit Tokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) {}

    /// Frequency-ranked vocabulary over the preprocessed texts (ties broken
    /// by first appearance), min count 1.
    static Tokenizer build(std::span<const std::string> texts);

    std::vector<int> encode(std::string_view text) const;
    std::vector<int> encode_tokens(std::span<const std::string> tokens) const;
    std::string decode(std::span<const int> ids) const;

    Vocabulary& vocab() { return vocab_; }
    const Vocabulary& vocab() const { return vocab_; }

private:
    Vocabulary vocab_;
};

/// Grows the token embedding table (and the untied MLM output projection and
/// bias) to new_vocab_size rows. Existing rows are preserved bitwise; new
/// rows are drawn normal(0, 0.02) from the seed. Shrinking is an error.
void resize_embeddings(EncoderModel& model, int new_vocab_size, uint64_t seed);

}  // namespace peftt
