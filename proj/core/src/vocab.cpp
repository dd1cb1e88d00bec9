#include "peftt/vocab.hpp"

#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace peftt {

namespace {

std::string nfc_normalize(std::string_view text) {
    UErrorCode status = U_ZERO_ERROR;
    const UNormalizer2* nfc = unorm2_getNFCInstance(&status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("unicode: NFC normalizer unavailable");
    }

    // UTF-8 -> UTF-16
    std::vector<UChar> u16(text.size() + 1);
    int32_t u16_len = 0;
    status = U_ZERO_ERROR;
    u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16_len, text.data(),
                  static_cast<int32_t>(text.size()), &status);
    if (status == U_BUFFER_OVERFLOW_ERROR || status == U_STRING_NOT_TERMINATED_WARNING) {
        u16.resize(static_cast<size_t>(u16_len) + 1);
        status = U_ZERO_ERROR;
        u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16_len, text.data(),
                      static_cast<int32_t>(text.size()), &status);
    }
    if (U_FAILURE(status)) {
        throw std::invalid_argument("preprocess: input is not valid UTF-8");
    }

    std::vector<UChar> norm(static_cast<size_t>(u16_len) * 3 + 32);
    status = U_ZERO_ERROR;
    int32_t norm_len = unorm2_normalize(nfc, u16.data(), u16_len, norm.data(),
                                        static_cast<int32_t>(norm.size()), &status);
    if (status == U_BUFFER_OVERFLOW_ERROR) {
        norm.resize(static_cast<size_t>(norm_len) + 1);
        status = U_ZERO_ERROR;
        norm_len = unorm2_normalize(nfc, u16.data(), u16_len, norm.data(),
                                    static_cast<int32_t>(norm.size()), &status);
    }
    if (U_FAILURE(status)) {
        throw std::runtime_error("unicode: NFC normalization failed");
    }

    // UTF-16 -> UTF-8
    std::string out(static_cast<size_t>(norm_len) * 3 + 32, '\0');
    int32_t out_len = 0;
    status = U_ZERO_ERROR;
    u_strToUTF8(out.data(), static_cast<int32_t>(out.size()), &out_len, norm.data(), norm_len,
                &status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("unicode: UTF-8 conversion failed");
    }
    out.resize(static_cast<size_t>(out_len));
    return out;
}

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_control(unsigned char c) { return c < 0x20 || c == 0x7f; }

// U+0F0B in UTF-8.
constexpr char kTsek[] = "\xe0\xbc\x8b";

}  // namespace

std::string preprocess_symbols(std::string_view text) {
    const std::string nfc = nfc_normalize(text);
    std::string out;
    out.reserve(nfc.size());
    bool pending_space = false;
    for (unsigned char c : nfc) {
        if (is_ascii_space(c)) {
            pending_space = true;
            continue;
        }
        if (is_control(c)) continue;
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        size_t j = i;
        while (j < text.size() && !is_ascii_space(static_cast<unsigned char>(text[j]))) ++j;
        const std::string_view chunk = text.substr(i, j - i);
        // Split after each tsek, keeping it attached to its syllable.
        size_t start = 0;
        size_t pos = 0;
        while ((pos = chunk.find(kTsek, pos)) != std::string_view::npos) {
            pos += sizeof(kTsek) - 1;
            out.emplace_back(chunk.substr(start, pos - start));
            start = pos;
        }
        if (start < chunk.size()) out.emplace_back(chunk.substr(start));
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary() {
    static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[MASK]", "[CLS]",
                                                      "[SEP]"};
    for (const std::string& s : specials) {
        index_.emplace(s, static_cast<int>(tokens_.size()));
        tokens_.push_back(s);
    }
}

const std::string& Vocabulary::special_token(int id) {
    static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[MASK]", "[CLS]",
                                                      "[SEP]"};
    return specials.at(static_cast<size_t>(id));
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.find(std::string(token)) != index_.end();
}

int Vocabulary::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(size()) + ")");
    }
    return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::add_tokens(std::span<const std::string> new_tokens) {
    // Validate the whole batch before mutating.
    for (const std::string& t : new_tokens) {
        if (t.empty()) throw std::invalid_argument("add_tokens: empty token");
        if (contains(t)) {
            throw std::invalid_argument("add_tokens: token already present: '" + t + "'");
        }
    }
    std::vector<int> ids;
    ids.reserve(new_tokens.size());
    for (const std::string& t : new_tokens) {
        const int id = size();
        index_.emplace(t, id);
        tokens_.push_back(t);
        ids.push_back(id);
    }
    return ids;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("vocabulary: cannot write " + path);
    for (int i = n_special; i < size(); ++i) f << tokens_[static_cast<size_t>(i)] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("vocabulary: cannot read " + path);
    Vocabulary v;
    std::string line;
    std::vector<std::string> toks;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        toks.push_back(line);
    }
    v.add_tokens(toks);
    return v;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts) {
    std::unordered_map<std::string, int64_t> counts;
    std::unordered_map<std::string, int64_t> first_seen;
    int64_t serial = 0;
    for (const std::string& text : texts) {
        for (std::string& tok : tokenize(preprocess_symbols(text))) {
            auto [it, fresh] = counts.try_emplace(tok, 0);
            it->second++;
            if (fresh) first_seen.emplace(tok, serial);
            ++serial;
        }
    }
    std::vector<std::string> ordered;
    ordered.reserve(counts.size());
    for (auto& [tok, n] : counts) ordered.push_back(tok);
    std::sort(ordered.begin(), ordered.end(), [&](const std::string& a, const std::string& b) {
        const int64_t ca = counts[a], cb = counts[b];
        if (ca != cb) return ca > cb;
        return first_seen[a] < first_seen[b];
    });
    Vocabulary v;
    v.add_tokens(ordered);
    return Tokenizer(std::move(v));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> out;
    for (const std::string& tok : tokenize(text)) out.push_back(vocab_.id_of(tok));
    return out;
}

std::vector<int> Tokenizer::encode_tokens(std::span<const std::string> tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const std::string& tok : tokens) out.push_back(vocab_.id_of(tok));
    return out;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab_.token(ids[i]);
    }
    return out;
}

namespace {

// Grows a row-major [rows x cols] table, preserving old rows bitwise.
Tensor grow_rows(const Tensor& old, int new_rows, int cols, Rng& rng) {
    std::vector<float> data(static_cast<size_t>(new_rows) * cols);
    std::copy(old.data().begin(), old.data().end(), data.begin());
    for (size_t i = old.data().size(); i < data.size(); ++i) data[i] = rng.normal(0.0f, 0.02f);
    Tensor t = Tensor::from({new_rows, cols}, std::move(data), old.requires_grad());
    t.set_name(old.name());
    return t;
}

}  // namespace

void resize_embeddings(EncoderModel& model, int new_vocab_size, uint64_t seed) {
    const int old_size = model.config.vocab_size;
    if (new_vocab_size < old_size) {
        throw std::invalid_argument("resize_embeddings: cannot shrink vocabulary from " +
                                    std::to_string(old_size) + " to " +
                                    std::to_string(new_vocab_size));
    }
    if (new_vocab_size == old_size) return;

    Rng rng(seed);
    const int d = model.config.d_model;
    model.tok_emb = grow_rows(model.tok_emb, new_vocab_size, d, rng);
    if (model.head == HeadKind::mlm) {
        if (!model.config.tie_mlm_head) {
            model.mlm_out_w = grow_rows(model.mlm_out_w, new_vocab_size, d, rng);
        }
        std::vector<float> bias(static_cast<size_t>(new_vocab_size), 0.0f);
        std::copy(model.mlm_out_b.data().begin(), model.mlm_out_b.data().end(), bias.begin());
        Tensor b = Tensor::from({new_vocab_size}, std::move(bias),
                                model.mlm_out_b.requires_grad());
        b.set_name(model.mlm_out_b.name());
        model.mlm_out_b = b;
    }
    model.config.vocab_size = new_vocab_size;
}

}  // namespace peftt
