#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "peftt/tensor.hpp"

namespace peftt {

struct AdapterSet;

struct EncoderConfig {
    int n_layers = 2;
    int d_model = 32;
    int d_ff = 64;
    int n_heads = 2;
    int vocab_size = 0;
    int max_len = 108;
    bool tie_mlm_head = false;

    void validate() const;
};

enum class HeadKind { mlm, classifier };

struct LayerWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections, [d,d] + [d]
    Tensor w1, b1;                          // feed-forward in, [d_ff,d] + [d_ff]
    Tensor w2, b2;                          // feed-forward out, [d,d_ff] + [d]
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

/// BERT-style masked-language-model encoder. Weight matrices are stored
/// [out x in]; forward uses x * W^T + b.
struct EncoderModel {
    EncoderConfig config;
    HeadKind head = HeadKind::mlm;
    int n_classes = 0;

    Tensor tok_emb;  // [vocab, d]
    Tensor pos_emb;  // [max_len, d]
    std::vector<LayerWeights> layers;

    // MLM head: transform + layer-norm + projection to vocab.
    Tensor mlm_w, mlm_b, mlm_ln_g, mlm_ln_b;
    Tensor mlm_out_w;  // [vocab, d]; undefined when tied to tok_emb
    Tensor mlm_out_b;  // [vocab]

    // Classifier head over the first position.
    Tensor cls_w, cls_b;  // [n_classes, d] + [n_classes]

    bool adapters_injected = false;

    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> parameters() const;
    int64_t parameter_count() const;
    void set_requires_grad_all(bool v);
};

static constexpr float kLayerNormEps = 1e-12f;

EncoderModel make_encoder(const EncoderConfig& config, HeadKind head, int n_classes,
                          uint64_t seed);

/// Closed-form scalar-parameter count for a config + head choice.
int64_t count_parameters(const EncoderConfig& config, HeadKind head, int n_classes = 0);

/// Per-position vocabulary logits, [seq_len x vocab]. Pad positions attend
/// nowhere and their logits are meaningless downstream.
Tensor forward_mlm(const EncoderModel& model, std::span<const int> token_ids,
                   std::span<const uint8_t> pad_mask, const AdapterSet* adapters = nullptr);

/// Head logits at selected positions only ([k x vocab] for the MLM head,
/// [k x n_classes] for the classifier head). Same encoder trunk as
/// forward_mlm; skips the head projection at positions nobody reads.
Tensor forward_logits_at(const EncoderModel& model, std::span<const int> token_ids,
                         std::span<const uint8_t> pad_mask, std::span<const int> positions,
                         const AdapterSet* adapters = nullptr);

struct CatalogEntry {
    std::string key;
    std::string family;  // "cino" or "bert"
    EncoderConfig config;
    int64_t published_full_count;    // reported total for full fine-tuning
    int64_t published_prompt_count;  // reported total for prompt-tuning
    int64_t ratio_basis_count;       // denominator consistent with the reported ratios
    std::string notes;
};

/// The five published Tibetan PLM architectures used for parameter accounting.
/// Hidden sizes are inferred from the adapter counts (see notes per entry).
const std::vector<CatalogEntry>& model_catalog();

const CatalogEntry* find_catalog_entry(const std::string& key);

}  // namespace peftt
