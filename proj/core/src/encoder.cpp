#include "peftt/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "peftt/adapter.hpp"

namespace peftt {

namespace {

constexpr float kAttnMask = -1e9f;

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul_nt(x, w);
    return b.defined() ? add_rowvec(y, b) : y;
}

Tensor project_with_adapter(const Tensor& x, const Tensor& w, const Tensor& b,
                            const AdapterSet* adapters, int layer, AdapterSlot slot) {
    if (!adapters) return linear(x, w, b);
    const LoraPair& pair = adapters->at(layer, slot);
    if (adapters->mode == AdapterMode::parallel_lora) {
        return lora_forward(x, w, b, pair);
    }
    return sequential_adapter_forward(x, w, b, pair);
}

// Shared encoder trunk: embeddings + n_layers post-norm transformer blocks.
Tensor encode_trunk(const EncoderModel& model, std::span<const int> token_ids,
                    std::span<const uint8_t> pad_mask, const AdapterSet* adapters) {
    const EncoderConfig& cfg = model.config;
    const int t = static_cast<int>(token_ids.size());
    if (t == 0) throw std::invalid_argument("forward: empty token sequence");
    if (t > cfg.max_len) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(t) +
                                    " exceeds max_len " + std::to_string(cfg.max_len));
    }
    if (static_cast<int>(pad_mask.size()) != t) {
        throw std::invalid_argument("forward: pad mask length " +
                                    std::to_string(pad_mask.size()) +
                                    " does not match sequence length " + std::to_string(t));
    }
    for (int id : token_ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::out_of_range("forward: token id " + std::to_string(id) +
                                    " out of range [0, " + std::to_string(cfg.vocab_size) + ")");
        }
    }

    Tensor x = add(embedding_lookup(model.tok_emb, {token_ids.begin(), token_ids.end()}),
                   slice_rows(model.pos_emb, 0, t));

    // Pad keys are masked out of attention for every query.
    std::vector<float> bias(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) bias[i] = pad_mask[i] ? 0.0f : kAttnMask;
    Tensor key_bias = Tensor::from({1, t}, std::move(bias));

    const int dk = cfg.d_model / cfg.n_heads;
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = model.layers[static_cast<size_t>(l)];
        Tensor q = linear(x, lw.wq, lw.bq);
        Tensor k = linear(x, lw.wk, lw.bk);
        Tensor v = linear(x, lw.wv, lw.bv);

        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int h = 0; h < cfg.n_heads; ++h) {
            Tensor qh = slice_cols(q, h * dk, dk);
            Tensor kh = slice_cols(k, h * dk, dk);
            Tensor vh = slice_cols(v, h * dk, dk);
            Tensor scores = add_rowvec(scale(matmul_nt(qh, kh), inv_sqrt_dk), key_bias);
            heads.push_back(matmul(softmax_rows(scores), vh));
        }
        Tensor attn = project_with_adapter(concat_cols(heads), lw.wo, lw.bo, adapters, l,
                                           AdapterSlot::attention_output);
        x = layer_norm(add(x, attn), lw.ln1_g, lw.ln1_b, kLayerNormEps);

        Tensor inner = gelu(linear(x, lw.w1, lw.b1));
        Tensor ffn = project_with_adapter(inner, lw.w2, lw.b2, adapters, l,
                                          AdapterSlot::ffn_output);
        x = layer_norm(add(x, ffn), lw.ln2_g, lw.ln2_b, kLayerNormEps);
    }
    return x;
}

Tensor apply_mlm_head(const EncoderModel& model, const Tensor& hidden) {
    Tensor h = gelu(linear(hidden, model.mlm_w, model.mlm_b));
    h = layer_norm(h, model.mlm_ln_g, model.mlm_ln_b, kLayerNormEps);
    Tensor proj = model.config.tie_mlm_head ? matmul_nt(h, model.tok_emb)
                                            : matmul_nt(h, model.mlm_out_w);
    return add_rowvec(proj, model.mlm_out_b);
}

Tensor apply_head(const EncoderModel& model, const Tensor& hidden) {
    if (model.head == HeadKind::mlm) return apply_mlm_head(model, hidden);
    return linear(hidden, model.cls_w, model.cls_b);
}

}  // namespace

void EncoderConfig::validate() const {
    if (n_layers < 0) throw std::invalid_argument("config: n_layers must be >= 0");
    if (d_model < 1 || d_ff < 1 || n_heads < 1) {
        throw std::invalid_argument("config: d_model, d_ff and n_heads must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("config: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (max_len < 1) throw std::invalid_argument("config: max_len must be >= 1");
    if (vocab_size < 5) {
        throw std::invalid_argument("config: vocab_size " + std::to_string(vocab_size) +
                                    " smaller than the special-token set");
    }
}

EncoderModel make_encoder(const EncoderConfig& config, HeadKind head, int n_classes,
                          uint64_t seed) {
    config.validate();
    if (head == HeadKind::classifier && n_classes < 2) {
        throw std::invalid_argument("make_encoder: classifier head needs n_classes >= 2");
    }
    Rng rng(seed);
    const int d = config.d_model, ff = config.d_ff, v = config.vocab_size;
    auto w = [&rng](Shape shape) { return Tensor::randn(std::move(shape), 0.0f, 0.02f, rng, true); };

    EncoderModel m;
    m.config = config;
    m.head = head;
    m.n_classes = head == HeadKind::classifier ? n_classes : 0;

    m.tok_emb = w({v, d});
    m.pos_emb = w({config.max_len, d});
    m.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& lw : m.layers) {
        lw.wq = w({d, d});
        lw.bq = Tensor::zeros({d}, true);
        lw.wk = w({d, d});
        lw.bk = Tensor::zeros({d}, true);
        lw.wv = w({d, d});
        lw.bv = Tensor::zeros({d}, true);
        lw.wo = w({d, d});
        lw.bo = Tensor::zeros({d}, true);
        lw.w1 = w({ff, d});
        lw.b1 = Tensor::zeros({ff}, true);
        lw.w2 = w({d, ff});
        lw.b2 = Tensor::zeros({d}, true);
        lw.ln1_g = Tensor::full({d}, 1.0f, true);
        lw.ln1_b = Tensor::zeros({d}, true);
        lw.ln2_g = Tensor::full({d}, 1.0f, true);
        lw.ln2_b = Tensor::zeros({d}, true);
    }
    if (head == HeadKind::mlm) {
        m.mlm_w = w({d, d});
        m.mlm_b = Tensor::zeros({d}, true);
        m.mlm_ln_g = Tensor::full({d}, 1.0f, true);
        m.mlm_ln_b = Tensor::zeros({d}, true);
        if (!config.tie_mlm_head) m.mlm_out_w = w({v, d});
        m.mlm_out_b = Tensor::zeros({v}, true);
    } else {
        m.cls_w = w({n_classes, d});
        m.cls_b = Tensor::zeros({n_classes}, true);
    }
    for (auto& [name, tensor] : m.named_tensors()) {
        const_cast<Tensor&>(tensor).set_name(name);
    }
    return m;
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        const LayerWeights& lw = layers[i];
        out.emplace_back(p + "wq", lw.wq);
        out.emplace_back(p + "bq", lw.bq);
        out.emplace_back(p + "wk", lw.wk);
        out.emplace_back(p + "bk", lw.bk);
        out.emplace_back(p + "wv", lw.wv);
        out.emplace_back(p + "bv", lw.bv);
        out.emplace_back(p + "wo", lw.wo);
        out.emplace_back(p + "bo", lw.bo);
        out.emplace_back(p + "w1", lw.w1);
        out.emplace_back(p + "b1", lw.b1);
        out.emplace_back(p + "w2", lw.w2);
        out.emplace_back(p + "b2", lw.b2);
        out.emplace_back(p + "ln1_g", lw.ln1_g);
        out.emplace_back(p + "ln1_b", lw.ln1_b);
        out.emplace_back(p + "ln2_g", lw.ln2_g);
        out.emplace_back(p + "ln2_b", lw.ln2_b);
    }
    if (head == HeadKind::mlm) {
        out.emplace_back("mlm.w", mlm_w);
        out.emplace_back("mlm.b", mlm_b);
        out.emplace_back("mlm.ln_g", mlm_ln_g);
        out.emplace_back("mlm.ln_b", mlm_ln_b);
        if (mlm_out_w.defined()) out.emplace_back("mlm.out_w", mlm_out_w);
        out.emplace_back("mlm.out_b", mlm_out_b);
    } else {
        out.emplace_back("cls.w", cls_w);
        out.emplace_back("cls.b", cls_b);
    }
    return out;
}

std::vector<Tensor> EncoderModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

int64_t EncoderModel::parameter_count() const {
    int64_t n = 0;
    for (auto& [name, t] : named_tensors()) n += t.numel();
    return n;
}

void EncoderModel::set_requires_grad_all(bool v) {
    for (auto& [name, t] : named_tensors()) const_cast<Tensor&>(t).set_requires_grad(v);
}

int64_t count_parameters(const EncoderConfig& config, HeadKind head, int n_classes) {
    config.validate();
    const int64_t d = config.d_model, ff = config.d_ff, v = config.vocab_size;
    const int64_t embeddings = v * d + int64_t(config.max_len) * d;
    const int64_t per_layer = 4 * (d * d + d)   // attention projections + biases
                              + (ff * d + ff)   // feed-forward in
                              + (d * ff + d)    // feed-forward out
                              + 4 * d;          // two layer-norms
    const int64_t layers = int64_t(config.n_layers) * per_layer;
    int64_t head_count = 0;
    if (head == HeadKind::mlm) {
        head_count = (d * d + d) + 2 * d + (config.tie_mlm_head ? v : v * d + v);
    } else {
        if (n_classes < 2) {
            throw std::invalid_argument("count_parameters: classifier head needs n_classes >= 2");
        }
        head_count = d * int64_t(n_classes) + n_classes;
    }
    return embeddings + layers + head_count;
}

Tensor forward_mlm(const EncoderModel& model, std::span<const int> token_ids,
                   std::span<const uint8_t> pad_mask, const AdapterSet* adapters) {
    if (model.head != HeadKind::mlm) {
        throw std::logic_error("forward_mlm: model was built without an MLM head");
    }
    return apply_mlm_head(model, encode_trunk(model, token_ids, pad_mask, adapters));
}

Tensor forward_logits_at(const EncoderModel& model, std::span<const int> token_ids,
                         std::span<const uint8_t> pad_mask, std::span<const int> positions,
                         const AdapterSet* adapters) {
    if (positions.empty()) throw std::invalid_argument("forward_logits_at: no positions");
    Tensor x = encode_trunk(model, token_ids, pad_mask, adapters);
    std::vector<Tensor> rows;
    rows.reserve(positions.size());
    for (int p : positions) {
        if (p < 0 || p >= x.rows()) {
            throw std::out_of_range("forward_logits_at: position " + std::to_string(p) +
                                    " out of range [0, " + std::to_string(x.rows()) + ")");
        }
        rows.push_back(slice_rows(x, p, 1));
    }
    return apply_head(model, rows.size() == 1 ? rows[0] : concat_rows(rows));
}

const std::vector<CatalogEntry>& model_catalog() {
    static const std::vector<CatalogEntry> catalog = [] {
        const std::string inferred =
            "hidden sizes inferred from the reported adapter counts (d_ff = 4*d); "
            "n_heads and max_len are the standard values for this size";
        std::vector<CatalogEntry> c;
        c.push_back({"cino-small", "cino",
                     {6, 768, 3072, 12, 135359, 512, false},
                     147737868, 147865535, 147737868, inferred});
        c.push_back({"cino-base", "cino",
                     {12, 768, 3072, 12, 135359, 512, false},
                     190523148, 190650815, 190523148, inferred});
        c.push_back({"cino-large", "cino",
                     {24, 1024, 4096, 16, 135359, 512, false},
                     443884556, 444009663, 443884556, inferred});
        c.push_back({"tibert", "bert",
                     {12, 768, 3072, 12, 30005, 512, false},
                     109610508, 109632821, 109610508, inferred});
        c.push_back({"tibetan-bert", "bert",
                     {12, 768, 3072, 12, 32267, 512, false},
                     11347724, 11372299, 111347724,
                     inferred + "; published full count 11347724 is inconsistent with the "
                                "published adapter ratio 0.463499% (which implies 111347724, "
                                "a BERT-base-sized total); the ratio uses the implied value"});
        return c;
    }();
    return catalog;
}

const CatalogEntry* find_catalog_entry(const std::string& key) {
    for (const CatalogEntry& e : model_catalog()) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

}  // namespace peftt
