#include <cmath>

#include "doctest.h"
#include "peftt/encoder.hpp"
#include "peftt/tensor.hpp"

using namespace peftt;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig c;
    c.n_layers = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.n_heads = 2;
    c.vocab_size = 30;
    c.max_len = 12;
    return c;
}

}  // namespace

TEST_CASE("forward_mlm output shape is seq_len x vocab at the published sizes") {
    // Zero-layer model keeps the 30005-row vocabulary affordable.
    EncoderConfig cfg;
    cfg.n_layers = 0;
    cfg.d_model = 8;
    cfg.d_ff = 8;
    cfg.n_heads = 1;
    cfg.vocab_size = 30005;
    cfg.max_len = 108;
    EncoderModel model = make_encoder(cfg, HeadKind::mlm, 0, 1);

    std::vector<int> ids(108, 7);
    std::vector<uint8_t> pad(108, 1);
    Tensor logits = forward_mlm(model, ids, pad);
    CHECK(logits.rows() == 108);
    CHECK(logits.cols() == 30005);
}

TEST_CASE("zero-layer forward is the MLM head over embeddings") {
    EncoderConfig cfg = tiny_config();
    cfg.n_layers = 0;
    EncoderModel model = make_encoder(cfg, HeadKind::mlm, 0, 5);

    std::vector<int> ids = {3, 7, 11, 2};
    std::vector<uint8_t> pad(4, 1);
    Tensor got = forward_mlm(model, ids, pad);

    Tensor x = add(embedding_lookup(model.tok_emb, ids), slice_rows(model.pos_emb, 0, 4));
    Tensor h = gelu(add_rowvec(matmul_nt(x, model.mlm_w), model.mlm_b));
    h = layer_norm(h, model.mlm_ln_g, model.mlm_ln_b, kLayerNormEps);
    Tensor want = add_rowvec(matmul_nt(h, model.mlm_out_w), model.mlm_out_b);

    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got.data()[i] == want.data()[i]);
}

TEST_CASE("pad positions cannot influence non-pad logits") {
    EncoderModel model = make_encoder(tiny_config(), HeadKind::mlm, 0, 9);
    std::vector<int> ids_a = {5, 6, 7, 0, 0, 8};
    std::vector<int> ids_b = {5, 6, 7, 21, 13, 8};  // junk at pad positions
    std::vector<uint8_t> pad = {1, 1, 1, 0, 0, 1};

    Tensor la = forward_mlm(model, ids_a, pad);
    Tensor lb = forward_mlm(model, ids_b, pad);
    for (int i = 0; i < la.rows(); ++i) {
        if (!pad[static_cast<size_t>(i)]) continue;
        for (int j = 0; j < la.cols(); ++j) {
            REQUIRE(la.data()[i * la.cols() + j] == lb.data()[i * la.cols() + j]);
        }
    }
}

TEST_CASE("forward validates inputs") {
    EncoderModel model = make_encoder(tiny_config(), HeadKind::mlm, 0, 2);
    std::vector<uint8_t> pad(4, 1);
    CHECK_THROWS_AS(forward_mlm(model, std::vector<int>{1, 2, 99, 3}, pad), std::out_of_range);
    std::vector<int> long_ids(13, 1);
    std::vector<uint8_t> long_pad(13, 1);
    CHECK_THROWS_AS(forward_mlm(model, long_ids, long_pad), std::invalid_argument);
    CHECK_THROWS_AS(forward_mlm(model, std::vector<int>{1, 2}, pad), std::invalid_argument);
}

TEST_CASE("config validation") {
    EncoderConfig c = tiny_config();
    c.n_heads = 3;  // 16 % 3 != 0
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.vocab_size = 4;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.max_len = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("count_parameters equals construction enumeration") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        EncoderConfig c;
        c.n_layers = static_cast<int>(rng.below(4));  // includes zero-layer configs
        c.n_heads = 1 + static_cast<int>(rng.below(3));
        c.d_model = c.n_heads * (2 + static_cast<int>(rng.below(5)));
        c.d_ff = 1 + static_cast<int>(rng.below(40));
        c.vocab_size = 6 + static_cast<int>(rng.below(50));
        c.max_len = 4 + static_cast<int>(rng.below(12));
        c.tie_mlm_head = rng.below(2) == 0;
        const bool classifier = rng.below(2) == 0;
        const int n_classes = 2 + static_cast<int>(rng.below(10));

        CAPTURE(trial);
        if (classifier) {
            EncoderModel m = make_encoder(c, HeadKind::classifier, n_classes, 1);
            CHECK(count_parameters(c, HeadKind::classifier, n_classes) == m.parameter_count());
        } else {
            EncoderModel m = make_encoder(c, HeadKind::mlm, 0, 1);
            CHECK(count_parameters(c, HeadKind::mlm) == m.parameter_count());
        }
    }
}

TEST_CASE("layer count enters the total linearly") {
    EncoderConfig c = tiny_config();
    c.n_layers = 3;
    const int64_t l3 = count_parameters(c, HeadKind::mlm);
    c.n_layers = 6;
    const int64_t l6 = count_parameters(c, HeadKind::mlm);
    c.n_layers = 0;
    const int64_t l0 = count_parameters(c, HeadKind::mlm);
    CHECK(l6 - l3 == l3 - l0);
}

TEST_CASE("tying the MLM head changes the count by exactly the projection") {
    EncoderConfig c = tiny_config();
    const int64_t untied = count_parameters(c, HeadKind::mlm);
    c.tie_mlm_head = true;
    const int64_t tied = count_parameters(c, HeadKind::mlm);
    CHECK(untied - tied == int64_t(c.vocab_size) * c.d_model);
}

TEST_CASE("model catalog matches the published architectures") {
    const auto& catalog = model_catalog();
    REQUIRE(catalog.size() == 5);

    const CatalogEntry* large = find_catalog_entry("cino-large");
    REQUIRE(large != nullptr);
    CHECK(large->config.n_layers == 24);
    CHECK(large->config.d_model == 1024);

    const CatalogEntry* tibert = find_catalog_entry("tibert");
    REQUIRE(tibert != nullptr);
    CHECK(tibert->config.vocab_size == 30005);
    CHECK(tibert->config.n_layers == 12);

    const CatalogEntry* small = find_catalog_entry("cino-small");
    REQUIRE(small != nullptr);
    CHECK(small->config.d_model == 768);
    CHECK(small->config.n_layers == 6);
    CHECK(small->config.vocab_size == 135359);

    const CatalogEntry* tbert = find_catalog_entry("tibetan-bert");
    REQUIRE(tbert != nullptr);
    CHECK(tbert->config.vocab_size == 32267);
    // The published-count inconsistency is surfaced, not silently fixed.
    CHECK(tbert->published_full_count == 11347724);
    CHECK(tbert->ratio_basis_count == 111347724);
    CHECK(tbert->notes.find("inconsistent") != std::string::npos);

    CHECK(find_catalog_entry("nope") == nullptr);
}
