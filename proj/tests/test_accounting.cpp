#include "doctest.h"
#include "peftt/accounting.hpp"
#include "peftt/adapter.hpp"
#include "peftt/rng.hpp"

using namespace peftt;

TEST_CASE("adapter_count reproduces the published totals at rank 8") {
    CHECK(adapter_count(find_catalog_entry("cino-small")->config, 8) == 258048);
    CHECK(adapter_count(find_catalog_entry("cino-base")->config, 8) == 516096);
    CHECK(adapter_count(find_catalog_entry("tibert")->config, 8) == 516096);
    CHECK(adapter_count(find_catalog_entry("tibetan-bert")->config, 8) == 516096);
    CHECK(adapter_count(find_catalog_entry("cino-large")->config, 8) == 1376256);
}

TEST_CASE("adapter_count edge cases and monotonicity") {
    EncoderConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.d_ff = 64;
    c.n_heads = 2;
    c.vocab_size = 10;
    CHECK(adapter_count(c, 0) == 0);
    CHECK(adapter_count(c, 8) == 2560);

    const int64_t base = adapter_count(c, 8);
    EncoderConfig v = c;
    v.n_layers++;
    CHECK(adapter_count(v, 8) > base);
    v = c;
    v.d_model += c.n_heads;
    CHECK(adapter_count(v, 8) > base);
    v = c;
    v.d_ff++;
    CHECK(adapter_count(v, 8) > base);
    CHECK(adapter_count(c, 9) > base);
}

TEST_CASE("formula agrees with injected-tensor enumeration") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        EncoderConfig c;
        c.n_heads = 1 + int(rng.below(3));
        c.d_model = c.n_heads * (3 + int(rng.below(6)));
        c.d_ff = 2 + int(rng.below(40));
        c.n_layers = 1 + int(rng.below(3));
        c.vocab_size = 8 + int(rng.below(20));
        c.max_len = 8;
        const int max_rank = std::min(c.d_model, c.d_ff);
        const int rank = 1 + int(rng.below(uint64_t(max_rank)));

        CAPTURE(trial);
        EncoderModel model = make_encoder(c, HeadKind::mlm, 0, 1);
        AdapterSet set = inject_adapters(model, rank, AdapterMode::parallel_lora, 2);
        REQUIRE(set.parameter_count() == adapter_count(c, rank));
    }
}

TEST_CASE("ratio_report prints the published ratio strings") {
    CHECK(ratio_report("cino-small", 8).ratio_str == "0.174666%");
    CHECK(ratio_report("cino-base", 8).ratio_str == "0.270884%");
    CHECK(ratio_report("tibert", 8).ratio_str == "0.470845%");
    CHECK(ratio_report("tibetan-bert", 8).ratio_str == "0.463499%");
    CHECK(ratio_report("cino-large", 8).ratio_str == "0.310048%");

    AccountingRow row = ratio_report("cino-small", 8);
    CHECK(row.trainable == 258048);
    CHECK(row.full == 147737868);

    CHECK_THROWS_AS(ratio_report("unknown-model", 8), std::invalid_argument);
}

TEST_CASE("account_table covers the four scenarios per model") {
    const auto rows = account_table("cino-small", 8);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].ratio_str == "1");
    CHECK(rows[0].trainable == 147737868);
    CHECK(rows[1].trainable == 147865535);
    CHECK(rows[1].ratio_str == "1.00086");
    CHECK(rows[2].trainable == 258048);
    CHECK(rows[3].trainable == 258048);
    CHECK(rows[3].ratio_str == "0.174666%");

    const auto base_rows = account_table("cino-base", 8);
    CHECK(base_rows[1].ratio_str == "1.00067");
    const auto large_rows = account_table("cino-large", 8);
    CHECK(large_rows[1].ratio_str == "1.00028");

    // Computed-versus-published discrepancies surface in the notes.
    CHECK(rows[0].notes.find("computed full count") != std::string::npos);
    CHECK(rows[0].notes.find("146885388") != std::string::npos);
}

TEST_CASE("solve_rank inverts the count formula") {
    CHECK(solve_rank(find_catalog_entry("cino-base")->config, 516096) == 8);
    CHECK(solve_rank(find_catalog_entry("tibetan-bert")->config, 516096) == 8);
    CHECK(solve_rank(find_catalog_entry("cino-small")->config, 258048) == 8);
    CHECK(!solve_rank(find_catalog_entry("cino-small")->config, 1).has_value());
    CHECK(solve_rank(find_catalog_entry("cino-small")->config, 0) == 0);

    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        EncoderConfig c;
        c.n_heads = 1;
        c.d_model = 8 + int(rng.below(64));
        c.d_ff = 8 + int(rng.below(128));
        c.n_layers = 1 + int(rng.below(24));
        c.vocab_size = 10;
        const int rank = 1 + int(rng.below(8));
        CAPTURE(trial);
        REQUIRE(solve_rank(c, adapter_count(c, rank)) == rank);
    }
}

TEST_CASE("format_ratio uses six significant digits") {
    CHECK(format_ratio(1.0) == "1");
    CHECK(format_ratio(258048.0 / 147737868.0) == "0.174666%");
    CHECK(format_ratio(147865535.0 / 147737868.0) == "1.00086");
}

TEST_CASE("render_table includes counts and ratios") {
    const std::string table = render_table(account_table("cino-small", 8));
    CHECK(table.find("258048") != std::string::npos);
    CHECK(table.find("0.174666%") != std::string::npos);
    CHECK(table.find("Training Parameters Ratio") != std::string::npos);
}

TEST_CASE("custom config accounting computes its own full count") {
    EncoderConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.d_ff = 64;
    c.n_heads = 2;
    c.vocab_size = 100;
    c.max_len = 16;
    AccountingRow row = ratio_report_custom("tiny", c, 8, HeadKind::classifier, 12);
    CHECK(row.trainable == 2560);
    CHECK(row.full == count_parameters(c, HeadKind::classifier, 12));
    CHECK(row.ratio == doctest::Approx(2560.0 / double(row.full)));
}
