#include "peftt/scenarios.hpp"

#include <algorithm>
#include <array>

namespace peftt {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

struct ModelPrefix {
    const char* prefix;
    const char* key;
};

// Longest prefixes first: TB before T.
constexpr std::array<ModelPrefix, 5> kModels = {{
    {"CS", "cino-small"},
    {"CB", "cino-base"},
    {"CL", "cino-large"},
    {"TB", "tibetan-bert"},
    {"T", "tibert"},
}};

std::optional<FineTuneMode> suffix_mode(std::string_view s) {
    if (s == "W") return FineTuneMode::full;
    if (s == "P") return FineTuneMode::prompt;
    if (s == "A") return FineTuneMode::adapter;
    if (s == "AP") return FineTuneMode::adapter_prompt;
    return std::nullopt;
}

}  // namespace

std::optional<ScenarioSpec> parse_scenario_abbreviation(std::string_view text) {
    std::string abbrev = upper(text);
    bool desk = false;
    const std::string desk_suffix = "-DESK";
    if (abbrev.size() > desk_suffix.size() &&
        abbrev.compare(abbrev.size() - desk_suffix.size(), desk_suffix.size(), desk_suffix) ==
            0) {
        desk = true;
        abbrev.resize(abbrev.size() - desk_suffix.size());
    }
    for (const ModelPrefix& m : kModels) {
        const std::string_view prefix = m.prefix;
        if (abbrev.size() <= prefix.size() || abbrev.compare(0, prefix.size(), prefix) != 0) {
            continue;
        }
        const auto mode = suffix_mode(std::string_view(abbrev).substr(prefix.size()));
        if (!mode) continue;
        ScenarioSpec spec;
        spec.abbreviation = abbrev + (desk ? "-desk" : "");
        spec.model_key = m.key;
        spec.mode = *mode;
        spec.desk = desk;
        return spec;
    }
    return std::nullopt;
}

EncoderConfig desk_config() {
    EncoderConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.d_ff = 64;
    c.n_heads = 2;
    c.vocab_size = 0;  // grown from the corpus
    c.max_len = 108;
    return c;
}

Scenario make_scenario(const ScenarioSpec& spec) {
    const CatalogEntry* entry = find_catalog_entry(spec.model_key);
    if (!entry) {
        throw std::invalid_argument("scenario: unknown model key '" + spec.model_key + "'");
    }
    // cino-large full/prompt runs have no published baseline and are far
    // beyond a desk machine; only their -desk analogs are runnable.
    if (!spec.desk && spec.model_key == "cino-large" && !mode_uses_adapters(spec.mode)) {
        throw std::invalid_argument("scenario " + spec.abbreviation +
                                    " is supported at desk scale only; use " +
                                    spec.abbreviation + "-desk");
    }
    Scenario s;
    s.name = spec.abbreviation;
    s.model_key = spec.desk ? spec.model_key + "-desk" : spec.model_key;
    s.family = entry->family;
    s.config = spec.desk ? desk_config() : entry->config;
    s.mode = spec.mode;
    s.hp = Hyperparams{};
    if (!spec.desk && spec.model_key == "cino-large" && mode_uses_adapters(spec.mode)) {
        s.hp.batch_size = 4;  // large-model batch size
    }
    return s;
}

}  // namespace peftt
