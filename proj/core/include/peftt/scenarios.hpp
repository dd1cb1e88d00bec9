#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "peftt/training.hpp"

namespace peftt {

/// A parsed scenario abbreviation: model prefix (CS/CB/CL/T/TB) + mode
/// suffix (W = full, P = prompt, A = adapter, AP = adapter+prompt), with an
/// optional "-desk" suffix selecting the tiny from-scratch config instead of
/// the published architecture.
struct ScenarioSpec {
    std::string abbreviation;  // canonical upper-case form, e.g. "TBAP-desk"
    std::string model_key;
    FineTuneMode mode = FineTuneMode::full;
    bool desk = false;
};

/// Case-insensitive; returns nullopt for unknown abbreviations.
std::optional<ScenarioSpec> parse_scenario_abbreviation(std::string_view text);

/// Tiny from-scratch config for desk-scale runs (vocab grows from the
/// corpus).
EncoderConfig desk_config();

/// Scenario with the family's default learning rate (resolved at train
/// time), batch size 16 (4 for full-scale cino-large adapter runs), r = 8.
Scenario make_scenario(const ScenarioSpec& spec);

}  // namespace peftt
