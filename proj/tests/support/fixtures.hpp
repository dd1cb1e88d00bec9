// Shared corpus/prompt fixtures for training-level tests.
#pragma once

#include "peftt/data.hpp"
#include "peftt/prompt.hpp"
#include "peftt/scenarios.hpp"

namespace fixtures {

inline peftt::CorpusSplits synth_splits(int n_classes, int train_per_class, int eval_per_class,
                                        uint64_t seed) {
    peftt::SynthSpec spec;
    spec.n_classes = n_classes;
    spec.n_per_class = train_per_class;
    spec.seed = seed;
    peftt::SynthSpec val = spec, test = spec;
    val.n_per_class = eval_per_class;
    val.seed = seed + 101;
    test.n_per_class = eval_per_class;
    test.seed = seed + 202;
    peftt::CorpusSplits c;
    c.label_names = peftt::synth_label_names(n_classes);
    c.train = peftt::synthesize_corpus(spec);
    c.validation = peftt::synthesize_corpus(val);
    c.test = peftt::synthesize_corpus(test);
    return c;
}

inline peftt::Verbalizer synth_verbalizer(const std::vector<std::string>& label_names) {
    peftt::Verbalizer v;
    for (const std::string& name : label_names) {
        peftt::Verbalizer::Entry e;
        e.label_name = name;
        e.words = {"topic_" + name};
        v.entries.push_back(std::move(e));
    }
    return v;
}

inline peftt::Scenario desk_scenario(peftt::FineTuneMode mode, int epochs, uint64_t seed,
                                     double lr = 0.0) {
    peftt::Scenario s;
    s.name = std::string("desk-") + peftt::mode_name(mode);
    s.model_key = "desk";
    s.family = "bert";
    s.config = peftt::desk_config();
    s.mode = mode;
    s.hp.epochs = epochs;
    s.hp.seed = seed;
    s.hp.lr = lr;
    return s;
}

}  // namespace fixtures
