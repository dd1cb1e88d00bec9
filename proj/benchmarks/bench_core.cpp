#include <benchmark/benchmark.h>

#include "peftt/adapter.hpp"
#include "peftt/data.hpp"
#include "peftt/encoder.hpp"
#include "peftt/metrics.hpp"
#include "peftt/scenarios.hpp"
#include "peftt/tensor.hpp"
#include "peftt/training.hpp"

using namespace peftt;

namespace {

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::randn({n, n}, 0, 1, rng);
    Tensor b = Tensor::randn({n, n}, 0, 1, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

struct DeskFixture {
    EncoderModel model;
    AdapterSet adapters;
    std::vector<int> ids;
    std::vector<uint8_t> pad;

    DeskFixture() : model(make_model()), adapters(inject_adapters(model, 8,
                                                  AdapterMode::parallel_lora, 2)) {
        Rng rng(3);
        for (int i = 0; i < 32; ++i) {
            ids.push_back(int(rng.below(90)));
            pad.push_back(1);
        }
    }

    static EncoderModel make_model() {
        EncoderConfig cfg = desk_config();
        cfg.vocab_size = 96;
        return make_encoder(cfg, HeadKind::mlm, 0, 1);
    }
};

void BM_ForwardMlm(benchmark::State& state) {
    DeskFixture f;
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_mlm(f.model, f.ids, f.pad, &f.adapters));
    }
}
BENCHMARK(BM_ForwardMlm);

void BM_TrainStep(benchmark::State& state) {
    DeskFixture f;
    AdamOptimizer opt(trainable_parameters(f.model, &f.adapters), AdamConfig{5e-4});
    const int focus[1] = {0};
    for (auto _ : state) {
        Tape tape;
        Tensor logits = forward_logits_at(f.model, f.ids, f.pad, focus, &f.adapters);
        Tensor scores = gather_mean_cols(logits, {{10}, {11}, {12}, {13}});
        Tensor loss = cross_entropy(scores, {1});
        opt.zero_grad();
        backward(loss);
        opt.step();
    }
}
BENCHMARK(BM_TrainStep);

void BM_MacroF1(benchmark::State& state) {
    Rng rng(4);
    std::vector<int> preds, golds;
    for (int i = 0; i < 10000; ++i) {
        preds.push_back(int(rng.below(12)));
        golds.push_back(int(rng.below(12)));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(macro_f1(preds, golds, 12));
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 10000);
}
BENCHMARK(BM_MacroF1);

void BM_SynthesizeCorpus(benchmark::State& state) {
    SynthSpec spec;
    for (auto _ : state) {
        benchmark::DoNotOptimize(synthesize_corpus(spec));
    }
}
BENCHMARK(BM_SynthesizeCorpus);

}  // namespace

BENCHMARK_MAIN();
