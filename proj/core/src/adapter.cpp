#include "peftt/adapter.hpp"

#include <cmath>
#include <stdexcept>

namespace peftt {

namespace {

void check_pair_shapes(const Tensor& x, const Tensor& w0, const LoraPair& pair,
                       bool sequential) {
    if (x.rank() != 2 || w0.rank() != 2) {
        throw std::invalid_argument("adapter forward: expected rank-2 tensors");
    }
    const int d_out = w0.rows(), d_in = w0.cols();
    if (x.cols() != d_in) {
        throw std::invalid_argument("adapter forward: input " + shape_str(x.shape()) +
                                    " does not match base weight " + shape_str(w0.shape()));
    }
    const int a_in = sequential ? d_out : d_in;
    if (pair.A.rank() != 2 || pair.A.rows() != pair.rank || pair.A.cols() != a_in ||
        pair.B.rank() != 2 || pair.B.rows() != d_out || pair.B.cols() != pair.rank) {
        throw std::invalid_argument("adapter forward: pair shapes A " +
                                    shape_str(pair.A.shape()) + ", B " +
                                    shape_str(pair.B.shape()) +
                                    " do not fit base weight " + shape_str(w0.shape()));
    }
}

}  // namespace

const LoraPair& AdapterSet::at(int layer, AdapterSlot slot) const {
    const size_t idx = static_cast<size_t>(layer) * 2 +
                       (slot == AdapterSlot::ffn_output ? 1 : 0);
    if (idx >= pairs.size()) {
        throw std::out_of_range("adapter set: no pair for layer " + std::to_string(layer));
    }
    return pairs[idx];
}

LoraPair& AdapterSet::at(int layer, AdapterSlot slot) {
    return const_cast<LoraPair&>(static_cast<const AdapterSet*>(this)->at(layer, slot));
}

std::vector<std::pair<std::string, Tensor>> AdapterSet::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const LoraPair& p : pairs) {
        const std::string base = "adapters." + std::to_string(p.site.layer) + "." +
                                 (p.site.slot == AdapterSlot::attention_output ? "attn" : "ffn");
        out.emplace_back(base + ".B", p.B);
        out.emplace_back(base + ".A", p.A);
    }
    return out;
}

std::vector<Tensor> AdapterSet::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

int64_t AdapterSet::parameter_count() const {
    int64_t n = 0;
    for (const LoraPair& p : pairs) n += p.A.numel() + p.B.numel();
    return n;
}

Tensor lora_forward(const Tensor& x, const Tensor& w0, const Tensor& b0, const LoraPair& pair) {
    check_pair_shapes(x, w0, pair, /*sequential=*/false);
    Tensor base = matmul_nt(x, w0);
    if (b0.defined()) base = add_rowvec(base, b0);
    Tensor delta = matmul_nt(matmul_nt(x, pair.A), pair.B);
    return add(base, delta);
}

Tensor sequential_adapter_forward(const Tensor& x, const Tensor& w0, const Tensor& b0,
                                  const LoraPair& pair) {
    check_pair_shapes(x, w0, pair, /*sequential=*/true);
    Tensor y = matmul_nt(x, w0);
    if (b0.defined()) y = add_rowvec(y, b0);
    return matmul_nt(matmul_nt(y, pair.A), pair.B);
}

AdapterSet inject_adapters(EncoderModel& model, int rank, AdapterMode mode, uint64_t seed) {
    if (model.adapters_injected) {
        throw std::logic_error("inject_adapters: model already has adapters injected");
    }
    if (rank < 1) throw std::invalid_argument("inject_adapters: rank must be >= 1");
    const int d = model.config.d_model, ff = model.config.d_ff;
    if (rank > d || rank > ff) {
        throw std::invalid_argument("inject_adapters: rank " + std::to_string(rank) +
                                    " exceeds min(d_model, d_ff) = " +
                                    std::to_string(std::min(d, ff)));
    }

    model.set_requires_grad_all(false);

    Rng rng(seed);
    AdapterSet set;
    set.mode = mode;
    set.frozen_base = true;
    set.rank = rank;
    const bool sequential = mode == AdapterMode::sequential;
    for (int l = 0; l < model.config.n_layers; ++l) {
        for (AdapterSlot slot : {AdapterSlot::attention_output, AdapterSlot::ffn_output}) {
            const int d_in = slot == AdapterSlot::attention_output ? d : ff;
            const int a_in = sequential ? d : d_in;
            LoraPair pair;
            pair.rank = rank;
            pair.site = {l, slot};
            // Rank-normalized gain on A so A*x sits at the residual-stream
            // scale for any rank; zero B keeps the parallel form an exact
            // identity at injection time. The sequential form has no
            // identity init, so B draws too.
            pair.A = Tensor::randn({rank, a_in}, 0.0f,
                                   std::sqrt(2.0f / float(rank)), rng, true);
            pair.B = sequential ? Tensor::randn({d, rank}, 0.0f, 0.02f, rng, true)
                                : Tensor::zeros({d, rank}, true);
            set.pairs.push_back(std::move(pair));
        }
    }
    for (auto& [name, t] : set.named_tensors()) const_cast<Tensor&>(t).set_name(name);
    model.adapters_injected = true;
    return set;
}

std::vector<std::pair<std::string, Tensor>> trainable_parameters(const EncoderModel& model,
                                                                 const AdapterSet* adapters) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, t] : model.named_tensors()) {
        if (t.requires_grad()) out.emplace_back(name, t);
    }
    if (adapters) {
        for (auto& [name, t] : adapters->named_tensors()) {
            if (t.requires_grad()) out.emplace_back(name, t);
        }
    }
    return out;
}

int64_t trainable_parameter_count(const EncoderModel& model, const AdapterSet* adapters) {
    int64_t n = 0;
    for (auto& [name, t] : trainable_parameters(model, adapters)) n += t.numel();
    return n;
}

}  // namespace peftt
