#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "peftt/encoder.hpp"
#include "peftt/tensor.hpp"

namespace peftt {

enum class AdapterSlot { attention_output, ffn_output };

enum class AdapterMode { parallel_lora, sequential };

struct InjectionPoint {
    int layer = 0;
    AdapterSlot slot = AdapterSlot::attention_output;
};

/// Low-rank pair (B, A). Parallel mode adds B*(A*x) to the frozen base
/// product; sequential mode replaces it with B*(A*(W0*x)).
struct LoraPair {
    Tensor B;  // parallel: [d_out, r]; sequential: [d_out, r]
    Tensor A;  // parallel: [r, d_in];  sequential: [r, d_out]
    int rank = 0;
    InjectionPoint site;
};

struct AdapterSet {
    AdapterMode mode = AdapterMode::parallel_lora;
    bool frozen_base = true;
    int rank = 0;
    std::vector<LoraPair> pairs;  // 2 per layer: attention_output then ffn_output

    const LoraPair& at(int layer, AdapterSlot slot) const;
    LoraPair& at(int layer, AdapterSlot slot);
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> parameters() const;
    int64_t parameter_count() const;
};

/// y = W0*x + b0 + B*(A*x), row-wise over x [T x d_in]. Pass an undefined
/// bias tensor to skip it.
Tensor lora_forward(const Tensor& x, const Tensor& w0, const Tensor& b0, const LoraPair& pair);

/// Two-stage variant: y = B*(A*(W0*x + b0)).
Tensor sequential_adapter_forward(const Tensor& x, const Tensor& w0, const Tensor& b0,
                                  const LoraPair& pair);

/// Creates one pair per (layer, slot), freezes every base parameter
/// (embeddings, attention, feed-forward, layer-norms, heads) and marks the
/// adapter parameters trainable. Throws on a second injection into the same
/// model.
AdapterSet inject_adapters(EncoderModel& model, int rank, AdapterMode mode, uint64_t seed);

/// Exactly the tensors with requires_grad set, model first then adapters.
std::vector<std::pair<std::string, Tensor>> trainable_parameters(
    const EncoderModel& model, const AdapterSet* adapters);

int64_t trainable_parameter_count(const EncoderModel& model, const AdapterSet* adapters);

}  // namespace peftt
