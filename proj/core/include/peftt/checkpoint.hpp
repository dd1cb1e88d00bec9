#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "peftt/adapter.hpp"
#include "peftt/encoder.hpp"
#include "peftt/training.hpp"

namespace peftt {

/// Byte format: magic "PEFTT", version 0x01, tensor count (u32 LE), then per
/// tensor: name length (u16 LE), UTF-8 name, rank (u8), dims (u32 LE each),
/// payload (f32 LE, row-major). Round-trips are bitwise exact.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

/// Model metadata carried inside the tensor list under "meta.config".
struct CheckpointMeta {
    EncoderConfig config;
    HeadKind head = HeadKind::mlm;
    int n_classes = 0;
    FineTuneMode mode = FineTuneMode::full;
    int rank = 0;
    AdapterMode adapter_mode = AdapterMode::parallel_lora;
};

struct LoadedCheckpoint {
    CheckpointMeta meta;
    EncoderModel model;                  // undefined tensors for adapter-only files
    std::optional<AdapterSet> adapters;
    bool adapter_only = false;
};

/// Full checkpoint: every model tensor, adapter tensors when present, meta.
void save_model_checkpoint(const std::string& path, const EncoderModel& model,
                           const AdapterSet* adapters, FineTuneMode mode);

/// Adapter-only checkpoint: adapter tensors plus the config header needed to
/// re-inject into a matching base model.
void save_adapter_checkpoint(const std::string& path, const EncoderModel& model,
                             const AdapterSet& adapters, FineTuneMode mode);

LoadedCheckpoint load_model_checkpoint(const std::string& path);

/// Re-binds adapter tensors from an adapter-only checkpoint onto a base
/// model (shape-checked), freezing the base.
AdapterSet attach_adapters(EncoderModel& model, const LoadedCheckpoint& loaded);

}  // namespace peftt
