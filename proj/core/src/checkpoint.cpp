#include "peftt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace peftt {

namespace {

constexpr char kMagic[5] = {'P', 'E', 'F', 'T', 'T'};
constexpr uint8_t kVersion = 0x01;
constexpr int64_t kMaxElements = int64_t(1) << 33;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u16(std::ostream& out, uint16_t v) { write_bytes(out, &v, 2); }
void write_u32(std::ostream& out, uint32_t v) { write_bytes(out, &v, 4); }

void read_bytes(std::istream& in, void* p, size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) {
        throw std::runtime_error(std::string("checkpoint: truncated file while reading ") +
                                 what);
    }
}

uint16_t read_u16(std::istream& in, const char* what) {
    uint16_t v = 0;
    read_bytes(in, &v, 2, what);
    return v;
}

uint32_t read_u32(std::istream& in, const char* what) {
    uint32_t v = 0;
    read_bytes(in, &v, 4, what);
    return v;
}

constexpr const char* kMetaName = "meta.config";

Tensor encode_meta(const CheckpointMeta& m) {
    std::vector<float> v = {
        float(m.config.n_layers), float(m.config.d_model),  float(m.config.d_ff),
        float(m.config.n_heads),  float(m.config.vocab_size), float(m.config.max_len),
        m.config.tie_mlm_head ? 1.0f : 0.0f,
        m.head == HeadKind::classifier ? 1.0f : 0.0f,
        float(m.n_classes),
        float(static_cast<int>(m.mode)),
        float(m.rank),
        m.adapter_mode == AdapterMode::sequential ? 1.0f : 0.0f,
    };
    const int len = static_cast<int>(v.size());
    return Tensor::from({len}, std::move(v));
}

CheckpointMeta decode_meta(const Tensor& t) {
    if (t.numel() < 12) throw std::runtime_error("checkpoint: malformed meta tensor");
    auto d = t.data();
    CheckpointMeta m;
    m.config.n_layers = int(d[0]);
    m.config.d_model = int(d[1]);
    m.config.d_ff = int(d[2]);
    m.config.n_heads = int(d[3]);
    m.config.vocab_size = int(d[4]);
    m.config.max_len = int(d[5]);
    m.config.tie_mlm_head = d[6] != 0.0f;
    m.head = d[7] != 0.0f ? HeadKind::classifier : HeadKind::mlm;
    m.n_classes = int(d[8]);
    m.mode = static_cast<FineTuneMode>(int(d[9]));
    m.rank = int(d[10]);
    m.adapter_mode = d[11] != 0.0f ? AdapterMode::sequential : AdapterMode::parallel_lora;
    return m;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    write_bytes(out, kMagic, sizeof(kMagic));
    write_bytes(out, &kVersion, 1);
    write_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) {
            throw std::invalid_argument("checkpoint: tensor name too long: " + name);
        }
        write_u16(out, static_cast<uint16_t>(name.size()));
        write_bytes(out, name.data(), name.size());
        const uint8_t rank = static_cast<uint8_t>(t.rank());
        write_bytes(out, &rank, 1);
        for (int i = 0; i < t.rank(); ++i) write_u32(out, static_cast<uint32_t>(t.dim(i)));
        write_bytes(out, t.data().data(), t.data().size() * sizeof(float));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    char magic[5];
    read_bytes(in, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    uint8_t version = 0;
    read_bytes(in, &version, 1, "version");
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const uint32_t count = read_u32(in, "tensor count");
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = read_u16(in, "name length");
        std::string name(name_len, '\0');
        read_bytes(in, name.data(), name_len, "name");
        uint8_t rank = 0;
        read_bytes(in, &rank, 1, "rank");
        Shape shape;
        int64_t numel = 1;
        for (uint8_t r = 0; r < rank; ++r) {
            const uint32_t dim = read_u32(in, "dimension");
            if (dim == 0 || numel > kMaxElements / std::max<int64_t>(dim, 1)) {
                throw std::runtime_error("checkpoint: dimension overflow in tensor '" + name +
                                         "'");
            }
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        std::vector<float> data(static_cast<size_t>(numel));
        read_bytes(in, data.data(), data.size() * sizeof(float), name.c_str());
        out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
    }
    return out;
}

void save_model_checkpoint(const std::string& path, const EncoderModel& model,
                           const AdapterSet* adapters, FineTuneMode mode) {
    CheckpointMeta meta;
    meta.config = model.config;
    meta.head = model.head;
    meta.n_classes = model.n_classes;
    meta.mode = mode;
    meta.rank = adapters ? adapters->rank : 0;
    meta.adapter_mode = adapters ? adapters->mode : AdapterMode::parallel_lora;

    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back(kMetaName, encode_meta(meta));
    for (auto& nt : model.named_tensors()) tensors.push_back(nt);
    if (adapters) {
        for (auto& nt : adapters->named_tensors()) tensors.push_back(nt);
    }
    save_tensors(path, tensors);
}

void save_adapter_checkpoint(const std::string& path, const EncoderModel& model,
                             const AdapterSet& adapters, FineTuneMode mode) {
    CheckpointMeta meta;
    meta.config = model.config;
    meta.head = model.head;
    meta.n_classes = model.n_classes;
    meta.mode = mode;
    meta.rank = adapters.rank;
    meta.adapter_mode = adapters.mode;

    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back(kMetaName, encode_meta(meta));
    for (auto& nt : adapters.named_tensors()) tensors.push_back(nt);
    save_tensors(path, tensors);
}

namespace {

class TensorMap {
public:
    explicit TensorMap(std::vector<std::pair<std::string, Tensor>> tensors) {
        for (auto& [name, t] : tensors) map_.emplace(std::move(name), std::move(t));
    }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }

    Tensor take(const std::string& name, Shape expected) {
        auto it = map_.find(name);
        if (it == map_.end()) {
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        }
        Tensor t = it->second;
        if (t.shape() != expected) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                                     shape_str(t.shape()) + ", expected " +
                                     shape_str(expected));
        }
        t.set_name(name);
        return t;
    }

private:
    std::map<std::string, Tensor> map_;
};

EncoderModel assemble_model(const CheckpointMeta& meta, TensorMap& tensors) {
    const int d = meta.config.d_model, ff = meta.config.d_ff, v = meta.config.vocab_size;
    EncoderModel m;
    m.config = meta.config;
    m.head = meta.head;
    m.n_classes = meta.n_classes;
    m.tok_emb = tensors.take("tok_emb", {v, d});
    m.pos_emb = tensors.take("pos_emb", {meta.config.max_len, d});
    m.layers.resize(static_cast<size_t>(meta.config.n_layers));
    for (int i = 0; i < meta.config.n_layers; ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        LayerWeights& lw = m.layers[static_cast<size_t>(i)];
        lw.wq = tensors.take(p + "wq", {d, d});
        lw.bq = tensors.take(p + "bq", {d});
        lw.wk = tensors.take(p + "wk", {d, d});
        lw.bk = tensors.take(p + "bk", {d});
        lw.wv = tensors.take(p + "wv", {d, d});
        lw.bv = tensors.take(p + "bv", {d});
        lw.wo = tensors.take(p + "wo", {d, d});
        lw.bo = tensors.take(p + "bo", {d});
        lw.w1 = tensors.take(p + "w1", {ff, d});
        lw.b1 = tensors.take(p + "b1", {ff});
        lw.w2 = tensors.take(p + "w2", {d, ff});
        lw.b2 = tensors.take(p + "b2", {d});
        lw.ln1_g = tensors.take(p + "ln1_g", {d});
        lw.ln1_b = tensors.take(p + "ln1_b", {d});
        lw.ln2_g = tensors.take(p + "ln2_g", {d});
        lw.ln2_b = tensors.take(p + "ln2_b", {d});
    }
    if (meta.head == HeadKind::mlm) {
        m.mlm_w = tensors.take("mlm.w", {d, d});
        m.mlm_b = tensors.take("mlm.b", {d});
        m.mlm_ln_g = tensors.take("mlm.ln_g", {d});
        m.mlm_ln_b = tensors.take("mlm.ln_b", {d});
        if (!meta.config.tie_mlm_head) m.mlm_out_w = tensors.take("mlm.out_w", {v, d});
        m.mlm_out_b = tensors.take("mlm.out_b", {v});
    } else {
        m.cls_w = tensors.take("cls.w", {meta.n_classes, d});
        m.cls_b = tensors.take("cls.b", {meta.n_classes});
    }
    return m;
}

AdapterSet assemble_adapters(const CheckpointMeta& meta, TensorMap& tensors) {
    AdapterSet set;
    set.mode = meta.adapter_mode;
    set.frozen_base = true;
    set.rank = meta.rank;
    const int d = meta.config.d_model, ff = meta.config.d_ff, r = meta.rank;
    const bool sequential = meta.adapter_mode == AdapterMode::sequential;
    for (int l = 0; l < meta.config.n_layers; ++l) {
        for (AdapterSlot slot : {AdapterSlot::attention_output, AdapterSlot::ffn_output}) {
            const std::string base = "adapters." + std::to_string(l) + "." +
                                     (slot == AdapterSlot::attention_output ? "attn" : "ffn");
            const int d_in = slot == AdapterSlot::attention_output ? d : ff;
            const int a_in = sequential ? d : d_in;
            LoraPair pair;
            pair.rank = r;
            pair.site = {l, slot};
            pair.B = tensors.take(base + ".B", {d, r});
            pair.A = tensors.take(base + ".A", {r, a_in});
            pair.B.set_requires_grad(true);
            pair.A.set_requires_grad(true);
            set.pairs.push_back(std::move(pair));
        }
    }
    return set;
}

}  // namespace

LoadedCheckpoint load_model_checkpoint(const std::string& path) {
    TensorMap tensors(load_tensors(path));
    if (!tensors.contains(kMetaName)) {
        throw std::runtime_error("checkpoint: missing '" + std::string(kMetaName) + "' in " +
                                 path);
    }
    const CheckpointMeta meta = decode_meta(tensors.take(kMetaName, Shape{12}));
    LoadedCheckpoint out;
    out.meta = meta;
    out.adapter_only = !tensors.contains("tok_emb");
    if (!out.adapter_only) {
        out.model = assemble_model(meta, tensors);
    }
    if (meta.rank > 0 && tensors.contains("adapters.0.attn.B")) {
        out.adapters = assemble_adapters(meta, tensors);
        if (!out.adapter_only) out.model.adapters_injected = true;
    }
    return out;
}

AdapterSet attach_adapters(EncoderModel& model, const LoadedCheckpoint& loaded) {
    if (!loaded.adapters.has_value()) {
        throw std::invalid_argument("attach_adapters: checkpoint has no adapter tensors");
    }
    const EncoderConfig& a = model.config;
    const EncoderConfig& b = loaded.meta.config;
    if (a.n_layers != b.n_layers || a.d_model != b.d_model || a.d_ff != b.d_ff) {
        throw std::invalid_argument(
            "attach_adapters: adapter checkpoint was built for a different architecture");
    }
    if (model.adapters_injected) {
        throw std::logic_error("attach_adapters: model already has adapters injected");
    }
    model.set_requires_grad_all(false);
    model.adapters_injected = true;
    return *loaded.adapters;
}

}  // namespace peftt
