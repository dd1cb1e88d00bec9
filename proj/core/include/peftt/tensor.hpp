#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "peftt/rng.hpp"

namespace peftt {

using Shape = std::vector<int>;

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::string name;
};
}  // namespace detail

/// Dense float32 tensor participating in a reverse-mode autodiff graph.
/// Handle with shared ownership: copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor randn(Shape shape, float mean, float stddev, Rng& rng,
                        bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    // Rank-2 convenience.
    int rows() const;
    int cols() const;

    std::span<const float> data() const { return node_->data; }
    std::span<float> data() { return node_->data; }
    float item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<const float> grad() const { return node_->grad; }
    std::span<float> grad_mut() { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    const std::string& name() const { return node_->name; }
    void set_name(std::string n) { node_->name = std::move(n); }

    // Node identity; distinguishes aliasing handles from equal values.
    const void* id() const { return node_.get(); }

    detail::TensorNode* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
    friend Tensor make_tensor(Shape, std::vector<float>, bool);
};

Tensor make_tensor(Shape shape, std::vector<float> data, bool requires_grad);

/// Ordered record of primitive applications. One tape per training step;
/// confined to the thread that created it.
class Tape {
public:
    struct Record {
        const char* op;
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    void record(Record r);
    size_t size() const { return records_.size(); }
    const Record& at(size_t i) const { return records_[i]; }

private:
    std::vector<Record> records_;
    Tape* prev_;
    friend void backward(const Tensor& loss);
};

/// Suppresses tape recording in scope (evaluation mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* prev_;
};

// ---- primitive operations ------------------------------------------------
// All record onto the active tape when an input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor add_rowvec(const Tensor& a, const Tensor& v); // [m,n] + [n] broadcast over rows
Tensor scale(const Tensor& a, float c);
Tensor sum(const Tensor& a);                         // -> scalar
Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor slice_cols(const Tensor& x, int start, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
// out[c] = mean over groups[c] of (per-id value); used to pool label-word logits.
Tensor gather_mean_cols(const Tensor& row, const std::vector<std::vector<int>>& groups);

/// Reverse pass from a scalar loss; populates grad on every reachable tensor
/// with requires_grad set. Frozen tensors receive no grad.
void backward(const Tensor& loss);

std::string shape_str(const Shape& s);

}  // namespace peftt
