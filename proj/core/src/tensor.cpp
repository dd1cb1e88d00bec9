#include "peftt/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace peftt {

namespace {

thread_local Tape* g_active_tape = nullptr;

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

void check_positive_dims(const Shape& s) {
    for (int d : s) {
        if (d <= 0) {
            throw std::invalid_argument("tensor shape must have positive dimensions, got " +
                                        shape_str(s));
        }
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                    shape_str(t.shape()));
    }
}

std::vector<float>& ensure_grad(detail::TensorNode* n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0f);
    return n->grad;
}

bool grad_ready(const Tensor& t) { return !t.node()->grad.empty(); }

// Records the op if a tape is active and any input requires grad.
void maybe_record(const char* op, std::vector<Tensor> inputs, Tensor& out,
                  std::function<void()> bw) {
    Tape* tape = Tape::active();
    if (!tape) return;
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    out.set_requires_grad(true);
    tape->record(Tape::Record{op, std::move(inputs), out, std::move(bw)});
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor make_tensor(Shape shape, std::vector<float> data, bool requires_grad) {
    check_positive_dims(shape);
    auto node = std::make_shared<detail::TensorNode>();
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_positive_dims(shape);
    std::vector<float> d(static_cast<size_t>(shape_numel(shape)), 0.0f);
    return make_tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    check_positive_dims(shape);
    std::vector<float> d(static_cast<size_t>(shape_numel(shape)), value);
    return make_tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::randn(Shape shape, float mean, float stddev, Rng& rng, bool requires_grad) {
    check_positive_dims(shape);
    std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
    for (float& x : d) x = rng.normal(mean, stddev);
    return make_tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return make_tensor({1}, {value}, requires_grad);
}

int Tensor::rows() const {
    if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank-2");
    return dim(0);
}

int Tensor::cols() const {
    if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank-2");
    return dim(1);
}

float Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) +
                                    " elements, expected 1");
    }
    return node_->data[0];
}

// ---- tape ------------------------------------------------------------------

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(Record r) { records_.push_back(std::move(r)); }

NoGradGuard::NoGradGuard() : prev_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = prev_; }

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += double(pa[i * k + t]) * double(pb[t * n + j]);
            po[i * n + j] = static_cast<float>(acc);
        }
    }
    maybe_record("matmul", {a, b}, out, [a, b, out, m, n, k]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            const float* pb = b.data().data();
            for (int i = 0; i < m; ++i)
                for (int t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += double(g[i * n + j]) * double(pb[t * n + j]);
                    ga[i * k + t] += static_cast<float>(acc);
                }
        }
        if (b.requires_grad()) {
            auto& gb = ensure_grad(b.node());
            const float* pa = a.data().data();
            for (int t = 0; t < k; ++t)
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i)
                        acc += double(pa[i * k + t]) * double(g[i * n + j]);
                    gb[t * n + j] += static_cast<float>(acc);
                }
        }
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const int m = a.rows(), k = a.cols(), n = b.rows(), k2 = b.cols();
    if (k != k2) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                                    " (second operand is used transposed)");
    }
    Tensor out = Tensor::zeros({m, n});
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += double(pa[i * k + t]) * double(pb[j * k + t]);
            po[i * n + j] = static_cast<float>(acc);
        }
    }
    maybe_record("matmul_nt", {a, b}, out, [a, b, out, m, n, k]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {  // dA = dC * B
            auto& ga = ensure_grad(a.node());
            const float* pb = b.data().data();
            for (int i = 0; i < m; ++i)
                for (int t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += double(g[i * n + j]) * double(pb[j * k + t]);
                    ga[i * k + t] += static_cast<float>(acc);
                }
        }
        if (b.requires_grad()) {  // dB = dC^T * A
            auto& gb = ensure_grad(b.node());
            const float* pa = a.data().data();
            for (int j = 0; j < n; ++j)
                for (int t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i)
                        acc += double(g[i * n + j]) * double(pa[i * k + t]);
                    gb[j * k + t] += static_cast<float>(acc);
                }
        }
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    maybe_record("add", {a, b}, out, [a, b, out, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = ensure_grad(b.node());
            for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("mul: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    maybe_record("mul", {a, b}, out, [a, b, out, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            const float* pb2 = b.data().data();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
        }
        if (b.requires_grad()) {
            auto& gb = ensure_grad(b.node());
            const float* pa2 = a.data().data();
            for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
        }
    });
    return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    require_rank2(a, "add_rowvec");
    const int m = a.rows(), n = a.cols();
    const bool vec_ok = (v.rank() == 1 && v.dim(0) == n) ||
                        (v.rank() == 2 && v.rows() == 1 && v.cols() == n);
    if (!vec_ok) {
        throw std::invalid_argument("add_rowvec: vector shape " + shape_str(v.shape()) +
                                    " does not broadcast over " + shape_str(a.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data().data();
    const float* pv = v.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) po[i * n + j] = pa[i * n + j] + pv[j];
    maybe_record("add_rowvec", {a, v}, out, [a, v, out, m, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            for (int64_t i = 0; i < int64_t(m) * n; ++i) ga[i] += g[i];
        }
        if (v.requires_grad()) {
            auto& gv = ensure_grad(v.node());
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += g[i * n + j];
                gv[j] += static_cast<float>(acc);
            }
        }
    });
    return out;
}

Tensor scale(const Tensor& a, float c) {
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data().data();
    float* po = out.data().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    maybe_record("scale", {a}, out, [a, out, c, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * c;
        }
    });
    return out;
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float x : a.data()) acc += x;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    maybe_record("sum", {a}, out, [a, out]() {
        if (!grad_ready(out)) return;
        const float g = out.node()->grad[0];
        if (a.requires_grad()) {
            auto& ga = ensure_grad(a.node());
            for (float& x : ga) x += g;
        }
    });
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data().data();
    float* po = out.data().data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double v = px[i];
        po[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    maybe_record("gelu", {x}, out, [x, out, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (x.requires_grad()) {
            auto& gx = ensure_grad(x.node());
            const float* px2 = x.data().data();
            for (int64_t i = 0; i < n; ++i) {
                const double v = px2[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += static_cast<float>(double(g[i]) * (cdf + v * pdf));
            }
        }
    });
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i) {
        double mx = px[i * n];
        for (int j = 1; j < n; ++j) mx = std::max(mx, double(px[i * n + j]));
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(double(px[i * n + j]) - mx);
        for (int j = 0; j < n; ++j)
            po[i * n + j] = static_cast<float>(std::exp(double(px[i * n + j]) - mx) / denom);
    }
    maybe_record("softmax_rows", {x}, out, [x, out, m, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (x.requires_grad()) {
            auto& gx = ensure_grad(x.node());
            const float* py = out.data().data();
            for (int i = 0; i < m; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += double(g[i * n + j]) * double(py[i * n + j]);
                for (int j = 0; j < n; ++j)
                    gx[i * n + j] += static_cast<float>(double(py[i * n + j]) *
                                                        (double(g[i * n + j]) - dot));
            }
        }
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    require_rank2(x, "layer_norm");
    if (eps <= 0.0f) {
        throw std::invalid_argument("layer_norm: eps must be positive, got " +
                                    std::to_string(eps));
    }
    const int m = x.rows(), n = x.cols();
    auto check_param = [&](const Tensor& p, const char* what) {
        const bool ok = (p.rank() == 1 && p.dim(0) == n) ||
                        (p.rank() == 2 && p.rows() == 1 && p.cols() == n);
        if (!ok) {
            throw std::invalid_argument(std::string("layer_norm: ") + what + " shape " +
                                        shape_str(p.shape()) + " does not match row width " +
                                        std::to_string(n));
        }
    };
    check_param(gain, "gain");
    check_param(bias, "bias");

    Tensor out = Tensor::zeros(x.shape());
    std::vector<float> xhat(static_cast<size_t>(m) * n);
    std::vector<float> inv_std(static_cast<size_t>(m));
    const float* px = x.data().data();
    const float* pg = gain.data().data();
    const float* pb = bias.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += px[i * n + j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = px[i * n + j] - mean;
            var += d * d;
        }
        var /= n;
        const double istd = 1.0 / std::sqrt(var + double(eps));
        inv_std[i] = static_cast<float>(istd);
        for (int j = 0; j < n; ++j) {
            const double h = (px[i * n + j] - mean) * istd;
            xhat[i * n + j] = static_cast<float>(h);
            po[i * n + j] = static_cast<float>(h * pg[j] + pb[j]);
        }
    }
    maybe_record("layer_norm", {x, gain, bias}, out,
                 [x, gain, bias, out, m, n, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        const float* pg = gain.data().data();
        if (gain.requires_grad()) {
            auto& gg = ensure_grad(gain.node());
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i)
                    acc += double(g[i * n + j]) * double(xhat[i * n + j]);
                gg[j] += static_cast<float>(acc);
            }
        }
        if (bias.requires_grad()) {
            auto& gb = ensure_grad(bias.node());
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += g[i * n + j];
                gb[j] += static_cast<float>(acc);
            }
        }
        if (x.requires_grad()) {
            auto& gx = ensure_grad(x.node());
            for (int i = 0; i < m; ++i) {
                double mean_gy = 0.0, mean_gyx = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double gy = double(g[i * n + j]) * double(pg[j]);
                    mean_gy += gy;
                    mean_gyx += gy * double(xhat[i * n + j]);
                }
                mean_gy /= n;
                mean_gyx /= n;
                for (int j = 0; j < n; ++j) {
                    const double gy = double(g[i * n + j]) * double(pg[j]);
                    const double dx =
                        (gy - mean_gy - double(xhat[i * n + j]) * mean_gyx) *
                        double(inv_std[i]);
                    gx[i * n + j] += static_cast<float>(dx);
                }
            }
        }
    });
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    require_rank2(logits, "cross_entropy");
    const int b = logits.rows(), c = logits.cols();
    if (c < 2) {
        throw std::invalid_argument("cross_entropy: need at least 2 classes, got " +
                                    std::to_string(c));
    }
    if (static_cast<int>(targets.size()) != b) {
        throw std::invalid_argument("cross_entropy: batch size " + std::to_string(b) +
                                    " does not match " + std::to_string(targets.size()) +
                                    " targets");
    }
    for (int t : targets) {
        if (t < 0 || t >= c) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                                    " out of range [0, " + std::to_string(c) + ")");
        }
    }
    const float* pl = logits.data().data();
    std::vector<float> probs(static_cast<size_t>(b) * c);
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double mx = pl[i * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, double(pl[i * c + j]));
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(double(pl[i * c + j]) - mx);
        for (int j = 0; j < c; ++j)
            probs[i * c + j] = static_cast<float>(std::exp(double(pl[i * c + j]) - mx) / denom);
        loss -= (double(pl[i * c + targets[i]]) - mx - std::log(denom));
    }
    loss /= b;
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    maybe_record("cross_entropy", {logits}, out,
                 [logits, out, targets, probs = std::move(probs), b, c]() {
        if (!grad_ready(out)) return;
        const float g = out.node()->grad[0];
        if (logits.requires_grad()) {
            auto& gl = ensure_grad(logits.node());
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < c; ++j) {
                    float d = probs[i * c + j];
                    if (j == targets[i]) d -= 1.0f;
                    gl[i * c + j] += g * d / float(b);
                }
        }
    });
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_rank2(table, "embedding_lookup");
    const int v = table.rows(), d = table.cols();
    if (ids.empty()) {
        throw std::invalid_argument("embedding_lookup: empty id sequence");
    }
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                                    " out of range [0, " + std::to_string(v) + ")");
        }
    }
    const int t = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros({t, d});
    const float* pt = table.data().data();
    float* po = out.data().data();
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) po[i * d + j] = pt[ids[i] * d + j];
    maybe_record("embedding_lookup", {table}, out, [table, out, ids, t, d]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (table.requires_grad()) {
            auto& gt = ensure_grad(table.node());
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
        }
    });
    return out;
}

Tensor slice_rows(const Tensor& x, int start, int len) {
    require_rank2(x, "slice_rows");
    const int m = x.rows(), n = x.cols();
    if (start < 0 || len <= 0 || start + len > m) {
        throw std::out_of_range("slice_rows: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({len, n});
    const float* px = x.data().data();
    float* po = out.data().data();
    for (int i = 0; i < len; ++i)
        for (int j = 0; j < n; ++j) po[i * n + j] = px[(start + i) * n + j];
    maybe_record("slice_rows", {x}, out, [x, out, start, len, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (x.requires_grad()) {
            auto& gx = ensure_grad(x.node());
            for (int i = 0; i < len; ++i)
                for (int j = 0; j < n; ++j) gx[(start + i) * n + j] += g[i * n + j];
        }
    });
    return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
    require_rank2(x, "slice_cols");
    const int m = x.rows(), n = x.cols();
    if (start < 0 || len <= 0 || start + len > n) {
        throw std::out_of_range("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({m, len});
    const float* px = x.data().data();
    float* po = out.data().data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j) po[i * len + j] = px[i * n + start + j];
    maybe_record("slice_cols", {x}, out, [x, out, start, len, m, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (x.requires_grad()) {
            auto& gx = ensure_grad(x.node());
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < len; ++j) gx[i * n + start + j] += g[i * len + j];
        }
    });
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no tensors given");
    const int n = parts[0].cols();
    int m = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != n) {
            throw std::invalid_argument("concat_rows: column mismatch: " +
                                        shape_str(parts[0].shape()) + " vs " +
                                        shape_str(p.shape()));
        }
        m += p.rows();
    }
    Tensor out = Tensor::zeros({m, n});
    float* po = out.data().data();
    int row = 0;
    for (const Tensor& p : parts) {
        const float* pp = p.data().data();
        const int pm = p.rows();
        for (int i = 0; i < pm; ++i)
            for (int j = 0; j < n; ++j) po[(row + i) * n + j] = pp[i * n + j];
        row += pm;
    }
    maybe_record("concat_rows", parts, out, [parts, out, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        int row = 0;
        for (const Tensor& p : parts) {
            const int pm = p.rows();
            if (p.requires_grad()) {
                auto& gp = ensure_grad(p.node());
                for (int i = 0; i < pm; ++i)
                    for (int j = 0; j < n; ++j) gp[i * n + j] += g[(row + i) * n + j];
            }
            row += pm;
        }
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no tensors given");
    const int m = parts[0].rows();
    int n = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != m) {
            throw std::invalid_argument("concat_cols: row mismatch: " +
                                        shape_str(parts[0].shape()) + " vs " +
                                        shape_str(p.shape()));
        }
        n += p.cols();
    }
    Tensor out = Tensor::zeros({m, n});
    float* po = out.data().data();
    int col = 0;
    for (const Tensor& p : parts) {
        const float* pp = p.data().data();
        const int pn = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < pn; ++j) po[i * n + col + j] = pp[i * pn + j];
        col += pn;
    }
    maybe_record("concat_cols", parts, out, [parts, out, m, n]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        int col = 0;
        for (const Tensor& p : parts) {
            const int pn = p.cols();
            if (p.requires_grad()) {
                auto& gp = ensure_grad(p.node());
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < pn; ++j) gp[i * pn + j] += g[i * n + col + j];
            }
            col += pn;
        }
    });
    return out;
}

Tensor gather_mean_cols(const Tensor& row, const std::vector<std::vector<int>>& groups) {
    const bool row_ok = row.rank() == 1 || (row.rank() == 2 && row.rows() == 1);
    if (!row_ok) {
        throw std::invalid_argument("gather_mean_cols: expected a single row, got " +
                                    shape_str(row.shape()));
    }
    const int width = static_cast<int>(row.numel());
    if (groups.empty()) throw std::invalid_argument("gather_mean_cols: no groups given");
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("gather_mean_cols: empty group");
        for (int id : g) {
            if (id < 0 || id >= width) {
                throw std::out_of_range("gather_mean_cols: index " + std::to_string(id) +
                                        " out of range [0, " + std::to_string(width) + ")");
            }
        }
    }
    const int c = static_cast<int>(groups.size());
    Tensor out = Tensor::zeros({1, c});
    const float* pr = row.data().data();
    float* po = out.data().data();
    for (int i = 0; i < c; ++i) {
        double acc = 0.0;
        for (int id : groups[i]) acc += pr[id];
        po[i] = static_cast<float>(acc / double(groups[i].size()));
    }
    maybe_record("gather_mean_cols", {row}, out, [row, out, groups, c]() {
        if (!grad_ready(out)) return;
        const float* g = out.node()->grad.data();
        if (row.requires_grad()) {
            auto& gr = ensure_grad(row.node());
            for (int i = 0; i < c; ++i) {
                const float w = g[i] / float(groups[i].size());
                for (int id : groups[i]) gr[id] += w;
            }
        }
    });
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    Tape* tape = Tape::active();
    if (!tape) {
        throw std::logic_error("backward: no active tape on this thread");
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: loss is not connected to the tape");
    }
    ensure_grad(loss.node());
    loss.node()->grad[0] = 1.0f;
    for (size_t i = tape->records_.size(); i > 0; --i) {
        const Tape::Record& rec = tape->records_[i - 1];
        rec.backward();
    }
}

}  // namespace peftt
