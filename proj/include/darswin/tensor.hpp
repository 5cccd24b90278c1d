#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace darswin {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (const auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

/// Dense double tensor with reverse-mode autodiff. Copying a Tensor shares
/// the underlying node; a fresh graph is built per training step. Values that
/// participate in a live graph are never mutated in place.
class Tensor {
  public:
    struct Node {
        Shape shape;
        std::vector<double> val;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;

        void ensure_grad() {
            if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
        }
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (values.size() != numel(shape))
            throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->val = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->val.size(); }
    std::vector<double>& value() { return node_->val; }
    const std::vector<double>& value() const { return node_->val; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<Node> node() const { return node_; }

    void zero_grad() { node_->grad.assign(node_->val.size(), 0.0); }

    double item() const {
        if (size() != 1)
            throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
        return node_->val[0];
    }

  private:
    std::shared_ptr<Node> node_;
};

namespace ops {

inline Tensor make_op(Shape shape, std::vector<double> val, std::vector<Tensor> parents,
                      std::function<void(Tensor::Node&)> backward) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string("tensor: ") + op + " shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        for (int p = 0; p < 2; ++p) {
            auto& par = *n.parents[p];
            if (!par.requires_grad) continue;
            par.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
    return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.val[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.val[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * c;
    return make_op(a.shape(), std::move(v), {a}, [c](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * c;
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + c;
    return make_op(a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    });
}

/// x viewed as [rows, D] plus a broadcast row vector v of length D.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.shape().empty() || v.shape().size() != 1 || x.shape().back() != v.shape()[0])
        throw std::invalid_argument("tensor: add_rowvec needs x [*, D] and v [D], got " +
                                    shape_str(x.shape()) + " and " + shape_str(v.shape()));
    const std::size_t d = v.shape()[0];
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.value()[r * d + j] + v.value()[j];
    return make_op(x.shape(), std::move(out), {x, v}, [d, rows](Tensor::Node& n) {
        auto& px = *n.parents[0];
        auto& pv = *n.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) pv.grad[j] += n.grad[r * d + j];
        }
    });
}

/// a [*, M, K] with b either [K, N] (shared right matrix) or [*, K, N]
/// (matching batch). Leading axes of a are collapsed into the batch.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2)
        throw std::invalid_argument("tensor: matmul needs >= 2-d inputs, got " + shape_str(sa) +
                                    " and " + shape_str(sb));
    const std::size_t M = sa[sa.size() - 2], K = sa[sa.size() - 1];
    const std::size_t Kb = sb[sb.size() - 2], N = sb[sb.size() - 1];
    const bool shared_b = sb.size() == 2;
    if (K != Kb)
        throw std::invalid_argument("tensor: matmul inner dim mismatch " + shape_str(sa) + " x " +
                                    shape_str(sb));
    const std::size_t batch = a.size() / (M * K);
    if (!shared_b && b.size() / (Kb * N) != batch)
        throw std::invalid_argument("tensor: matmul batch mismatch " + shape_str(sa) + " x " +
                                    shape_str(sb));
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.back() = M;
    out_shape.push_back(N);
    std::vector<double> out(batch * M * N, 0.0);
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    for (std::size_t bt = 0; bt < batch; ++bt) {
        const double* A = pa + bt * M * K;
        const double* B = pb + (shared_b ? 0 : bt * K * N);
        double* C = out.data() + bt * M * N;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                const double aik = A[i * K + k];
                if (aik == 0.0) continue;
                const double* Brow = B + k * N;
                double* Crow = C + i * N;
                for (std::size_t j = 0; j < N; ++j) Crow[j] += aik * Brow[j];
            }
    }
    return make_op(std::move(out_shape), std::move(out), {a, b},
                   [M, K, N, batch, shared_b](Tensor::Node& n) {
                       auto& na = *n.parents[0];
                       auto& nb = *n.parents[1];
                       const double* G = n.grad.data();
                       if (na.requires_grad) {
                           na.ensure_grad();
                           for (std::size_t bt = 0; bt < batch; ++bt) {
                               const double* Gb = G + bt * M * N;
                               const double* B = nb.val.data() + (shared_b ? 0 : bt * K * N);
                               double* dA = na.grad.data() + bt * M * K;
                               for (std::size_t i = 0; i < M; ++i)
                                   for (std::size_t j = 0; j < N; ++j) {
                                       const double gij = Gb[i * N + j];
                                       if (gij == 0.0) continue;
                                       for (std::size_t k = 0; k < K; ++k)
                                           dA[i * K + k] += gij * B[k * N + j];
                                   }
                           }
                       }
                       if (nb.requires_grad) {
                           nb.ensure_grad();
                           for (std::size_t bt = 0; bt < batch; ++bt) {
                               const double* Gb = G + bt * M * N;
                               const double* A = na.val.data() + bt * M * K;
                               double* dB = nb.grad.data() + (shared_b ? 0 : bt * K * N);
                               for (std::size_t i = 0; i < M; ++i)
                                   for (std::size_t k = 0; k < K; ++k) {
                                       const double aik = A[i * K + k];
                                       if (aik == 0.0) continue;
                                       for (std::size_t j = 0; j < N; ++j)
                                           dB[k * N + j] += aik * Gb[i * N + j];
                                   }
                           }
                       }
                   });
}

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    if (numel(new_shape) != a.size())
        throw std::invalid_argument("tensor: reshape " + shape_str(a.shape()) + " -> " +
                                    shape_str(new_shape) + " changes element count");
    return make_op(std::move(new_shape), a.value(), {a}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    });
}

namespace detail {
inline std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}
}  // namespace detail

inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const Shape& s = a.shape();
    if (axes.size() != s.size())
        throw std::invalid_argument("tensor: permute axes rank mismatch for " + shape_str(s));
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = s[axes[i]];
    const auto in_strides = detail::strides_of(s);
    const auto out_strides = detail::strides_of(out_shape);
    // Map flat output index -> flat input index once; reuse in backward.
    auto mapping = std::make_shared<std::vector<std::size_t>>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t o = 0; o < out.size(); ++o) {
        std::size_t rem = o, in_idx = 0;
        for (std::size_t d = 0; d < out_shape.size(); ++d) {
            const std::size_t coord = rem / out_strides[d];
            rem %= out_strides[d];
            in_idx += coord * in_strides[axes[d]];
        }
        (*mapping)[o] = in_idx;
        out[o] = a.value()[in_idx];
    }
    return make_op(std::move(out_shape), std::move(out), {a}, [mapping](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t o = 0; o < n.grad.size(); ++o) pa.grad[(*mapping)[o]] += n.grad[o];
    });
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size() || axis >= sa.size())
        throw std::invalid_argument("tensor: concat rank/axis mismatch " + shape_str(sa) + " vs " +
                                    shape_str(sb));
    for (std::size_t d = 0; d < sa.size(); ++d)
        if (d != axis && sa[d] != sb[d])
            throw std::invalid_argument("tensor: concat off-axis mismatch " + shape_str(sa) +
                                        " vs " + shape_str(sb));
    Shape out_shape = sa;
    out_shape[axis] += sb[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= sa[d];
    for (std::size_t d = axis + 1; d < sa.size(); ++d) inner *= sa[d];
    const std::size_t wa = sa[axis] * inner, wb = sb[axis] * inner;
    std::vector<double> out(numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.value().data() + o * wa, wa, out.data() + o * (wa + wb));
        std::copy_n(b.value().data() + o * wb, wb, out.data() + o * (wa + wb) + wa);
    }
    return make_op(std::move(out_shape), std::move(out), {a, b}, [outer, wa, wb](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* g = n.grad.data() + o * (wa + wb);
            if (pa.requires_grad)
                for (std::size_t i = 0; i < wa; ++i) pa.grad[o * wa + i] += g[i];
            if (pb.requires_grad)
                for (std::size_t i = 0; i < wb; ++i) pb.grad[o * wb + i] += g[wa + i];
        }
    });
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& s = a.shape();
    if (axis >= s.size() || start + len > s[axis])
        throw std::invalid_argument("tensor: slice axis=" + std::to_string(axis) + " [" +
                                    std::to_string(start) + "," + std::to_string(start + len) +
                                    ") out of " + shape_str(s));
    Shape out_shape = s;
    out_shape[axis] = len;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t w_in = s[axis] * inner, w_out = len * inner, off = start * inner;
    std::vector<double> out(numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(a.value().data() + o * w_in + off, w_out, out.data() + o * w_out);
    return make_op(std::move(out_shape), std::move(out), {a},
                   [outer, w_in, w_out, off](Tensor::Node& n) {
                       auto& pa = *n.parents[0];
                       pa.ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < w_out; ++i)
                               pa.grad[o * w_in + off + i] += n.grad[o * w_out + i];
                   });
}

/// Row gather on a [N, D] tensor; indices may repeat (backward scatter-adds).
inline Tensor gather_rows(const Tensor& a, std::shared_ptr<std::vector<std::uint32_t>> idx) {
    if (a.shape().size() != 2)
        throw std::invalid_argument("tensor: gather_rows needs a 2-d input, got " +
                                    shape_str(a.shape()));
    const std::size_t d = a.shape()[1];
    const std::size_t rows = a.shape()[0];
    for (const auto i : *idx)
        if (i >= rows)
            throw std::invalid_argument("tensor: gather index " + std::to_string(i) +
                                        " out of rows " + std::to_string(rows));
    std::vector<double> out(idx->size() * d);
    for (std::size_t r = 0; r < idx->size(); ++r)
        std::copy_n(a.value().data() + (*idx)[r] * d, d, out.data() + r * d);
    return make_op({idx->size(), d}, std::move(out), {a}, [idx, d](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < idx->size(); ++r) {
            const std::size_t src = r * d, dst = (*idx)[r] * d;
            for (std::size_t j = 0; j < d; ++j) pa.grad[dst + j] += n.grad[src + j];
        }
    });
}

inline Tensor gather_rows(const Tensor& a, std::vector<std::uint32_t> idx) {
    return gather_rows(a, std::make_shared<std::vector<std::uint32_t>>(std::move(idx)));
}

/// Repeats the whole tensor `times` along a new leading axis.
inline Tensor tile0(const Tensor& a, std::size_t times) {
    Shape out_shape;
    out_shape.push_back(times);
    for (const auto d : a.shape()) out_shape.push_back(d);
    std::vector<double> out(a.size() * times);
    for (std::size_t t = 0; t < times; ++t)
        std::copy_n(a.value().data(), a.size(), out.data() + t * a.size());
    const std::size_t n_in = a.size();
    return make_op(std::move(out_shape), std::move(out), {a}, [times, n_in](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t t = 0; t < times; ++t)
            for (std::size_t i = 0; i < n_in; ++i) pa.grad[i] += n.grad[t * n_in + i];
    });
}

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (const double v : a.value()) s += v;
    return make_op({1}, {s}, {a}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (auto& g : pa.grad) g += n.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (const double v : a.value()) s += v;
    const double inv = 1.0 / a.size();
    return make_op({1}, {s * inv}, {a}, [inv](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (auto& g : pa.grad) g += n.grad[0] * inv;
    });
}

inline Tensor sqrt_elem(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.value()[i]);
    return make_op(a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] * 0.5 / std::max(n.val[i], 1e-300);
    });
}

inline Tensor softmax_last(const Tensor& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.size() / d;
    std::vector<double> v(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.value().data() + r * d;
        double mx = x[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += std::exp(x[j] - mx);
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < d; ++j) v[r * d + j] = std::exp(x[j] - mx) * inv;
    }
    return make_op(a.shape(), std::move(v), {a}, [d, rows](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.val.data() + r * d;
            const double* gy = n.grad.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            double* gx = pa.grad.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

inline Tensor layer_norm_last(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps = 1e-5) {
    const std::size_t d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw std::invalid_argument("tensor: layer_norm parameter shape must be [" +
                                    std::to_string(d) + "]");
    const std::size_t rows = x.size() / d;
    std::vector<double> v(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.value().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mu) * is;
            (*xhat)[r * d + j] = xh;
            v[r * d + j] = gamma.value()[j] * xh + beta.value()[j];
        }
    }
    return make_op(x.shape(), std::move(v), {x, gamma, beta},
                   [d, rows, xhat, inv_std](Tensor::Node& n) {
                       auto& px = *n.parents[0];
                       auto& pg = *n.parents[1];
                       auto& pb = *n.parents[2];
                       if (pg.requires_grad) pg.ensure_grad();
                       if (pb.requires_grad) pb.ensure_grad();
                       if (px.requires_grad) px.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* gy = n.grad.data() + r * d;
                           const double* xh = xhat->data() + r * d;
                           if (pg.requires_grad)
                               for (std::size_t j = 0; j < d; ++j) pg.grad[j] += gy[j] * xh[j];
                           if (pb.requires_grad)
                               for (std::size_t j = 0; j < d; ++j) pb.grad[j] += gy[j];
                           if (px.requires_grad) {
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double dxh = gy[j] * pg.val[j];
                                   m1 += dxh;
                                   m2 += dxh * xh[j];
                               }
                               m1 /= d;
                               m2 /= d;
                               const double is = (*inv_std)[r];
                               double* gx = px.grad.data() + r * d;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double dxh = gy[j] * pg.val[j];
                                   gx[j] += is * (dxh - m1 - xh[j] * m2);
                               }
                           }
                       }
                   });
}

inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = a.value()[i];
        v[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return make_op(a.shape(), std::move(v), {a}, [inv_sqrt2, inv_sqrt2pi](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = pa.val[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            pa.grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

}  // namespace ops

/// Reverse topological traversal from a scalar loss; gradients accumulate
/// additively across fan-out.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("tensor: backward requires a scalar loss, got " +
                                    shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw std::invalid_argument("tensor: loss is not connected to any parameter");
    std::vector<Tensor::Node*> topo;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Tensor::Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

}  // namespace darswin
