#include "pokedyn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pokedyn {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tape::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("leaf: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    Tensor t(std::move(n));
    nodes_.push_back(t);
    return t;
}

Tensor Tape::leaf(Shape shape, double fill, bool requires_grad) {
    std::vector<double> d(shape_numel(shape), fill);
    return leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tape::make_node(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->val.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    Tensor t(std::move(n));
    nodes_.push_back(t);
    return t;
}

void Tape::push_backward(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

void Tape::backward(const Tensor& root) {
    if (root.size() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.shape()));
    // Allocate every gradient buffer up front so branches that do not reach
    // the root (their grads stay zero) are safe to replay.
    for (auto& n : nodes_)
        if (n.requires_grad()) n.node()->ensure_grad();
    root.grad()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] + b.val()[i];
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on] {
            if (an->requires_grad) { an->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i]; }
            if (bn->requires_grad) { bn->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) bn->grad[i] += on->grad[i]; }
        });
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] - b.val()[i];
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on] {
            if (an->requires_grad) { an->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i]; }
            if (bn->requires_grad) { bn->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) bn->grad[i] -= on->grad[i]; }
        });
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] * b.val()[i];
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on] {
            if (an->requires_grad) { an->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i] * bn->val[i]; }
            if (bn->requires_grad) { bn->ensure_grad();
                for (std::size_t i = 0; i < on->size(); ++i) bn->grad[i] += on->grad[i] * an->val[i]; }
        });
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] * s;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on, s] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i] * s;
        });
    }
    return out;
}

Tensor Tape::add_scalar(const Tensor& a, double s) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] + s;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = a.val()[i] > 0 ? a.val()[i] : 0.0;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i)
                if (an->val[i] > 0) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor Tape::exp(const Tensor& a) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = std::exp(a.val()[i]);
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i] * on->val[i];
        });
    }
    return out;
}

Tensor Tape::abs(const Tensor& a) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < out.size(); ++i) out.val()[i] = std::fabs(a.val()[i]);
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i) {
                double v = an->val[i];
                if (v > 0) an->grad[i] += on->grad[i];
                else if (v < 0) an->grad[i] -= on->grad[i];
            }
        });
    }
    return out;
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out = make_node(std::move(shape), a.requires_grad());
    out.val() = a.val();
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
    Tensor out = make_node({static_cast<int>(a.size() + b.size())},
                           a.requires_grad() || b.requires_grad());
    std::copy(a.val().begin(), a.val().end(), out.val().begin());
    std::copy(b.val().begin(), b.val().end(), out.val().begin() + a.size());
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on] {
            if (an->requires_grad) { an->ensure_grad();
                for (std::size_t i = 0; i < an->size(); ++i) an->grad[i] += on->grad[i]; }
            if (bn->requires_grad) { bn->ensure_grad();
                for (std::size_t i = 0; i < bn->size(); ++i) bn->grad[i] += on->grad[an->size() + i]; }
        });
    }
    return out;
}

Tensor Tape::concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3 ||
        a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
        throw std::invalid_argument("concat_channels: expects [C,H,W] with matching H,W");
    int ca = a.shape()[0], cb = b.shape()[0], h = a.shape()[1], w = a.shape()[2];
    Tensor out = make_node({ca + cb, h, w}, a.requires_grad() || b.requires_grad());
    std::copy(a.val().begin(), a.val().end(), out.val().begin());
    std::copy(b.val().begin(), b.val().end(), out.val().begin() + a.size());
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on] {
            if (an->requires_grad) { an->ensure_grad();
                for (std::size_t i = 0; i < an->size(); ++i) an->grad[i] += on->grad[i]; }
            if (bn->requires_grad) { bn->ensure_grad();
                for (std::size_t i = 0; i < bn->size(); ++i) bn->grad[i] += on->grad[an->size() + i]; }
        });
    }
    return out;
}

Tensor Tape::gather(const Tensor& a, const std::vector<int>& idx) {
    for (int i : idx)
        if (i < 0 || static_cast<std::size_t>(i) >= a.size())
            throw std::invalid_argument("gather: index out of range");
    Tensor out = make_node({static_cast<int>(idx.size())}, a.requires_grad());
    for (std::size_t i = 0; i < idx.size(); ++i) out.val()[i] = a.val()[idx[i]];
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on, idx] {
            an->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) an->grad[idx[i]] += on->grad[i];
        });
    }
    return out;
}

Tensor Tape::reduce_sum(const Tensor& a) {
    Tensor out = make_node({1}, a.requires_grad());
    double s = 0.0;
    for (double v : a.val()) s += v;
    out.val()[0] = s;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->size(); ++i) an->grad[i] += on->grad[0];
        });
    }
    return out;
}

Tensor Tape::min_reduce(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("min_reduce: empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i)
        if (a.val()[i] < a.val()[best]) best = i;
    Tensor out = make_node({1}, a.requires_grad());
    out.val()[0] = a.val()[best];
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on, best] {
            an->ensure_grad();
            an->grad[best] += on->grad[0];
        });
    }
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out = make_node({m, n}, a.requires_grad() || b.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += a.val()[i * k + l] * b.val()[l * n + j];
            out.val()[i * n + j] = s;
        }
    if (out.requires_grad()) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node();
        push_backward([an, bn, on, m, k, n] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        double s = 0.0;
                        for (int j = 0; j < n; ++j) s += on->grad[i * n + j] * bn->val[l * n + j];
                        an->grad[i * k + l] += s;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int l = 0; l < k; ++l)
                    for (int j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < m; ++i) s += an->val[i * k + l] * on->grad[i * n + j];
                        bn->grad[l * n + j] += s;
                    }
            }
        });
    }
    return out;
}

Tensor Tape::dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.shape().size() != 2 || x.size() != static_cast<std::size_t>(w.shape()[1]) ||
        b.size() != static_cast<std::size_t>(w.shape()[0]))
        throw std::invalid_argument("dense: incompatible shapes");
    int out_dim = w.shape()[0], in_dim = w.shape()[1];
    Tensor out = make_node({out_dim}, x.requires_grad() || w.requires_grad() || b.requires_grad());
    for (int o = 0; o < out_dim; ++o) {
        double s = b.val()[o];
        const double* wr = &w.val()[static_cast<std::size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) s += wr[i] * x.val()[i];
        out.val()[o] = s;
    }
    if (out.requires_grad()) {
        auto xn = x.node(); auto wn = w.node(); auto bnn = b.node(); auto on = out.node();
        push_backward([xn, wn, bnn, on, out_dim, in_dim] {
            if (bnn->requires_grad) {
                bnn->ensure_grad();
                for (int o = 0; o < out_dim; ++o) bnn->grad[o] += on->grad[o];
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int o = 0; o < out_dim; ++o) {
                    double g = on->grad[o];
                    if (g == 0.0) continue;
                    double* wr = &wn->grad[static_cast<std::size_t>(o) * in_dim];
                    for (int i = 0; i < in_dim; ++i) wr[i] += g * xn->val[i];
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int o = 0; o < out_dim; ++o) {
                    double g = on->grad[o];
                    if (g == 0.0) continue;
                    const double* wr = &wn->val[static_cast<std::size_t>(o) * in_dim];
                    for (int i = 0; i < in_dim; ++i) xn->grad[i] += g * wr[i];
                }
            }
        });
    }
    return out;
}

Tensor Tape::conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.shape().size() != 3 || w.shape().size() != 4 || x.shape()[0] != w.shape()[1])
        throw std::invalid_argument("conv2d: expects x [C,H,W], w [O,C,kh,kw]");
    int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    int O = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (b.size() != static_cast<std::size_t>(O))
        throw std::invalid_argument("conv2d: bias length must equal output channels");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor out = make_node({O, Ho, Wo}, x.requires_grad() || w.requires_grad() || b.requires_grad());

    auto xv = x.val().data();
    auto wv = w.val().data();
    for (int o = 0; o < O; ++o)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double s = b.val()[o];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= W) continue;
                            s += wv[((o * C + c) * kh + ky) * kw + kx] * xv[(c * H + iy) * W + ix];
                        }
                    }
                out.val()[(o * Ho + oy) * Wo + ox] = s;
            }

    if (out.requires_grad()) {
        auto xn = x.node(); auto wn = w.node(); auto bnn = b.node(); auto on = out.node();
        push_backward([xn, wn, bnn, on, C, H, W, O, kh, kw, Ho, Wo, stride, pad] {
            if (bnn->requires_grad) bnn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (int o = 0; o < O; ++o)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        double g = on->grad[(o * Ho + oy) * Wo + ox];
                        if (g == 0.0) continue;
                        if (bnn->requires_grad) bnn->grad[o] += g;
                        for (int c = 0; c < C; ++c)
                            for (int ky = 0; ky < kh; ++ky) {
                                int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    int ix = ox * stride + kx - pad;
                                    if (ix < 0 || ix >= W) continue;
                                    std::size_t wi = ((static_cast<std::size_t>(o) * C + c) * kh + ky) * kw + kx;
                                    std::size_t xi = (static_cast<std::size_t>(c) * H + iy) * W + ix;
                                    if (wn->requires_grad) wn->grad[wi] += g * xn->val[xi];
                                    if (xn->requires_grad) xn->grad[xi] += g * wn->val[wi];
                                }
                            }
                    }
        });
    }
    return out;
}

Tensor Tape::upsample2x(const Tensor& x) {
    if (x.shape().size() != 3) throw std::invalid_argument("upsample2x: expects [C,H,W]");
    int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    Tensor out = make_node({C, 2 * H, 2 * W}, x.requires_grad());
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx)
                out.val()[(c * 2 * H + y) * 2 * W + xx] = x.val()[(c * H + y / 2) * W + xx / 2];
    if (out.requires_grad()) {
        auto xn = x.node(); auto on = out.node();
        push_backward([xn, on, C, H, W] {
            xn->ensure_grad();
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < 2 * H; ++y)
                    for (int xx = 0; xx < 2 * W; ++xx)
                        xn->grad[(c * H + y / 2) * W + xx / 2] += on->grad[(c * 2 * H + y) * 2 * W + xx];
        });
    }
    return out;
}

Tensor Tape::softmax(const Tensor& a) {
    Tensor out = make_node(a.shape(), a.requires_grad());
    double mx = a.val()[0];
    for (double v : a.val()) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) { out.val()[i] = std::exp(a.val()[i] - mx); z += out.val()[i]; }
    for (auto& v : out.val()) v /= z;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on] {
            an->ensure_grad();
            double dot = 0.0;
            for (std::size_t i = 0; i < on->size(); ++i) dot += on->grad[i] * on->val[i];
            for (std::size_t i = 0; i < on->size(); ++i)
                an->grad[i] += on->val[i] * (on->grad[i] - dot);
        });
    }
    return out;
}

Tensor Tape::softmax_channels(const Tensor& a) {
    if (a.shape().size() != 3) throw std::invalid_argument("softmax_channels: expects [K,H,W]");
    int K = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
    int HW = H * W;
    Tensor out = make_node(a.shape(), a.requires_grad());
    for (int p = 0; p < HW; ++p) {
        double mx = a.val()[p];
        for (int k = 1; k < K; ++k) mx = std::max(mx, a.val()[k * HW + p]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) { double e = std::exp(a.val()[k * HW + p] - mx); out.val()[k * HW + p] = e; z += e; }
        for (int k = 0; k < K; ++k) out.val()[k * HW + p] /= z;
    }
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        push_backward([an, on, K, HW] {
            an->ensure_grad();
            for (int p = 0; p < HW; ++p) {
                double dot = 0.0;
                for (int k = 0; k < K; ++k) dot += on->grad[k * HW + p] * on->val[k * HW + p];
                for (int k = 0; k < K; ++k)
                    an->grad[k * HW + p] += on->val[k * HW + p] * (on->grad[k * HW + p] - dot);
            }
        });
    }
    return out;
}

Tensor Tape::cross_entropy(const Tensor& probs, int target_index) {
    if (target_index < 0 || static_cast<std::size_t>(target_index) >= probs.size())
        throw std::invalid_argument("cross_entropy: target index out of range");
    constexpr double kFloor = 1e-12;
    Tensor out = make_node({1}, probs.requires_grad());
    double p = std::max(probs.val()[target_index], kFloor);
    out.val()[0] = -std::log(p);
    if (out.requires_grad()) {
        auto pn = probs.node(); auto on = out.node();
        push_backward([pn, on, target_index] {
            constexpr double kFloor = 1e-12;
            pn->ensure_grad();
            double p = std::max(pn->val[target_index], kFloor);
            if (pn->val[target_index] > kFloor) pn->grad[target_index] += on->grad[0] * (-1.0 / p);
        });
    }
    return out;
}

Tensor Tape::l1_to_const(const Tensor& a, const std::vector<double>& target,
                         const std::vector<uint8_t>* mask) {
    if (target.size() != a.size())
        throw std::invalid_argument("l1_to_const: length mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(target.size()));
    Tensor out = make_node({1}, a.requires_grad());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        s += std::fabs(a.val()[i] - target[i]);
    }
    out.val()[0] = s;
    if (out.requires_grad()) {
        auto an = a.node(); auto on = out.node();
        std::vector<double> tgt = target;
        std::vector<uint8_t> m = mask ? *mask : std::vector<uint8_t>();
        push_backward([an, on, tgt = std::move(tgt), m = std::move(m)] {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->size(); ++i) {
                if (!m.empty() && !m[i]) continue;
                double d = an->val[i] - tgt[i];
                if (d > 0) an->grad[i] += on->grad[0];
                else if (d < 0) an->grad[i] -= on->grad[0];
            }
        });
    }
    return out;
}

FdReport finite_difference_check(
    const std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>& f,
    const std::vector<double>& x, double step, double tol) {
    FdReport rep;
    auto [f0, analytic] = f(x);
    if (analytic.size() != x.size())
        throw std::invalid_argument("finite_difference_check: gradient length mismatch");
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + step;
        double fp = f(xp).first;
        xp[i] = x[i] - step;
        double fm = f(xp).first;
        xp[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            rep.nonfinite.push_back(static_cast<int>(i));
            continue;
        }
        double num = (fp - fm) / (2.0 * step);
        double ana = analytic[i];
        double denom = std::max({std::fabs(num), std::fabs(ana), 1e-8});
        double rel = std::fabs(num - ana) / denom;
        // absolute slack for coordinates where both gradients are tiny
        if (std::fabs(num - ana) < 10.0 * step * step) rel = 0.0;
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        if (rel > tol) rep.flagged.push_back(static_cast<int>(i));
    }
    (void)f0;
    return rep;
}

}  // namespace pokedyn
