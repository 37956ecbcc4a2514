#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>

#include "pokedyn/tensor.hpp"

namespace pokedyn {

/// Reverse-mode tape over dense double tensors. Forward values are computed
/// eagerly when an op is recorded; backward() replays the recorded closures
/// in reverse order. A tape is single-threaded; run concurrent work on
/// separate tapes.
class Tape {
public:
    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad);
    Tensor leaf(Shape shape, double fill, bool requires_grad);
    Tensor constant(Shape shape, std::vector<double> data) { return leaf(std::move(shape), std::move(data), false); }
    Tensor scalar_const(double v) { return leaf({1}, {v}, false); }

    // elementwise
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor add_scalar(const Tensor& a, double s);
    Tensor relu(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor abs(const Tensor& a);  // subgradient 0 at zero

    // shape plumbing
    Tensor reshape(const Tensor& a, Shape shape);
    Tensor concat(const Tensor& a, const Tensor& b);           // flat vectors
    Tensor concat_channels(const Tensor& a, const Tensor& b);  // [Ca,H,W]+[Cb,H,W]
    Tensor gather(const Tensor& a, const std::vector<int>& idx);

    // reductions
    Tensor reduce_sum(const Tensor& a);
    Tensor min_reduce(const Tensor& a);  // ties broken toward lowest flat index

    // linear algebra / nn
    Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k] x [k,n]
    Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);  // w:[out,in], x:[in]
    Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
    Tensor upsample2x(const Tensor& x);                        // nearest, [C,H,W] -> [C,2H,2W]
    Tensor softmax(const Tensor& a);                           // over the flattened tensor
    Tensor softmax_channels(const Tensor& a);                  // [K,H,W], per-pixel over K
    Tensor cross_entropy(const Tensor& probs, int target_index);  // clamped at 1e-12
    Tensor l1_to_const(const Tensor& a, const std::vector<double>& target,
                       const std::vector<uint8_t>* mask = nullptr);

    /// Custom-op escape hatch: allocate an output node and register its
    /// backward closure. The closure reads out->grad and accumulates into
    /// the inputs' grads.
    Tensor make_node(Shape shape, bool requires_grad);
    void push_backward(std::function<void()> fn);

    void backward(const Tensor& root);

    std::size_t num_ops() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
    std::vector<Tensor> nodes_;
};

/// Result of a central finite-difference gradient check.
struct FdReport {
    double max_rel_err = 0.0;
    std::vector<int> flagged;      // coordinates exceeding tol
    std::vector<int> nonfinite;    // coordinates where f was non-finite at a probe
    bool ok(void) const { return flagged.empty() && nonfinite.empty(); }
};

/// f maps a flat coordinate vector to (value, analytic gradient). The
/// analytic gradient at x is compared against central differences of the
/// value alone. Relative error is |a-d| / max(|a|,|d|,1e-8).
FdReport finite_difference_check(
    const std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>& f,
    const std::vector<double>& x, double step, double tol);

}  // namespace pokedyn
