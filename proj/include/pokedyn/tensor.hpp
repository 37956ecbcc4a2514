#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pokedyn {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s);

/// One value node on a tape. Gradients are allocated lazily and accumulate
/// additively across fan-out.
struct TensorNode {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;
    bool requires_grad = false;

    std::size_t size() const { return val.size(); }

    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

/// Cheap handle to a tape node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t size() const { return n_->val.size(); }

    std::vector<double>& val() { return n_->val; }
    const std::vector<double>& val() const { return n_->val; }
    std::vector<double>& grad() const { n_->ensure_grad(); return n_->grad; }
    const std::vector<double>& grad_view() const { return n_->grad; }

    double scalar() const {
        if (n_->val.size() != 1) throw std::invalid_argument("tensor is not scalar");
        return n_->val[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool b) { n_->requires_grad = b; }

    TensorNode* node() const { return n_.get(); }

private:
    std::shared_ptr<TensorNode> n_;
};

}  // namespace pokedyn
