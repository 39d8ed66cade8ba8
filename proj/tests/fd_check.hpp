#pragma once

// Test-side finite-difference oracle, independent of the library's own
// gradcheck: rebuilds the forward graph from scratch around each bumped
// parameter element and compares central differences against one analytic
// backward pass.

#include <cmath>
#include <functional>
#include <vector>

#include "gccm/autodiff.hpp"

namespace fd {

struct CheckResult {
    double max_error = 0.0;   // relative, absolute below the small-magnitude floor
    std::size_t checked = 0;
};

inline CheckResult check_gradients(const std::function<gccm::ad::Var()>& build,
                                   std::vector<gccm::ad::Var>& leaves, double h = 1e-5,
                                   double small = 1e-8) {
    gccm::ad::Var root = build();
    for (auto& leaf : leaves) leaf.zero_grad();
    gccm::ad::zero_grad(root);
    gccm::ad::backward(root);
    std::vector<gccm::Tensor> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    CheckResult result;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        gccm::Tensor& w = leaves[l].mutable_value();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double saved = w[k];
            w[k] = saved + h;
            const double up = build().value()(0, 0);
            w[k] = saved - h;
            const double down = build().value()(0, 0);
            w[k] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[l][k];
            const double mag = std::max(std::abs(fd), std::abs(an));
            const double err = mag < small ? std::abs(fd - an) : std::abs(fd - an) / mag;
            result.max_error = std::max(result.max_error, err);
            ++result.checked;
        }
    }
    return result;
}

}  // namespace fd
