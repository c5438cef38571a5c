#ifndef ICFLOW_TESTS_GRADCHECK_HPP
#define ICFLOW_TESTS_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "icflow/tensor.hpp"

namespace icflow::testutil {

// Central finite differences: the test-side oracle for every analytic
// gradient. `f` evaluates the scalar objective at the given leaf values.
using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

inline std::vector<Tensor> fd_gradients(const ScalarFn& f, std::vector<Tensor> leaves,
                                        double step = 1e-3) {
    std::vector<Tensor> grads;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor g(leaves[li].shape());
        for (Index i = 0; i < leaves[li].numel(); ++i) {
            const double saved = leaves[li].at(i);
            leaves[li].at(i) = saved + step;
            const double up = f(leaves);
            leaves[li].at(i) = saved - step;
            const double down = f(leaves);
            leaves[li].at(i) = saved;
            g.at(i) = (up - down) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// max over components of |analytic - fd| / max(1e-8, |analytic|, |fd|)
inline double max_relative_error(const std::vector<Tensor>& analytic,
                                 const std::vector<Tensor>& fd) {
    double worst = 0.0;
    for (std::size_t li = 0; li < analytic.size(); ++li)
        for (Index i = 0; i < analytic[li].numel(); ++i) {
            const double a = analytic[li].at(i);
            const double b = fd[li].at(i);
            const double denom = std::max({1e-8, std::fabs(a), std::fabs(b)});
            worst = std::max(worst, std::fabs(a - b) / denom);
        }
    return worst;
}

// spot-check a sparse list of (leaf, element) coordinates instead of full FD
struct SparseCoord {
    std::size_t leaf;
    Index element;
};

inline double max_relative_error_sparse(const ScalarFn& f, std::vector<Tensor> leaves,
                                        const std::vector<Tensor>& analytic,
                                        const std::vector<SparseCoord>& coords,
                                        double step = 1e-3) {
    double worst = 0.0;
    for (const auto& c : coords) {
        const double saved = leaves[c.leaf].at(c.element);
        leaves[c.leaf].at(c.element) = saved + step;
        const double up = f(leaves);
        leaves[c.leaf].at(c.element) = saved - step;
        const double down = f(leaves);
        leaves[c.leaf].at(c.element) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double a = analytic[c.leaf].at(c.element);
        const double denom = std::max({1e-8, std::fabs(a), std::fabs(fd)});
        worst = std::max(worst, std::fabs(a - fd) / denom);
    }
    return worst;
}

}  // namespace icflow::testutil

#endif
