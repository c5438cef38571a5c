#ifndef ICFLOW_FLOW_HPP
#define ICFLOW_FLOW_HPP

#include <cstdint>
#include <functional>

#include "icflow/rng.hpp"
#include "icflow/tensor.hpp"

namespace icflow {

// z_sigma = (1-sigma) z0 + sigma eps, u_star = eps - z0
struct NoisedState {
    Tensor z_sigma;
    Tensor u_star;
    double sigma = 0.0;
};

struct SamplerConfig {
    int steps = 12;
    double guidance_scale = 4.0;
    std::uint64_t seed = 42;
};

NoisedState noise(const Tensor& z0, const Tensor& eps, double sigma);

// z_sigma - sigma * u_hat
Tensor recover(const Tensor& z_sigma, const Tensor& u_hat, double sigma);

// training sigma law: uniform on [0,1]
double sample_sigma(RngStream& rng);

enum class FlowBranch { Conditional, Unconditional };

// flow prediction at (z, sigma) for one guidance branch
using FlowFn = std::function<Tensor(const Tensor& z, double sigma, FlowBranch branch)>;

// Euler integration of the predicted flow from sigma=1 to sigma=0 over a
// uniform grid of cfg.steps intervals. With guidance g != 1 the applied flow
// per step is u_uncond + g * (u_cond - u_uncond); at g == 1 only the
// conditional branch is evaluated so the combination collapses exactly.
// The initial state is standard normal noise drawn from cfg.seed.
Tensor integrate(const FlowFn& model, const Shape& latent_shape, const SamplerConfig& cfg);

}  // namespace icflow

#endif
