#include "icflow/flow.hpp"

namespace icflow {

NoisedState noise(const Tensor& z0, const Tensor& eps, double sigma) {
    if (!z0.same_shape(eps)) throw ShapeError("noise: z0 " + z0.shape_str() + " vs eps " + eps.shape_str());
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw DomainError("noise: sigma outside [0,1]");
    NoisedState st;
    st.sigma = sigma;
    st.z_sigma = Tensor(z0.shape());
    st.u_star = Tensor(z0.shape());
    for (Index i = 0; i < z0.numel(); ++i) {
        st.z_sigma.at(i) = (1.0 - sigma) * z0.at(i) + sigma * eps.at(i);
        st.u_star.at(i) = eps.at(i) - z0.at(i);
    }
    return st;
}

Tensor recover(const Tensor& z_sigma, const Tensor& u_hat, double sigma) {
    if (!z_sigma.same_shape(u_hat))
        throw ShapeError("recover: " + z_sigma.shape_str() + " vs " + u_hat.shape_str());
    Tensor z0(z_sigma.shape());
    for (Index i = 0; i < z_sigma.numel(); ++i) z0.at(i) = z_sigma.at(i) - sigma * u_hat.at(i);
    return z0;
}

double sample_sigma(RngStream& rng) { return rng.uniform(); }

Tensor integrate(const FlowFn& model, const Shape& latent_shape, const SamplerConfig& cfg) {
    if (cfg.steps < 1) throw DomainError("integrate: steps must be >= 1");
    RngStream rng(cfg.seed);
    Tensor z = Tensor::randn(latent_shape, rng);
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    for (int step = 0; step < cfg.steps; ++step) {
        const double sigma = 1.0 - static_cast<double>(step) * dt;
        Tensor u;
        if (cfg.guidance_scale == 1.0) {
            u = model(z, sigma, FlowBranch::Conditional);
        } else {
            const Tensor u_cond = model(z, sigma, FlowBranch::Conditional);
            const Tensor u_uncond = model(z, sigma, FlowBranch::Unconditional);
            if (!u_cond.same_shape(u_uncond)) throw ShapeError("integrate: branch shape mismatch");
            u = Tensor(u_cond.shape());
            for (Index i = 0; i < u.numel(); ++i)
                u.at(i) = u_uncond.at(i) + cfg.guidance_scale * (u_cond.at(i) - u_uncond.at(i));
        }
        if (!u.same_shape(z)) throw ShapeError("integrate: flow shape mismatch");
        for (Index i = 0; i < z.numel(); ++i) z.at(i) -= dt * u.at(i);
        z.check_finite("integrate step");
    }
    return z;
}

}  // namespace icflow
