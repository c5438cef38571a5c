#ifndef ICFLOW_OBJECTIVE_HPP
#define ICFLOW_OBJECTIVE_HPP

#include "icflow/graph.hpp"
#include "icflow/identity.hpp"
#include "icflow/tokens.hpp"

namespace icflow {

struct LossConfig {
    double alpha_fm = 0.75;
    double lambda_id = 0.30;
    double lambda_h = 0.25;
    double omega_min = 0.25;
};

struct LossBreakdown {
    double l_fm = 0.0;
    double l_ref_id = 0.0;
    double l_hard = 0.0;
    double omega = 0.0;
    double lambda_h_star = 0.0;
    double total = 0.0;
    bool has_refs = false;

    // total == alpha_fm*l_fm + lambda_id*omega*((1-l*)l_ref + l*ated l_hard)
    void check_identity(const LossConfig& cfg, double tol = 1e-6) const;
};

// mean squared error over all elements; sigma-independent (w(sigma) = 1)
Value flow_loss(Graph& g, Value u_hat, const Tensor& u_star);

// 1 - cos(stub(decoded), target); the target is a stopped-gradient constant
Value cosine_id_loss(Graph& g, Value decoded_image, const StubEncoder& stub,
                     const Tensor& target_direction);

// sigma weight for the identity bracket: max(1-sigma, omega_min)^2
double omega_weight(double sigma, double omega_min);

// stabilizer mix: lambda_h * (1 - cos(e_ref, e_gt)), in [0, 2*lambda_h]
double lambda_h_star(const Tensor& e_ref, const Tensor& e_gt, double lambda_h);

struct TotalLossInputs {
    Value u_hat;
    Tensor u_star;
    Tensor z_sigma_tokens;
    double sigma = 0.0;
    bool has_refs = false;
    Tensor e_ref;  // unit anchor direction; only read when has_refs
    Tensor e_gt;   // unit stub direction of the clean target; only read when has_refs
};

struct TotalLoss {
    Value total;
    LossBreakdown breakdown;
};

// composite objective. Identity terms are computed on the decoded clean
// estimate z_hat0 = z_sigma - sigma*u_hat; with no references the identity
// bracket contributes exactly zero. Gradients flow through u_hat only.
TotalLoss total_loss(Graph& g, const TotalLossInputs& in, const Patchify& codec,
                     const StubEncoder& stub, const LossConfig& cfg);

}  // namespace icflow

#endif
