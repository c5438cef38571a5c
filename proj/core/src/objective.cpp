#include "icflow/objective.hpp"

#include <cmath>

namespace icflow {

void LossBreakdown::check_identity(const LossConfig& cfg, double tol) const {
    const double bracket =
        has_refs ? cfg.lambda_id * omega * ((1.0 - lambda_h_star) * l_ref_id + lambda_h_star * l_hard)
                 : 0.0;
    const double expected = cfg.alpha_fm * l_fm + bracket;
    if (std::fabs(total - expected) > tol)
        throw NumericError("loss breakdown identity violated");
}

Value flow_loss(Graph& g, Value u_hat, const Tensor& u_star) {
    return mse(g, u_hat, g.input(u_star));
}

namespace {

// cos(emb, target) with target a unit constant
Value cos_to_target(Graph& g, Value emb, const Tensor& target) {
    Value dot = g.sum_all(g.mul(emb, g.input(target)));
    Value norm = g.esqrt(g.sum_all(g.mul(emb, emb)));
    if (g.val(norm).at(0) <= 1e-8) throw NumericError("degenerate decoded embedding");
    return g.div(dot, norm);
}

}  // namespace

Value cosine_id_loss(Graph& g, Value decoded_image, const StubEncoder& stub,
                     const Tensor& target_direction) {
    if (std::fabs(target_direction.l2_norm() - 1.0) > 1e-6)
        throw DomainError("cosine_id_loss: target must be unit norm");
    Value emb = stub.encode(g, decoded_image);
    return g.add_const(g.scale(cos_to_target(g, emb, target_direction), -1.0), 1.0);
}

double omega_weight(double sigma, double omega_min) {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw DomainError("omega: sigma outside [0,1]");
    const double base = std::max(1.0 - sigma, omega_min);
    return base * base;
}

double lambda_h_star(const Tensor& e_ref, const Tensor& e_gt, double lambda_h) {
    return lambda_h * (1.0 - dot(e_ref, e_gt));
}

TotalLoss total_loss(Graph& g, const TotalLossInputs& in, const Patchify& codec,
                     const StubEncoder& stub, const LossConfig& cfg) {
    TotalLoss out;
    Value l_fm = flow_loss(g, in.u_hat, in.u_star);
    Value total = g.scale(l_fm, cfg.alpha_fm);
    out.breakdown.l_fm = g.val(l_fm).at(0);
    out.breakdown.has_refs = in.has_refs;

    if (in.has_refs) {
        // decode the clean estimate and run the frozen encoder on it
        Value z_hat = g.sub(g.input(in.z_sigma_tokens), g.scale(in.u_hat, in.sigma));
        Value image = g.gather(z_hat, codec.unpack_perm(),
                               {codec.channels, codec.height, codec.width});
        Value emb = stub.encode(g, image);

        Value l_ref = g.add_const(g.scale(cos_to_target(g, emb, in.e_ref), -1.0), 1.0);
        Value l_hard = g.add_const(g.scale(cos_to_target(g, emb, in.e_gt), -1.0), 1.0);

        const double om = omega_weight(in.sigma, cfg.omega_min);
        const double lh = lambda_h_star(in.e_ref, in.e_gt, cfg.lambda_h);
        Value bracket = g.add(g.scale(l_ref, 1.0 - lh), g.scale(l_hard, lh));
        total = g.add(total, g.scale(bracket, cfg.lambda_id * om));

        out.breakdown.l_ref_id = g.val(l_ref).at(0);
        out.breakdown.l_hard = g.val(l_hard).at(0);
        out.breakdown.omega = om;
        out.breakdown.lambda_h_star = lh;
    }
    out.total = total;
    out.breakdown.total = g.val(total).at(0);
    out.breakdown.check_identity(cfg);
    return out;
}

}  // namespace icflow
