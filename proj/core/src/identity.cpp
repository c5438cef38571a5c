#include "icflow/identity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icflow {

StubEncoder::StubEncoder(Index channels, Index height, Index width, Index id_dim, std::uint64_t seed)
    : channels_(channels), height_(height), width_(width), id_dim_(id_dim), seed_(seed) {
    // pool each channel down to at most 8x8
    const Index ph = std::max<Index>(1, height / 8);
    const Index pw = std::max<Index>(1, width / 8);
    if (height % ph != 0 || width % pw != 0) throw ShapeError("stub: image not poolable to 8x8");
    const Index gh = height / ph, gw = width / pw;
    const Index n_pool = channels * gh * gw;
    const Index n_px = pixels();

    // pooling matrix [n_pool, n_px]
    Tensor pool({n_pool, n_px});
    const double inv_cell = 1.0 / static_cast<double>(ph * pw);
    for (Index c = 0; c < channels; ++c)
        for (Index y = 0; y < gh; ++y)
            for (Index x = 0; x < gw; ++x) {
                const Index row = (c * gh + y) * gw + x;
                for (Index dy = 0; dy < ph; ++dy)
                    for (Index dx = 0; dx < pw; ++dx)
                        pool.at(row, (c * height_ + y * ph + dy) * width_ + x * pw + dx) = inv_cell;
            }

    // frozen random projection, then fold in mean-centering of the pooled vector
    RngStream rng(seed);
    Tensor proj = Tensor::randn({id_dim, n_pool}, rng, 1.0 / std::sqrt(static_cast<double>(n_pool)));
    for (Index r = 0; r < id_dim; ++r) {
        double row_sum = 0.0;
        for (Index c = 0; c < n_pool; ++c) row_sum += proj.at(r, c);
        const double row_mean = row_sum / static_cast<double>(n_pool);
        for (Index c = 0; c < n_pool; ++c) proj.at(r, c) -= row_mean;
    }

    // projection_ = proj * pool, composed once
    projection_ = Tensor({id_dim, n_px});
    for (Index r = 0; r < id_dim; ++r)
        for (Index p = 0; p < n_pool; ++p) {
            const double pv = proj.at(r, p);
            if (pv == 0.0) continue;
            for (Index c = 0; c < n_px; ++c) projection_.at(r, c) += pv * pool.at(p, c);
        }
}

Tensor StubEncoder::encode(const Tensor& image) const {
    if (image.numel() != pixels())
        throw ShapeError("stub: image " + image.shape_str() + " does not match encoder resolution");
    Tensor out({id_dim_});
    for (Index r = 0; r < id_dim_; ++r) {
        double s = 0.0;
        for (Index c = 0; c < pixels(); ++c) s += projection_.at(r, c) * image.at(c);
        out.at(r) = s;
    }
    return out;
}

Value StubEncoder::encode(Graph& g, Value image_flat) const {
    if (g.val(image_flat).numel() != pixels()) throw ShapeError("stub: graph image size mismatch");
    Value img_col = g.reshape(image_flat, {pixels(), 1});
    Value proj = g.input(projection_);
    return g.reshape(g.matmul(proj, img_col), {id_dim_});
}

SplitEmbedding split(const RawIdentityEmbedding& raw) {
    const double q = raw.z.l2_norm();
    if (q <= 1e-8) throw NumericError("degenerate identity embedding (near-zero norm)");
    SplitEmbedding se;
    se.q = q;
    se.e = Tensor(raw.z.shape());
    for (Index i = 0; i < raw.z.numel(); ++i) se.e.at(i) = raw.z.at(i) / q;
    return se;
}

std::vector<std::size_t> canonical_order(const std::vector<SplitEmbedding>& embeddings) {
    std::vector<std::size_t> order(embeddings.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (embeddings[a].q != embeddings[b].q) return embeddings[a].q > embeddings[b].q;
        return embeddings[a].e.vec() < embeddings[b].e.vec();
    });
    return order;
}

IdentityAnchor aggregate(const std::vector<SplitEmbedding>& embeddings, double temperature) {
    if (embeddings.empty()) throw DomainError("aggregate: no embeddings");
    if (temperature <= 0.0) throw DomainError("aggregate: temperature must be positive");
    const std::size_t n = embeddings.size();
    const Index dim = embeddings[0].e.numel();

    // softmax(log q / T), max-subtracted
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = std::log(embeddings[i].q) / temperature;
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
        weights[i] = std::exp(logits[i] - m);
        z += weights[i];
    }
    for (auto& w : weights) w /= z;

    // weighted sum in canonical content order, so permuting the input list
    // cannot change the floating-point result
    Tensor sum({dim});
    for (std::size_t i : canonical_order(embeddings)) {
        const SplitEmbedding& se = embeddings[i];
        if (se.e.numel() != dim) throw ShapeError("aggregate: embedding dim mismatch");
        for (Index d = 0; d < dim; ++d) sum.at(d) += weights[i] * se.e.at(d);
    }
    const double norm = sum.l2_norm();
    if (norm < 1e-6) throw NumericError("degenerate anchor: aggregated direction near zero");

    IdentityAnchor anchor;
    anchor.direction = Tensor({dim});
    for (Index d = 0; d < dim; ++d) anchor.direction.at(d) = sum.at(d) / norm;
    anchor.weights = std::move(weights);
    anchor.provenance = AnchorProvenance::ReferenceAggregate;
    return anchor;
}

IdentityAnchor select_anchor(const std::vector<Tensor>& ref_images, const Tensor& degraded_image,
                             double temperature, const StubEncoder& stub) {
    if (!ref_images.empty()) {
        std::vector<SplitEmbedding> ses;
        ses.reserve(ref_images.size());
        for (const Tensor& img : ref_images) ses.push_back(split({stub.encode(img)}));
        return aggregate(ses, temperature);
    }
    IdentityAnchor anchor;
    anchor.direction = split({stub.encode(degraded_image)}).e;
    anchor.provenance = AnchorProvenance::DegradedFallback;
    return anchor;
}

namespace {

const char* kDeltaKinds[3] = {"scale", "shift", "gate"};

std::string delta_name(const char* group, Index block, const char* kind, const char* leaf) {
    return std::string("id.delta.") + group + std::to_string(block) + "." + kind + "." + leaf;
}

}  // namespace

void register_identity_params(ParamStore& params, const IdentityPathwayConfig& cfg, RngStream& rng) {
    params.add("id.phi.w1", Tensor::randn({cfg.id_dim, cfg.d_model}, rng, 0.02));
    params.add("id.phi.b1", Tensor::zeros({cfg.d_model}));
    params.add("id.phi.w2", Tensor::randn({cfg.d_model, cfg.d_model}, rng, 0.02));
    params.add("id.phi.b2", Tensor::zeros({cfg.d_model}));
    auto add_heads = [&](const char* group, Index count) {
        for (Index b = 0; b < count; ++b)
            for (const char* kind : kDeltaKinds) {
                // zero-init: the identity pathway is a no-op until trained
                params.add(delta_name(group, b, kind, "w"), Tensor::zeros({cfg.d_model, cfg.d_model}));
                params.add(delta_name(group, b, kind, "b"), Tensor::zeros({cfg.d_model}));
            }
    };
    add_heads("dbl", cfg.n_double);
    add_heads("sgl", cfg.n_single);
}

ModulationDeltaValues modulation_deltas(Graph& g, const BoundParams& p,
                                        const IdentityPathwayConfig& cfg,
                                        const IdentityAnchor& anchor) {
    Value dir = g.input(anchor.direction.reshaped({1, cfg.id_dim}));
    Value h = linear(g, dir, p["id.phi.w1"], p["id.phi.b1"]);
    h = g.gelu(h);
    h = linear(g, h, p["id.phi.w2"], p["id.phi.b2"]);  // [1, d_model]

    auto head = [&](const char* group, Index block, const char* kind) {
        Value d = linear(g, h, p[delta_name(group, block, kind, "w")],
                         p[delta_name(group, block, kind, "b")]);
        return g.reshape(d, {cfg.d_model});
    };
    ModulationDeltaValues out;
    for (Index b = 0; b < cfg.n_double; ++b)
        out.dbl.push_back({head("dbl", b, "scale"), head("dbl", b, "shift"), head("dbl", b, "gate")});
    for (Index b = 0; b < cfg.n_single; ++b)
        out.sgl.push_back({head("sgl", b, "scale"), head("sgl", b, "shift"), head("sgl", b, "gate")});
    return out;
}

ModulationDeltas compute_modulation_deltas(const ParamStore& params,
                                           const IdentityPathwayConfig& cfg,
                                           const IdentityAnchor& anchor) {
    Graph g;
    BoundParams p(g, params);
    ModulationDeltaValues vals = modulation_deltas(g, p, cfg, anchor);
    ModulationDeltas out;
    for (const auto& t : vals.dbl)
        out.dbl.push_back({g.val(t.scale), g.val(t.shift), g.val(t.gate)});
    for (const auto& t : vals.sgl)
        out.sgl.push_back({g.val(t.scale), g.val(t.shift), g.val(t.gate)});
    return out;
}

}  // namespace icflow
