#ifndef ICFLOW_IDENTITY_HPP
#define ICFLOW_IDENTITY_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "icflow/params.hpp"
#include "icflow/tensor.hpp"

namespace icflow {

// Frozen identity encoder: a fixed-seed linear projection of mean-centered,
// average-pooled pixels. Never trained. Linearity in the centered signal
// makes the embedding norm scale with image contrast, which is the quality
// proxy the aggregation relies on.
class StubEncoder {
public:
    StubEncoder() = default;
    StubEncoder(Index channels, Index height, Index width, Index id_dim, std::uint64_t seed);

    Tensor encode(const Tensor& image) const;  // (C,H,W) -> [id_dim]

    // differentiable application to an image value already on a graph
    Value encode(Graph& g, Value image_flat) const;  // [C*H*W] or (C,H,W) -> [id_dim]

    Index id_dim() const { return id_dim_; }
    std::uint64_t seed() const { return seed_; }
    Index pixels() const { return channels_ * height_ * width_; }

private:
    Index channels_ = 0, height_ = 0, width_ = 0, id_dim_ = 0;
    std::uint64_t seed_ = 0;
    Tensor projection_;  // [id_dim, C*H*W], includes pooling and centering
};

struct RawIdentityEmbedding {
    Tensor z;  // [id_dim], any norm
};

struct SplitEmbedding {
    Tensor e;       // unit direction
    double q = 0.0; // norm, the quality proxy
};

// e = z/||z||, q = ||z||; near-zero norm is an error
SplitEmbedding split(const RawIdentityEmbedding& raw);

enum class AnchorProvenance { ReferenceAggregate, DegradedFallback };

struct IdentityAnchor {
    Tensor direction;             // unit norm
    std::vector<double> weights;  // per input reference; empty for fallback
    AnchorProvenance provenance = AnchorProvenance::DegradedFallback;
};

// weights = softmax(log q / T); direction = normalize(sum w_r e_r).
// The sum runs in a canonical content order so any permutation of the input
// produces a bitwise-identical direction.
IdentityAnchor aggregate(const std::vector<SplitEmbedding>& embeddings, double temperature);

// refs present -> aggregate; refs absent -> normalized stub embedding of the
// degraded image, provenance DegradedFallback (never a loss target).
IdentityAnchor select_anchor(const std::vector<Tensor>& ref_images, const Tensor& degraded_image,
                             double temperature, const StubEncoder& stub);

// canonical content order of split embeddings: by q descending, ties by
// lexicographic direction; used for both aggregation and token packing
std::vector<std::size_t> canonical_order(const std::vector<SplitEmbedding>& embeddings);

struct IdentityPathwayConfig {
    Index id_dim = 32;
    Index d_model = 64;
    Index n_double = 2;
    Index n_single = 2;
};

// phi_global: two-layer MLP id_dim -> d_model -> d_model; per-block linear
// delta heads (scale/shift/gate), zero-initialized so deltas start at zero.
void register_identity_params(ParamStore& params, const IdentityPathwayConfig& cfg, RngStream& rng);

struct DeltaTriple {
    Value scale, shift, gate;  // each [d_model]
};

struct ModulationDeltaValues {
    std::vector<DeltaTriple> dbl;
    std::vector<DeltaTriple> sgl;
};

ModulationDeltaValues modulation_deltas(Graph& g, const BoundParams& p,
                                        const IdentityPathwayConfig& cfg,
                                        const IdentityAnchor& anchor);

// plain evaluation (throwaway graph) for tests and inspection
struct ModulationDeltas {
    std::vector<std::array<Tensor, 3>> dbl;  // scale, shift, gate
    std::vector<std::array<Tensor, 3>> sgl;
};

ModulationDeltas compute_modulation_deltas(const ParamStore& params,
                                           const IdentityPathwayConfig& cfg,
                                           const IdentityAnchor& anchor);

}  // namespace icflow

#endif
