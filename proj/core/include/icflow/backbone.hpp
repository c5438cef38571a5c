#ifndef ICFLOW_BACKBONE_HPP
#define ICFLOW_BACKBONE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "icflow/identity.hpp"
#include "icflow/params.hpp"
#include "icflow/rope.hpp"
#include "icflow/structure.hpp"
#include "icflow/tokens.hpp"

namespace icflow {

// Toy restoration transformer configuration. Sizes default to the desk-scale
// setup (64-wide, 2 double + 2 single blocks, 16x16 single-channel images);
// the conditioning constants (theta, s_deg, temperature, memory budget)
// default to the full-scale values.
struct ModelConfig {
    Index d_model = 64;
    Index n_heads = 4;
    Index n_double = 2;
    Index n_single = 2;
    Index patch = 2;
    Index image_size = 16;
    Index image_channels = 1;
    Index id_dim = 32;
    Index text_tokens = 1;
    Index memory_budget = 256;
    Index rank = 2;
    Index sigma_embed_dim = 32;
    double s_deg = 1.0;
    double temperature = 1.0;
    RopeConfig rope;  // theta 2000, axis dims [4,4,4,4]

    Index head_dim() const { return rope.head_dim(); }
    Index latent_dim() const { return image_channels * patch * patch; }
    GridDims latent_grid() const { return {image_size / patch, image_size / patch}; }
    Index n_scene_tokens() const { return latent_grid().tokens(); }
    Shape latent_token_shape() const { return {n_scene_tokens(), latent_dim()}; }

    Patchify codec() const { return Patchify(image_channels, image_size, image_size, patch); }
    IdentityPathwayConfig identity_cfg() const { return {id_dim, d_model, n_double, n_single}; }
    StructurePathwayConfig structure_cfg() const {
        return {latent_dim(), d_model, rank, s_deg, memory_budget, n_double, n_single, rope};
    }
    void validate() const;
};

// sinusoidal embedding of the noise level, [1, dim]
Tensor sigma_embedding(double sigma, Index dim);

struct PathwayFlags {
    bool identity_modulation = true;
    bool degraded_memory = true;
    bool input_residual = true;
};
inline constexpr PathwayFlags kPathwaysFull{true, true, true};
// guidance unconditional branch: identity deltas and memory read dropped,
// degraded evidence (tokens + residual) kept
inline constexpr PathwayFlags kPathwaysUnconditional{false, false, true};
inline constexpr PathwayFlags kPathwaysBare{false, false, false};

class Backbone {
public:
    Backbone(ModelConfig cfg, std::uint64_t init_seed);
    // used by checkpoint loading: params filled in afterwards
    Backbone(ModelConfig cfg, std::uint64_t init_seed, std::uint64_t stub_seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const StubEncoder& stub() const { return stub_; }
    std::uint64_t stub_seed() const { return stub_seed_; }

    // Per-sublayer record of how text rows were modulated, plus the text rows
    // around each degraded-memory hook. Lets tests verify that identity
    // deltas and memory reads are applied to image rows only.
    struct Trace {
        struct TextMod {
            Tensor hidden;     // text rows entering the sub-layer
            Tensor scale;      // base modulation actually applied to text
            Tensor shift;
            Tensor modulated;  // text rows after modulation
        };
        std::vector<TextMod> text_mods;
        std::vector<std::pair<Tensor, Tensor>> text_around_memory;
    };

    // forward over an assembled sequence: returns the flow prediction for the
    // scene segment, [n_scene, patch^2 * channels]
    Value forward(Graph& g, const BoundParams& p, Value seq, const SequenceLayout& layout,
                  double sigma, const ModulationDeltaValues* deltas, const MemoryValues* mem,
                  Trace* trace = nullptr) const;

    // full pipeline: pack -> residual -> assemble -> anchor/deltas/memory ->
    // forward. References are re-ordered canonically (by stub content) before
    // packing so restoration is invariant to the supplied reference order.
    Value predict_flow(Graph& g, const BoundParams& p, const Tensor& z_sigma_tokens,
                       const Tensor& deg_image, const std::vector<Tensor>& ref_images,
                       double sigma, PathwayFlags flags = kPathwaysFull,
                       Trace* trace = nullptr) const;

    // inference wrapper over a throwaway graph
    Tensor predict_flow(const Tensor& z_sigma_tokens, const Tensor& deg_image,
                        const std::vector<Tensor>& ref_images, double sigma,
                        PathwayFlags flags = kPathwaysFull, Trace* trace = nullptr) const;

    IdentityAnchor anchor_for(const std::vector<Tensor>& ref_images, const Tensor& deg_image) const;

private:
    void register_all(std::uint64_t init_seed);

    ModelConfig cfg_;
    std::uint64_t stub_seed_ = 0;
    StubEncoder stub_;
    ParamStore params_;
};

}  // namespace icflow

#endif
