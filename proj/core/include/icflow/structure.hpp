#ifndef ICFLOW_STRUCTURE_HPP
#define ICFLOW_STRUCTURE_HPP

#include "icflow/params.hpp"
#include "icflow/rope.hpp"
#include "icflow/tokens.hpp"

namespace icflow {

struct StructurePathwayConfig {
    Index d_in = 4;       // latent token dim
    Index d_model = 64;
    Index rank = 2;       // low-rank factor width for W_in and block K/V
    double s_deg = 1.0;
    Index memory_budget = 16;  // base + detail, split in half
    Index n_double = 2;
    Index n_single = 2;
    RopeConfig rope;

    Index n_base() const { return memory_budget / 2; }
    Index n_detail() const { return memory_budget - n_base(); }
};

// channel-independent bilinear resize of (C,H,W); endpoints map to endpoints,
// so same-size resize is the identity
Tensor resize_bilinear(const Tensor& grid, Index out_h, Index out_w);
Tensor resize_to_scene(const Tensor& deg, GridDims target);

// 3x3 box average per channel, replicate padding; annihilates constants in
// the detail route input deg - smooth(deg)
Tensor smooth3x3(const Tensor& grid);

void register_structure_params(ParamStore& params, const StructurePathwayConfig& cfg, RngStream& rng);

// x' = x_scene + s_deg * (deg_tokens @ W_lo @ W_hi); rank(x' - x_scene) <= rank
Value input_residual(Graph& g, const BoundParams& p, const StructurePathwayConfig& cfg,
                     Value scene_tokens, Value deg_tokens);

struct MemoryValues {
    Value m;                  // [memory_budget, d_model]
    Index route_boundary = 0; // first rows are the base route
};

// two learned-query poolers over the degraded latent: base route reads the
// raw tokens, detail route reads deg - smooth(deg); keys carry the degraded
// (t=2,h,w) rotary ids so the pooled memory is position-aware
MemoryValues build_memory(Graph& g, const BoundParams& p, const StructurePathwayConfig& cfg,
                          const Tensor& deg_latent_grid);

// h' = h + gate * Attn(Q h, K m, V m); gate is zero-initialized per block.
// block_group is "dbl<i>" or "sgl<i>".
Value degraded_cross_attention(Graph& g, const BoundParams& p, const std::string& block_group,
                               Value image_tokens, const MemoryValues& mem);

// plain-tensor wrappers (throwaway graph) for tests
struct DegradedMemory {
    Tensor m;
    Index route_boundary = 0;
};
DegradedMemory compute_memory(const ParamStore& params, const StructurePathwayConfig& cfg,
                              const Tensor& deg_latent_grid);

}  // namespace icflow

#endif
