#ifndef ICFLOW_TOKENS_HPP
#define ICFLOW_TOKENS_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "icflow/tensor.hpp"

namespace icflow {

// Four-axis position id. Scene tokens sit at t=0, degraded at t=2,
// reference r at t=10+r; text tokens use the l axis only.
struct PositionId {
    Index t = 0, h = 0, w = 0, l = 0;
    bool operator==(const PositionId&) const = default;
};

enum class Segment { Text, Scene, Degraded, Reference };

std::string segment_name(Segment s, int ref_index = -1);

constexpr Index kDegradedTimeId = 2;
constexpr Index kReferenceTimeBase = 10;
constexpr int kMaxReferences = 3;

struct GridDims {
    Index h = 0, w = 0;
    Index tokens() const { return h * w; }
    bool operator==(const GridDims&) const = default;
};

// image (C,H,W) <-> tokens [(H/p)(W/p), C*p*p]; row-major (h,w) patch order
struct Patchify {
    Index channels = 0, height = 0, width = 0, patch = 0;
    GridDims grid() const { return {height / patch, width / patch}; }
    Index token_dim() const { return channels * patch * patch; }

    Patchify(Index channels, Index height, Index width, Index patch);

    Tensor pack(const Tensor& image) const;      // (C,H,W) -> [n, d]
    Tensor unpack(const Tensor& tokens) const;   // [n, d] -> (C,H,W)

    // element permutations for the differentiable path: out[i] = in[perm[i]]
    std::shared_ptr<const std::vector<Index>> pack_perm() const;
    std::shared_ptr<const std::vector<Index>> unpack_perm() const;
};

std::vector<PositionId> position_ids(Segment segment, GridDims grid, int ref_index = -1,
                                     Index n_text = 0);

// latent grid (C,H,W) <-> token rows [(h*W + w), c]
Tensor grid_to_tokens(const Tensor& grid);
Tensor tokens_to_grid(const Tensor& tokens, Index channels, GridDims grid);

struct SegmentSpan {
    Segment segment;
    int ref_index = -1;  // >= 0 for references
    Index start = 0;
    Index len = 0;
};

// Canonical token order: [text?, scene, degraded, reference 0..N-1].
// No reference span exists when there are no references.
struct SequenceLayout {
    std::vector<SegmentSpan> spans;
    std::vector<PositionId> ids;
    Index total = 0;
    Index n_text = 0;

    const SegmentSpan& span(Segment s, int ref_index = -1) const;
    bool has(Segment s, int ref_index = -1) const;
    Index image_start() const { return n_text; }       // everything after text is visual
    Index image_len() const { return total - n_text; }
};

SequenceLayout make_layout(Index n_text, GridDims scene, GridDims degraded,
                           const std::vector<GridDims>& refs);

// Assembled sequence with plain features, for tests and non-differentiable use.
struct TokenSequence {
    Tensor features;  // [total, d_model]
    SequenceLayout layout;

    Tensor segment_features(Segment s, int ref_index = -1) const;
};

TokenSequence assemble_sequence(const Tensor& scene, const Tensor& degraded,
                                const std::vector<Tensor>& refs, const Tensor& text,
                                GridDims scene_grid, GridDims deg_grid,
                                const std::vector<GridDims>& ref_grids);

}  // namespace icflow

#endif
