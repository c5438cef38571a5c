#include "icflow/tokens.hpp"

namespace icflow {

std::string segment_name(Segment s, int ref_index) {
    switch (s) {
        case Segment::Text: return "text";
        case Segment::Scene: return "scene";
        case Segment::Degraded: return "degraded";
        case Segment::Reference: return "reference " + std::to_string(ref_index);
    }
    return "?";
}

Patchify::Patchify(Index channels_, Index height_, Index width_, Index patch_)
    : channels(channels_), height(height_), width(width_), patch(patch_) {
    if (channels <= 0 || height <= 0 || width <= 0 || patch <= 0)
        throw ShapeError("patchify: extents must be positive");
    if (height % patch != 0 || width % patch != 0)
        throw ShapeError("patchify: image extents not divisible by patch");
}

// token (gh, gw) feature layout: channel-major over the patch, i.e.
// d = c*patch*patch + dy*patch + dx
Tensor Patchify::pack(const Tensor& image) const {
    if (image.rank() != 3 || image.extent(0) != channels || image.extent(1) != height ||
        image.extent(2) != width)
        throw ShapeError("patchify: image " + image.shape_str() + " does not match codec");
    const GridDims g = grid();
    Tensor out({g.tokens(), token_dim()});
    for (Index gh = 0; gh < g.h; ++gh)
        for (Index gw = 0; gw < g.w; ++gw) {
            const Index tok = gh * g.w + gw;
            for (Index c = 0; c < channels; ++c)
                for (Index dy = 0; dy < patch; ++dy)
                    for (Index dx = 0; dx < patch; ++dx)
                        out.at(tok, (c * patch + dy) * patch + dx) =
                            image.at(c, gh * patch + dy, gw * patch + dx);
        }
    return out;
}

Tensor Patchify::unpack(const Tensor& tokens) const {
    const GridDims g = grid();
    if (tokens.rank() != 2 || tokens.rows() != g.tokens() || tokens.cols() != token_dim())
        throw ShapeError("unpatchify: tokens " + tokens.shape_str() + " do not match codec");
    Tensor out({channels, height, width});
    for (Index gh = 0; gh < g.h; ++gh)
        for (Index gw = 0; gw < g.w; ++gw) {
            const Index tok = gh * g.w + gw;
            for (Index c = 0; c < channels; ++c)
                for (Index dy = 0; dy < patch; ++dy)
                    for (Index dx = 0; dx < patch; ++dx)
                        out.at(c, gh * patch + dy, gw * patch + dx) =
                            tokens.at(tok, (c * patch + dy) * patch + dx);
        }
    return out;
}

std::shared_ptr<const std::vector<Index>> Patchify::pack_perm() const {
    const GridDims g = grid();
    auto perm = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(g.tokens() * token_dim()));
    for (Index gh = 0; gh < g.h; ++gh)
        for (Index gw = 0; gw < g.w; ++gw) {
            const Index tok = gh * g.w + gw;
            for (Index c = 0; c < channels; ++c)
                for (Index dy = 0; dy < patch; ++dy)
                    for (Index dx = 0; dx < patch; ++dx) {
                        const Index out_i = tok * token_dim() + (c * patch + dy) * patch + dx;
                        const Index in_i = (c * height + gh * patch + dy) * width + gw * patch + dx;
                        (*perm)[static_cast<std::size_t>(out_i)] = in_i;
                    }
        }
    return perm;
}

std::shared_ptr<const std::vector<Index>> Patchify::unpack_perm() const {
    auto fwd = pack_perm();
    auto inv = std::make_shared<std::vector<Index>>(fwd->size());
    for (std::size_t i = 0; i < fwd->size(); ++i)
        (*inv)[static_cast<std::size_t>((*fwd)[i])] = static_cast<Index>(i);
    return inv;
}

std::vector<PositionId> position_ids(Segment segment, GridDims grid, int ref_index, Index n_text) {
    std::vector<PositionId> ids;
    switch (segment) {
        case Segment::Text:
            for (Index l = 0; l < n_text; ++l) ids.push_back({0, 0, 0, l});
            return ids;
        case Segment::Scene:
            for (Index h = 0; h < grid.h; ++h)
                for (Index w = 0; w < grid.w; ++w) ids.push_back({0, h, w, 0});
            return ids;
        case Segment::Degraded:
            for (Index h = 0; h < grid.h; ++h)
                for (Index w = 0; w < grid.w; ++w) ids.push_back({kDegradedTimeId, h, w, 0});
            return ids;
        case Segment::Reference:
            if (ref_index < 0 || ref_index >= kMaxReferences)
                throw DomainError("reference index out of [0," + std::to_string(kMaxReferences) + ")");
            for (Index h = 0; h < grid.h; ++h)
                for (Index w = 0; w < grid.w; ++w)
                    ids.push_back({kReferenceTimeBase + ref_index, h, w, 0});
            return ids;
    }
    return ids;
}

Tensor grid_to_tokens(const Tensor& grid) {
    if (grid.rank() != 3) throw ShapeError("grid_to_tokens: expected (C,H,W)");
    const Index c = grid.extent(0), h = grid.extent(1), w = grid.extent(2);
    Tensor out({h * w, c});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < c; ++ch) out.at(y * w + x, ch) = grid.at(ch, y, x);
    return out;
}

Tensor tokens_to_grid(const Tensor& tokens, Index channels, GridDims grid) {
    if (tokens.rank() != 2 || tokens.rows() != grid.tokens() || tokens.cols() != channels)
        throw ShapeError("tokens_to_grid: tokens " + tokens.shape_str() + " do not match grid");
    Tensor out({channels, grid.h, grid.w});
    for (Index y = 0; y < grid.h; ++y)
        for (Index x = 0; x < grid.w; ++x)
            for (Index ch = 0; ch < channels; ++ch) out.at(ch, y, x) = tokens.at(y * grid.w + x, ch);
    return out;
}

const SegmentSpan& SequenceLayout::span(Segment s, int ref_index) const {
    for (const auto& sp : spans)
        if (sp.segment == s && (s != Segment::Reference || sp.ref_index == ref_index)) return sp;
    throw DomainError("no such segment: " + segment_name(s, ref_index));
}

bool SequenceLayout::has(Segment s, int ref_index) const {
    for (const auto& sp : spans)
        if (sp.segment == s && (s != Segment::Reference || sp.ref_index == ref_index)) return true;
    return false;
}

SequenceLayout make_layout(Index n_text, GridDims scene, GridDims degraded,
                           const std::vector<GridDims>& refs) {
    if (static_cast<int>(refs.size()) > kMaxReferences)
        throw DomainError("at most " + std::to_string(kMaxReferences) + " references");
    SequenceLayout lay;
    lay.n_text = n_text;
    Index at = 0;
    auto push = [&](Segment s, int ri, Index len, std::vector<PositionId> ids) {
        lay.spans.push_back({s, ri, at, len});
        lay.ids.insert(lay.ids.end(), ids.begin(), ids.end());
        at += len;
    };
    if (n_text > 0) push(Segment::Text, -1, n_text, position_ids(Segment::Text, {}, -1, n_text));
    push(Segment::Scene, -1, scene.tokens(), position_ids(Segment::Scene, scene));
    push(Segment::Degraded, -1, degraded.tokens(), position_ids(Segment::Degraded, degraded));
    for (int r = 0; r < static_cast<int>(refs.size()); ++r)
        push(Segment::Reference, r, refs[static_cast<std::size_t>(r)].tokens(),
             position_ids(Segment::Reference, refs[static_cast<std::size_t>(r)], r));
    lay.total = at;
    return lay;
}

Tensor TokenSequence::segment_features(Segment s, int ref_index) const {
    const SegmentSpan& sp = layout.span(s, ref_index);
    Tensor out({sp.len, features.cols()});
    for (Index r = 0; r < sp.len; ++r)
        for (Index c = 0; c < features.cols(); ++c) out.at(r, c) = features.at(sp.start + r, c);
    return out;
}

TokenSequence assemble_sequence(const Tensor& scene, const Tensor& degraded,
                                const std::vector<Tensor>& refs, const Tensor& text,
                                GridDims scene_grid, GridDims deg_grid,
                                const std::vector<GridDims>& ref_grids) {
    if (refs.size() != ref_grids.size()) throw ShapeError("assemble: refs/grids count mismatch");
    const Index d = scene.cols();
    auto check = [&](const Tensor& t, const char* what) {
        if (t.rank() != 2 || t.cols() != d)
            throw ShapeError(std::string("assemble: ") + what + " feature dim mismatch");
    };
    check(degraded, "degraded");
    for (const auto& r : refs) check(r, "reference");
    Index n_text = 0;
    if (text.numel() > 0) {
        check(text, "text");
        n_text = text.rows();
    }

    std::vector<GridDims> rg = ref_grids;
    TokenSequence seq;
    seq.layout = make_layout(n_text, scene_grid, deg_grid, rg);
    seq.features = Tensor({seq.layout.total, d});
    Index at = 0;
    auto copy_in = [&](const Tensor& t) {
        for (Index r = 0; r < t.rows(); ++r)
            for (Index c = 0; c < d; ++c) seq.features.at(at + r, c) = t.at(r, c);
        at += t.rows();
    };
    if (n_text > 0) copy_in(text);
    copy_in(scene);
    copy_in(degraded);
    for (const auto& r : refs) copy_in(r);
    return seq;
}

}  // namespace icflow
