#include "icflow/structure.hpp"

#include <cmath>

namespace icflow {

Tensor resize_bilinear(const Tensor& grid, Index out_h, Index out_w) {
    if (grid.rank() != 3) throw ShapeError("resize: expected (C,H,W)");
    if (out_h <= 0 || out_w <= 0) throw DomainError("resize: target extents must be positive");
    const Index c = grid.extent(0), in_h = grid.extent(1), in_w = grid.extent(2);
    if (in_h == out_h && in_w == out_w) return grid;
    Tensor out({c, out_h, out_w});
    auto src = [](Index j, Index n_out, Index n_in) {
        if (n_out == 1) return 0.0;
        return static_cast<double>(j) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
    };
    for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < out_h; ++y) {
            const double fy = src(y, out_h, in_h);
            const Index y0 = static_cast<Index>(fy);
            const Index y1 = std::min(y0 + 1, in_h - 1);
            const double wy = fy - static_cast<double>(y0);
            for (Index x = 0; x < out_w; ++x) {
                const double fx = src(x, out_w, in_w);
                const Index x0 = static_cast<Index>(fx);
                const Index x1 = std::min(x0 + 1, in_w - 1);
                const double wx = fx - static_cast<double>(x0);
                const double top = (1.0 - wx) * grid.at(ch, y0, x0) + wx * grid.at(ch, y0, x1);
                const double bot = (1.0 - wx) * grid.at(ch, y1, x0) + wx * grid.at(ch, y1, x1);
                out.at(ch, y, x) = (1.0 - wy) * top + wy * bot;
            }
        }
    return out;
}

Tensor resize_to_scene(const Tensor& deg, GridDims target) {
    return resize_bilinear(deg, target.h, target.w);
}

Tensor smooth3x3(const Tensor& grid) {
    if (grid.rank() != 3) throw ShapeError("smooth: expected (C,H,W)");
    const Index c = grid.extent(0), h = grid.extent(1), w = grid.extent(2);
    Tensor out({c, h, w});
    auto clampi = [](Index v, Index lo, Index hi) { return std::max(lo, std::min(v, hi)); };
    // box average written as center - mean(center - neighbor): a constant
    // grid maps to itself exactly, so the detail route sees exact zeros
    for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                const double center = grid.at(ch, y, x);
                double diff = 0.0;
                for (Index dy = -1; dy <= 1; ++dy)
                    for (Index dx = -1; dx <= 1; ++dx)
                        diff += center - grid.at(ch, clampi(y + dy, 0, h - 1), clampi(x + dx, 0, w - 1));
                out.at(ch, y, x) = center - diff / 9.0;
            }
    return out;
}

void register_structure_params(ParamStore& params, const StructurePathwayConfig& cfg, RngStream& rng) {
    cfg.rope.validate();
    const Index kdim = cfg.rope.head_dim();
    params.add("st.win.lo", Tensor::randn({cfg.d_in, cfg.rank}, rng, 0.02));
    params.add("st.win.hi", Tensor::zeros({cfg.rank, cfg.d_model}));  // residual off at init
    for (const char* route : {"base", "detail"}) {
        const std::string p = std::string("st.pool.") + route + ".";
        const Index nq = (route[0] == 'b') ? cfg.n_base() : cfg.n_detail();
        params.add(p + "q", Tensor::randn({nq, kdim}, rng, 0.5));
        params.add(p + "k.w", Tensor::randn({cfg.d_in, kdim}, rng, 0.02));
        params.add(p + "k.b", Tensor::zeros({kdim}));
        params.add(p + "v.w", Tensor::randn({cfg.d_in, cfg.d_model}, rng, 0.02));
        params.add(p + "v.b", Tensor::zeros({cfg.d_model}));
    }
    auto add_block = [&](const std::string& group) {
        const std::string p = "st.xattn." + group + ".";
        params.add(p + "q", Tensor::randn({cfg.d_model, cfg.d_model}, rng, 0.02));
        params.add(p + "k.lo", Tensor::randn({cfg.d_model, cfg.rank}, rng, 0.02));
        params.add(p + "k.hi", Tensor::randn({cfg.rank, cfg.d_model}, rng, 0.02));
        params.add(p + "v.lo", Tensor::randn({cfg.d_model, cfg.rank}, rng, 0.02));
        params.add(p + "v.hi", Tensor::randn({cfg.rank, cfg.d_model}, rng, 0.02));
        params.add(p + "gate", Tensor::zeros({1}));  // block starts as identity
    };
    for (Index b = 0; b < cfg.n_double; ++b) add_block("dbl" + std::to_string(b));
    for (Index b = 0; b < cfg.n_single; ++b) add_block("sgl" + std::to_string(b));
}

Value input_residual(Graph& g, const BoundParams& p, const StructurePathwayConfig& cfg,
                     Value scene_tokens, Value deg_tokens) {
    const Tensor& scene = g.val(scene_tokens);
    const Tensor& deg = g.val(deg_tokens);
    if (scene.rows() != deg.rows())
        throw ShapeError("input_residual: token counts differ (" + scene.shape_str() + " vs " +
                         deg.shape_str() + ")");
    Value low = g.matmul(deg_tokens, p["st.win.lo"]);
    Value res = g.scale(g.matmul(low, p["st.win.hi"]), cfg.s_deg);
    return g.add(scene_tokens, res);
}

MemoryValues build_memory(Graph& g, const BoundParams& p, const StructurePathwayConfig& cfg,
                          const Tensor& deg_latent_grid) {
    const GridDims grid{deg_latent_grid.extent(1), deg_latent_grid.extent(2)};
    const auto deg_ids = position_ids(Segment::Degraded, grid);
    const auto table = make_rope_table(deg_ids, cfg.rope);

    const Tensor base_in = grid_to_tokens(deg_latent_grid);
    const Tensor detail_in = grid_to_tokens([&] {
        Tensor d = deg_latent_grid;
        const Tensor s = smooth3x3(deg_latent_grid);
        for (Index i = 0; i < d.numel(); ++i) d.at(i) -= s.at(i);
        return d;
    }());

    auto pool = [&](const char* route, const Tensor& tokens) {
        const std::string pre = std::string("st.pool.") + route + ".";
        Value in = g.input(tokens);
        Value keys = g.rope(linear(g, in, p[pre + "k.w"], p[pre + "k.b"]), table);
        Value values = linear(g, in, p[pre + "v.w"], p[pre + "v.b"]);
        return g.attention(p[pre + "q"], keys, values);
    };
    MemoryValues mem;
    Value base = pool("base", base_in);
    Value detail = pool("detail", detail_in);
    mem.m = g.concat_rows({base, detail});
    mem.route_boundary = cfg.n_base();
    return mem;
}

Value degraded_cross_attention(Graph& g, const BoundParams& p, const std::string& block_group,
                               Value image_tokens, const MemoryValues& mem) {
    const std::string pre = "st.xattn." + block_group + ".";
    Value q = g.matmul(image_tokens, p[pre + "q"]);
    Value k = g.matmul(g.matmul(mem.m, p[pre + "k.lo"]), p[pre + "k.hi"]);
    Value v = g.matmul(g.matmul(mem.m, p[pre + "v.lo"]), p[pre + "v.hi"]);
    Value read = g.attention(q, k, v);
    return g.add(image_tokens, g.mul_scalar(read, p[pre + "gate"]));
}

DegradedMemory compute_memory(const ParamStore& params, const StructurePathwayConfig& cfg,
                              const Tensor& deg_latent_grid) {
    Graph g;
    BoundParams p(g, params);
    MemoryValues mv = build_memory(g, p, cfg, deg_latent_grid);
    return DegradedMemory{g.val(mv.m), mv.route_boundary};
}

}  // namespace icflow
