#include "icflow/backbone.hpp"

#include <cmath>

namespace icflow {

void ModelConfig::validate() const {
    rope.validate();
    if (d_model != n_heads * head_dim())
        throw ShapeError("config: d_model must equal n_heads * head_dim");
    if (image_size % patch != 0) throw ShapeError("config: image size not divisible by patch");
    if (sigma_embed_dim % 2 != 0) throw ShapeError("config: sigma embed dim must be even");
    if (memory_budget < 2) throw ShapeError("config: memory budget must be >= 2");
    if (text_tokens < 1) throw ShapeError("config: at least one text token");
}

Tensor sigma_embedding(double sigma, Index dim) {
    const Index half = dim / 2;
    Tensor out({1, dim});
    for (Index k = 0; k < half; ++k) {
        const double w = std::pow(1000.0, static_cast<double>(k) / static_cast<double>(half - 1));
        out.at(0, k) = std::cos(sigma * w);
        out.at(0, half + k) = std::sin(sigma * w);
    }
    return out;
}

namespace {

std::string dbl_name(Index i, const char* stream, const char* leaf) {
    return "dbl" + std::to_string(i) + "." + stream + "." + leaf;
}
std::string sgl_name(Index i, const char* leaf) { return "sgl" + std::to_string(i) + "." + leaf; }

// six base modulation vectors per block: scale/shift/gate for the attention
// and mlp sub-layers
struct Mod6 {
    Value sa, ba, ga, sm, bm, gm;
};

Mod6 read_mod6(Graph& g, const BoundParams& p, const std::string& prefix, Value sigma_hidden,
               Index d) {
    Value m = linear(g, sigma_hidden, p[prefix + "mod.w"], p[prefix + "mod.b"]);  // [1, 6d]
    auto part = [&](Index k) { return g.reshape(g.slice_cols(m, k * d, d), {d}); };
    return {part(0), part(1), part(2), part(3), part(4), part(5)};
}

Mod6 add_delta(Graph& g, const Mod6& base, const DeltaTriple& delta) {
    return {g.add(base.sa, delta.scale), g.add(base.ba, delta.shift), g.add(base.ga, delta.gate),
            g.add(base.sm, delta.scale), g.add(base.bm, delta.shift), g.add(base.gm, delta.gate)};
}

// (1 + scale) * LN(x) + shift
Value modulate(Graph& g, Value x, Value scale, Value shift) {
    return g.add_rowvec(g.mul_rowvec(g.layernorm_rows(x), g.add_const(scale, 1.0)), shift);
}

Value mlp2(Graph& g, const BoundParams& p, const std::string& prefix, Value x) {
    Value h = linear(g, x, p[prefix + "mlp.w1"], p[prefix + "mlp.b1"]);
    return linear(g, g.gelu(h), p[prefix + "mlp.w2"], p[prefix + "mlp.b2"]);
}

// multi-head self-attention with rotary ids; q,k,v: [n, d_model]
Value joint_attention(Graph& g, Value q, Value k, Value v,
                      const std::shared_ptr<const RopeTable>& table, Index n_heads, Index hd) {
    std::vector<Value> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (Index h = 0; h < n_heads; ++h) {
        Value qh = g.rope(g.slice_cols(q, h * hd, hd), table);
        Value kh = g.rope(g.slice_cols(k, h * hd, hd), table);
        Value vh = g.slice_cols(v, h * hd, hd);
        heads.push_back(g.attention(qh, kh, vh));
    }
    return g.concat_cols(heads);
}

struct QkvSplit {
    Value q, k, v;
};

QkvSplit qkv(Graph& g, const BoundParams& p, const std::string& prefix, Value x, Index d) {
    Value m = linear(g, x, p[prefix + "qkv.w"], p[prefix + "qkv.b"]);  // [n, 3d]
    return {g.slice_cols(m, 0, d), g.slice_cols(m, d, d), g.slice_cols(m, 2 * d, d)};
}

}  // namespace

Backbone::Backbone(ModelConfig cfg, std::uint64_t init_seed)
    : Backbone(std::move(cfg), init_seed, mix_seed(init_seed, 0x57ab)) {}

Backbone::Backbone(ModelConfig cfg, std::uint64_t init_seed, std::uint64_t stub_seed)
    : cfg_(std::move(cfg)), stub_seed_(stub_seed) {
    cfg_.validate();
    stub_ = StubEncoder(cfg_.image_channels, cfg_.image_size, cfg_.image_size, cfg_.id_dim,
                        stub_seed_);
    register_all(init_seed);
}

void Backbone::register_all(std::uint64_t init_seed) {
    RngStream rng(init_seed);
    const Index d = cfg_.d_model;
    const Index din = cfg_.latent_dim();
    const Index hidden = 4 * d;

    params_.add("img_in.w", Tensor::randn({din, d}, rng, 0.02));
    params_.add("img_in.b", Tensor::zeros({d}));
    params_.add("text_embed", Tensor::randn({cfg_.text_tokens, d}, rng, 0.02));

    params_.add("sigma_mlp.w1", Tensor::randn({cfg_.sigma_embed_dim, d}, rng, 0.02));
    params_.add("sigma_mlp.b1", Tensor::zeros({d}));
    params_.add("sigma_mlp.w2", Tensor::randn({d, d}, rng, 0.02));
    params_.add("sigma_mlp.b2", Tensor::zeros({d}));

    auto add_stream = [&](const std::string& prefix) {
        params_.add(prefix + "mod.w", Tensor::randn({d, 6 * d}, rng, 0.02));
        params_.add(prefix + "mod.b", Tensor::zeros({6 * d}));
        params_.add(prefix + "qkv.w", Tensor::randn({d, 3 * d}, rng, 0.02));
        params_.add(prefix + "qkv.b", Tensor::zeros({3 * d}));
        params_.add(prefix + "proj.w", Tensor::randn({d, d}, rng, 0.02));
        params_.add(prefix + "proj.b", Tensor::zeros({d}));
        params_.add(prefix + "mlp.w1", Tensor::randn({d, hidden}, rng, 0.02));
        params_.add(prefix + "mlp.b1", Tensor::zeros({hidden}));
        params_.add(prefix + "mlp.w2", Tensor::randn({hidden, d}, rng, 0.02));
        params_.add(prefix + "mlp.b2", Tensor::zeros({d}));
    };
    for (Index i = 0; i < cfg_.n_double; ++i) {
        add_stream("dbl" + std::to_string(i) + ".txt.");
        add_stream("dbl" + std::to_string(i) + ".img.");
    }
    for (Index i = 0; i < cfg_.n_single; ++i) add_stream("sgl" + std::to_string(i) + ".");

    params_.add("final.mod.w", Tensor::randn({d, 2 * d}, rng, 0.02));
    params_.add("final.mod.b", Tensor::zeros({2 * d}));
    params_.add("final.w", Tensor::randn({d, cfg_.latent_dim()}, rng, 0.02));
    params_.add("final.b", Tensor::zeros({cfg_.latent_dim()}));

    register_identity_params(params_, cfg_.identity_cfg(), rng);
    register_structure_params(params_, cfg_.structure_cfg(), rng);
    params_.quantize_f32();
}

Value Backbone::forward(Graph& g, const BoundParams& p, Value seq, const SequenceLayout& layout,
                        double sigma, const ModulationDeltaValues* deltas, const MemoryValues* mem,
                        Trace* trace) const {
    if (g.val(seq).rows() != layout.total || g.val(seq).cols() != cfg_.d_model)
        throw ShapeError("forward: sequence does not match layout/config");
    const Index d = cfg_.d_model;
    const Index nt = layout.n_text;
    const Index ni = layout.image_len();

    Value sh = linear(g, g.input(sigma_embedding(sigma, cfg_.sigma_embed_dim)), p["sigma_mlp.w1"],
                      p["sigma_mlp.b1"]);
    sh = linear(g, g.gelu(sh), p["sigma_mlp.w2"], p["sigma_mlp.b2"]);
    sh = g.gelu(sh);  // [1, d]

    const auto table = make_rope_table(layout.ids, cfg_.rope);

    Value txt = g.slice_rows(seq, 0, nt);
    Value img = g.slice_rows(seq, nt, ni);

    // double-stream blocks: separate text/image parameters, joint attention
    for (Index i = 0; i < cfg_.n_double; ++i) {
        const std::string tp = dbl_name(i, "txt", "");
        const std::string ip = dbl_name(i, "img", "");
        Mod6 mt = read_mod6(g, p, tp, sh, d);
        Mod6 mi = read_mod6(g, p, ip, sh, d);
        if (deltas) mi = add_delta(g, mi, deltas->dbl[static_cast<std::size_t>(i)]);

        Value txt_mod = modulate(g, txt, mt.sa, mt.ba);
        if (trace)
            trace->text_mods.push_back(
                {g.val(txt), g.val(mt.sa), g.val(mt.ba), g.val(txt_mod)});
        QkvSplit qt = qkv(g, p, tp, txt_mod, d);
        QkvSplit qi = qkv(g, p, ip, modulate(g, img, mi.sa, mi.ba), d);
        Value attn = joint_attention(g, g.concat_rows({qt.q, qi.q}), g.concat_rows({qt.k, qi.k}),
                                     g.concat_rows({qt.v, qi.v}), table, cfg_.n_heads,
                                     cfg_.head_dim());
        Value at = g.slice_rows(attn, 0, nt);
        Value ai = g.slice_rows(attn, nt, ni);
        txt = g.add(txt, g.mul_rowvec(linear(g, at, p[tp + "proj.w"], p[tp + "proj.b"]), mt.ga));
        img = g.add(img, g.mul_rowvec(linear(g, ai, p[ip + "proj.w"], p[ip + "proj.b"]), mi.ga));

        if (mem) img = degraded_cross_attention(g, p, "dbl" + std::to_string(i), img, *mem);

        Value txt_mlp_mod = modulate(g, txt, mt.sm, mt.bm);
        if (trace)
            trace->text_mods.push_back(
                {g.val(txt), g.val(mt.sm), g.val(mt.bm), g.val(txt_mlp_mod)});
        txt = g.add(txt, g.mul_rowvec(mlp2(g, p, tp, txt_mlp_mod), mt.gm));
        img = g.add(img, g.mul_rowvec(mlp2(g, p, ip, modulate(g, img, mi.sm, mi.bm)), mi.gm));
    }

    // single-stream blocks: one parameter set over the whole sequence; the
    // identity deltas and memory reads still touch image rows only
    Value x = g.concat_rows({txt, img});
    for (Index i = 0; i < cfg_.n_single; ++i) {
        const std::string sp = sgl_name(i, "");
        Mod6 mb = read_mod6(g, p, sp, sh, d);
        Mod6 mi = mb;
        if (deltas) mi = add_delta(g, mi, deltas->sgl[static_cast<std::size_t>(i)]);

        Value ln = g.layernorm_rows(x);
        Value at = g.add_rowvec(g.mul_rowvec(g.slice_rows(ln, 0, nt), g.add_const(mb.sa, 1.0)), mb.ba);
        Value ai = g.add_rowvec(g.mul_rowvec(g.slice_rows(ln, nt, ni), g.add_const(mi.sa, 1.0)), mi.ba);
        if (trace)
            trace->text_mods.push_back(
                {g.val(g.slice_rows(x, 0, nt)), g.val(mb.sa), g.val(mb.ba), g.val(at)});
        QkvSplit qs = qkv(g, p, sp, g.concat_rows({at, ai}), d);
        Value attn = joint_attention(g, qs.q, qs.k, qs.v, table, cfg_.n_heads, cfg_.head_dim());
        Value o = linear(g, attn, p[sp + "proj.w"], p[sp + "proj.b"]);
        x = g.add(x, g.concat_rows({g.mul_rowvec(g.slice_rows(o, 0, nt), mb.ga),
                                    g.mul_rowvec(g.slice_rows(o, nt, ni), mi.ga)}));

        if (mem) {
            const Tensor text_before = g.val(g.slice_rows(x, 0, nt));
            Value xi = degraded_cross_attention(g, p, "sgl" + std::to_string(i),
                                                g.slice_rows(x, nt, ni), *mem);
            x = g.concat_rows({g.slice_rows(x, 0, nt), xi});
            if (trace)
                trace->text_around_memory.emplace_back(text_before, g.val(g.slice_rows(x, 0, nt)));
        }

        Value ln2 = g.layernorm_rows(x);
        Value bt = g.add_rowvec(g.mul_rowvec(g.slice_rows(ln2, 0, nt), g.add_const(mb.sm, 1.0)), mb.bm);
        Value bi = g.add_rowvec(g.mul_rowvec(g.slice_rows(ln2, nt, ni), g.add_const(mi.sm, 1.0)), mi.bm);
        if (trace)
            trace->text_mods.push_back(
                {g.val(g.slice_rows(x, 0, nt)), g.val(mb.sm), g.val(mb.bm), g.val(bt)});
        Value m = mlp2(g, p, sp, g.concat_rows({bt, bi}));
        x = g.add(x, g.concat_rows({g.mul_rowvec(g.slice_rows(m, 0, nt), mb.gm),
                                    g.mul_rowvec(g.slice_rows(m, nt, ni), mi.gm)}));
    }

    // final layer on the scene segment
    const SegmentSpan& scene = layout.span(Segment::Scene);
    Value sc = g.slice_rows(x, scene.start, scene.len);
    Value fm = linear(g, sh, p["final.mod.w"], p["final.mod.b"]);  // [1, 2d]
    Value fs = g.reshape(g.slice_cols(fm, 0, d), {d});
    Value fb = g.reshape(g.slice_cols(fm, d, d), {d});
    Value out = g.add_rowvec(g.mul_rowvec(g.layernorm_rows(sc), g.add_const(fs, 1.0)), fb);
    return linear(g, out, p["final.w"], p["final.b"]);
}

IdentityAnchor Backbone::anchor_for(const std::vector<Tensor>& ref_images,
                                    const Tensor& deg_image) const {
    return select_anchor(ref_images, deg_image, cfg_.temperature, stub_);
}

Value Backbone::predict_flow(Graph& g, const BoundParams& p, const Tensor& z_sigma_tokens,
                             const Tensor& deg_image, const std::vector<Tensor>& ref_images,
                             double sigma, PathwayFlags flags, Trace* trace) const {
    const Patchify codec = cfg_.codec();
    const GridDims lgrid = cfg_.latent_grid();
    if (z_sigma_tokens.rank() != 2 || z_sigma_tokens.rows() != lgrid.tokens() ||
        z_sigma_tokens.cols() != cfg_.latent_dim())
        throw ShapeError("predict_flow: z_sigma " + z_sigma_tokens.shape_str() + " mismatch");
    if (static_cast<int>(ref_images.size()) > kMaxReferences)
        throw DomainError("predict_flow: more than 3 references");

    // degraded observation in latent space, resized onto the scene grid
    Tensor deg_grid = tokens_to_grid(codec.pack(deg_image), cfg_.latent_dim(), lgrid);
    deg_grid = resize_to_scene(deg_grid, lgrid);
    const Tensor deg_tokens_plain = grid_to_tokens(deg_grid);

    // canonical reference order: content-sorted, so the restoration result
    // does not depend on how the caller listed the references
    std::vector<Tensor> refs_sorted;
    std::vector<SplitEmbedding> splits_sorted;
    if (!ref_images.empty()) {
        std::vector<SplitEmbedding> splits;
        splits.reserve(ref_images.size());
        for (const Tensor& r : ref_images) splits.push_back(split({stub_.encode(r)}));
        for (std::size_t idx : canonical_order(splits)) {
            refs_sorted.push_back(ref_images[idx]);
            splits_sorted.push_back(splits[idx]);
        }
    }

    Value scene = linear(g, g.input(z_sigma_tokens), p["img_in.w"], p["img_in.b"]);
    Value degv = g.input(deg_tokens_plain);
    if (flags.input_residual) scene = input_residual(g, p, cfg_.structure_cfg(), scene, degv);
    Value degT = linear(g, degv, p["img_in.w"], p["img_in.b"]);

    std::vector<Value> parts{p["text_embed"], scene, degT};
    std::vector<GridDims> ref_grids;
    for (const Tensor& r : refs_sorted) {
        parts.push_back(linear(g, g.input(codec.pack(r)), p["img_in.w"], p["img_in.b"]));
        ref_grids.push_back(lgrid);
    }
    Value seq = g.concat_rows(parts);
    const SequenceLayout layout = make_layout(cfg_.text_tokens, lgrid, lgrid, ref_grids);

    std::optional<ModulationDeltaValues> deltas;
    if (flags.identity_modulation) {
        const IdentityAnchor anchor = splits_sorted.empty()
                                          ? select_anchor({}, deg_image, cfg_.temperature, stub_)
                                          : aggregate(splits_sorted, cfg_.temperature);
        deltas = modulation_deltas(g, p, cfg_.identity_cfg(), anchor);
    }
    std::optional<MemoryValues> mem;
    if (flags.degraded_memory) mem = build_memory(g, p, cfg_.structure_cfg(), deg_grid);

    return forward(g, p, seq, layout, sigma, deltas ? &*deltas : nullptr, mem ? &*mem : nullptr,
                   trace);
}

Tensor Backbone::predict_flow(const Tensor& z_sigma_tokens, const Tensor& deg_image,
                              const std::vector<Tensor>& ref_images, double sigma,
                              PathwayFlags flags, Trace* trace) const {
    Graph g;
    BoundParams p(g, params_);
    Value out = predict_flow(g, p, z_sigma_tokens, deg_image, ref_images, sigma, flags, trace);
    return g.val(out);
}

}  // namespace icflow
