#include "icflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace icflow {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'F', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double get_f64(std::istream& is) {
    const std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Backbone& model, const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);

    const ModelConfig& c = model.config();
    for (Index v : {c.d_model, c.n_heads, c.n_double, c.n_single, c.patch, c.image_size,
                    c.image_channels, c.id_dim, c.text_tokens, c.memory_budget, c.rank,
                    c.sigma_embed_dim})
        put_u32(os, static_cast<std::uint32_t>(v));
    put_f64(os, c.s_deg);
    put_f64(os, c.temperature);
    put_f64(os, c.rope.theta);
    for (Index d : c.rope.axis_dims) put_u32(os, static_cast<std::uint32_t>(d));
    put_u64(os, model.stub_seed());
    put_u64(os, meta.train_steps);
    put_u64(os, meta.train_seed);

    const ParamStore& params = model.params();
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor& t = params.tensor(i);
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (Index e : t.shape()) put_u64(os, static_cast<std::uint64_t>(e));
        for (Index j = 0; j < t.numel(); ++j) put_f32(os, static_cast<float>(t.at(j)));
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

Backbone load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad checkpoint magic");
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) throw IoError("unsupported checkpoint version");

    ModelConfig c;
    c.d_model = get_u32(is);
    c.n_heads = get_u32(is);
    c.n_double = get_u32(is);
    c.n_single = get_u32(is);
    c.patch = get_u32(is);
    c.image_size = get_u32(is);
    c.image_channels = get_u32(is);
    c.id_dim = get_u32(is);
    c.text_tokens = get_u32(is);
    c.memory_budget = get_u32(is);
    c.rank = get_u32(is);
    c.sigma_embed_dim = get_u32(is);
    c.s_deg = get_f64(is);
    c.temperature = get_f64(is);
    c.rope.theta = get_f64(is);
    for (auto& d : c.rope.axis_dims) d = get_u32(is);
    const std::uint64_t stub_seed = get_u64(is);
    CheckpointMeta meta;
    meta.train_steps = get_u64(is);
    meta.train_seed = get_u64(is);
    if (meta_out) *meta_out = meta;

    Backbone model(c, /*init_seed=*/stub_seed, stub_seed);
    ParamStore& params = model.params();
    const std::uint32_t n_tensors = get_u32(is);
    if (n_tensors != params.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("checkpoint truncated");
        const std::uint32_t rank = get_u32(is);
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<Index>(get_u64(is));
        Tensor& dst = params.at(name);
        if (dst.shape() != shape)
            throw IoError("checkpoint shape mismatch for " + name);
        for (Index j = 0; j < dst.numel(); ++j) dst.at(j) = static_cast<double>(get_f32(is));
    }
    return model;
}

}  // namespace icflow
