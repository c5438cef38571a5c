#include "icflow/degrade.hpp"

#include <cmath>
#include <vector>

#include "icflow/image.hpp"
#include "icflow/structure.hpp"

namespace icflow {

DegradationSpec make_degradation_spec(int strength, std::uint64_t seed) {
    if (strength < 0 || strength > kMaxStrength) throw DomainError("strength outside 0..16");
    DegradationSpec spec;
    spec.strength = strength;
    spec.seed = seed;
    if (strength == 0) return spec;
    spec.blur_sigma = 0.1 + 0.2 * static_cast<double>(strength);
    spec.noise_sigma = 0.01 * static_cast<double>(strength);
    spec.quant_levels = std::max(8, 256 - 15 * strength);
    // scale drawn from [4, 4+k]; the range widens with strength so the draw
    // is monotone in strength for a fixed seed
    RngStream rng(seed);
    const int k = static_cast<int>(std::lround(6.0 * (strength - 1) / 15.0));
    spec.scale = 4 + static_cast<int>(rng.uniform() * (k + 1));
    return spec;
}

int sample_strength(RngStream& rng, const std::array<double, 3>& buckets) {
    const double u = rng.uniform();
    if (u < buckets[0]) return static_cast<int>(rng.uniform_int(4));           // 0..3
    if (u < buckets[0] + buckets[1]) return 4 + static_cast<int>(rng.uniform_int(5));  // 4..8
    return 9 + static_cast<int>(rng.uniform_int(8));                           // 9..16
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (image.rank() != 3) throw ShapeError("blur: expected (C,H,W)");
    if (sigma <= 0.0) return image;
    const Index radius = std::max<Index>(1, static_cast<Index>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (Index i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        norm += v;
    }
    for (auto& v : kernel) v /= norm;

    const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
    auto clampi = [](Index v, Index hi) { return std::max<Index>(0, std::min(v, hi)); };
    Tensor tmp({c, h, w});
    for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                double s = 0.0;
                for (Index i = -radius; i <= radius; ++i)
                    s += kernel[static_cast<std::size_t>(i + radius)] *
                         image.at(ch, y, clampi(x + i, w - 1));
                tmp.at(ch, y, x) = s;
            }
    Tensor out({c, h, w});
    for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                double s = 0.0;
                for (Index i = -radius; i <= radius; ++i)
                    s += kernel[static_cast<std::size_t>(i + radius)] *
                         tmp.at(ch, clampi(y + i, h - 1), x);
                out.at(ch, y, x) = s;
            }
    return out;
}

Tensor value_quantize(const Tensor& image, int levels) {
    if (levels < 2) throw DomainError("quantize: need at least 2 levels");
    Tensor out = image;
    const double steps = static_cast<double>(levels - 1);
    for (Index i = 0; i < out.numel(); ++i)
        out.at(i) = std::round(out.at(i) * steps) / steps;
    return out;
}

Tensor degrade(const Tensor& image, int strength, std::uint64_t seed) {
    if (image.rank() != 3) throw ShapeError("degrade: expected (C,H,W)");
    const DegradationSpec spec = make_degradation_spec(strength, seed);
    if (spec.strength == 0) return image;

    RngStream rng(seed);
    rng.uniform();  // scale draw, kept in lockstep with make_degradation_spec

    const Index h = image.extent(1), w = image.extent(2);
    Tensor x = gaussian_blur(image, spec.blur_sigma);
    const Index lh = std::max<Index>(2, static_cast<Index>(std::lround(
                                            static_cast<double>(h) / spec.scale)));
    const Index lw = std::max<Index>(2, static_cast<Index>(std::lround(
                                            static_cast<double>(w) / spec.scale)));
    x = resize_bilinear(x, lh, lw);
    x = value_quantize(x, spec.quant_levels);
    // noise after quantization keeps the low-resolution grid non-constant
    // (the degraded-fallback identity anchor needs some contrast), and the
    // second blur pass keeps heavy noise from dominating that contrast
    for (Index i = 0; i < x.numel(); ++i) x.at(i) += rng.normal(0.0, spec.noise_sigma);
    x = gaussian_blur(x, spec.blur_sigma);
    x = resize_bilinear(x, h, w);
    return clamp01(x);
}

}  // namespace icflow
