#ifndef ICFLOW_DEGRADE_HPP
#define ICFLOW_DEGRADE_HPP

#include <array>
#include <cstdint>

#include "icflow/rng.hpp"
#include "icflow/tensor.hpp"

namespace icflow {

constexpr int kMaxStrength = 16;
constexpr std::array<double, 3> kStrengthBuckets{0.5, 0.3, 0.2};  // ranges 0-3, 4-8, 9-16

// Deterministic chain parameters derived from (strength, seed):
//   blur sigma   0.1 + 0.2*s
//   noise sigma  0.01*s
//   quant levels max(8, 256 - 15*s)
//   scale        4..10, seed-drawn from a strength-widened range
// strength 0 is the identity chain.
struct DegradationSpec {
    int strength = 0;
    std::uint64_t seed = 0;
    int scale = 1;  // downsample factor; 1 means no resampling
    double blur_sigma = 0.0;
    double noise_sigma = 0.0;
    int quant_levels = 256;
};

DegradationSpec make_degradation_spec(int strength, std::uint64_t seed);

// bucketed strength draw: P(0-3)=0.5, P(4-8)=0.3, P(9-16)=0.2, uniform within
int sample_strength(RngStream& rng, const std::array<double, 3>& buckets = kStrengthBuckets);

// blur -> downsample -> noise -> quantize -> upsample -> clamp; bit-exact
// identity at strength 0, bit-reproducible for equal (image, strength, seed)
Tensor degrade(const Tensor& image, int strength, std::uint64_t seed);

Tensor gaussian_blur(const Tensor& image, double sigma);
Tensor value_quantize(const Tensor& image, int levels);

}  // namespace icflow

#endif
