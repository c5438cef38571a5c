#ifndef ICFLOW_CONFIG_HPP
#define ICFLOW_CONFIG_HPP

#include <array>
#include <string>

#include "icflow/backbone.hpp"
#include "icflow/flow.hpp"
#include "icflow/objective.hpp"

namespace icflow {

// Flat key=value run configuration. Shipped defaults carry the published
// conditioning and loss constants (alpha_fm 0.75, lambda_id 0.30, lambda_h
// 0.25, omega_min 0.25, temperature 1.0, memory 256, 12 steps, guidance 4.0,
// seed 42, reference mix 0.3/0.3/0.2/0.2, strength buckets 0.5/0.3/0.2).
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    SamplerConfig sampler;

    std::array<double, 4> ref_mix{0.3, 0.3, 0.2, 0.2};
    std::array<double, 3> strength_buckets{0.5, 0.3, 0.2};

    Index n_identities = 32;
    Index refs_per_identity = 3;
    std::uint64_t data_seed = 7;

    Index train_steps = 200;
    Index batch_size = 1;  // samples averaged per optimizer step
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t train_seed = 42;
    std::uint64_t init_seed = 1;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
std::string config_to_text(const RunConfig& cfg);

}  // namespace icflow

#endif
