#ifndef ICFLOW_CHECKPOINT_HPP
#define ICFLOW_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "icflow/backbone.hpp"

namespace icflow {

struct CheckpointMeta {
    std::uint64_t train_steps = 0;
    std::uint64_t train_seed = 0;
};

// Little-endian binary: magic "ICFL", u32 version, config block, then one
// record per tensor (name length + bytes, rank, extents, f32 payload).
void save_checkpoint(const std::string& path, const Backbone& model,
                     const CheckpointMeta& meta = {});

Backbone load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace icflow

#endif
