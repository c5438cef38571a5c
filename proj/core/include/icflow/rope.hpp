#ifndef ICFLOW_ROPE_HPP
#define ICFLOW_ROPE_HPP

#include <array>
#include <memory>

#include "icflow/graph.hpp"
#include "icflow/tokens.hpp"

namespace icflow {

// Four-axis rotary layout. head_dim splits over (t,h,w,l); within axis a,
// channel pair m rotates by angle pos_a * theta^(-2m/d_a).
struct RopeConfig {
    double theta = 2000.0;
    std::array<Index, 4> axis_dims{4, 4, 4, 4};

    Index head_dim() const { return axis_dims[0] + axis_dims[1] + axis_dims[2] + axis_dims[3]; }
    void validate() const;
};

// rotate one head vector [head_dim] at one position
Tensor rope_rotate(const Tensor& vec, const PositionId& id, const RopeConfig& cfg);

// shared table for a whole sequence, consumed by Graph::rope
std::shared_ptr<const RopeTable> make_rope_table(const std::vector<PositionId>& ids,
                                                 const RopeConfig& cfg);

}  // namespace icflow

#endif
