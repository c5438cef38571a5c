#include "icflow/rope.hpp"

#include <cmath>

namespace icflow {

void RopeConfig::validate() const {
    for (Index d : axis_dims) {
        if (d <= 0 || d % 2 != 0) throw ShapeError("rope: axis dims must be even and positive");
    }
    if (theta <= 0.0) throw DomainError("rope: theta must be positive");
}

std::shared_ptr<const RopeTable> make_rope_table(const std::vector<PositionId>& ids,
                                                 const RopeConfig& cfg) {
    cfg.validate();
    auto table = std::make_shared<RopeTable>();
    table->n_rows = static_cast<Index>(ids.size());
    table->n_pairs = cfg.head_dim() / 2;
    table->cosv.resize(static_cast<std::size_t>(table->n_rows * table->n_pairs));
    table->sinv.resize(table->cosv.size());
    std::size_t at = 0;
    for (const PositionId& id : ids) {
        const std::array<Index, 4> pos{id.t, id.h, id.w, id.l};
        for (int a = 0; a < 4; ++a) {
            const Index da = cfg.axis_dims[static_cast<std::size_t>(a)];
            for (Index m = 0; m < da / 2; ++m) {
                const double freq =
                    std::pow(cfg.theta, -2.0 * static_cast<double>(m) / static_cast<double>(da));
                const double angle = static_cast<double>(pos[static_cast<std::size_t>(a)]) * freq;
                table->cosv[at] = std::cos(angle);
                table->sinv[at] = std::sin(angle);
                ++at;
            }
        }
    }
    return table;
}

Tensor rope_rotate(const Tensor& vec, const PositionId& id, const RopeConfig& cfg) {
    cfg.validate();
    if (vec.numel() != cfg.head_dim())
        throw ShapeError("rope_rotate: vector length " + vec.shape_str() + " vs head dim");
    auto table = make_rope_table({id}, cfg);
    Tensor out(vec.shape());
    for (Index p = 0; p < table->n_pairs; ++p) {
        const double c = table->cosv[static_cast<std::size_t>(p)];
        const double s = table->sinv[static_cast<std::size_t>(p)];
        out.at(2 * p) = c * vec.at(2 * p) - s * vec.at(2 * p + 1);
        out.at(2 * p + 1) = s * vec.at(2 * p) + c * vec.at(2 * p + 1);
    }
    return out;
}

}  // namespace icflow
