#ifndef ICFLOW_TRAIN_HPP
#define ICFLOW_TRAIN_HPP

#include <string>
#include <vector>

#include "icflow/backbone.hpp"
#include "icflow/config.hpp"
#include "icflow/dataset.hpp"
#include "icflow/objective.hpp"

namespace icflow {

struct TrainingSample {
    Tensor clean;
    Tensor degraded;
    std::vector<Tensor> refs;  // 0..3, same identity, no duplication
    double sigma = 0.0;
    int strength = 0;
    std::uint64_t chain_seed = 0;
};

struct TrainStepLog {
    Index step = 0;
    double sigma = 0.0;
    int strength = 0;
    int n_refs = 0;
    LossBreakdown loss;
};

struct TrainResult {
    std::vector<TrainStepLog> curve;
};

// Fixed-seed training: per step draw identity, strength, chain seed,
// reference count, sigma and noise from one stream, then one SGD step.
// A non-finite loss aborts with a step diagnostic.
TrainResult train_model(Backbone& model, const Corpus& corpus, const RunConfig& cfg);

void write_loss_csv(const std::string& path, const std::vector<TrainStepLog>& curve);

// trailing-window mean of the flow loss, used by the training-sanity check
double smoothed_flow_loss(const std::vector<TrainStepLog>& curve, std::size_t start,
                          std::size_t count);

}  // namespace icflow

#endif
