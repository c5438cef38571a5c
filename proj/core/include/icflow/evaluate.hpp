#ifndef ICFLOW_EVALUATE_HPP
#define ICFLOW_EVALUATE_HPP

#include <string>
#include <vector>

#include "icflow/backbone.hpp"
#include "icflow/dataset.hpp"
#include "icflow/flow.hpp"

namespace icflow {

enum class EvalMode { WithRef, NoRef };

// full restoration of one degraded image: Euler sampling of the learned flow,
// decoded and clamped to [0,1]
Tensor restore_image(const Backbone& model, const Tensor& deg_image,
                     const std::vector<Tensor>& refs, const SamplerConfig& cfg);

// peak signal-to-noise ratio for unit-range images, capped for identical pairs
double psnr(const Tensor& a, const Tensor& b, double cap = 99.0);

struct EvalRow {
    std::size_t index = 0;
    int n_refs = 0;
    bool skipped = false;
    double ref_cosine = 0.0;  // vs the first protocol reference
    double gt_cosine = 0.0;   // vs the clean target
    double psnr = 0.0;
    std::vector<double> weights;  // anchor weights, with-ref mode only
};

struct EvalReport {
    EvalMode mode = EvalMode::WithRef;
    double ref_cosine_mean = 0.0;
    double gt_cosine_mean = 0.0;
    double psnr_mean = 0.0;
    std::size_t n_used = 0;
    std::size_t n_skipped = 0;
    // reference file reads issued by the restoration phase; must be zero in
    // no-ref mode (the metric phase reads the first reference in both modes)
    long restoration_ref_reads = 0;
    std::vector<EvalRow> rows;
    std::string config_echo;
};

// Per-sample sampler seed is cfg.seed + index. In with-ref mode, samples
// without references are skipped and counted.
EvalReport evaluate(const Backbone& model, const CorpusOnDisk& corpus, EvalMode mode,
                    const SamplerConfig& cfg);

void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace icflow

#endif
