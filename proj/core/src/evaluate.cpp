#include "icflow/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "icflow/image.hpp"

namespace icflow {

Tensor restore_image(const Backbone& model, const Tensor& deg_image,
                     const std::vector<Tensor>& refs, const SamplerConfig& cfg) {
    const FlowFn fn = [&](const Tensor& z, double sigma, FlowBranch branch) {
        return model.predict_flow(z, deg_image, refs, sigma,
                                  branch == FlowBranch::Conditional ? kPathwaysFull
                                                                    : kPathwaysUnconditional);
    };
    const Tensor z0 = integrate(fn, model.config().latent_token_shape(), cfg);
    return clamp01(model.config().codec().unpack(z0));
}

double psnr(const Tensor& a, const Tensor& b, double cap) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
    double mse = 0.0;
    for (Index i = 0; i < a.numel(); ++i) {
        const double d = a.at(i) - b.at(i);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return cap;
    return std::min(cap, -10.0 * std::log10(mse));
}

EvalReport evaluate(const Backbone& model, const CorpusOnDisk& corpus, EvalMode mode,
                    const SamplerConfig& cfg) {
    EvalReport report;
    report.mode = mode;
    const StubEncoder& stub = model.stub();

    // restoration phase
    struct Restored {
        Tensor image;
        std::vector<Tensor> refs;
        bool skipped = false;
        int n_refs = 0;
    };
    std::vector<Restored> restored(corpus.size());
    const long reads_before = corpus.ref_reads();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Restored& r = restored[i];
        r.n_refs = corpus.n_refs(i);
        if (mode == EvalMode::WithRef) {
            if (r.n_refs == 0) {
                r.skipped = true;
                continue;
            }
            for (int k = 0; k < r.n_refs; ++k) r.refs.push_back(corpus.load_ref(i, k));
        }
        SamplerConfig per_sample = cfg;
        per_sample.seed = cfg.seed + i;
        r.image = restore_image(model, corpus.load_deg(i), r.refs, per_sample);
    }
    report.restoration_ref_reads =
        (mode == EvalMode::NoRef) ? corpus.ref_reads() - reads_before : 0;

    // metric phase: Ref metric is computed against the first protocol
    // reference in both modes
    double ref_sum = 0.0, gt_sum = 0.0, psnr_sum = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EvalRow row;
        row.index = i;
        row.n_refs = restored[i].n_refs;
        row.skipped = restored[i].skipped;
        if (!row.skipped) {
            const Tensor clean = corpus.load_clean(i);
            const Tensor emb = stub.encode(restored[i].image);
            if (row.n_refs > 0) {
                const Tensor ref1 = (mode == EvalMode::WithRef) ? restored[i].refs[0]
                                                                : corpus.load_ref(i, 0);
                row.ref_cosine = cosine(emb, stub.encode(ref1));
            }
            row.gt_cosine = cosine(emb, stub.encode(clean));
            row.psnr = psnr(restored[i].image, clean);
            if (mode == EvalMode::WithRef)
                row.weights = model.anchor_for(restored[i].refs, corpus.load_deg(i)).weights;
            ref_sum += row.ref_cosine;
            gt_sum += row.gt_cosine;
            psnr_sum += row.psnr;
            ++report.n_used;
        } else {
            ++report.n_skipped;
        }
        report.rows.push_back(std::move(row));
    }
    if (report.n_used > 0) {
        report.ref_cosine_mean = ref_sum / static_cast<double>(report.n_used);
        report.gt_cosine_mean = gt_sum / static_cast<double>(report.n_used);
        report.psnr_mean = psnr_sum / static_cast<double>(report.n_used);
    }
    std::ostringstream echo;
    echo << "mode=" << (mode == EvalMode::WithRef ? "with-ref" : "no-ref") << " steps=" << cfg.steps
         << " guidance=" << cfg.guidance_scale << " seed=" << cfg.seed;
    report.config_echo = echo.str();
    return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write report: " + path);
    os.precision(17);
    os << "# " << report.config_echo << "\n";
    os << "# used=" << report.n_used << " skipped=" << report.n_skipped << "\n";
    os << "index,n_refs,skipped,ref_cosine,gt_cosine,psnr,w0,w1,w2\n";
    for (const auto& row : report.rows) {
        os << row.index << "," << row.n_refs << "," << (row.skipped ? 1 : 0) << ",";
        if (row.skipped) {
            os << ",,,,,\n";
            continue;
        }
        os << row.ref_cosine << "," << row.gt_cosine << "," << row.psnr;
        for (int k = 0; k < 3; ++k) {
            os << ",";
            if (k < static_cast<int>(row.weights.size())) os << row.weights[static_cast<std::size_t>(k)];
        }
        os << "\n";
    }
    os << "mean,,," << report.ref_cosine_mean << "," << report.gt_cosine_mean << ","
       << report.psnr_mean << ",,,\n";
    if (!os) throw IoError("report write failed: " + path);
}

}  // namespace icflow
