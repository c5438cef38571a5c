#include "icflow/train.hpp"

#include <fstream>

#include "icflow/degrade.hpp"
#include "icflow/flow.hpp"

namespace icflow {

TrainResult train_model(Backbone& model, const Corpus& corpus, const RunConfig& cfg) {
    if (corpus.items.empty()) throw DomainError("train: empty corpus");
    const Patchify codec = model.config().codec();
    const StubEncoder& stub = model.stub();
    SgdMomentum opt(cfg.lr, cfg.momentum);
    RngStream rng(cfg.train_seed);
    TrainResult result;
    result.curve.reserve(static_cast<std::size_t>(cfg.train_steps));

    const Index batch = std::max<Index>(1, cfg.batch_size);
    for (Index step = 0; step < cfg.train_steps; ++step) {
        std::vector<Tensor> grad_sum;
        for (Index b = 0; b < batch; ++b) {
            TrainingSample sample;
            const std::size_t idx = rng.uniform_int(corpus.items.size());
            const IdentityRecord& rec = corpus.items[idx];
            sample.clean = rec.clean;
            sample.strength = sample_strength(rng, cfg.strength_buckets);
            sample.chain_seed = rng.next_u64();
            sample.degraded = degrade(rec.clean, sample.strength, sample.chain_seed);
            const int want = sample_reference_count(rng, cfg.ref_mix);
            const int have = std::min<int>(want, static_cast<int>(rec.refs.size()));
            for (int r = 0; r < have; ++r)
                sample.refs.push_back(rec.refs[static_cast<std::size_t>(r)]);
            sample.sigma = sample_sigma(rng);

            const Tensor z0 = codec.pack(sample.clean);
            const Tensor eps = Tensor::randn(z0.shape(), rng);
            const NoisedState st = noise(z0, eps, sample.sigma);

            try {
                Graph g;
                BoundParams p(g, model.params());
                Value u_hat = model.predict_flow(g, p, st.z_sigma, sample.degraded, sample.refs,
                                                 sample.sigma);
                TotalLossInputs in;
                in.u_hat = u_hat;
                in.u_star = st.u_star;
                in.z_sigma_tokens = st.z_sigma;
                in.sigma = sample.sigma;
                in.has_refs = !sample.refs.empty();
                if (in.has_refs) {
                    in.e_ref = model.anchor_for(sample.refs, sample.degraded).direction;
                    in.e_gt = split({stub.encode(sample.clean)}).e;
                }
                TotalLoss loss = total_loss(g, in, codec, stub, cfg.loss);
                g.backward(loss.total);
                std::vector<Tensor> grads = p.collect_grads(g);
                if (grad_sum.empty()) {
                    grad_sum = std::move(grads);
                } else {
                    for (std::size_t i = 0; i < grad_sum.size(); ++i)
                        for (Index j = 0; j < grad_sum[i].numel(); ++j)
                            grad_sum[i].at(j) += grads[i].at(j);
                }

                TrainStepLog log;
                log.step = step;
                log.sigma = sample.sigma;
                log.strength = sample.strength;
                log.n_refs = static_cast<int>(sample.refs.size());
                log.loss = loss.breakdown;
                result.curve.push_back(log);
            } catch (const NumericError& e) {
                throw NumericError("training aborted at step " + std::to_string(step) + ": " +
                                   e.what());
            }
        }
        if (batch > 1)
            for (auto& t : grad_sum)
                for (Index j = 0; j < t.numel(); ++j) t.at(j) /= static_cast<double>(batch);
        opt.step(model.params(), grad_sum);
    }
    return result;
}

void write_loss_csv(const std::string& path, const std::vector<TrainStepLog>& curve) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write loss log: " + path);
    os << "step,sigma,strength,n_refs,l_fm,l_ref_id,l_hard,omega,lambda_h_star,total\n";
    os.precision(17);
    for (const auto& row : curve)
        os << row.step << "," << row.sigma << "," << row.strength << "," << row.n_refs << ","
           << row.loss.l_fm << "," << row.loss.l_ref_id << "," << row.loss.l_hard << ","
           << row.loss.omega << "," << row.loss.lambda_h_star << "," << row.loss.total << "\n";
    if (!os) throw IoError("loss log write failed: " + path);
}

double smoothed_flow_loss(const std::vector<TrainStepLog>& curve, std::size_t start,
                          std::size_t count) {
    if (start + count > curve.size()) throw DomainError("smoothed_flow_loss: window out of range");
    double s = 0.0;
    for (std::size_t i = start; i < start + count; ++i) s += curve[i].loss.l_fm;
    return s / static_cast<double>(count);
}

}  // namespace icflow
