#ifndef ICFLOW_DATASET_HPP
#define ICFLOW_DATASET_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icflow/rng.hpp"
#include "icflow/tensor.hpp"

namespace icflow {

// Synthetic "identity": a handful of Gaussian blobs whose layout is fixed by
// the identity seed. Nuisance (shift, small rotation, brightness) varies per
// render, standing in for pose/illumination.
struct IdentityParams {
    struct Blob {
        double cx, cy, sx, sy, amp;
    };
    std::vector<Blob> blobs;
    double base = 0.5;
};

struct NuisanceParams {
    double dx = 0.0, dy = 0.0, rot = 0.0, gain = 1.0, bias = 0.0;
};

IdentityParams identity_params(std::uint64_t identity_seed);
NuisanceParams nuisance_params(std::uint64_t nuisance_seed);
Tensor render_identity(const IdentityParams& id, const NuisanceParams& nuisance, Index channels,
                       Index size);

struct IdentityRecord {
    std::uint64_t identity_seed = 0;
    Tensor clean;
    std::vector<Tensor> refs;
};

struct Corpus {
    std::vector<IdentityRecord> items;
    Index image_size = 0;
    Index channels = 0;
};

// deterministic: same arguments, byte-identical corpus
Corpus make_dataset(Index n_identities, Index refs_per_identity, std::uint64_t seed,
                    Index image_size = 16, Index channels = 1);

// reference-availability mix: P(0,1,2,3) = (0.3, 0.3, 0.2, 0.2)
constexpr std::array<double, 4> kReferenceMix{0.3, 0.3, 0.2, 0.2};
int sample_reference_count(RngStream& rng, const std::array<double, 4>& mix = kReferenceMix);

// On-disk corpus layout written by make-data:
//   <dir>/manifest.txt
//   <dir>/id_0000/{clean.png, ref_0.png, ..., deg.png}
// deg.png is the clean image degraded with seed 42+i at the given strength.
void write_corpus(const std::string& dir, const Corpus& corpus, int strength);

class CorpusOnDisk {
public:
    explicit CorpusOnDisk(const std::string& dir);

    std::size_t size() const { return n_; }
    int n_refs(std::size_t i) const;
    int strength() const { return strength_; }

    Tensor load_clean(std::size_t i) const;
    Tensor load_deg(std::size_t i) const;
    Tensor load_ref(std::size_t i, int r) const;

    // instrumentation: how many reference files have been read
    long ref_reads() const { return ref_reads_; }

private:
    std::string item_dir(std::size_t i) const;

    std::string dir_;
    std::size_t n_ = 0;
    int refs_per_identity_ = 0;
    int strength_ = 0;
    mutable long ref_reads_ = 0;
};

}  // namespace icflow

#endif
