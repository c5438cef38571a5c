#include "icflow/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "icflow/degrade.hpp"
#include "icflow/image.hpp"

namespace fs = std::filesystem;

namespace icflow {

IdentityParams identity_params(std::uint64_t identity_seed) {
    RngStream rng(identity_seed);
    IdentityParams id;
    const int n_blobs = 4 + static_cast<int>(rng.uniform_int(3));  // 4..6
    for (int b = 0; b < n_blobs; ++b) {
        IdentityParams::Blob blob;
        blob.cx = 0.2 + 0.6 * rng.uniform();
        blob.cy = 0.2 + 0.6 * rng.uniform();
        blob.sx = 0.08 + 0.10 * rng.uniform();
        blob.sy = 0.08 + 0.10 * rng.uniform();
        const double mag = 0.15 + 0.30 * rng.uniform();
        blob.amp = (rng.uniform() < 0.5) ? -mag : mag;
        id.blobs.push_back(blob);
    }
    return id;
}

NuisanceParams nuisance_params(std::uint64_t nuisance_seed) {
    RngStream rng(nuisance_seed);
    NuisanceParams n;
    n.dx = (rng.uniform() - 0.5) * 0.12;   // +-6% of the image
    n.dy = (rng.uniform() - 0.5) * 0.12;
    n.rot = (rng.uniform() - 0.5) * 0.20;  // +-0.1 rad
    n.gain = 0.92 + 0.16 * rng.uniform();
    n.bias = (rng.uniform() - 0.5) * 0.08;
    return n;
}

Tensor render_identity(const IdentityParams& id, const NuisanceParams& nu, Index channels,
                       Index size) {
    Tensor img({channels, size, size});
    const double inv = 1.0 / static_cast<double>(size);
    const double cr = std::cos(nu.rot), sr = std::sin(nu.rot);
    for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
            // rotate about the image center, then shift
            const double px = (static_cast<double>(x) + 0.5) * inv - 0.5;
            const double py = (static_cast<double>(y) + 0.5) * inv - 0.5;
            const double rx = cr * px + sr * py + 0.5 - nu.dx;
            const double ry = -sr * px + cr * py + 0.5 - nu.dy;
            double v = id.base;
            for (const auto& b : id.blobs) {
                const double ddx = (rx - b.cx) / b.sx;
                const double ddy = (ry - b.cy) / b.sy;
                v += b.amp * std::exp(-0.5 * (ddx * ddx + ddy * ddy));
            }
            v = nu.gain * v + nu.bias;
            v = std::min(1.0, std::max(0.0, v));
            for (Index ch = 0; ch < channels; ++ch) img.at(ch, y, x) = v;
        }
    return img;
}

Corpus make_dataset(Index n_identities, Index refs_per_identity, std::uint64_t seed,
                    Index image_size, Index channels) {
    if (n_identities < 1) throw DomainError("make_dataset: need at least one identity");
    Corpus corpus;
    corpus.image_size = image_size;
    corpus.channels = channels;
    for (Index i = 0; i < n_identities; ++i) {
        IdentityRecord rec;
        rec.identity_seed = mix_seed(seed, static_cast<std::uint64_t>(i), 0x1d);
        const IdentityParams id = identity_params(rec.identity_seed);
        rec.clean = render_identity(id, nuisance_params(mix_seed(rec.identity_seed, 0)), channels,
                                    image_size);
        for (Index r = 0; r < refs_per_identity; ++r)
            rec.refs.push_back(render_identity(
                id, nuisance_params(mix_seed(rec.identity_seed, 1 + static_cast<std::uint64_t>(r))),
                channels, image_size));
        corpus.items.push_back(std::move(rec));
    }
    return corpus;
}

int sample_reference_count(RngStream& rng, const std::array<double, 4>& mix) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
        acc += mix[static_cast<std::size_t>(k)];
        if (u < acc) return k;
    }
    return 3;
}

namespace {

std::string item_name(std::size_t i) {
    std::ostringstream os;
    os << "id_" << std::setw(4) << std::setfill('0') << i;
    return os.str();
}

}  // namespace

void write_corpus(const std::string& dir, const Corpus& corpus, int strength) {
    fs::create_directories(dir);
    {
        std::ofstream man(dir + "/manifest.txt");
        if (!man) throw IoError("cannot write manifest in " + dir);
        man << "n=" << corpus.items.size() << "\n"
            << "refs=" << (corpus.items.empty() ? 0 : corpus.items[0].refs.size()) << "\n"
            << "image_size=" << corpus.image_size << "\n"
            << "channels=" << corpus.channels << "\n"
            << "strength=" << strength << "\n";
    }
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const auto& rec = corpus.items[i];
        const std::string sub = dir + "/" + item_name(i);
        fs::create_directories(sub);
        write_image(sub + "/clean.png", rec.clean);
        for (std::size_t r = 0; r < rec.refs.size(); ++r)
            write_image(sub + "/ref_" + std::to_string(r) + ".png", rec.refs[r]);
        // deterministic LQ input: seed 42+i per identity index
        write_image(sub + "/deg.png", degrade(rec.clean, strength, 42 + i));
    }
}

CorpusOnDisk::CorpusOnDisk(const std::string& dir) : dir_(dir) {
    std::ifstream man(dir + "/manifest.txt");
    if (!man) throw IoError("missing manifest in " + dir);
    std::string line;
    while (std::getline(man, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "n") n_ = static_cast<std::size_t>(std::stoul(value));
        else if (key == "refs") refs_per_identity_ = std::stoi(value);
        else if (key == "strength") strength_ = std::stoi(value);
    }
    if (n_ == 0) throw IoError("empty corpus: " + dir);
}

std::string CorpusOnDisk::item_dir(std::size_t i) const { return dir_ + "/" + item_name(i); }

int CorpusOnDisk::n_refs(std::size_t i) const {
    int n = 0;
    while (n < refs_per_identity_ &&
           fs::exists(item_dir(i) + "/ref_" + std::to_string(n) + ".png"))
        ++n;
    return n;
}

Tensor CorpusOnDisk::load_clean(std::size_t i) const { return read_image(item_dir(i) + "/clean.png"); }
Tensor CorpusOnDisk::load_deg(std::size_t i) const { return read_image(item_dir(i) + "/deg.png"); }

Tensor CorpusOnDisk::load_ref(std::size_t i, int r) const {
    ++ref_reads_;
    return read_image(item_dir(i) + "/ref_" + std::to_string(r) + ".png");
}

}  // namespace icflow
