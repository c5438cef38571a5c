#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "icflow/identity.hpp"

using namespace icflow;
using namespace icflow::testutil;

namespace {

StubEncoder test_stub() { return StubEncoder(1, 16, 16, 32, 99); }

Tensor unit_vec(Index dim, Index axis) {
    Tensor t({dim});
    t.at(axis) = 1.0;
    return t;
}

}  // namespace

TEST_CASE("stub encoder: frozen, contrast-proportional, zero on flat images") {
    const StubEncoder stub = test_stub();
    RngStream rng(1);
    const Tensor img = Tensor::randn({1, 16, 16}, rng, 0.2);
    CHECK(stub.encode(img) == stub.encode(img));

    // all-zero (or any constant) image has zero-norm embedding
    CHECK(stub.encode(Tensor::zeros({1, 16, 16})).l2_norm() == 0.0);
    CHECK(stub.encode(Tensor::full({1, 16, 16}, 0.7)).l2_norm() < 1e-12);

    // halving contrast about the mean exactly halves the embedding
    double mean = 0.0;
    for (Index i = 0; i < img.numel(); ++i) mean += img.at(i);
    mean /= static_cast<double>(img.numel());
    Tensor half = img;
    for (Index i = 0; i < half.numel(); ++i) half.at(i) = mean + 0.5 * (img.at(i) - mean);
    const double full_norm = stub.encode(img).l2_norm();
    const double half_norm = stub.encode(half).l2_norm();
    CHECK(half_norm < full_norm);
    CHECK(half_norm == doctest::Approx(0.5 * full_norm).epsilon(1e-9));
}

TEST_CASE("split separates direction and quality") {
    Tensor z({4});
    z.at(0) = 3.0;
    z.at(1) = 4.0;
    const SplitEmbedding se = split({z});
    CHECK(se.q == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(se.e.at(0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(se.e.at(1) == doctest::Approx(0.8).epsilon(1e-15));

    const SplitEmbedding unit = split({unit_vec(4, 2)});
    CHECK(unit.q == doctest::Approx(1.0));
    CHECK(unit.e == unit_vec(4, 2));

    CHECK_THROWS_AS(split({Tensor::zeros({4})}), NumericError);
}

TEST_CASE("aggregate: norm-only weights, hand case, degenerate cancellation") {
    SUBCASE("singleton") {
        const SplitEmbedding one{unit_vec(4, 0), 2.5};
        const IdentityAnchor a = aggregate({one}, 1.0);
        REQUIRE(a.weights.size() == 1);
        CHECK(a.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(a.direction == unit_vec(4, 0));
        CHECK(a.provenance == AnchorProvenance::ReferenceAggregate);
    }
    SUBCASE("q=[2,1], orthonormal directions") {
        const IdentityAnchor a = aggregate({{unit_vec(4, 0), 2.0}, {unit_vec(4, 1), 1.0}}, 1.0);
        CHECK(a.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(a.weights[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        // normalize((2/3, 1/3)) = (2, 1)/sqrt(5)
        CHECK(a.direction.at(0) == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-12));
        CHECK(a.direction.at(1) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-12));
    }
    SUBCASE("equal q, equal direction") {
        const IdentityAnchor a = aggregate({{unit_vec(4, 1), 1.3}, {unit_vec(4, 1), 1.3}}, 1.0);
        for (Index i = 0; i < 4; ++i)
            CHECK(a.direction.at(i) == doctest::Approx(unit_vec(4, 1).at(i)).epsilon(1e-12));
    }
    SUBCASE("antipodal cancellation is an error, not a silent renormalization") {
        Tensor neg = unit_vec(4, 0);
        neg.at(0) = -1.0;
        CHECK_THROWS_AS(aggregate({{unit_vec(4, 0), 1.0}, {neg, 1.0}}, 1.0), NumericError);
    }
    CHECK_THROWS_AS(aggregate({}, 1.0), DomainError);
    CHECK_THROWS_AS(aggregate({{unit_vec(4, 0), 1.0}}, 0.0), DomainError);
}

TEST_CASE("aggregate weights are exactly norm-proportional at T=1") {
    RngStream rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<SplitEmbedding> ses;
        double qsum = 0.0;
        const int n = 1 + static_cast<int>(rng.uniform_int(3));
        for (int i = 0; i < n; ++i) {
            Tensor z = Tensor::randn({8}, rng);
            ses.push_back(split({z}));
            qsum += ses.back().q;
        }
        const IdentityAnchor a = aggregate(ses, 1.0);
        for (int i = 0; i < n; ++i)
            CHECK(std::fabs(a.weights[static_cast<std::size_t>(i)] -
                            ses[static_cast<std::size_t>(i)].q / qsum) < 1e-7);
    }
}

TEST_CASE("aggregate is permutation invariant (bitwise via canonical order)") {
    RngStream rng(3);
    std::vector<SplitEmbedding> ses;
    for (int i = 0; i < 3; ++i) ses.push_back(split({Tensor::randn({8}, rng)}));
    const IdentityAnchor base = aggregate(ses, 1.0);

    std::vector<std::size_t> perm{2, 0, 1};
    std::vector<SplitEmbedding> shuffled;
    for (std::size_t p : perm) shuffled.push_back(ses[p]);
    const IdentityAnchor other = aggregate(shuffled, 1.0);

    CHECK(base.direction == other.direction);  // exact, not just 1e-6
    auto ws1 = base.weights;
    auto ws2 = other.weights;
    std::sort(ws1.begin(), ws1.end());
    std::sort(ws2.begin(), ws2.end());
    for (std::size_t i = 0; i < ws1.size(); ++i) CHECK(ws1[i] == doctest::Approx(ws2[i]).epsilon(1e-15));
}

TEST_CASE("scaling one raw embedding rescales its weight as cq/(sum+(c-1)q)") {
    RngStream rng(4);
    std::vector<Tensor> raw;
    for (int i = 0; i < 3; ++i) raw.push_back(Tensor::randn({8}, rng));
    std::vector<SplitEmbedding> ses;
    double qsum = 0.0;
    for (const auto& z : raw) {
        ses.push_back(split({z}));
        qsum += ses.back().q;
    }
    const double c = 3.0;
    const double q0 = ses[0].q;

    std::vector<SplitEmbedding> scaled = ses;
    Tensor z0 = raw[0];
    for (Index i = 0; i < z0.numel(); ++i) z0.at(i) *= c;
    scaled[0] = split({z0});
    // direction of the scaled member is unchanged
    for (Index i = 0; i < 8; ++i)
        CHECK(scaled[0].e.at(i) == doctest::Approx(ses[0].e.at(i)).epsilon(1e-12));

    const IdentityAnchor a = aggregate(scaled, 1.0);
    CHECK(a.weights[0] == doctest::Approx(c * q0 / (qsum + (c - 1.0) * q0)).epsilon(1e-9));
}

TEST_CASE("select_anchor: aggregation vs degraded fallback") {
    const StubEncoder stub = test_stub();
    RngStream rng(5);
    const Tensor deg = Tensor::randn({1, 16, 16}, rng, 0.3);
    std::vector<Tensor> refs{Tensor::randn({1, 16, 16}, rng, 0.3),
                             Tensor::randn({1, 16, 16}, rng, 0.3)};

    const IdentityAnchor with = select_anchor(refs, deg, 1.0, stub);
    CHECK(with.provenance == AnchorProvenance::ReferenceAggregate);
    CHECK(with.weights.size() == 2);
    double wsum = 0.0;
    for (double w : with.weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));

    const IdentityAnchor fallback = select_anchor({}, deg, 1.0, stub);
    CHECK(fallback.provenance == AnchorProvenance::DegradedFallback);
    CHECK(fallback.weights.empty());
    CHECK(std::fabs(fallback.direction.l2_norm() - 1.0) < 1e-9);

    CHECK_THROWS_AS(select_anchor({}, Tensor::zeros({1, 16, 16}), 1.0, stub), NumericError);
}

TEST_CASE("modulation deltas: zero at init, anchor-sensitive when trained") {
    const IdentityPathwayConfig cfg{8, 16, 1, 1};
    RngStream rng(6);
    ParamStore params;
    register_identity_params(params, cfg, rng);

    IdentityAnchor a;
    a.direction = split({Tensor::randn({8}, rng)}).e;
    a.provenance = AnchorProvenance::ReferenceAggregate;

    const ModulationDeltas at_init = compute_modulation_deltas(params, cfg, a);
    for (const auto& triple : at_init.dbl)
        for (const auto& t : triple)
            CHECK(t.max_abs() == 0.0);
    for (const auto& triple : at_init.sgl)
        for (const auto& t : triple)
            CHECK(t.max_abs() == 0.0);

    // random full-rank heads: different anchors give different deltas
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params.tensor(i);
        t = Tensor::randn(t.shape(), rng, 0.3);
    }
    params.quantize_f32();
    IdentityAnchor b;
    b.direction = split({Tensor::randn({8}, rng)}).e;
    const ModulationDeltas da = compute_modulation_deltas(params, cfg, a);
    const ModulationDeltas db = compute_modulation_deltas(params, cfg, b);
    CHECK_FALSE(da.dbl[0][0] == db.dbl[0][0]);
}

TEST_CASE("modulation delta gradients match finite differences") {
    const IdentityPathwayConfig cfg{6, 8, 1, 1};
    RngStream rng(7);
    ParamStore params;
    register_identity_params(params, cfg, rng);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params.tensor(i);
        t = Tensor::randn(t.shape(), rng, 0.2);
    }
    params.quantize_f32();

    IdentityAnchor anchor;
    anchor.direction = split({Tensor::randn({6}, rng)}).e;

    std::vector<Tensor> weights;  // fixed projections onto a scalar
    for (int k = 0; k < 6; ++k) weights.push_back(Tensor::randn({8}, rng));

    auto scalar_of = [&](const ParamStore& ps) -> double {
        Graph g;
        BoundParams bp(g, ps);
        const ModulationDeltaValues dv = modulation_deltas(g, bp, cfg, anchor);
        Value acc = g.sum_all(g.mul(dv.dbl[0].scale, g.input(weights[0])));
        acc = g.add(acc, g.sum_all(g.mul(dv.dbl[0].shift, g.input(weights[1]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.dbl[0].gate, g.input(weights[2]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].scale, g.input(weights[3]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].shift, g.input(weights[4]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].gate, g.input(weights[5]))));
        return g.val(acc).at(0);
    };

    Graph g;
    BoundParams bp(g, params);
    {
        const ModulationDeltaValues dv = modulation_deltas(g, bp, cfg, anchor);
        Value acc = g.sum_all(g.mul(dv.dbl[0].scale, g.input(weights[0])));
        acc = g.add(acc, g.sum_all(g.mul(dv.dbl[0].shift, g.input(weights[1]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.dbl[0].gate, g.input(weights[2]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].scale, g.input(weights[3]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].shift, g.input(weights[4]))));
        acc = g.add(acc, g.sum_all(g.mul(dv.sgl[0].gate, g.input(weights[5]))));
        g.backward(acc);
    }

    RngStream pick(8);
    ParamStore probe = params;
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t pi = pick.uniform_int(params.size());
        Tensor& t = probe.tensor(pi);
        const Index ei = static_cast<Index>(pick.uniform_int(static_cast<std::uint64_t>(t.numel())));
        const double saved = t.at(ei);
        const double h = 1e-3;
        t.at(ei) = saved + h;
        const double up = scalar_of(probe);
        t.at(ei) = saved - h;
        const double down = scalar_of(probe);
        t.at(ei) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = g.grad(bp.by_index(pi)).at(ei);
        worst = std::max(worst, std::fabs(an - fd) / std::max({1e-8, std::fabs(an), std::fabs(fd)}));
    }
    CHECK(worst < 1e-4);
}
