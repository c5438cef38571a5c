#include <doctest.h>

#include <cmath>
#include <functional>

#include "gradcheck.hpp"
#include "icflow/graph.hpp"
#include "icflow/rope.hpp"

using namespace icflow;
using namespace icflow::testutil;

namespace {

using BuildFn = std::function<Value(Graph&, const std::vector<Value>&)>;

// Scalarize op output through a fixed random projection so gradients are
// informative (a plain sum is blind to softmax/layernorm directions).
double eval_scalar(const BuildFn& build, const std::vector<Tensor>& leaves, const Tensor& w) {
    Graph g;
    std::vector<Value> vs;
    for (const auto& t : leaves) vs.push_back(g.param(t));
    Value out = build(g, vs);
    Value proj = g.sum_all(g.mul(out, g.input(w)));
    return g.val(proj).at(0);
}

void check_gradients(const BuildFn& build, const std::vector<Shape>& shapes, std::uint64_t seed,
                     double tol = 1e-4) {
    RngStream rng(seed);
    std::vector<Tensor> leaves;
    for (const auto& s : shapes) leaves.push_back(Tensor::randn(s, rng));

    Tensor w;
    {
        Graph g;
        std::vector<Value> vs;
        for (const auto& t : leaves) vs.push_back(g.param(t));
        w = Tensor::randn(g.val(build(g, vs)).shape(), rng);
    }

    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Value> vs;
        for (const auto& t : leaves) vs.push_back(g.param(t));
        Value out = build(g, vs);
        g.backward(g.sum_all(g.mul(out, g.input(w))));
        for (Value v : vs) analytic.push_back(g.grad(v));
    }
    const auto fd = fd_gradients(
        [&](const std::vector<Tensor>& ls) { return eval_scalar(build, ls, w); }, leaves);
    CHECK(max_relative_error(analytic, fd) < tol);
}

}  // namespace

TEST_CASE("matmul identity and selector cases") {
    Graph g;
    Value a = g.input(Tensor::identity(2));
    Value b = g.input(Tensor::from({2, 2}, {1, 2, 3, 4}));
    const Tensor& y = g.val(g.matmul(a, b));
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);
    CHECK(y.at(1, 0) == 3.0);
    CHECK(y.at(1, 1) == 4.0);

    Value sel = g.matmul(g.input(Tensor::from({1, 2}, {1, 0})), g.input(Tensor::from({2, 1}, {5, 7})));
    CHECK(g.val(sel).at(0) == 5.0);

    CHECK_THROWS_AS(g.matmul(a, g.input(Tensor::zeros({3, 2}))), ShapeError);
}

TEST_CASE("softmax hand values and stability") {
    Graph g;
    const Tensor& sym = g.val(g.softmax_rows(g.input(Tensor::zeros({1, 3}))));
    for (Index i = 0; i < 3; ++i) CHECK(sym.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // softmax(log q) = q / sum(q)
    const Tensor& lg = g.val(
        g.softmax_rows(g.input(Tensor::from({1, 2}, {std::log(2.0), std::log(1.0)}))));
    CHECK(lg.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(lg.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const Tensor& big = g.val(g.softmax_rows(g.input(Tensor::from({1, 2}, {1000.0, 0.0}))));
    CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(big.at(1) < 1e-300);

    CHECK_THROWS_AS(g.softmax_rows(g.input(Tensor::zeros({3}))), ShapeError);
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e4") {
    RngStream rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g;
        Tensor x = Tensor::randn({4, 8}, rng, 1e4);
        const Tensor& p = g.val(g.softmax_rows(g.input(x)));
        for (Index r = 0; r < 4; ++r) {
            double s = 0.0;
            for (Index c = 0; c < 8; ++c) {
                s += p.at(r, c);
                CHECK(p.at(r, c) >= 0.0);
            }
            CHECK(std::fabs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("layernorm hand values") {
    Graph g;
    // constant row: epsilon handles the zero variance
    Value c = layernorm(g, g.input(Tensor::full({1, 4}, 3.0)), g.input(Tensor::full({4}, 1.0)),
                        g.input(Tensor::zeros({4})));
    for (Index i = 0; i < 4; ++i) CHECK(g.val(c).at(i) == 0.0);

    // [1,-1]: mean 0, var 1, so entries are +-1/sqrt(1 + 1e-5)
    Value y = layernorm(g, g.input(Tensor::from({1, 2}, {1, -1})), g.input(Tensor::full({2}, 1.0)),
                        g.input(Tensor::zeros({2})));
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(g.val(y).at(0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g.val(y).at(1) == doctest::Approx(-expected).epsilon(1e-12));

    CHECK_THROWS_AS(g.layernorm_rows(g.input(Tensor::zeros({2, 1}))), ShapeError);
}

TEST_CASE("attention single key returns v, peaked q selects the matching row") {
    Graph g;
    RngStream rng(3);
    Value q = g.input(Tensor::randn({5, 4}, rng));
    Value k1 = g.input(Tensor::randn({1, 4}, rng));
    Value v1 = g.input(Tensor::randn({1, 6}, rng));
    const Tensor& out = g.val(g.attention(q, k1, v1));
    for (Index r = 0; r < 5; ++r)
        for (Index c = 0; c < 6; ++c) CHECK(out.at(r, c) == g.val(v1).at(0, c));

    // orthogonal one-hot keys, sharply peaked query -> softmax concentrates
    Tensor keys = Tensor::zeros({4, 4});
    for (Index i = 0; i < 4; ++i) keys.at(i, i) = 1.0;
    Tensor query = Tensor::zeros({1, 4});
    query.at(0, 2) = 200.0;
    Tensor values = Tensor::randn({4, 3}, rng);
    const Tensor& sel = g.val(g.attention(g.input(query), g.input(keys), g.input(values)));
    for (Index c = 0; c < 3; ++c) CHECK(sel.at(0, c) == doctest::Approx(values.at(2, c)).epsilon(1e-9));

    CHECK_THROWS_AS(g.attention(g.input(Tensor::zeros({2, 3})), g.input(Tensor::zeros({2, 4})),
                                g.input(Tensor::zeros({2, 4}))),
                    ShapeError);
}

TEST_CASE("analytic gradients match central finite differences over 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        check_gradients([](Graph& g, const std::vector<Value>& v) { return g.add(v[0], v[1]); },
                        {{3, 4}, {3, 4}}, seed);
        check_gradients([](Graph& g, const std::vector<Value>& v) { return g.sub(v[0], v[1]); },
                        {{3, 4}, {3, 4}}, seed);
        check_gradients([](Graph& g, const std::vector<Value>& v) { return g.mul(v[0], v[1]); },
                        {{3, 4}, {3, 4}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.div(v[0], g.add_const(g.mul(v[1], v[1]), 1.0));
            },
            {{3, 4}, {3, 4}}, seed);
        check_gradients([](Graph& g, const std::vector<Value>& v) { return g.matmul(v[0], v[1]); },
                        {{3, 5}, {5, 4}}, seed);
        check_gradients([](Graph& g, const std::vector<Value>& v) { return g.gelu(v[0]); }, {{4, 4}},
                        seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.esqrt(g.add_const(g.mul(v[0], v[0]), 0.5));
            },
            {{3, 3}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.softmax_rows(v[0]); }, {{3, 6}},
            seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.layernorm_rows(v[0]); }, {{3, 6}},
            seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.attention(v[0], v[1], v[2]); },
            {{4, 4}, {5, 4}, {5, 3}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.mul_rowvec(v[0], v[1]); },
            {{4, 3}, {3}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.add_rowvec(v[0], v[1]); },
            {{4, 3}, {3}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) { return g.mul_scalar(v[0], v[1]); },
            {{4, 3}, {1}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.concat_rows({g.slice_rows(v[0], 1, 2), g.transpose(v[1])});
            },
            {{4, 3}, {3, 2}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.concat_cols({g.slice_cols(v[0], 0, 2), v[1]});
            },
            {{3, 4}, {3, 2}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.reshape(g.scale(v[0], 1.7), {2, 6});
            },
            {{3, 4}}, seed);
        check_gradients(
            [](Graph& g, const std::vector<Value>& v) {
                return g.add(g.mean_all(v[0]), g.sum_all(v[1]));
            },
            {{3, 4}, {2, 2}}, seed);
    }
}

TEST_CASE("rope op gradient and inverse-rotation backward") {
    RopeConfig cfg;
    cfg.axis_dims = {2, 2, 2, 2};
    std::vector<PositionId> ids{{0, 1, 2, 0}, {3, 0, 1, 2}, {1, 1, 1, 1}};
    auto table = make_rope_table(ids, cfg);
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        check_gradients([&](Graph& g, const std::vector<Value>& v) { return g.rope(v[0], table); },
                        {{3, 8}}, seed);
}

TEST_CASE("gather permutation round-trips gradients") {
    auto perm = std::make_shared<std::vector<Index>>(std::vector<Index>{3, 0, 2, 1});
    check_gradients(
        [&](Graph& g, const std::vector<Value>& v) { return g.gather(v[0], perm, {4}); }, {{4}}, 5);
}

TEST_CASE("ops are deterministic: identical bits on repeated evaluation") {
    RngStream rng(11);
    const Tensor a = Tensor::randn({6, 6}, rng);
    const Tensor b = Tensor::randn({6, 6}, rng);
    auto run = [&]() {
        Graph g;
        Value x = g.matmul(g.input(a), g.input(b));
        x = g.softmax_rows(x);
        x = g.layernorm_rows(x);
        x = g.gelu(x);
        return g.val(g.mean_all(x));
    };
    const Tensor first = run();
    const Tensor second = run();
    CHECK(first == second);
}

TEST_CASE("non-finite values are surfaced, not propagated") {
    Graph g;
    Value zero = g.input(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(g.div(g.input(Tensor::full({2, 2}, 1.0)), zero), NumericError);
    CHECK_THROWS_AS(g.input(Tensor::full({2}, std::numeric_limits<double>::infinity())),
                    NumericError);
}

TEST_CASE("untouched parameters get exact zero gradients") {
    Graph g;
    Value used = g.param(Tensor::full({2, 2}, 1.5));
    Value unused = g.param(Tensor::full({3}, 2.0));
    g.backward(g.sum_all(g.mul(used, used)));
    const Tensor gu = g.grad(unused);
    for (Index i = 0; i < gu.numel(); ++i) CHECK(gu.at(i) == 0.0);
    CHECK(g.grad(used).at(0) == doctest::Approx(3.0));
}
