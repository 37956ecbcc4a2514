#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "pokedyn/autodiff.hpp"

using namespace pokedyn;

TEST_CASE("elementwise forward values") {
    Tape t;
    Tensor a = t.leaf({2}, {1.0, 2.0}, false);
    Tensor b = t.leaf({2}, {3.0, 4.0}, false);
    Tensor s = t.add(a, b);
    CHECK(s.val()[0] == 4.0);
    CHECK(s.val()[1] == 6.0);

    Tensor ones = t.leaf({2, 3}, 1.0, false);
    CHECK(t.reduce_sum(ones).scalar() == 6.0);

    Tensor z = t.leaf({3}, {0.0, 0.0, 0.0}, false);
    Tensor sm = t.softmax(z);
    for (int i = 0; i < 3; ++i) CHECK(sm.val()[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("shape mismatch rejected with diagnostic") {
    Tape t;
    Tensor a = t.leaf({2}, 0.0, false);
    Tensor b = t.leaf({3}, 0.0, false);
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
}

TEST_CASE("backward: quadratic and linear roots") {
    Tape t;
    Tensor x = t.leaf({3}, {1.0, 2.0, 3.0}, true);
    Tensor root = t.reduce_sum(t.mul(x, x));
    t.backward(root);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));

    Tape t2;
    Tensor y = t2.leaf({2, 2}, {5, 6, 7, 8}, true);
    t2.backward(t2.reduce_sum(y));
    for (double g : y.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward rejects non-scalar root") {
    Tape t;
    Tensor x = t.leaf({2}, 0.5, true);
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("gradient accumulates across fan-out") {
    Tape t;
    Tensor x = t.leaf({1}, {3.0}, true);
    Tensor root = t.reduce_sum(t.add(x, x));  // d/dx (2x) = 2
    t.backward(root);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("finite_difference_check: norm-squared and constant") {
    auto f = [](const std::vector<double>& x) {
        double v = 0;
        std::vector<double> g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) { v += x[i] * x[i]; g[i] = 2 * x[i]; }
        return std::make_pair(v, g);
    };
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(10);
    for (auto& v : x) v = u(rng);
    FdReport r = finite_difference_check(f, x, 1e-5, 1e-4);
    CHECK(r.ok());
    CHECK(r.max_rel_err < 1e-6);

    auto c = [](const std::vector<double>& x) {
        return std::make_pair(1.5, std::vector<double>(x.size(), 0.0));
    };
    FdReport rc = finite_difference_check(c, x, 1e-5, 1e-4);
    CHECK(rc.ok());
    CHECK(rc.max_rel_err == 0.0);
}

namespace {

// FD-checks a unary tape op mapping [n] -> scalar via reduce_sum composition
template <typename Op>
void fd_check_op(Op&& op, int n, std::uint64_t seed, double tol = 1e-4, double lo = -1, double hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(n);
        for (auto& v : x) v = u(rng);
        auto f = [&](const std::vector<double>& xx) {
            Tape t;
            Tensor in = t.leaf({n}, xx, true);
            Tensor out = op(t, in);
            t.backward(out);
            return std::make_pair(out.scalar(), in.grad());
        };
        FdReport r = finite_difference_check(f, x, 1e-6, tol);
        CAPTURE(trial);
        CHECK(r.ok());
    }
}

}  // namespace

TEST_CASE("primitive gradients match finite differences at 100 random points") {
    fd_check_op([](Tape& t, const Tensor& x) { return t.reduce_sum(t.mul(x, x)); }, 6, 11);
    fd_check_op([](Tape& t, const Tensor& x) { return t.reduce_sum(t.exp(x)); }, 6, 12);
    // abs kink at 0 excluded by sampling away from it
    fd_check_op([](Tape& t, const Tensor& x) { return t.reduce_sum(t.abs(x)); }, 6, 13, 1e-4, 0.1, 1.0);
    fd_check_op([](Tape& t, const Tensor& x) { return t.reduce_sum(t.relu(x)); }, 6, 14, 1e-4, 0.1, 1.0);
    fd_check_op([](Tape& t, const Tensor& x) { return t.cross_entropy(t.softmax(x), 2); }, 6, 15);
    fd_check_op([](Tape& t, const Tensor& x) {
        std::vector<double> tgt = {0.3, -0.4, 0.7, 0.2, -0.8, 0.5};
        return t.l1_to_const(x, tgt);
    }, 6, 16);
    fd_check_op([](Tape& t, const Tensor& x) {
        Tensor w = t.leaf({2, 6}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.2, -0.1, 0.3, 0.2, -0.4}, false);
        Tensor b = t.leaf({2}, {0.05, -0.05}, false);
        return t.reduce_sum(t.mul(t.dense(x, w, b), t.dense(x, w, b)));
    }, 6, 17);
}

TEST_CASE("conv2d / upsample / softmax_channels gradients") {
    fd_check_op([](Tape& t, const Tensor& x) {
        Tensor img = t.reshape(x, {1, 4, 4});
        Tensor w = t.leaf({2, 1, 3, 3},
                          {0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.1, -0.3,
                           -0.1, 0.2, 0.0, 0.4, -0.2, 0.1, 0.0, 0.3, 0.2}, false);
        Tensor b = t.leaf({2}, {0.1, -0.1}, false);
        Tensor y = t.conv2d(img, w, b, 2, 1);
        return t.reduce_sum(t.mul(y, y));
    }, 16, 21);
    fd_check_op([](Tape& t, const Tensor& x) {
        Tensor img = t.reshape(x, {1, 2, 2});
        Tensor y = t.upsample2x(img);
        return t.reduce_sum(t.mul(y, y));
    }, 4, 22);
    fd_check_op([](Tape& t, const Tensor& x) {
        Tensor f = t.reshape(x, {3, 2, 1});
        Tensor s = t.softmax_channels(f);
        // quadratic objective: smooth everywhere, unlike an L1 pull toward a
        // target the softmax outputs can cross
        return t.reduce_sum(t.mul(s, s));
    }, 6, 23);
}

TEST_CASE("min_reduce ties break toward lowest flat index") {
    Tape t;
    Tensor x = t.leaf({4}, {2.0, 1.0, 1.0, 3.0}, true);
    Tensor m = t.min_reduce(x);
    CHECK(m.scalar() == 1.0);
    t.backward(m);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("linearity of backward over composite a*f + b*g") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(5);
        for (auto& v : x) v = u(rng);
        double a = u(rng), b = u(rng);
        auto gradf = [&](bool fa, bool fb) {
            Tape t;
            Tensor in = t.leaf({5}, x, true);
            Tensor f = t.reduce_sum(t.mul(in, in));
            Tensor g = t.reduce_sum(t.exp(in));
            Tensor root = t.add(t.scale(f, fa ? a : 0.0), t.scale(g, fb ? b : 0.0));
            t.backward(root);
            return in.grad();
        };
        auto gf = gradf(true, false), gg = gradf(false, true), gboth = gradf(true, true);
        for (int i = 0; i < 5; ++i)
            CHECK(gboth[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-12));
    }
}

TEST_CASE("single-threaded determinism: identical tapes give identical bits") {
    auto run = [] {
        Tape t;
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(-1, 1);
        std::vector<double> x(32);
        for (auto& v : x) v = u(rng);
        Tensor in = t.leaf({32}, x, true);
        Tensor y = t.reduce_sum(t.mul(t.exp(t.scale(in, 0.5)), in));
        t.backward(y);
        return std::make_pair(y.scalar(), in.grad());
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(std::memcmp(&v1, &v2, sizeof v1) == 0);
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}
