#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msdet/gradcheck.hpp"
#include "msdet/graph.hpp"
#include "msdet/tensor.hpp"

using namespace msdet;

namespace {

Tensor rand_tensor(Shape4 s, std::mt19937& rng, float lo = -1.0f,
                   float hi = 1.0f) {
    Tensor t(s);
    std::uniform_real_distribution<float> d(lo, hi);
    for (auto& v : t.data) v = d(rng);
    return t;
}

// Distinct entries with pairwise gaps well above the finite-difference step,
// so kinked ops (relu boundaries, max winners) never flip during a check.
Tensor spaced_tensor(Shape4 s, std::mt19937& rng) {
    Tensor t(s);
    std::vector<float> vals(t.data.size());
    for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = -1.0f + 0.05f * float(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    t.data = vals;
    return t;
}

Tensor rand_weights(Shape4 s, std::mt19937& rng) {
    return rand_tensor(s, rng);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
    Shape4 s(2, 3, 4, 5);
    CHECK(s.numel() == 120);
    Tensor t(s);
    CHECK(t.data.size() == 120);
    t.at(1, 2, 3, 4) = 7.0f;
    CHECK(t.data[119] == 7.0f);
    CHECK_THROWS_AS(Tensor(s, std::vector<float>(3)), ShapeError);
}

TEST_CASE("param store init is seeded and bounded") {
    ParamStore a(42), b(42), c(7);
    Parameter* pa = a.create("w", Shape4(4, 4, 1, 1), 16);
    Parameter* pb = b.create("w", Shape4(4, 4, 1, 1), 16);
    Parameter* pc = c.create("w", Shape4(4, 4, 1, 1), 16);
    CHECK(pa->value == pb->value);
    CHECK(pa->value != pc->value);
    for (float v : pa->value) CHECK(std::fabs(v) <= 0.25f);
    CHECK_THROWS(a.create("w", Shape4(1, 1, 1, 1), 1));
    a.create_const("buf", Shape4(3, 1, 1, 1), 0.0f, false);
    CHECK(a.count_trainable() == 16);
}

TEST_CASE("1x1 conv matches the linear map by hand") {
    Graph g;
    int x = g.input(Tensor(Shape4(1, 2, 1, 1), {1.0f, 2.0f}));
    int w = g.input(Tensor(Shape4(2, 2, 1, 1), {1.0f, 1.0f, 1.0f, -1.0f}));
    int b = g.input(Tensor(Shape4(2, 1, 1, 1), {0.5f, 0.5f}));
    int y = g.conv2d(x, w, b, 1, 1, 0);
    CHECK(g.val(y).data[0] == doctest::Approx(3.5f));
    CHECK(g.val(y).data[1] == doctest::Approx(-0.5f));
}

TEST_CASE("conv2d validates its geometry") {
    Graph g;
    int x = g.input(Tensor(Shape4(1, 3, 4, 4), 1.0f));
    int w = g.input(Tensor(Shape4(4, 3, 3, 3), 0.1f));
    CHECK_THROWS_AS(g.conv2d(x, w, -1, 5, 1, 0), ShapeError);   // 4x4 under 5x5
    CHECK_THROWS_AS(g.conv2d(x, w, -1, 3, 1, 0, 2), ShapeError);  // 3 % 2
    int wbad = g.input(Tensor(Shape4(4, 2, 3, 3), 0.1f));
    CHECK_THROWS_AS(g.conv2d(x, wbad, -1, 3, 1, 1), ShapeError);
}

TEST_CASE("batch norm normalizes and guards eval order") {
    BnState st;
    {
        Graph g(Mode::kTrain);
        int x = g.input(Tensor(Shape4(4, 1, 1, 1), {1, 2, 3, 4}));
        int ga = g.input(Tensor(Shape4(1, 1, 1, 1), {2.0f}));
        int be = g.input(Tensor(Shape4(1, 1, 1, 1), {0.5f}));
        int y = g.batch_norm(x, ga, be, &st);
        // mean 2.5, biased var 1.25
        const float is = 1.0f / std::sqrt(1.25f + 1e-5f);
        CHECK(g.val(y).data[0] ==
              doctest::Approx(2.0f * (1.0f - 2.5f) * is + 0.5f));
        CHECK(st.steps == 1);
        CHECK(st.mean[0] == doctest::Approx(0.1f * 2.5f));
    }
    BnState fresh;
    Graph ge(Mode::kEval);
    int x = ge.input(Tensor(Shape4(1, 1, 1, 1), {1.0f}));
    int ga = ge.input(Tensor(Shape4(1, 1, 1, 1), {1.0f}));
    int be = ge.input(Tensor(Shape4(1, 1, 1, 1), {0.0f}));
    CHECK_THROWS_AS(ge.batch_norm(x, ga, be, &fresh), std::runtime_error);
}

TEST_CASE("max pool routes ties to the lowest linear index") {
    Graph g;
    int x = g.input(Tensor(Shape4(1, 1, 2, 2), {1.0f, 5.0f, 5.0f, 0.0f}));
    int y = g.adaptive_max_pool(x);
    int loss = g.sum_all(y);
    g.backward(loss);
    Tensor dx = g.grad_of(x);
    CHECK(dx.data[0] == 0.0f);
    CHECK(dx.data[1] == 1.0f);
    CHECK(dx.data[2] == 0.0f);
}

TEST_CASE("elementwise min and max route ties to the first operand") {
    Graph g;
    int a = g.input(Tensor(Shape4(1, 1, 1, 2), {3.0f, 1.0f}));
    int b = g.input(Tensor(Shape4(1, 1, 1, 2), {3.0f, 2.0f}));
    int y = g.minimum(a, b);
    g.backward(g.sum_all(y));
    CHECK(g.grad_of(a).data[0] == 1.0f);
    CHECK(g.grad_of(b).data[0] == 0.0f);
    CHECK(g.grad_of(a).data[1] == 1.0f);

    Graph g2;
    int a2 = g2.input(Tensor(Shape4(1, 1, 1, 1), {2.0f}));
    int b2 = g2.input(Tensor(Shape4(1, 1, 1, 1), {2.0f}));
    g2.backward(g2.sum_all(g2.maximum(a2, b2)));
    CHECK(g2.grad_of(a2).data[0] == 1.0f);
    CHECK(g2.grad_of(b2).data[0] == 0.0f);
}

TEST_CASE("concat and slice round-trip") {
    std::mt19937 rng(1);
    Tensor ta = rand_tensor(Shape4(2, 3, 4, 4), rng);
    Tensor tb = rand_tensor(Shape4(2, 2, 4, 4), rng);
    Graph g;
    int a = g.input(ta), b = g.input(tb);
    int cat = g.concat_c(a, b);
    CHECK(g.val(cat).shape == Shape4(2, 5, 4, 4));
    int sa = g.slice_c(cat, 0, 3);
    int sb = g.slice_c(cat, 3, 2);
    CHECK(g.val(sa).data == ta.data);
    CHECK(g.val(sb).data == tb.data);
    CHECK_THROWS_AS(g.slice_c(cat, 4, 2), ShapeError);
}

TEST_CASE("space_to_depth keeps sub-pixels recoverable in the first half") {
    std::mt19937 rng(2);
    Tensor t = rand_tensor(Shape4(1, 3, 4, 6), rng);
    Graph g;
    int x = g.input(t);
    int y = g.space_to_depth(x);
    CHECK(g.val(y).shape == Shape4(1, 12, 2, 3));
    // channels [0,2c) hold the (0,0) and (0,1) sub-pixels untouched
    for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < 2; ++yy)
            for (int xx = 0; xx < 3; ++xx) {
                CHECK(g.val(y).at(0, c, yy, xx) == t.at(0, c, 2 * yy, 2 * xx));
                CHECK(g.val(y).at(0, 3 + c, yy, xx) ==
                      t.at(0, c, 2 * yy, 2 * xx + 1));
            }
    int xodd = g.input(Tensor(Shape4(1, 1, 3, 4)));
    CHECK_THROWS_AS(g.space_to_depth(xodd), ShapeError);
}

TEST_CASE("scan orders visit the expected token sequences") {
    // 2x3 grid, row-major linear indices 0..5
    CHECK(order_indices(ScanOrder::kRowFwd, 2, 3) ==
          std::vector<int>{0, 1, 2, 3, 4, 5});
    CHECK(order_indices(ScanOrder::kRowBwd, 2, 3) ==
          std::vector<int>{5, 4, 3, 2, 1, 0});
    CHECK(order_indices(ScanOrder::kColFwd, 2, 3) ==
          std::vector<int>{0, 3, 1, 4, 2, 5});
    CHECK(order_indices(ScanOrder::kColBwd, 2, 3) ==
          std::vector<int>{5, 2, 4, 1, 3, 0});
}

TEST_CASE("scan_permute inverts itself on every order") {
    std::mt19937 rng(3);
    Tensor t = rand_tensor(Shape4(2, 2, 3, 4), rng);
    for (ScanOrder o : {ScanOrder::kRowFwd, ScanOrder::kRowBwd,
                        ScanOrder::kColFwd, ScanOrder::kColBwd}) {
        Graph g;
        int x = g.input(t);
        int seq = g.scan_permute(x, o, 3, 4, false);
        CHECK(g.val(seq).shape == Shape4(2, 2, 12, 1));
        int back = g.scan_permute(seq, o, 3, 4, true);
        CHECK(g.val(back).data == t.data);
    }
}

TEST_CASE("bce matches the direct formula and stays finite at extremes") {
    Graph g;
    int z = g.input(Tensor(Shape4(1, 1, 1, 3), {0.3f, -1.2f, 2.0f}));
    Tensor t(Shape4(1, 1, 1, 3), {1.0f, 0.0f, 1.0f});
    int l = g.bce_mean(z, t);
    double want = 0.0;
    const double zs[3] = {0.3, -1.2, 2.0};
    const double ts[3] = {1.0, 0.0, 1.0};
    for (int i = 0; i < 3; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-zs[i]));
        want += -(ts[i] * std::log(p) + (1.0 - ts[i]) * std::log(1.0 - p));
    }
    CHECK(g.val(l).data[0] == doctest::Approx(want / 3.0).epsilon(1e-5));

    Graph g2;
    int z2 = g2.input(Tensor(Shape4(1, 1, 1, 2), {80.0f, -80.0f}));
    int l2 = g2.bce_mean(z2, Tensor(Shape4(1, 1, 1, 2), {0.0f, 1.0f}));
    CHECK(g2.val(l2).all_finite());
    // ln(2) when the logit is 0 and the target is anything
    Graph g3;
    int z3 = g3.input(Tensor(Shape4(1, 1, 1, 1), {0.0f}));
    CHECK(g3.val(g3.bce_mean(z3, Tensor(Shape4(1, 1, 1, 1), {1.0f}))).data[0] ==
          doctest::Approx(std::log(2.0)));
}

TEST_CASE("backward demands a scalar loss and accumulates across calls") {
    Graph g;
    int x = g.input(Tensor(Shape4(1, 1, 1, 2), {1.0f, 2.0f}));
    CHECK_THROWS_AS(g.backward(x), ShapeError);
    ParamStore store(0);
    Parameter* p = store.create_const("p", Shape4(1, 1, 1, 1), 3.0f);
    Graph g2;
    int pid = g2.param(p);
    int loss = g2.sum_all(g2.mul(pid, pid));  // d/dp p^2 = 6
    g2.backward(loss);
    CHECK(p->grad[0] == doctest::Approx(6.0f));
    g2.backward(loss);
    CHECK(p->grad[0] == doctest::Approx(12.0f));
}

TEST_CASE("activations hold their fixed points") {
    Graph g;
    int x = g.input(Tensor(Shape4(1, 1, 1, 4), {0.0f, 1.0f, -1.0f, 3.0f}));
    CHECK(g.val(g.silu(x)).data[0] == 0.0f);
    CHECK(g.val(g.gelu(x)).data[0] == 0.0f);
    CHECK(g.val(g.sigmoid(x)).data[0] == 0.5f);
    CHECK(g.val(g.relu(x)).data[2] == 0.0f);
    CHECK(g.val(g.softplus(x)).data[0] == doctest::Approx(std::log(2.0f)));
    CHECK(g.val(g.gelu(x)).data[3] == doctest::Approx(2.9964f).epsilon(1e-3));
    // stability at extreme inputs
    Graph g2;
    int e = g2.input(Tensor(Shape4(1, 1, 1, 2), {88.0f, -88.0f}));
    CHECK(g2.val(g2.silu(e)).all_finite());
    CHECK(g2.val(g2.gelu(e)).all_finite());
    CHECK(g2.val(g2.softplus(e)).all_finite());
    CHECK(g2.val(g2.sigmoid(e)).all_finite());
}

TEST_CASE("finite differences agree with the tape on every op") {
    std::mt19937 rng(10);
    const float tol = 1e-3f;

    SUBCASE("smooth unaries") {
        Tensor x = rand_tensor(Shape4(1, 2, 3, 3), rng);
        Tensor w = rand_weights(Shape4(1, 2, 3, 3), rng);
        auto mk = [&](auto op) {
            return [op, w](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(op(g, in[0]), w);
            };
        };
        auto chk = [&](auto op) {
            auto r = gradcheck::check_inputs(mk(op), {x});
            CHECK(r.max_rel_err < tol);
        };
        chk([](Graph& g, int i) { return g.silu(i); });
        chk([](Graph& g, int i) { return g.gelu(i); });
        chk([](Graph& g, int i) { return g.sigmoid(i); });
        chk([](Graph& g, int i) { return g.softplus(i); });
        chk([](Graph& g, int i) { return g.exp_op(i); });
        chk([](Graph& g, int i) { return g.atan_op(i); });
        chk([](Graph& g, int i) { return g.affine(i, 1.7f, -0.3f); });
    }

    SUBCASE("relu away from the kink") {
        Tensor x = spaced_tensor(Shape4(1, 2, 3, 3), rng);
        Tensor w = rand_weights(Shape4(1, 2, 3, 3), rng);
        auto r = gradcheck::check_inputs(
            [w](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(g.relu(in[0]), w);
            },
            {x});
        CHECK(r.max_rel_err < tol);
    }

    SUBCASE("binary elementwise") {
        Tensor a = spaced_tensor(Shape4(1, 2, 2, 3), rng);
        Tensor b = spaced_tensor(Shape4(1, 2, 2, 3), rng);
        for (auto& v : b.data) v += 3.5f;  // keeps the divisor positive
        Tensor w = rand_weights(Shape4(1, 2, 2, 3), rng);
        auto chk = [&](auto op) {
            auto r = gradcheck::check_inputs(
                [op, w](Graph& g, const std::vector<int>& in) {
                    return g.weighted_sum(op(g, in[0], in[1]), w);
                },
                {a, b});
            CHECK(r.max_rel_err < tol);
        };
        chk([](Graph& g, int i, int j) { return g.add(i, j); });
        chk([](Graph& g, int i, int j) { return g.sub(i, j); });
        chk([](Graph& g, int i, int j) { return g.mul(i, j); });
        chk([](Graph& g, int i, int j) { return g.div(i, j); });
        chk([](Graph& g, int i, int j) { return g.minimum(i, j); });
        chk([](Graph& g, int i, int j) { return g.maximum(i, j); });
    }

    SUBCASE("broadcast gates") {
        Tensor x = rand_tensor(Shape4(2, 3, 2, 2), rng);
        Tensor gc = rand_tensor(Shape4(2, 3, 1, 1), rng);
        Tensor gs = rand_tensor(Shape4(2, 1, 2, 2), rng);
        Tensor w = rand_weights(Shape4(2, 3, 2, 2), rng);
        auto r1 = gradcheck::check_inputs(
            [w](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(g.mul_channel(in[0], in[1]), w);
            },
            {x, gc});
        CHECK(r1.max_rel_err < tol);
        auto r2 = gradcheck::check_inputs(
            [w](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(g.mul_spatial(in[0], in[1]), w);
            },
            {x, gs});
        CHECK(r2.max_rel_err < tol);
    }

    SUBCASE("pools and channel reductions") {
        Tensor x = spaced_tensor(Shape4(2, 3, 3, 3), rng);
        auto chk = [&](auto op, Shape4 ws) {
            Tensor w = rand_weights(ws, rng);
            auto r = gradcheck::check_inputs(
                [op, w](Graph& g, const std::vector<int>& in) {
                    return g.weighted_sum(op(g, in[0]), w);
                },
                {x});
            CHECK(r.max_rel_err < tol);
        };
        chk([](Graph& g, int i) { return g.global_avg_pool(i); },
            Shape4(2, 3, 1, 1));
        chk([](Graph& g, int i) { return g.adaptive_max_pool(i); },
            Shape4(2, 3, 1, 1));
        chk([](Graph& g, int i) { return g.channel_mean(i); },
            Shape4(2, 1, 3, 3));
        chk([](Graph& g, int i) { return g.channel_max(i); },
            Shape4(2, 1, 3, 3));
    }

    SUBCASE("layout ops") {
        Tensor x = rand_tensor(Shape4(1, 2, 4, 4), rng);
        Tensor w16 = rand_weights(Shape4(1, 2, 16, 1), rng);
        Tensor w8 = rand_weights(Shape4(1, 8, 2, 2), rng);
        auto r1 = gradcheck::check_inputs(
            [w16](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(
                    g.scan_permute(in[0], ScanOrder::kColBwd, 4, 4, false),
                    w16);
            },
            {x});
        CHECK(r1.max_rel_err < tol);
        auto r2 = gradcheck::check_inputs(
            [w8](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(g.space_to_depth(in[0]), w8);
            },
            {x});
        CHECK(r2.max_rel_err < tol);
        Tensor a = rand_tensor(Shape4(1, 2, 3, 3), rng);
        Tensor b = rand_tensor(Shape4(1, 1, 3, 3), rng);
        Tensor w3 = rand_weights(Shape4(1, 3, 3, 3), rng);
        auto r3 = gradcheck::check_inputs(
            [w3](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(g.concat_c(in[0], in[1]), w3);
            },
            {a, b});
        CHECK(r3.max_rel_err < tol);
        auto r4 = gradcheck::check_inputs(
            [](Graph& g, const std::vector<int>& in) {
                return g.mean_all(g.slice_c(in[0], 1, 1));
            },
            {a});
        CHECK(r4.max_rel_err < tol);
        auto r5 = gradcheck::check_inputs(
            [](Graph& g, const std::vector<int>& in) {
                return g.mean_all(g.reshape(in[0], Shape4(9, 2, 1, 1)));
            },
            {a});
        CHECK(r5.max_rel_err < tol);
    }

    SUBCASE("convolution") {
        Tensor x = rand_tensor(Shape4(1, 4, 5, 5), rng);
        Tensor w = rand_tensor(Shape4(4, 2, 3, 3), rng, -0.4f, 0.4f);
        Tensor b = rand_tensor(Shape4(4, 1, 1, 1), rng);
        Tensor wt = rand_weights(Shape4(1, 4, 3, 3), rng);
        auto r = gradcheck::check_inputs(
            [wt](Graph& g, const std::vector<int>& in) {
                int y = g.conv2d(in[0], in[1], in[2], 3, 2, 1, 2);
                return g.weighted_sum(y, wt);
            },
            {x, w, b});
        CHECK(r.max_rel_err < tol);
    }

    SUBCASE("batch norm in train mode") {
        Tensor x = rand_tensor(Shape4(3, 2, 2, 2), rng);
        Tensor ga = rand_tensor(Shape4(2, 1, 1, 1), rng, 0.5f, 1.5f);
        Tensor be = rand_tensor(Shape4(2, 1, 1, 1), rng);
        Tensor w = rand_weights(Shape4(3, 2, 2, 2), rng);
        BnState st;
        auto r = gradcheck::check_inputs(
            [w, &st](Graph& g, const std::vector<int>& in) {
                return g.weighted_sum(
                    g.batch_norm(in[0], in[1], in[2], &st), w);
            },
            {x, ga, be});
        CHECK(r.max_rel_err < tol);
    }

    SUBCASE("selective scan") {
        Tensor u = rand_tensor(Shape4(2, 3, 5, 1), rng);
        Tensor dt = rand_tensor(Shape4(2, 3, 5, 1), rng, 0.3f, 1.2f);
        Tensor bb = rand_tensor(Shape4(2, 4, 5, 1), rng);
        Tensor cc = rand_tensor(Shape4(2, 4, 5, 1), rng);
        Tensor aa = rand_tensor(Shape4(3, 4, 1, 1), rng, -1.5f, -0.3f);
        Tensor w = rand_weights(Shape4(2, 3, 5, 1), rng);
        auto r = gradcheck::check_inputs(
            [w](Graph& g, const std::vector<int>& in) {
                int y = g.selective_scan(in[0], in[1], in[2], in[3], in[4]);
                return g.weighted_sum(y, w);
            },
            {u, dt, bb, cc, aa});
        CHECK(r.max_rel_err < tol);
    }

    SUBCASE("losses and gathers") {
        Tensor z = rand_tensor(Shape4(2, 3, 2, 2), rng, -2.0f, 2.0f);
        Tensor tgt(Shape4(2, 3, 2, 2));
        std::uniform_int_distribution<int> bit(0, 1);
        for (auto& v : tgt.data) v = float(bit(rng));
        auto r1 = gradcheck::check_inputs(
            [tgt](Graph& g, const std::vector<int>& in) {
                return g.bce_mean(in[0], tgt);
            },
            {z});
        CHECK(r1.max_rel_err < tol);
        Tensor x = rand_tensor(Shape4(2, 3, 4, 4), rng);
        Tensor w = rand_weights(Shape4(3, 3, 1, 1), rng);
        auto r2 = gradcheck::check_inputs(
            [w](Graph& g, const std::vector<int>& in) {
                int y = g.gather_cells(in[0], {{0, 1, 2}, {1, 3, 0}, {0, 0, 0}});
                return g.weighted_sum(y, w);
            },
            {x});
        CHECK(r2.max_rel_err < tol);
    }

    SUBCASE("parameter-side check") {
        ParamStore store(5);
        Parameter* w = store.create("w", Shape4(3, 2, 3, 3), 18);
        Parameter* b = store.create("b", Shape4(3, 1, 1, 1), 18);
        std::mt19937 r2(11);
        Tensor x = rand_tensor(Shape4(2, 2, 4, 4), r2);
        Tensor wt = rand_weights(Shape4(2, 3, 4, 4), r2);
        auto rep = gradcheck::check_params(
            [&](Graph& g) {
                int xi = g.input(x);
                int y = g.conv2d(xi, g.param(w), g.param(b), 3, 1, 1);
                return g.weighted_sum(g.silu(y), wt);
            },
            {w, b});
        CHECK(rep.max_rel_err < tol);
        CHECK(rep.checked == w->numel() + b->numel());
    }
}
