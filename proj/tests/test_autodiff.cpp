#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace pxf;
using VarD = Tape<double>::Var;

namespace {

Tensor<double> randn(std::vector<int> shape, uint64_t seed) {
    RandomStream s(seed);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = s.normal();
    return t;
}

// Central-difference check of every parameter coordinate; the tolerance is
// on |ad - fd| / max(|ad|, |fd|, 1e-6).
void expect_grads(const ScalarFn<double>& f, const NamedTensors<double>& params, double tol = 1e-6) {
    const GradReport report = check_gradients(f, params, 1e-5, tol);
    INFO("worst " << report.worst_param << "[" << report.worst_index << "] rel " << report.max_rel_err);
    CHECK(report.pass);
}

}  // namespace

TEST_CASE("matmul gradients") {
    NamedTensors<double> p;
    p.add("a", randn({3, 4}, 1));
    p.add("b", randn({4, 5}, 2));
    const Tensor<double> target = randn({3, 5}, 3);
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse_const(t.matmul(v[0], v[1]), target); },
                 p);
}

TEST_CASE("matmul_nt gradients") {
    NamedTensors<double> p;
    p.add("a", randn({3, 4}, 4));
    p.add("b", randn({5, 4}, 5));
    const Tensor<double> target = randn({3, 5}, 6);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse_const(t.matmul_nt(v[0], v[1]), target); }, p);
}

TEST_CASE("elementwise add, mul, scale, affine gradients") {
    NamedTensors<double> p;
    p.add("a", randn({2, 6}, 7));
    p.add("b", randn({2, 6}, 8));
    const Tensor<double> c = randn({2, 6}, 9);
    const Tensor<double> target = randn({2, 6}, 10);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            VarD x = t.add(v[0], t.mul(v[0], v[1]));
            x = t.affine_const(t.scale(x, 0.7), -1.3, c);
            return t.mse_const(x, target);
        },
        p);
}

TEST_CASE("add_rowvec broadcast gradients") {
    NamedTensors<double> p;
    p.add("x", randn({5, 3}, 11));
    p.add("r", randn({1, 3}, 12));
    const Tensor<double> target = randn({5, 3}, 13);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse_const(t.add_rowvec(v[0], v[1]), target); }, p);
}

TEST_CASE("gelu gradients") {
    NamedTensors<double> p;
    p.add("x", randn({4, 4}, 14));
    const Tensor<double> target = randn({4, 4}, 15);
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse_const(t.gelu(v[0]), target); }, p,
                 1e-5);
}

TEST_CASE("layernorm gradients and per-row normalization") {
    NamedTensors<double> p;
    p.add("x", randn({3, 8}, 16));
    p.add("gamma", randn({1, 8}, 17));
    p.add("beta", randn({1, 8}, 18));
    const Tensor<double> target = randn({3, 8}, 19);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.layernorm(v[0], v[1], v[2], 1e-5), target);
        },
        p, 1e-5);

    Tape<double> t;
    const Tensor<double> x = randn({3, 8}, 16);
    VarD ln = t.layernorm(t.input(x), t.input(Tensor<double>::full({1, 8}, 1.0)),
                          t.input(Tensor<double>::zeros({1, 8})), 1e-9);
    const Tensor<double>& y = t.value(ln);
    for (int r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < 8; ++c) mean += y.data[static_cast<size_t>(r * 8 + c)];
        mean /= 8.0;
        for (int c = 0; c < 8; ++c) {
            const double d = y.data[static_cast<size_t>(r * 8 + c)] - mean;
            var += d * d;
        }
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var / 8.0 == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("masked softmax gradients") {
    NamedTensors<double> p;
    p.add("scores", randn({4, 6}, 20));
    Tensor<uint8_t> allow({4, 6});
    for (size_t i = 0; i < allow.data.size(); ++i) allow.data[i] = (i % 5 != 0) ? 1 : 0;
    const Tensor<double> target = randn({4, 6}, 21);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.masked_softmax(v[0], allow), target);
        },
        p, 1e-5);
}

TEST_CASE("embedding gradients accumulate over repeated ids") {
    NamedTensors<double> p;
    p.add("table", randn({5, 3}, 22));
    const std::vector<int> ids = {1, 3, 1, 0};
    const Tensor<double> target = randn({4, 3}, 23);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse_const(t.embedding(v[0], ids), target); }, p);

    // summing all outputs makes each table row's gradient its lookup count
    auto [loss, grads] = forward_backward<double>(
        [&](Tape<double>& t, const std::vector<VarD>& v) { return t.sum(t.embedding(v[0], ids)); }, p);
    (void)loss;
    const Tensor<double>& g = grads.values[0];
    const double counts[5] = {1, 2, 0, 1, 0};
    for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
            CHECK(g.data[static_cast<size_t>(row * 3 + col)] == doctest::Approx(counts[row]));
}

TEST_CASE("replace_rows gradients split between source and replacement") {
    NamedTensors<double> p;
    p.add("x", randn({5, 3}, 24));
    p.add("row", randn({1, 3}, 25));
    const std::vector<int> rows = {1, 4};
    const Tensor<double> target = randn({5, 3}, 26);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.replace_rows(v[0], rows, v[1]), target);
        },
        p);

    // replaced rows contribute nothing to x's gradient
    auto [loss, grads] = forward_backward<double>(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.replace_rows(v[0], rows, v[1]), target);
        },
        p);
    (void)loss;
    for (int c = 0; c < 3; ++c) {
        CHECK(grads.values[0].data[static_cast<size_t>(1 * 3 + c)] == 0.0);
        CHECK(grads.values[0].data[static_cast<size_t>(4 * 3 + c)] == 0.0);
    }
}

TEST_CASE("slice and concat gradients") {
    NamedTensors<double> p;
    p.add("a", randn({6, 4}, 27));
    p.add("b", randn({2, 4}, 28));
    const Tensor<double> t_rows = randn({5, 4}, 29);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.concat_rows({t.slice_rows(v[0], 1, 4), v[1]}), t_rows);
        },
        p);

    NamedTensors<double> q;
    q.add("a", randn({3, 6}, 30));
    q.add("b", randn({3, 2}, 31));
    const Tensor<double> t_cols = randn({3, 5}, 32);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.concat_cols({t.slice_cols(v[0], 2, 5), v[1]}), t_cols);
        },
        q);
}

TEST_CASE("permute_elements is a bijection with exact gradients") {
    NamedTensors<double> p;
    p.add("x", randn({2, 6}, 33));
    std::vector<int64_t> perm(12);
    for (int64_t i = 0; i < 12; ++i) perm[static_cast<size_t>(i)] = 11 - i;
    const Tensor<double> target = randn({3, 4}, 34);
    expect_grads(
        [&](Tape<double>& t, const std::vector<VarD>& v) {
            return t.mse_const(t.permute_elements(v[0], perm, {3, 4}), target);
        },
        p);

    Tape<double> t;
    const Tensor<double> x = randn({2, 6}, 33);
    VarD fwd = t.permute_elements(t.input(x), perm, {3, 4});
    VarD back = t.permute_elements(fwd, perm, {2, 6});  // reversal is its own inverse
    CHECK(t.value(back).data == x.data);
}

TEST_CASE("reduction gradients: sum, mean, mse") {
    NamedTensors<double> p;
    p.add("a", randn({3, 3}, 35));
    p.add("b", randn({3, 3}, 36));
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.mse(v[0], v[1]); }, p);
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.mean(t.mul(v[0], v[0])); }, p);
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.sum(t.mul(v[0], v[1])); }, p);

    Tape<double> t;
    const Tensor<double> a({1, 3}, {1.0, 2.0, 3.0});
    const Tensor<double> b({1, 3}, {2.0, 2.0, 5.0});
    CHECK(t.value(t.mse(t.input(a), t.input(b))).data[0] == doctest::Approx((1.0 + 0.0 + 4.0) / 3.0));
}

TEST_CASE("cross entropy gradients and the uniform-logits value") {
    NamedTensors<double> p;
    p.add("logits", randn({4, 7}, 37));
    const std::vector<int> targets = {2, 0, 6, 3};
    expect_grads([&](Tape<double>& t, const std::vector<VarD>& v) { return t.cross_entropy(v[0], targets); }, p);

    Tape<double> t;
    VarD ce = t.cross_entropy(t.input(Tensor<double>::zeros({4, 7})), targets);
    CHECK(t.value(ce).data[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("forward_backward is deterministic bit for bit") {
    NamedTensors<double> p;
    p.add("a", randn({4, 4}, 38));
    p.add("b", randn({4, 4}, 39));
    const Tensor<double> target = randn({4, 4}, 40);
    const ScalarFn<double> f = [&](Tape<double>& t, const std::vector<VarD>& v) {
        return t.mse_const(t.gelu(t.matmul(v[0], v[1])), target);
    };
    auto [l1, g1] = forward_backward<double>(f, p);
    auto [l2, g2] = forward_backward<double>(f, p);
    CHECK(l1 == l2);
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1.values[i].data == g2.values[i].data);
}

TEST_CASE("random stream basics") {
    RandomStream a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());

    RandomStream parent(9);
    RandomStream s1 = parent.split(1), s1b = parent.split(1), s2 = parent.split(2);
    CHECK(s1.next_u64() == s1b.next_u64());
    CHECK(s1.next_u64() != s2.next_u64());

    RandomStream u(77);
    double mean = 0.0, var = 0.0;
    const int n = 100000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        xs[static_cast<size_t>(i)] = u.uniform();
        CHECK(xs[static_cast<size_t>(i)] >= 0.0);
        CHECK(xs[static_cast<size_t>(i)] < 1.0);
        mean += xs[static_cast<size_t>(i)];
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.03));

    RandomStream g(88);
    double gm = 0.0, gv = 0.0;
    std::vector<double> gs(n);
    for (int i = 0; i < n; ++i) gm += (gs[static_cast<size_t>(i)] = g.normal());
    gm /= n;
    for (double x : gs) gv += (x - gm) * (x - gm);
    gv /= n;
    CHECK(std::abs(gm) < 0.02);
    CHECK(gv == doctest::Approx(1.0).epsilon(0.03));

    RandomStream d(55);
    int counts[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 50000; ++i) counts[d.below(5)]++;
    for (int k = 0; k < 5; ++k) CHECK(counts[k] == doctest::Approx(10000).epsilon(0.05));

    RandomStream w(66);
    const std::vector<int> pick = w.sample_without_replacement(10, 4);
    CHECK(pick.size() == 4);
    for (size_t i = 1; i < pick.size(); ++i) CHECK(pick[i] > pick[i - 1]);
    for (int v : pick) {
        CHECK(v >= 0);
        CHECK(v < 10);
    }
    const std::vector<int> all = w.sample_without_replacement(6, 6);
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});

    RandomStream digest(91);
    const uint64_t d0 = digest.state_digest();
    digest.next_u64();
    CHECK(digest.state_digest() != d0);
}
