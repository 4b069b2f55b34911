#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "gaq/neural.hpp"
#include "support/oracles.hpp"

using namespace gaq;
using testsupport::ScratchDir;
using testsupport::naive_matmul;
using testsupport::random_adjacency;
using testsupport::random_matrix;
using testsupport::random_model;

namespace {

double weighted_sum(const QModel& m, const Matrix& x, const Matrix& adjacency,
                    const Matrix& u) {
    const Matrix q = model_forward(m, x, adjacency);
    double s = 0.0;
    for (int i = 0; i < q.rows(); ++i)
        for (int j = 0; j < q.cols(); ++j) s += q(i, j) * u(i, j);
    return s;
}

// Finite differences sit on the wrong side of a hinge when an activation
// input is this close to zero, so such draws are skipped.
bool kink_free(const ModelTrace& t, const Matrix& adjacency, double margin = 1e-3) {
    auto clear = [margin](const Matrix& m) {
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j)
                if (std::abs(m(i, j)) <= margin) return false;
        return true;
    };
    if (!clear(t.pre1) || !clear(t.pre2)) return false;
    for (const Matrix& p : t.pre_q)
        if (!clear(p)) return false;
    for (int i = 0; i < adjacency.rows(); ++i)
        for (int j = 0; j < adjacency.cols(); ++j)
            if (adjacency(i, j) != 0.0 && std::abs(t.gat.scores(i, j)) <= margin) return false;
    return true;
}

}  // namespace

TEST_CASE("dense layer: identity weights pass values through, relu clips") {
    DenseParams p{Matrix::identity(2), Matrix(1, 2)};
    const Matrix x = Matrix::from_rows({{-1.0, 2.0}});
    Matrix lin = dense_forward(p, x, Activation::None);
    CHECK(lin == Matrix::from_rows({{-1.0, 2.0}}));
    Matrix rect = dense_forward(p, x, Activation::Relu);
    CHECK(rect == Matrix::from_rows({{0.0, 2.0}}));
}

TEST_CASE("dense layer matches a from-scratch product plus bias") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int in = rng.uniform_int(1, 6);
        const int out = rng.uniform_int(1, 6);
        const int n = rng.uniform_int(1, 5);
        DenseParams p{random_matrix(rng, in, out), random_matrix(rng, 1, out)};
        const Matrix x = random_matrix(rng, n, in);

        Matrix expect = naive_matmul(x, p.w);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out; ++j) expect(i, j) += p.b(0, j);
        CHECK(max_abs_diff(dense_forward(p, x, Activation::None), expect) <= 1e-12);

        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out; ++j) expect(i, j) = std::max(0.0, expect(i, j));
        CHECK(max_abs_diff(dense_forward(p, x, Activation::Relu), expect) <= 1e-12);
    }
}

TEST_CASE("attention over a single node is the identity aggregation") {
    Rng rng(7);
    GatParams p{random_matrix(rng, 2, 3), random_matrix(rng, 1, 6), random_matrix(rng, 1, 3)};
    const Matrix h = random_matrix(rng, 1, 2);
    GatTrace t = gat_forward(p, h, Matrix::from_rows({{1.0}}));
    CHECK(t.alpha == Matrix::from_rows({{1.0}}));
    for (int j = 0; j < 3; ++j) CHECK(t.out(0, j) == t.z(0, j) + p.b(0, j));
}

TEST_CASE("a zero scoring vector spreads attention uniformly") {
    Rng rng(8);
    GatParams p{random_matrix(rng, 4, 3), Matrix(1, 6), Matrix(1, 3)};
    const Matrix h = random_matrix(rng, 3, 4);
    const Matrix full(3, 3, 1.0);
    GatTrace t = gat_forward(p, h, full);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(t.alpha(i, j) == 1.0 / 3.0);
    // Aggregation is then the plain row mean of z.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double mean = (t.z(0, j) + t.z(1, j) + t.z(2, j)) / 3.0;
            CHECK(t.out(i, j) == doctest::Approx(mean).epsilon(1e-12));
        }
}

TEST_CASE("attention rows are a distribution over the masked neighbourhood") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.uniform_int(1, 6);
        const int d = rng.uniform_int(1, 5);
        const int dp = rng.uniform_int(1, 5);
        GatParams p{random_matrix(rng, d, dp, -2.0, 2.0), random_matrix(rng, 1, 2 * dp, -2.0, 2.0),
                    random_matrix(rng, 1, dp)};
        const Matrix h = random_matrix(rng, n, d, -2.0, 2.0);
        const Matrix a = random_adjacency(rng, n);
        GatTrace t = gat_forward(p, h, a);
        REQUIRE(t.out.all_finite());
        for (int i = 0; i < n; ++i) {
            double row = 0.0;
            for (int j = 0; j < n; ++j) {
                if (a(i, j) == 0.0) CHECK(t.alpha(i, j) == 0.0);
                CHECK(t.alpha(i, j) >= 0.0);
                row += t.alpha(i, j);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("huge attention logits stay finite through the shifted softmax") {
    Rng rng(10);
    GatParams p{random_matrix(rng, 3, 4), random_matrix(rng, 1, 8, -300.0, 300.0), Matrix(1, 4)};
    const Matrix h = random_matrix(rng, 4, 3, -1.0, 1.0);
    const Matrix a = random_adjacency(rng, 4, 1.0);
    GatTrace t = gat_forward(p, h, a);
    double peak = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) peak = std::max(peak, std::abs(t.scores(i, j)));
    CHECK(peak > 100.0);  // the stress is real
    CHECK(t.alpha.all_finite());
    CHECK(t.out.all_finite());
    for (int i = 0; i < 4; ++i) {
        double row = 0.0;
        for (int j = 0; j < 4; ++j) row += t.alpha(i, j);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("an isolated row in the adjacency is rejected") {
    Rng rng(11);
    GatParams p{random_matrix(rng, 2, 2), random_matrix(rng, 1, 4), Matrix(1, 2)};
    const Matrix h = random_matrix(rng, 2, 2);
    CHECK_THROWS_AS(gat_forward(p, h, Matrix(2, 2)), std::invalid_argument);
}

TEST_CASE("the zero model scores every action zero at every region count") {
    const QModel m = QModel::zeros();
    Rng rng(12);
    for (int n : {1, 2, 6}) {
        const Matrix q = model_forward(m, random_matrix(rng, n, 2), random_adjacency(rng, n));
        REQUIRE(q.rows() == n);
        REQUIRE(q.cols() == QModel::kActionCount);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < q.cols(); ++j) CHECK(q(i, j) == 0.0);
    }
}

TEST_CASE("forward shapes and finiteness under random initialisation") {
    Rng rng(13);
    QModel m = QModel::glorot_init(rng);
    for (int n : {1, 2, 6}) {
        const Matrix q = model_forward(m, random_matrix(rng, n, 2), random_adjacency(rng, n));
        CHECK(q.rows() == n);
        CHECK(q.cols() == 5);
        CHECK(q.all_finite());
    }
    CHECK_THROWS_AS(model_forward(m, random_matrix(rng, 2, 3), random_adjacency(rng, 2)),
                    std::invalid_argument);
}

TEST_CASE("single-region forward equals the hand-composed layer chain") {
    Rng rng(14);
    QModel m = QModel::glorot_init(rng);
    const Matrix x = random_matrix(rng, 1, 2);
    const Matrix a = Matrix::from_rows({{1.0}});

    const Matrix h1 = dense_forward(m.enc1, x, Activation::Relu);
    const Matrix h2 = dense_forward(m.enc2, h1, Activation::Relu);
    // With one node attention collapses to z + b, a plain affine layer.
    const Matrix g = dense_forward(DenseParams{m.gat.w, m.gat.b}, h2, Activation::None);
    const Matrix t1 = dense_forward(m.q1, g, Activation::Relu);
    const Matrix t2 = dense_forward(m.q2, t1, Activation::Relu);
    const Matrix t3 = dense_forward(m.q3, t2, Activation::Relu);
    const Matrix t4 = dense_forward(m.q4, t3, Activation::Relu);
    const Matrix expect = dense_forward(m.head, t4, Activation::None);

    CHECK(model_forward(m, x, a) == expect);
}

TEST_CASE("relabelling regions permutes the scores the same way") {
    Rng rng(15);
    for (int trial = 0; trial < 3; ++trial) {
        QModel m = QModel::glorot_init(rng);
        const int n = 4;
        const Matrix x = random_matrix(rng, n, 2);
        const Matrix a = random_adjacency(rng, n);
        const Matrix q = model_forward(m, x, a);

        std::vector<int> perm{2, 0, 3, 1};
        Matrix xp(n, 2), ap(n, n);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) xp(i, c) = x(perm[i], c);
            for (int j = 0; j < n; ++j) ap(i, j) = a(perm[i], perm[j]);
        }
        const Matrix qp = model_forward(m, xp, ap);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 5; ++c)
                CHECK(qp(i, c) == doctest::Approx(q(perm[i], c)).epsilon(1e-12));
    }
}

TEST_CASE("backward through the zero model reduces to the head bias") {
    const QModel m = QModel::zeros();
    Rng rng(16);
    const Matrix x = random_matrix(rng, 3, 2);
    const Matrix a = random_adjacency(rng, 3);
    const Matrix u = random_matrix(rng, 3, 5);
    const ModelTrace t = model_forward_trace(m, x, a);
    const std::vector<Matrix> grads = model_backward(m, a, t, u);

    const auto& names = QModel::param_names();
    REQUIRE(grads.size() == names.size());
    for (size_t i = 0; i < grads.size(); ++i) {
        if (names[i] == "head.b") {
            CHECK(grads[i] == column_sums(u));
        } else {
            for (int r = 0; r < grads[i].rows(); ++r)
                for (int c = 0; c < grads[i].cols(); ++c) CHECK(grads[i](r, c) == 0.0);
        }
    }
}

TEST_CASE("analytic gradients agree with central differences") {
    const double h = 1e-5;
    int accepted = 0;
    for (uint64_t seed = 1; accepted < 3 && seed <= 60; ++seed) {
        Rng rng(seed * 977);
        QModel m = random_model(rng);
        const Matrix x = random_matrix(rng, 3, 2);
        const Matrix a = random_adjacency(rng, 3);
        const Matrix u = random_matrix(rng, 3, 5);

        const ModelTrace trace = model_forward_trace(m, x, a);
        if (!kink_free(trace, a)) continue;
        ++accepted;

        const std::vector<Matrix> grads = model_backward(m, a, trace, u);
        const auto& names = QModel::param_names();
        QModel probe = m;
        std::vector<Matrix*> tensors = probe.param_tensors();

        double worst = 0.0;
        std::string worst_at;
        for (size_t t = 0; t < tensors.size(); ++t) {
            Matrix& theta = *tensors[t];
            for (int r = 0; r < theta.rows(); ++r)
                for (int c = 0; c < theta.cols(); ++c) {
                    const double keep = theta(r, c);
                    theta(r, c) = keep + h;
                    const double up = weighted_sum(probe, x, a, u);
                    theta(r, c) = keep - h;
                    const double down = weighted_sum(probe, x, a, u);
                    theta(r, c) = keep;

                    const double fd = (up - down) / (2.0 * h);
                    const double an = grads[t](r, c);
                    // The absolute floor keeps cancellation noise in up-down
                    // (an ulp of an O(10) sum, ~1e-10 after dividing by 2h)
                    // from registering on near-zero entries.
                    const double rel =
                        std::abs(fd - an) / std::max({1e-4, std::abs(fd), std::abs(an)});
                    if (rel > worst) {
                        worst = rel;
                        worst_at = names[t];
                    }
                }
        }
        INFO("seed ", seed, " worst mismatch at ", worst_at);
        CHECK(worst < 1e-4);
    }
    REQUIRE(accepted == 3);
}

TEST_CASE("optimiser leaves parameters alone when every gradient is zero") {
    Rng rng(17);
    QModel m = QModel::glorot_init(rng);
    const QModel before = m;
    AdamState st = AdamState::zeros_like(m);
    std::vector<Matrix> grads;
    for (const Matrix* t : m.param_tensors()) grads.emplace_back(t->rows(), t->cols());
    adam_step(m, grads, st, AdamConfig{});
    CHECK(st.step == 1);
    const auto now = m.param_tensors();
    const auto then = before.param_tensors();
    for (size_t i = 0; i < now.size(); ++i) CHECK(*now[i] == *then[i]);
}

TEST_CASE("optimiser first step moves by almost exactly the learning rate") {
    Matrix theta(1, 1), grad(1, 1), m(1, 1), v(1, 1);
    grad(0, 0) = 1.0;
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    adam_update(theta, grad, m, v, 1, cfg);
    CHECK(theta(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-9));
}

TEST_CASE("optimiser three-step trajectory matches the precomputed table") {
    // Gradients 1.0, -0.5, 0.25 on a scalar starting at 0.5 with rate 0.1;
    // reference values computed with 60-digit decimal arithmetic.
    Matrix theta(1, 1), m(1, 1), v(1, 1);
    theta(0, 0) = 0.5;
    AdamConfig cfg;
    cfg.learning_rate = 0.1;

    const double grads[3] = {1.0, -0.5, 0.25};
    const double want_theta[3] = {0.400000001, 0.373366297370903, 0.33932338306484633};
    const double want_m[3] = {0.1, 0.04, 0.061};
    const double want_v[3] = {0.001, 0.001249, 0.001310251};
    for (int step = 0; step < 3; ++step) {
        Matrix g(1, 1);
        g(0, 0) = grads[step];
        adam_update(theta, g, m, v, step + 1, cfg);
        CHECK(theta(0, 0) == doctest::Approx(want_theta[step]).epsilon(1e-12));
        CHECK(m(0, 0) == doctest::Approx(want_m[step]).epsilon(1e-12));
        CHECK(v(0, 0) == doctest::Approx(want_v[step]).epsilon(1e-12));
    }
}

TEST_CASE("whole-model step equals the per-tensor update") {
    Rng rng(18);
    QModel whole = QModel::glorot_init(rng);
    QModel parts = whole;
    std::vector<Matrix> grads;
    for (const Matrix* t : whole.param_tensors())
        grads.push_back(random_matrix(rng, t->rows(), t->cols()));

    AdamState st = AdamState::zeros_like(whole);
    AdamConfig cfg;
    adam_step(whole, grads, st, cfg);
    CHECK(st.step == 1);

    AdamState manual = AdamState::zeros_like(parts);
    auto tensors = parts.param_tensors();
    for (size_t i = 0; i < tensors.size(); ++i)
        adam_update(*tensors[i], grads[i], manual.m[i], manual.v[i], 1, cfg);

    auto a = whole.param_tensors();
    auto b = parts.param_tensors();
    for (size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
    for (size_t i = 0; i < st.m.size(); ++i) {
        CHECK(st.m[i] == manual.m[i]);
        CHECK(st.v[i] == manual.v[i]);
    }
}

TEST_CASE("initialisation is seed-deterministic, zero-biased and bounded") {
    Rng r1(19), r2(19), r3(20);
    QModel a = QModel::glorot_init(r1);
    QModel b = QModel::glorot_init(r2);
    QModel c = QModel::glorot_init(r3);

    auto ta = a.param_tensors();
    auto tb = b.param_tensors();
    bool same_as_c = true;
    auto tc = c.param_tensors();
    for (size_t i = 0; i < ta.size(); ++i) {
        CHECK(*ta[i] == *tb[i]);
        if (!(*ta[i] == *tc[i])) same_as_c = false;
    }
    CHECK(!same_as_c);

    for (const Matrix* bias : {&a.enc1.b, &a.enc2.b, &a.gat.b, &a.q1.b, &a.q2.b, &a.q3.b,
                               &a.q4.b, &a.head.b})
        for (int j = 0; j < bias->cols(); ++j) CHECK((*bias)(0, j) == 0.0);

    auto bounded = [](const Matrix& w, double fan_sum) {
        const double limit = std::sqrt(6.0 / fan_sum);
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j)
                if (std::abs(w(i, j)) > limit) return false;
        return true;
    };
    CHECK(bounded(a.enc1.w, 2 + 32));
    CHECK(bounded(a.enc2.w, 32 + 32));
    CHECK(bounded(a.head.w, 64 + 5));
}

TEST_CASE("checkpoints restore the exact model and optimiser state") {
    ScratchDir dir("ckpt");
    Rng rng(21);
    QModel m = QModel::glorot_init(rng);
    AdamState st = AdamState::zeros_like(m);
    AdamConfig cfg;
    for (int i = 0; i < 2; ++i) {
        std::vector<Matrix> grads;
        for (const Matrix* t : m.param_tensors())
            grads.push_back(random_matrix(rng, t->rows(), t->cols()));
        adam_step(m, grads, st, cfg);
    }

    const auto path = dir.path() / "model.json";
    save_checkpoint(path, m, st);
    Checkpoint back = load_checkpoint(path);

    CHECK(back.adam.step == st.step);
    auto orig = m.param_tensors();
    auto restored = back.model.param_tensors();
    for (size_t i = 0; i < orig.size(); ++i) CHECK(*orig[i] == *restored[i]);
    for (size_t i = 0; i < st.m.size(); ++i) {
        CHECK(back.adam.m[i] == st.m[i]);
        CHECK(back.adam.v[i] == st.v[i]);
    }

    const Matrix x = random_matrix(rng, 2, 2);
    const Matrix a = random_adjacency(rng, 2);
    CHECK(model_forward(m, x, a) == model_forward(back.model, x, a));
}

TEST_CASE("loading rejects missing, malformed and mis-shaped files") {
    ScratchDir dir("badckpt");
    CHECK_THROWS(load_checkpoint(dir.path() / "nope.json"));

    const auto garbled = dir.path() / "garbled.json";
    std::ofstream(garbled) << "this is not json";
    CHECK_THROWS(load_checkpoint(garbled));

    const auto wrong = dir.path() / "wrong.json";
    std::ofstream(wrong) << "{\"tensors\": {}}";
    CHECK_THROWS(load_checkpoint(wrong));
}
