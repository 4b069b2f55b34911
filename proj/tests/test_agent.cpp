#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "gaq/agent.hpp"
#include "support/oracles.hpp"

using namespace gaq;
using testsupport::random_adjacency;
using testsupport::random_matrix;

namespace {

Transition tagged(double reward) {
    Transition t;
    t.reward = reward;
    return t;
}

// Zero model whose head routes feature 0 straight to action 0, used to give
// regions distinct, hand-computable values.
QModel passthrough_model() {
    QModel m = QModel::zeros();
    m.enc1.w(0, 0) = 1.0;
    m.enc2.w(0, 0) = 1.0;
    m.gat.w(0, 0) = 1.0;
    m.q1.w(0, 0) = 1.0;
    m.q2.w(0, 0) = 1.0;
    m.q3.w(0, 0) = 1.0;
    m.q4.w(0, 0) = 1.0;
    m.head.w(0, 0) = 1.0;
    for (int a = 1; a < QModel::kActionCount; ++a) m.head.b(0, a) = -1000.0;
    return m;
}

Transition synthetic_transition(Rng& rng, int regions) {
    Transition t;
    t.x = random_matrix(rng, regions, 2, 0.0, 2.0);
    t.adjacency = random_adjacency(rng, regions);
    for (int i = 0; i < regions; ++i) t.actions.push_back(rng.uniform_int(0, 4));
    t.reward = rng.uniform(0.0, 1.0);
    t.next_x = t.x;
    t.next_adjacency = t.adjacency;
    t.done = true;
    return t;
}

}  // namespace

TEST_CASE("replay buffer evicts oldest first at capacity") {
    ReplayBuffer buf(5);
    CHECK(buf.capacity() == 5);
    for (int i = 0; i < 8; ++i) buf.push(tagged(i));
    REQUIRE(buf.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(buf.at(i).reward == doctest::Approx(3.0 + i));
    CHECK_THROWS(buf.at(5));
}

TEST_CASE("sampling the whole buffer yields each index exactly once") {
    ReplayBuffer buf(10);
    for (int i = 0; i < 10; ++i) buf.push(tagged(i));
    Rng rng(1);
    std::vector<size_t> idx = buf.sample_indices(10, rng);
    std::sort(idx.begin(), idx.end());
    for (size_t i = 0; i < 10; ++i) CHECK(idx[i] == i);
}

TEST_CASE("single-index samples are uniform across the buffer") {
    ReplayBuffer buf(100);
    for (int i = 0; i < 100; ++i) buf.push(tagged(i));
    Rng rng(2);
    std::vector<int> counts(100, 0);
    for (int draw = 0; draw < 100000; ++draw) counts[buf.sample_indices(1, rng)[0]]++;
    // Expected 1000 per slot, sigma about 31.5; band is five sigma.
    for (int c : counts) {
        CHECK(c >= 843);
        CHECK(c <= 1157);
    }
}

TEST_CASE("epsilon anneals linearly and clamps at the floor") {
    AgentConfig cfg;
    cfg.epsilon_start = 1.0;
    cfg.epsilon_end = 0.05;
    cfg.epsilon_decay_episodes = 300;
    CHECK(annealed_epsilon(cfg, 0) == 1.0);
    CHECK(annealed_epsilon(cfg, 150) == doctest::Approx(0.525).epsilon(1e-12));
    CHECK(annealed_epsilon(cfg, 300) == doctest::Approx(0.05));
    CHECK(annealed_epsilon(cfg, 1000) == doctest::Approx(0.05));
    double prev = 2.0;
    for (int e = 0; e < 320; ++e) {
        const double eps = annealed_epsilon(cfg, e);
        CHECK(eps <= prev);
        prev = eps;
    }
}

TEST_CASE("greedy selection takes the best action with lowest-index ties") {
    QModel m = QModel::zeros();
    m.head.b = Matrix::from_rows({{0.0, 3.0, 3.0, 1.0, 0.0}});
    Rng rng(3);
    const Matrix x = random_matrix(rng, 3, 2);
    const Matrix a = random_adjacency(rng, 3);

    std::vector<int> actions = select_actions(m, x, a, 0.0, rng);
    REQUIRE(actions.size() == 3);
    for (int act : actions) CHECK(act == 1);  // 3.0 appears twice, index 1 wins

    // Adding a constant to every score must not change the choice.
    for (int j = 0; j < 5; ++j) m.head.b(0, j) += 7.5;
    CHECK(select_actions(m, x, a, 0.0, rng) == actions);

    const QModel flat = QModel::zeros();
    for (int act : select_actions(flat, x, a, 0.0, rng)) CHECK(act == 0);
}

TEST_CASE("full exploration draws actions uniformly") {
    const QModel m = QModel::zeros();
    Rng rng(4);
    const Matrix x = random_matrix(rng, 2, 2);
    const Matrix a = Matrix(2, 2, 1.0);
    std::vector<long> counts(5, 0);
    for (int call = 0; call < 50000; ++call)
        for (int act : select_actions(m, x, a, 1.0, rng)) counts[act]++;
    // 100000 draws over 5 bins; chi-square at p = 0.001 with df 4.
    double chi2 = 0.0;
    for (long c : counts) {
        const double diff = static_cast<double>(c) - 20000.0;
        chi2 += diff * diff / 20000.0;
    }
    CHECK(chi2 < 18.467);
}

TEST_CASE("targets bootstrap from the best next value unless terminal") {
    const QModel target = passthrough_model();
    const Matrix next = Matrix::from_rows({{2.0, 0.0}, {3.0, 0.0}});
    const Matrix eye = Matrix::identity(2);

    Transition t;
    t.x = next;
    t.adjacency = eye;
    t.actions = {0, 0};
    t.reward = 1.0;
    t.next_x = next;
    t.next_adjacency = eye;
    t.done = false;

    auto y = td_targets({&t}, target, 0.99);
    REQUIRE(y.size() == 1);
    REQUIRE(y[0].size() == 2);
    CHECK(y[0][0] == 1.0 + 0.99 * 2.0);
    CHECK(y[0][1] == 1.0 + 0.99 * 3.0);
    CHECK(y[0][0] == doctest::Approx(2.98).epsilon(1e-12));
    CHECK(y[0][1] == doctest::Approx(3.97).epsilon(1e-12));

    t.done = true;
    t.reward = 7.0;
    auto done_y = td_targets({&t}, target, 0.99);
    CHECK(done_y[0][0] == 7.0);
    CHECK(done_y[0][1] == 7.0);

    t.done = false;
    auto myopic = td_targets({&t}, target, 0.0);
    CHECK(myopic[0][0] == 7.0);
    CHECK(myopic[0][1] == 7.0);
}

TEST_CASE("a training step never writes through to the target model") {
    Rng rng(5);
    QModel model = QModel::glorot_init(rng);
    QModel target = passthrough_model();
    const QModel target_before = target;

    ReplayBuffer buf(64);
    for (int i = 0; i < 64; ++i) buf.push(synthetic_transition(rng, 2));
    AdamState adam = AdamState::zeros_like(model);
    AgentConfig cfg;
    cfg.batch_size = 32;
    train_step(model, target, buf, adam, cfg, rng);

    auto now = target.param_tensors();
    auto before = target_before.param_tensors();
    for (size_t i = 0; i < now.size(); ++i) CHECK(*now[i] == *before[i]);

    Transition probe = synthetic_transition(rng, 2);
    probe.done = false;
    CHECK(td_targets({&probe}, target, 0.5) == td_targets({&probe}, target_before, 0.5));
}

TEST_CASE("training on already-perfect predictions is a zero-loss no-op") {
    QModel model = QModel::zeros();
    const QModel target = QModel::zeros();
    Rng rng(6);

    ReplayBuffer buf(40);
    for (int i = 0; i < 40; ++i) {
        Transition t = synthetic_transition(rng, 2);
        t.reward = 0.0;
        t.done = false;
        buf.push(t);
    }
    AdamState adam = AdamState::zeros_like(model);
    AgentConfig cfg;
    cfg.batch_size = 32;
    cfg.discount = 0.0;

    const double loss = train_step(model, target, buf, adam, cfg, rng);
    CHECK(loss == 0.0);
    const QModel zeros = QModel::zeros();
    auto now = model.param_tensors();
    auto want = zeros.param_tensors();
    for (size_t i = 0; i < now.size(); ++i) CHECK(*now[i] == *want[i]);
}

TEST_CASE("single-transition loss is the squared error on the taken action") {
    QModel model = QModel::zeros();
    model.head.b(0, 0) = 0.25;  // every region values action 0 at 0.25
    const QModel target = QModel::zeros();
    Rng rng(7);

    Transition t;
    t.x = Matrix(1, 2);
    t.adjacency = Matrix::from_rows({{1.0}});
    t.actions = {0};
    t.reward = 1.25;
    t.next_x = t.x;
    t.next_adjacency = t.adjacency;
    t.done = true;

    ReplayBuffer buf(1);
    buf.push(t);
    AdamState adam = AdamState::zeros_like(model);
    AgentConfig cfg;
    cfg.batch_size = 1;
    CHECK(train_step(model, target, buf, adam, cfg, rng) == 1.0);  // (1.25 - 0.25)^2
}

TEST_CASE("training refuses to run on a buffer smaller than the batch") {
    QModel model = QModel::zeros();
    const QModel target = QModel::zeros();
    ReplayBuffer buf(64);
    Rng rng(8);
    for (int i = 0; i < 10; ++i) buf.push(synthetic_transition(rng, 1));
    AdamState adam = AdamState::zeros_like(model);
    AgentConfig cfg;
    cfg.batch_size = 32;
    CHECK_THROWS_AS(train_step(model, target, buf, adam, cfg, rng), std::logic_error);
}

TEST_CASE("repeated training steps shrink the regression loss") {
    Rng rng(9);
    QModel model = QModel::glorot_init(rng);
    QModel target = model;

    ReplayBuffer buf(64);
    for (int i = 0; i < 64; ++i) buf.push(synthetic_transition(rng, 2));

    AdamState adam = AdamState::zeros_like(model);
    AgentConfig cfg;
    cfg.batch_size = 32;
    cfg.adam.learning_rate = 1e-3;

    std::vector<double> losses;
    for (int step = 0; step < 100; ++step)
        losses.push_back(train_step(model, target, buf, adam, cfg, rng));
    const double early = (losses[0] + losses[1] + losses[2] + losses[3] + losses[4]) / 5.0;
    const double late = (losses[95] + losses[96] + losses[97] + losses[98] + losses[99]) / 5.0;
    CHECK(late < early);
}

TEST_CASE("target refresh happens exactly on the configured cadence") {
    Rng rng(10);
    const QModel model = QModel::glorot_init(rng);
    QModel target = QModel::zeros();

    CHECK(!maybe_update_target(model, target, 101, 100));
    CHECK(maybe_update_target(model, target, 100, 100));

    const Matrix x = random_matrix(rng, 2, 2);
    const Matrix a = random_adjacency(rng, 2);
    CHECK(model_forward(target, x, a) == model_forward(model, x, a));

    QModel frozen = QModel::zeros();
    CHECK(!maybe_update_target(model, frozen, 100, 0));
    const QModel still_zero = QModel::zeros();
    auto now = frozen.param_tensors();
    auto want = still_zero.param_tensors();
    for (size_t i = 0; i < now.size(); ++i) CHECK(*now[i] == *want[i]);
}
