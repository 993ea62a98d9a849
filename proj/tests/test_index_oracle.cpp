#include "doctest.h"

#include <cmath>

#include "mrrmb/index_oracle.hpp"

using namespace mrrmb;

namespace {

// One state, actions 0..H with fixed rewards: Q(s,h) - Q(s,0) = R_h - lambda_h.
ArmMDP one_state_arm(std::vector<double> rewards, double beta = 0.99) {
    ArmMDP m;
    m.discount = beta;
    m.reward = Eigen::Map<Eigen::RowVectorXd>(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
    m.transition.assign(rewards.size(), Eigen::MatrixXd::Ones(1, 1));
    return m;
}

ArmMDP aoi_mdp(int cap, std::initializer_list<double> p) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
    Eigen::Index i = 0;
    for (double x : p) v(i++) = x;
    return ArmMDP::from_arm(Arm::aoi({v, cap}), 0.99);
}

ArmMDP random_arm(Rng& rng, int states, int actions) {
    ArmMDP m;
    m.discount = 0.9;
    m.reward.resize(states, actions);
    for (Eigen::Index i = 0; i < m.reward.size(); ++i) m.reward.data()[i] = rng.uniform(-1, 1);
    for (int a = 0; a < actions; ++a) {
        Eigen::MatrixXd p(states, states);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform() + 1e-3;
        p = p.array().colwise() / p.rowwise().sum().array();
        m.transition.push_back(p);
    }
    return m;
}

// Largest grid price at which sigma* picks h (grid-search oracle over solve_arm).
double grid_index(const ArmMDP& m, int s, int h, const LambdaVector& lambda, double step) {
    const double M = lambda.bound;
    const int n = static_cast<int>(std::lround(2 * M / step));
    double best = -M;
    for (int i = 0; i <= n; ++i) {
        const double y = -M + i * step;
        if (solve_arm(m, lambda.with(h, y)).policy[s] == h) best = y;
    }
    return best;
}

} // namespace

TEST_CASE("solve_arm on the one-state arm") {
    const auto m = one_state_arm({0.0, 2.5});
    const auto sol = solve_arm(m, LambdaVector(1));
    CHECK(sol.q(0, 1) - sol.q(0, 0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(sol.policy[0] == 1);
    CHECK(bellman_residual(m, LambdaVector(1), sol.q) <= 1e-8);
}

TEST_CASE("an unbounded price idles every state") {
    const auto m = aoi_mdp(10, {0.7, 0.3});
    LambdaVector lambda(Eigen::Vector2d(1e6, 1e6), 1e6);
    for (int a : solve_arm(m, lambda).policy) CHECK(a == 0);
}

TEST_CASE("identical actions give identical Q columns") {
    auto m = aoi_mdp(8, {0.6, 0.6});
    const auto sol = solve_arm(m, LambdaVector(2));
    CHECK((sol.q.col(1) - sol.q.col(2)).cwiseAbs().maxCoeff() == 0.0);
    for (int s = 1; s < m.num_states(); ++s) CHECK(sol.policy[s] == 2); // tie goes to the larger id
}

TEST_CASE("policy iteration agrees with value iteration") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = random_arm(rng, 5, 3);
        LambdaVector lambda(Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), 10);
        const auto pi = solve_arm(m, lambda);
        const auto vi = value_iteration(m, lambda, 1e-12);
        CHECK((pi.q - vi.q).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(pi.policy == vi.policy);
        CHECK(bellman_residual(m, lambda, pi.q) <= 1e-8);
    }
    const auto aoi = aoi_mdp(20, {0.9, 0.5, 0.1});
    LambdaVector lambda(Eigen::Vector3d(3, 1, 0.5), 100);
    const auto sol = solve_arm(aoi, lambda);
    CHECK(bellman_residual(aoi, lambda, sol.q) <= 1e-8);
    CHECK((sol.q - value_iteration(aoi, lambda).q).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("value iteration reports non-convergence") {
    const auto m = aoi_mdp(5, {0.5});
    CHECK_THROWS_AS(value_iteration(m, LambdaVector(1), 1e-12, 10), ConvergenceError);
}

TEST_CASE("evaluate_policy of the optimal policy is the optimal Q") {
    const auto m = aoi_mdp(10, {0.7, 0.3});
    LambdaVector lambda(Eigen::Vector2d(2.0, 0.5), 100);
    const auto sol = solve_arm(m, lambda);
    CHECK((evaluate_policy(m, lambda, sol.policy) - sol.q).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("partial index examples") {
    SUBCASE("one-state gain arm, other price at +M") {
        const auto m = one_state_arm({0.0, 1.75, 40.0});
        LambdaVector lambda(Eigen::Vector2d(0.0, 100.0), 100.0);
        CHECK(partial_index(m, 0, 1, lambda) == doctest::Approx(1.75).epsilon(1e-6));
    }
    SUBCASE("action identical to null has index zero") {
        auto m = aoi_mdp(6, {0.5});
        m.transition[1] = m.transition[0];
        m.reward.col(1) = m.reward.col(0);
        for (int s = 1; s <= 6; ++s) CHECK(std::abs(partial_index(m, s, 1, LambdaVector(1))) < 1e-6);
    }
    SUBCASE("clamps at the bounds") {
        const auto m = one_state_arm({0.0, 500.0});
        CHECK(partial_index(m, 0, 1, LambdaVector(1, 100.0)) == 100.0);
        const auto n = one_state_arm({0.0, -500.0});
        CHECK(partial_index(n, 0, 1, LambdaVector(1, 100.0)) == -100.0);
    }
    SUBCASE("aoi arm matches grid search") {
        const auto m = aoi_mdp(8, {0.7, 0.3});
        LambdaVector lambda(Eigen::Vector2d(0.0, 0.5), 100.0);
        const double w = partial_index(m, 4, 1, lambda);
        CHECK(std::abs(w - grid_index(m, 4, 1, lambda, 1e-2)) <= 1e-2);
    }
    CHECK_THROWS_AS(partial_index(one_state_arm({0, 1}), 0, 2, LambdaVector(1)), std::out_of_range);
}

TEST_CASE("indexability scan") {
    std::vector<double> grid;
    for (int i = 0; i <= 400; ++i) grid.push_back(-10.0 + 0.05 * i);

    const auto gain = one_state_arm({0.0, 2.0});
    CHECK(indexability_scan(gain, 0, 1, LambdaVector(1, 10.0), grid));

    auto same = aoi_mdp(5, {0.4});
    same.transition[1] = same.transition[0];
    same.reward.col(1) = same.reward.col(0);
    CHECK(indexability_scan(same, 3, 1, LambdaVector(1, 10.0), grid));

    const auto aoi = aoi_mdp(8, {0.7, 0.3});
    for (double other : {0.0, 0.5, 3.0})
        for (int h = 1; h <= 2; ++h)
            for (int s = 1; s <= 8; ++s) {
                LambdaVector lambda(Eigen::Vector2d(other, other), 10.0);
                CHECK(indexability_scan(aoi, s, h, lambda, grid));
            }

}

TEST_CASE("bisection agrees with grid search on random small arms") {
    Rng rng(99);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_arm(rng, 3, 3);
        const int s = static_cast<int>(rng.below(3));
        const int h = 1 + static_cast<int>(rng.below(2));
        LambdaVector lambda(Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), 10.0);
        std::vector<double> grid;
        for (int i = 0; i <= 2000; ++i) grid.push_back(-10.0 + 0.01 * i);
        if (!indexability_scan(m, s, h, lambda, grid)) {
            CHECK_THROWS_AS(partial_index(m, s, h, lambda, {1e-6, 40, 2001}), IndexabilityError);
            continue;
        }
        const double w = partial_index(m, s, h, lambda);
        CHECK(std::abs(w - grid_index(m, s, h, lambda, 0.01)) <= 0.01 + 1e-9);
        ++compared;
    }
    CHECK(compared >= 40);
}

TEST_CASE("lambda gradient update") {
    const std::vector<int> caps = {2};
    auto up = lambda_gradient_update(LambdaVector(Eigen::VectorXd::Constant(1, 1.0), 100), std::vector<int>{5}, caps, 0.01);
    CHECK(up.price(0) == doctest::Approx(1.03).epsilon(1e-12));
    up = lambda_gradient_update(LambdaVector(Eigen::VectorXd::Constant(1, 0.01), 100), std::vector<int>{0}, caps, 0.01);
    CHECK(up.price(0) == 0.0);
    up = lambda_gradient_update(LambdaVector(Eigen::VectorXd::Constant(1, 0.7), 100), std::vector<int>{2}, caps, 0.01);
    CHECK(up.price(0) == 0.7);
    up = lambda_gradient_update(LambdaVector(Eigen::VectorXd::Constant(1, 99.99), 100), std::vector<int>{50}, caps, 0.01);
    CHECK(up.price(0) == 100.0);
    CHECK_THROWS_AS(lambda_gradient_update(LambdaVector(1), std::vector<int>{1}, caps, 0.0), std::invalid_argument);
}
