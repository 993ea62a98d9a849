#include "mrrmb/index_oracle.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace mrrmb {

void ArmMDP::validate() const {
    const auto s = reward.rows();
    if (s < 1 || reward.cols() < 2) throw std::invalid_argument("ArmMDP: need >= 1 state and >= 2 actions");
    if (static_cast<Eigen::Index>(transition.size()) != reward.cols())
        throw std::invalid_argument("ArmMDP: one transition matrix per action required");
    for (const auto& p : transition)
        if (p.rows() != s || p.cols() != s) throw std::invalid_argument("ArmMDP: transition shape mismatch");
    if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("ArmMDP: discount must be in (0,1)");
}

ArmMDP ArmMDP::from_arm(const Arm& arm, double discount) {
    const int states = arm.cap() + 1;
    const int actions = arm.num_actions();
    ArmMDP mdp;
    mdp.discount = discount;
    mdp.reward.resize(states, actions);
    mdp.transition.assign(actions, Eigen::MatrixXd::Zero(states, states));
    for (int s = 0; s < states; ++s) {
        for (int a = 0; a < actions; ++a) {
            for (const auto& o : arm.kernel(s, a).outcomes) mdp.transition[a](s, o.next) += o.prob;
            mdp.reward(s, a) = arm.mean_reward(s, a);
        }
    }
    mdp.validate();
    return mdp;
}

int greedy_action(const Eigen::Ref<const Eigen::RowVectorXd>& q_row, double tol) {
    const double best = q_row.maxCoeff();
    for (auto a = q_row.size(); a-- > 0;)
        if (q_row(a) >= best - tol) return static_cast<int>(a);
    return 0;
}

namespace {

Eigen::MatrixXd net_reward(const ArmMDP& mdp, const LambdaVector& lambda) {
    if (lambda.size() != mdp.num_resources())
        throw std::invalid_argument("lambda length " + std::to_string(lambda.size()) +
                                    " != number of resources " + std::to_string(mdp.num_resources()));
    Eigen::MatrixXd r = mdp.reward;
    for (int a = 1; a < mdp.num_actions(); ++a) r.col(a).array() -= lambda.at(a);
    return r;
}

double tie_tolerance(const Eigen::MatrixXd& q) { return 1e-10 * (1.0 + q.cwiseAbs().maxCoeff()); }

Eigen::MatrixXd q_from_values(const ArmMDP& mdp, const Eigen::MatrixXd& r, const Eigen::VectorXd& v) {
    Eigen::MatrixXd q = r;
    for (int a = 0; a < mdp.num_actions(); ++a) q.col(a).noalias() += mdp.discount * (mdp.transition[a] * v);
    return q;
}

std::vector<int> greedy_policy(const Eigen::MatrixXd& q) {
    const double tol = tie_tolerance(q);
    std::vector<int> pi(q.rows());
    for (Eigen::Index s = 0; s < q.rows(); ++s) pi[s] = greedy_action(q.row(s), tol);
    return pi;
}

} // namespace

Eigen::MatrixXd evaluate_policy(const ArmMDP& mdp, const LambdaVector& lambda,
                                const std::vector<int>& policy) {
    mdp.validate();
    const int n = mdp.num_states();
    if (static_cast<int>(policy.size()) != n) throw std::invalid_argument("evaluate_policy: policy length mismatch");
    const Eigen::MatrixXd r = net_reward(mdp, lambda);
    Eigen::MatrixXd p_pi(n, n);
    Eigen::VectorXd r_pi(n);
    for (int s = 0; s < n; ++s) {
        const int a = policy[s];
        if (a < 0 || a >= mdp.num_actions()) throw std::invalid_argument("evaluate_policy: action out of range");
        p_pi.row(s) = mdp.transition[a].row(s);
        r_pi(s) = r(s, a);
    }
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.discount * p_pi;
    const Eigen::VectorXd v = system.partialPivLu().solve(r_pi);
    return q_from_values(mdp, r, v);
}

ArmSolution solve_arm(const ArmMDP& mdp, const LambdaVector& lambda, const std::vector<int>* warm_start) {
    mdp.validate();
    const Eigen::MatrixXd r = net_reward(mdp, lambda);
    std::vector<int> pi = warm_start && static_cast<int>(warm_start->size()) == mdp.num_states()
                              ? *warm_start
                              : greedy_policy(r);
    constexpr int max_iterations = 1000;
    for (int it = 1; it <= max_iterations; ++it) {
        Eigen::MatrixXd q = evaluate_policy(mdp, lambda, pi);
        const double tol = tie_tolerance(q);
        bool changed = false;
        for (int s = 0; s < mdp.num_states(); ++s) {
            // Switch only on strict improvement so the iteration cannot cycle on ties.
            if (q(s, pi[s]) < q.row(s).maxCoeff() - tol) {
                pi[s] = greedy_action(q.row(s), tol);
                changed = true;
            }
        }
        if (!changed) return {q, greedy_policy(q), it};
    }
    throw ConvergenceError("solve_arm: policy iteration did not converge in " +
                           std::to_string(max_iterations) + " iterations");
}

ArmSolution value_iteration(const ArmMDP& mdp, const LambdaVector& lambda, double tol, int max_iterations) {
    mdp.validate();
    const Eigen::MatrixXd r = net_reward(mdp, lambda);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states());
    for (int it = 1; it <= max_iterations; ++it) {
        const Eigen::MatrixXd q = q_from_values(mdp, r, v);
        const Eigen::VectorXd next = q.rowwise().maxCoeff();
        const double diff = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (diff <= tol) {
            Eigen::MatrixXd qf = q_from_values(mdp, r, v);
            return {qf, greedy_policy(qf), it};
        }
    }
    throw ConvergenceError("value_iteration: no convergence within " + std::to_string(max_iterations) +
                           " iterations (check the discount factor)");
}

double bellman_residual(const ArmMDP& mdp, const LambdaVector& lambda, const Eigen::MatrixXd& q) {
    const Eigen::VectorXd v = q.rowwise().maxCoeff();
    return (q - q_from_values(mdp, net_reward(mdp, lambda), v)).cwiseAbs().maxCoeff();
}

namespace {

void check_index_args(const ArmMDP& mdp, int s, ActionId h, const LambdaVector& lambda) {
    if (s < 0 || s >= mdp.num_states()) throw std::out_of_range("partial_index: state out of range");
    if (h < 1 || h > mdp.num_resources()) throw std::out_of_range("partial_index: resource out of range");
    if (!(lambda.bound > 0.0)) throw std::invalid_argument("partial_index: bound M must be positive");
}

} // namespace

bool indexability_scan(const ArmMDP& mdp, int s, ActionId h, const LambdaVector& lambda,
                       std::span<const double> grid) {
    check_index_args(mdp, s, h, lambda);
    std::vector<int> warm;
    bool left_h = false;
    for (double y : grid) {
        auto sol = solve_arm(mdp, lambda.with(h, y), warm.empty() ? nullptr : &warm);
        const bool chosen = sol.policy[s] == h;
        if (chosen && left_h) return false;
        if (!chosen) left_h = true;
        warm = std::move(sol.policy);
    }
    return true;
}

double partial_index(const ArmMDP& mdp, int s, ActionId h, const LambdaVector& lambda, const IndexOptions& opts) {
    check_index_args(mdp, s, h, lambda);
    const double m = lambda.bound;

    if (opts.verify_points > 1) {
        std::vector<double> grid(opts.verify_points);
        for (int i = 0; i < opts.verify_points; ++i)
            grid[i] = -m + 2.0 * m * i / (opts.verify_points - 1);
        if (!indexability_scan(mdp, s, h, lambda, grid))
            throw IndexabilityError("arm not indexable at state " + std::to_string(s) + ", resource " +
                                    std::to_string(h) + ": choice of h is not monotone in its price");
    }

    std::vector<int> warm;
    auto chooses = [&](double y) {
        auto sol = solve_arm(mdp, lambda.with(h, y), warm.empty() ? nullptr : &warm);
        warm = std::move(sol.policy);
        return warm[s] == h;
    };
    if (chooses(m)) return m;
    if (!chooses(-m)) return -m;

    double lo = -m, hi = m;
    const int needed = static_cast<int>(std::ceil(std::log2(2.0 * m / opts.tolerance)));
    const int iterations = std::max(opts.min_iterations, needed);
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        (chooses(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

IndexTable compute_index_table(const ArmMDP& mdp, const LambdaVector& lambda, const IndexOptions& opts) {
    IndexTable w(mdp.num_states(), mdp.num_resources());
    for (int s = 0; s < mdp.num_states(); ++s)
        for (int h = 1; h <= mdp.num_resources(); ++h) w(s, h - 1) = partial_index(mdp, s, h, lambda, opts);
    return w;
}

LambdaVector lambda_gradient_update(const LambdaVector& lambda, std::span<const int> counts,
                                    std::span<const int> caps, double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("lambda_gradient_update: rho must be positive");
    if (static_cast<int>(counts.size()) != lambda.size() || static_cast<int>(caps.size()) != lambda.size())
        throw std::invalid_argument("lambda_gradient_update: length mismatch");
    LambdaVector out = lambda;
    for (int h = 0; h < lambda.size(); ++h) {
        const double step = lambda.price(h) + rho * (counts[h] - caps[h]);
        out.price(h) = std::min(lambda.bound, std::max(0.0, step));
    }
    return out;
}

} // namespace mrrmb
