#pragma once

// Exact single-arm solver for the priced per-arm problem and the partial
// index computed from it. Everything here assumes the kernel is known.

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <vector>

#include "mrrmb/arm_envs.hpp"

namespace mrrmb {

/// Finite MDP of one arm. transition[a] is S x S, reward is S x (H+1).
struct ArmMDP {
    std::vector<Eigen::MatrixXd> transition;
    Eigen::MatrixXd reward;
    double discount = 0.99;

    int num_states() const { return static_cast<int>(reward.rows()); }
    int num_actions() const { return static_cast<int>(reward.cols()); }
    int num_resources() const { return num_actions() - 1; }

    void validate() const;

    /// States 0..cap of the arm, mean rewards R(s, a).
    static ArmMDP from_arm(const Arm& arm, double discount);
};

/// Shadow prices lambda_1..lambda_H; the null resource is always free.
struct LambdaVector {
    Eigen::VectorXd price; // price(h-1) = lambda_h
    double bound = 100.0;  // M

    LambdaVector() = default;
    explicit LambdaVector(int num_resources, double m = 100.0)
        : price(Eigen::VectorXd::Zero(num_resources)), bound(m) {}
    LambdaVector(Eigen::VectorXd p, double m) : price(std::move(p)), bound(m) {}

    int size() const { return static_cast<int>(price.size()); }
    double at(ActionId a) const { return a == 0 ? 0.0 : price(a - 1); }
    LambdaVector with(ActionId h, double y) const {
        LambdaVector out = *this;
        out.price(h - 1) = y;
        return out;
    }
};

struct ArmSolution {
    Eigen::MatrixXd q;       // S x (H+1)
    std::vector<int> policy; // greedy, ties toward the larger action id
    int iterations = 0;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IndexabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest action whose value is within `tol` of the row maximum.
int greedy_action(const Eigen::Ref<const Eigen::RowVectorXd>& q_row, double tol);

/// Optimal Q of the priced arm problem, by Howard policy iteration with an
/// exact linear solve per evaluation. `warm_start` seeds the first policy.
ArmSolution solve_arm(const ArmMDP& mdp, const LambdaVector& lambda,
                      const std::vector<int>* warm_start = nullptr);

/// Plain value iteration to the given sup-norm tolerance on successive iterates.
ArmSolution value_iteration(const ArmMDP& mdp, const LambdaVector& lambda, double tol = 1e-9,
                            int max_iterations = 1'000'000);

/// Q of a fixed deterministic policy: Q(s,a) = R - lambda_a + beta * sum P Q(s', pi(s')).
Eigen::MatrixXd evaluate_policy(const ArmMDP& mdp, const LambdaVector& lambda,
                                const std::vector<int>& policy);

/// sup_s,a |Q - (R - lambda + beta * P max Q)|.
double bellman_residual(const ArmMDP& mdp, const LambdaVector& lambda, const Eigen::MatrixXd& q);

struct IndexOptions {
    double tolerance = 1e-6; // bisection width on the switching price
    int min_iterations = 40;
    int verify_points = 41;  // coarse indexability check over [-M, M]; 0 disables
};

/// sup{ y : sigma*_[lambda_-h, y](s) = h } over [-M, M]. Returns -M when h
/// is never chosen and +M when it is always chosen.
double partial_index(const ArmMDP& mdp, int s, ActionId h, const LambdaVector& lambda,
                     const IndexOptions& opts = {});

/// True iff the prices on `grid` (ascending) at which sigma*(s) = h form a
/// prefix of the grid.
bool indexability_scan(const ArmMDP& mdp, int s, ActionId h, const LambdaVector& lambda,
                       std::span<const double> grid);

/// w(s, h-1) = partial index of state s on resource h under `lambda`.
using IndexTable = Eigen::MatrixXd;

IndexTable compute_index_table(const ArmMDP& mdp, const LambdaVector& lambda,
                               const IndexOptions& opts = {});

/// lambda_h <- min(M, max(0, lambda_h + rho * (count_h - C_h))).
LambdaVector lambda_gradient_update(const LambdaVector& lambda, std::span<const int> counts,
                                    std::span<const int> caps, double rho);

} // namespace mrrmb
