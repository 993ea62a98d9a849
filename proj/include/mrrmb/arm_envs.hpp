#pragma once

// Finite-state restless arms: age of information, queue holding cost,
// recovering advertisements, and explicit tabular arms. Each arm exposes its
// exact transition distributions (for the index oracle) and a sampler (for
// simulation).

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mrrmb/rng.hpp"

namespace mrrmb {

/// Resource id; 0 is the null resource (arm idles).
using ActionId = int;

/// Arm state value s in [0, cap].
struct ArmState {
    int value = 0;
    int cap = 1;

    ArmState() = default;
    ArmState(int v, int c) : value(v), cap(c) {
        if (c < 1 || v < 0 || v > c)
            throw std::invalid_argument("ArmState: value " + std::to_string(v) +
                                        " outside [0, " + std::to_string(c) + "]");
    }
};

struct Outcome {
    int next;
    double prob;
};

/// Sparse next-state distribution. Masses for equal states are merged.
struct Distribution {
    std::vector<Outcome> outcomes;

    void add(int state, double prob);
    double prob(int state) const;
    double total() const;
};

int sample(const Distribution& dist, Rng& rng);

/// Per-arm, per-resource success probabilities p[n][h] (h is 0-based here,
/// column h-1 holds resource h).
struct ChannelModel {
    Eigen::MatrixXd success_prob;

    int num_arms() const { return static_cast<int>(success_prob.rows()); }
    int num_resources() const { return static_cast<int>(success_prob.cols()); }
    void validate() const;
};

struct AoiArmParams {
    Eigen::VectorXd success_prob; // one entry per resource
    int cap = 20;
};

struct QueueArmParams {
    double arrival_prob = 0.0; // zeta
    Eigen::VectorXd success_prob;
    int cap = 20;
};

enum class AdRewardForm {
    recovering, // theta0 * (1 - exp(-theta1 * s))
    literal,    // theta0 * (1 - exp(+theta1 * s)), the sign as printed
};

struct AdArmParams {
    Eigen::VectorXd theta0; // reward scale per placement
    Eigen::VectorXd theta1; // recovery rate per placement, > 0
    int cap = 20;
    AdRewardForm form = AdRewardForm::recovering;
};

/// Explicit arm: transition[a] is an S x S row-stochastic matrix and
/// reward(s, a) the mean reward. States are 0..S-1.
struct TabularArmParams {
    std::vector<Eigen::MatrixXd> transition;
    Eigen::MatrixXd reward;
    int initial_state = 0;
};

Distribution aoi_kernel(ArmState s, ActionId a, const Eigen::VectorXd& p_row);
double aoi_reward(ArmState next);

Distribution queue_kernel(ArmState s, ActionId a, const QueueArmParams& params);
double queue_reward(ArmState s);

Distribution ad_kernel(ArmState s, ActionId a, int num_resources);
double ad_reward(ArmState s, ActionId a, const AdArmParams& params);

enum class ArmKind { aoi, queue, ad, tabular };

/// A single restless arm with known dynamics.
class Arm {
public:
    static Arm aoi(AoiArmParams params);
    static Arm queue(QueueArmParams params);
    static Arm ad(AdArmParams params);
    static Arm tabular(TabularArmParams params);

    ArmKind kind() const;
    int num_resources() const;
    int num_actions() const { return num_resources() + 1; }
    int cap() const;
    /// Smallest meaningful state (1 for age and elapsed-time arms).
    int min_state() const;
    int initial_state() const;

    Distribution kernel(int s, ActionId a) const;
    /// Realized reward of the transition s -a-> next.
    double reward(int s, ActionId a, int next) const;
    /// R(s, a), the expectation of reward() over the kernel.
    double mean_reward(int s, ActionId a) const;

    /// Std-dev of zero-mean Gaussian noise added to sampled rewards.
    double reward_noise = 0.0;

    const AoiArmParams* as_aoi() const { return std::get_if<AoiArmParams>(&params_); }
    const QueueArmParams* as_queue() const { return std::get_if<QueueArmParams>(&params_); }
    const AdArmParams* as_ad() const { return std::get_if<AdArmParams>(&params_); }
    const TabularArmParams* as_tabular() const { return std::get_if<TabularArmParams>(&params_); }

private:
    using Params = std::variant<AoiArmParams, QueueArmParams, AdArmParams, TabularArmParams>;
    explicit Arm(Params p) : params_(std::move(p)) {}
    void check(int s, ActionId a) const;

    Params params_;
};

struct StepResult {
    int next;
    double reward;
};

StepResult sample_step(const Arm& arm, int s, ActionId a, Rng& rng);

/// Draw from a standard normal (Box-Muller on Rng::uniform).
double standard_normal(Rng& rng);

} // namespace mrrmb
