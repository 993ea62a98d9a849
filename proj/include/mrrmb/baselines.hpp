#pragma once

// Reference policies and a uniform handle over every policy kind.

#include <Eigen/Core>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mrrmb/arm_envs.hpp"
#include "mrrmb/dip_agent.hpp"
#include "mrrmb/index_oracle.hpp"
#include "mrrmb/matching.hpp"

namespace mrrmb {

enum class PolicyKind { dip, swim, whittle, deeptop, random };

PolicyKind parse_policy_kind(std::string_view name);
std::string to_string(PolicyKind kind);

/// Closed-form Whittle index of a single-server queue with arrival
/// probability zeta and service probability p: (3 zeta - p) / (p - zeta) + 2 p s.
double whittle_closed_form(double zeta, double p, int s);

/// argmax_h p(h-1); ties go to the lower id.
ActionId best_channel(const Eigen::Ref<const Eigen::VectorXd>& success_prob);

/// Each arm joins the pool of its most reliable channel; every pool serves
/// its top-C_h arms by Whittle index (ties to the lower arm id), whatever the
/// index sign.
Assignment whittle_act(std::span<const int> states, const ChannelModel& channels,
                       std::span<const double> arrival_prob, const CapacityVector& caps);

/// Activates the sum(caps) arms with the highest index (ties to the lower arm
/// id) and deals them into resource slots in uniformly random order.
Assignment deeptop_act(const Eigen::Ref<const Eigen::VectorXd>& indexes, const CapacityVector& caps, Rng& rng);

/// Capacity-feasible uniform assignment (the DIP exploration sampler).
inline Assignment random_act(int num_arms, const CapacityVector& caps, Rng& rng) {
    return random_assignment(num_arms, caps, rng);
}

/// Max-weight matching on oracle partial indexes, with the same shadow-price
/// controller as DIP. Index tables are computed per distinct arm model and
/// cached until the prices change.
class SwimPolicy {
public:
    SwimPolicy(std::span<const Arm> arms, CapacityVector caps, double discount, double lambda_bound,
               double lambda_rate, int lambda_period, IndexOptions opts = {});

    /// N x H oracle indexes at the given states and current prices.
    WeightMatrix indexes(std::span<const int> states);
    Assignment act(std::span<const int> states);
    /// Counts a tick; every period, updates the prices from `w`.
    bool advance_tick(const WeightMatrix& w);

    const LambdaVector& lambda() const { return controller_.lambda; }
    LambdaController& lambda_controller() { return controller_; }
    /// Oracle table of arm n at the current prices.
    const IndexTable& table(int n);

private:
    void refresh();

    CapacityVector caps_;
    std::vector<ArmMDP> models_;     // distinct arm models
    std::vector<int> model_of_;      // arm -> model
    std::vector<IndexTable> tables_; // per model, at cached_
    LambdaVector cached_;
    bool valid_ = false;
    IndexOptions opts_;
    LambdaController controller_;
    long tick_ = 0;
};

/// Single-index learner (one actor per arm, H = 1 against a pooled capacity)
/// whose actions are matched to resources at random.
class DeepTopPolicy {
public:
    /// `cfg` supplies the learning hyperparameters; resources and capacity are
    /// replaced by one pooled resource of capacity sum(caps).
    DeepTopPolicy(DipConfig cfg, std::span<const Arm> arms, CapacityVector caps, Rng& init_rng);

    Assignment act(std::span<const int> states, Rng& rng, bool* explored = nullptr) const;
    DipAgent& agent() { return agent_; }
    const DipAgent& agent() const { return agent_; }
    const CapacityVector& caps() const { return caps_; }

private:
    CapacityVector caps_;
    DipAgent agent_;
};

struct PolicyTick {
    Assignment assignment;
    std::vector<double> rewards;
    Eigen::VectorXd lambda; // prices after the tick (empty when the policy has none)
};

/// Any policy kind, driven one tick at a time: act, step every arm, learn.
class PolicyHandle {
public:
    static PolicyHandle dip(DipConfig cfg, std::span<const Arm> arms, Rng& init_rng);
    static PolicyHandle swim(std::span<const Arm> arms, CapacityVector caps, double discount, double lambda_bound,
                             double lambda_rate, int lambda_period);
    /// Requires queue arms.
    static PolicyHandle whittle(std::span<const Arm> arms, CapacityVector caps);
    static PolicyHandle deeptop(DipConfig cfg, std::span<const Arm> arms, CapacityVector caps, Rng& init_rng);
    static PolicyHandle random(CapacityVector caps);

    PolicyKind kind() const { return kind_; }
    PolicyTick tick(std::span<const Arm> arms, std::vector<int>& states, Rng& rng);

    DipAgent* dip_agent();
    SwimPolicy* swim_policy();
    DeepTopPolicy* deeptop_policy();

private:
    struct WhittleState {
        ChannelModel channels;
        std::vector<double> arrival;
        CapacityVector caps;
    };
    struct RandomState {
        CapacityVector caps;
    };
    using State = std::variant<std::unique_ptr<DipAgent>, std::unique_ptr<SwimPolicy>, WhittleState,
                               std::unique_ptr<DeepTopPolicy>, RandomState>;

    PolicyHandle(PolicyKind kind, State state) : kind_(kind), state_(std::move(state)) {}

    PolicyKind kind_;
    State state_;
};

} // namespace mrrmb
