#pragma once

// Deep Index Policy: per-(arm, resource) actor networks that predict partial
// indexes, one critic and target critic per arm, per-arm replay buffers,
// epsilon-greedy max-weight acting and a shadow-price controller.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mrrmb/arm_envs.hpp"
#include "mrrmb/index_oracle.hpp"
#include "mrrmb/matching.hpp"
#include "mrrmb/neural.hpp"
#include "mrrmb/rng.hpp"

namespace mrrmb {

struct TransitionRecord {
    int s = 0;
    ActionId a = 0;
    double r = 0.0;
    int s_next = 0;
    long t = 0;
};

/// Fixed-capacity ring buffer of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 10000);

    void push(const TransitionRecord& rec);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const TransitionRecord& operator[](std::size_t i) const { return data_[i]; }

    /// `count` distinct records, uniformly at random (partial Fisher-Yates).
    std::vector<TransitionRecord> sample(std::size_t count, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<TransitionRecord> data_;
};

/// Shadow prices plus the periodic gradient update schedule.
struct LambdaController {
    LambdaVector lambda;
    double rate = 0.01; // rho
    int period = 100;   // ticks between updates

    /// Applies lambda_gradient_update with counts_h = #{n : w(n,h-1) > lambda_h}.
    void update(const WeightMatrix& indexes, std::span<const int> caps);
};

struct DipConfig {
    int num_resources = 1;
    CapacityVector caps{1};
    double discount = 0.99;
    double epsilon = 0.1;
    int batch_size = 64;
    std::size_t buffer_capacity = 10000;
    double tau = 0.001;
    double lambda_bound = 100.0; // M
    double lambda_rate = 0.01;   // rho
    int lambda_period = 100;
    std::vector<int> hidden{128, 128}; // empty gives linear networks
    double actor_learning_rate = 1e-3;
    double critic_learning_rate = 1e-3;
    double clip_norm = 10.0;
    /// Network outputs are read in these units: Q = q_scale * critic(x),
    /// w = index_scale * actor(x).
    double q_scale = 100.0;
    double index_scale = 10.0;
    /// Drop edges whose predicted index is below the current price.
    bool suppress_unprofitable = false;

    void validate() const;
};

/// Largest h' != exclude with index_row(h'-1) >= lambda_h', or 0.
ActionId sigma_prime(const LambdaVector& lambda, const Eigen::Ref<const Eigen::VectorXd>& index_row,
                     ActionId exclude);

/// Capacity-feasible random assignment: arms in random order each draw from
/// {0..H}; a draw on a full resource falls back to null.
Assignment random_assignment(int num_arms, const CapacityVector& caps, Rng& rng);

struct TrainStats {
    double critic_loss = 0.0;  // mean squared TD error in q_scale units
    double mean_advantage = 0.0; // mean Delta over actor-routed records
    int actor_records = 0;
};

struct TickOutcome {
    Assignment assignment;
    std::vector<double> rewards;
    bool explored = false;
    bool trained = false; // false during warm-up
    bool lambda_updated = false;
};

template <typename Scalar>
class BasicDipAgent {
public:
    using Net = MlpParams<Scalar>;
    using Matrix = typename Net::Matrix;

    struct ArmLearner {
        int state_cap = 1;
        std::vector<Net> actors; // actors[h-1]
        std::vector<AdamState<Scalar>> actor_opt;
        Net critic;
        Net target;
        AdamState<Scalar> critic_opt;
        ReplayBuffer buffer;
    };

    /// One learner per arm; state_caps[n] normalizes arm n's state input.
    BasicDipAgent(DipConfig cfg, std::span<const int> state_caps, Rng& init_rng);

    const DipConfig& config() const { return cfg_; }
    int num_arms() const { return static_cast<int>(arms_.size()); }
    int num_resources() const { return cfg_.num_resources; }
    ArmLearner& learner(int n) { return arms_.at(n); }
    const ArmLearner& learner(int n) const { return arms_.at(n); }
    LambdaController& lambda_controller() { return controller_; }
    const LambdaVector& lambda() const { return controller_.lambda; }
    long ticks() const { return tick_; }

    Eigen::VectorXd actor_input(int n, ActionId h, int s, const LambdaVector& lambda) const;
    Eigen::VectorXd critic_input(int n, int s, ActionId a, const LambdaVector& lambda) const;

    /// w^phi_{n,h}(s, lambda_-h).
    double predict_index(int n, ActionId h, int s, const LambdaVector& lambda) const;
    /// N x H matrix of predicted indexes at the given states.
    WeightMatrix predict_indexes(std::span<const int> states, const LambdaVector& lambda) const;
    double critic_value(int n, int s, ActionId a, const LambdaVector& lambda) const;

    /// Epsilon-greedy: random assignment w.p. epsilon, else max-weight matching
    /// on predicted indexes.
    Assignment act(std::span<const int> states, const LambdaVector& lambda, Rng& rng, bool* explored = nullptr) const;

    void record(int n, const TransitionRecord& rec) { arms_.at(n).buffer.push(rec); }

    /// Sum over the batch of Delta * grad w, divided by the batch size, one
    /// gradient per actor (records with a = 0 contribute nothing).
    std::vector<Net> actor_gradients(int n, std::span<const TransitionRecord> batch,
                                     std::span<const LambdaVector> lambdas, TrainStats* stats = nullptr) const;
    /// Mean over the batch of 2 * delta * grad Q (normalized units).
    Net critic_gradient(int n, std::span<const TransitionRecord> batch, std::span<const LambdaVector> lambdas,
                        TrainStats* stats = nullptr) const;

    /// Ascends each routed actor by one Adam step. Actors with no records are untouched.
    void actor_update(int n, std::span<const TransitionRecord> batch, std::span<const LambdaVector> lambdas,
                      TrainStats* stats = nullptr);
    void critic_update(int n, std::span<const TransitionRecord> batch, std::span<const LambdaVector> lambdas,
                       TrainStats* stats = nullptr);

    std::vector<LambdaVector> sample_lambdas(std::size_t count, Rng& rng) const;

    /// Sample a batch for arm n, update its actors then its critic, then the
    /// target critic. Returns false when the buffer is still below batch size.
    bool train_arm(int n, Rng& rng, TrainStats* stats = nullptr);

    /// Counts a tick and, every lambda_period ticks, moves the prices using
    /// the index predictions `w` made at the start of the tick.
    bool advance_tick(const WeightMatrix& w);

    /// One full tick: act, step every arm, record, periodic lambda update,
    /// then train every arm.
    TickOutcome train_tick(std::span<const Arm> arms, std::vector<int>& states, Rng& rng);

    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    Assignment exploit(WeightMatrix w, const LambdaVector& lambda) const;
    Matrix critic_inputs(int n, std::span<const int> s, std::span<const ActionId> a,
                         std::span<const LambdaVector> lambdas) const;

    DipConfig cfg_;
    std::vector<ArmLearner> arms_;
    LambdaController controller_;
    long tick_ = 0;
};

using DipAgent = BasicDipAgent<float>;

extern template class BasicDipAgent<float>;
extern template class BasicDipAgent<double>;

} // namespace mrrmb
