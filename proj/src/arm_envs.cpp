#include "mrrmb/arm_envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mrrmb {

void Distribution::add(int state, double p) {
    for (auto& o : outcomes) {
        if (o.next == state) {
            o.prob += p;
            return;
        }
    }
    outcomes.push_back({state, p});
}

double Distribution::prob(int state) const {
    for (const auto& o : outcomes)
        if (o.next == state) return o.prob;
    return 0.0;
}

double Distribution::total() const {
    double t = 0.0;
    for (const auto& o : outcomes) t += o.prob;
    return t;
}

int sample(const Distribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& o : dist.outcomes) {
        acc += o.prob;
        if (u < acc) return o.next;
    }
    // Rounding left u above the accumulated mass; take the last positive outcome.
    for (auto it = dist.outcomes.rbegin(); it != dist.outcomes.rend(); ++it)
        if (it->prob > 0.0) return it->next;
    throw std::invalid_argument("sample: empty distribution");
}

void ChannelModel::validate() const {
    for (Eigen::Index i = 0; i < success_prob.size(); ++i) {
        const double p = success_prob.data()[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("ChannelModel: success probability outside [0,1]");
    }
}

namespace {

void check_action(ActionId a, Eigen::Index num_resources) {
    if (a < 0 || a > num_resources)
        throw std::out_of_range("action id " + std::to_string(a) + " outside [0, " +
                                std::to_string(num_resources) + "]");
}

} // namespace

Distribution aoi_kernel(ArmState s, ActionId a, const Eigen::VectorXd& p_row) {
    check_action(a, p_row.size());
    const int aged = std::min(s.value + 1, s.cap);
    Distribution d;
    if (a == 0) {
        d.add(aged, 1.0);
    } else {
        const double p = p_row(a - 1);
        d.add(1, p);
        d.add(aged, 1.0 - p);
    }
    return d;
}

double aoi_reward(ArmState next) { return -static_cast<double>(next.value); }

Distribution queue_kernel(ArmState s, ActionId a, const QueueArmParams& params) {
    check_action(a, params.success_prob.size());
    const double zeta = params.arrival_prob;
    const int up = std::min(s.value + 1, s.cap);
    const int down = std::max(s.value - 1, 0);
    Distribution d;
    if (a == 0) {
        d.add(up, zeta);
        d.add(s.value, 1.0 - zeta);
    } else {
        const double p = params.success_prob(a - 1);
        d.add(up, (1.0 - p) * zeta);
        d.add(s.value, (1.0 - p) * (1.0 - zeta) + p * zeta);
        d.add(down, p * (1.0 - zeta));
    }
    return d;
}

double queue_reward(ArmState s) {
    const double q = s.value;
    return -q * q;
}

Distribution ad_kernel(ArmState s, ActionId a, int num_resources) {
    check_action(a, num_resources);
    Distribution d;
    d.add(a == 0 ? std::min(s.value + 1, s.cap) : 1, 1.0);
    return d;
}

double ad_reward(ArmState s, ActionId a, const AdArmParams& params) {
    check_action(a, params.theta0.size());
    if (a == 0) return 0.0;
    const double rate = params.theta1(a - 1);
    const double exponent =
        params.form == AdRewardForm::recovering ? -rate * s.value : rate * s.value;
    return params.theta0(a - 1) * (1.0 - std::exp(exponent));
}

Arm Arm::aoi(AoiArmParams p) {
    if (p.cap < 1) throw std::invalid_argument("AoI arm: cap must be >= 1");
    for (Eigen::Index h = 0; h < p.success_prob.size(); ++h)
        if (!(p.success_prob(h) >= 0.0 && p.success_prob(h) <= 1.0))
            throw std::invalid_argument("AoI arm: success probability outside [0,1]");
    return Arm(std::move(p));
}

Arm Arm::queue(QueueArmParams p) {
    if (p.cap < 1) throw std::invalid_argument("queue arm: cap must be >= 1");
    if (!(p.arrival_prob >= 0.0 && p.arrival_prob <= 1.0))
        throw std::invalid_argument("queue arm: arrival probability outside [0,1]");
    for (Eigen::Index h = 0; h < p.success_prob.size(); ++h)
        if (!(p.success_prob(h) >= 0.0 && p.success_prob(h) <= 1.0))
            throw std::invalid_argument("queue arm: success probability outside [0,1]");
    return Arm(std::move(p));
}

Arm Arm::ad(AdArmParams p) {
    if (p.cap < 1) throw std::invalid_argument("ad arm: cap must be >= 1");
    if (p.theta0.size() != p.theta1.size())
        throw std::invalid_argument("ad arm: theta0/theta1 length mismatch");
    if ((p.theta1.array() <= 0.0).any())
        throw std::invalid_argument("ad arm: theta1 must be positive");
    return Arm(std::move(p));
}

Arm Arm::tabular(TabularArmParams p) {
    const auto actions = static_cast<Eigen::Index>(p.transition.size());
    if (actions < 2) throw std::invalid_argument("tabular arm: need at least two actions");
    const Eigen::Index states = p.transition[0].rows();
    if (states < 1 || p.reward.rows() != states || p.reward.cols() != actions)
        throw std::invalid_argument("tabular arm: reward table shape mismatch");
    for (const auto& m : p.transition) {
        if (m.rows() != states || m.cols() != states)
            throw std::invalid_argument("tabular arm: transition shape mismatch");
        if ((m.array() < 0.0).any() ||
            ((m.rowwise().sum().array() - 1.0).abs() > 1e-12).any())
            throw std::invalid_argument("tabular arm: rows must be probability vectors");
    }
    if (p.initial_state < 0 || p.initial_state >= states)
        throw std::invalid_argument("tabular arm: initial state out of range");
    return Arm(std::move(p));
}

ArmKind Arm::kind() const {
    return std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AoiArmParams>) return ArmKind::aoi;
            else if constexpr (std::is_same_v<T, QueueArmParams>) return ArmKind::queue;
            else if constexpr (std::is_same_v<T, AdArmParams>) return ArmKind::ad;
            else return ArmKind::tabular;
        },
        params_);
}

int Arm::num_resources() const {
    return std::visit(
        [](const auto& p) -> int {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AdArmParams>) return static_cast<int>(p.theta0.size());
            else if constexpr (std::is_same_v<T, TabularArmParams>)
                return static_cast<int>(p.transition.size()) - 1;
            else return static_cast<int>(p.success_prob.size());
        },
        params_);
}

int Arm::cap() const {
    return std::visit(
        [](const auto& p) -> int {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, TabularArmParams>)
                return static_cast<int>(p.transition[0].rows()) - 1;
            else return p.cap;
        },
        params_);
}

int Arm::min_state() const {
    const auto k = kind();
    return (k == ArmKind::aoi || k == ArmKind::ad) ? 1 : 0;
}

int Arm::initial_state() const {
    if (const auto* t = as_tabular()) return t->initial_state;
    return min_state();
}

void Arm::check(int s, ActionId a) const {
    if (s < 0 || s > cap())
        throw std::out_of_range("state " + std::to_string(s) + " outside [0, " +
                                std::to_string(cap()) + "]");
    check_action(a, num_resources());
}

Distribution Arm::kernel(int s, ActionId a) const {
    check(s, a);
    const int c = std::max(cap(), 1);
    return std::visit(
        [&](const auto& p) -> Distribution {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AoiArmParams>) {
                return aoi_kernel(ArmState(s, c), a, p.success_prob);
            } else if constexpr (std::is_same_v<T, QueueArmParams>) {
                return queue_kernel(ArmState(s, c), a, p);
            } else if constexpr (std::is_same_v<T, AdArmParams>) {
                return ad_kernel(ArmState(s, c), a, static_cast<int>(p.theta0.size()));
            } else {
                Distribution d;
                const auto& row = p.transition[static_cast<std::size_t>(a)].row(s);
                for (Eigen::Index j = 0; j < row.size(); ++j)
                    if (row(j) > 0.0) d.add(static_cast<int>(j), row(j));
                return d;
            }
        },
        params_);
}

double Arm::reward(int s, ActionId a, int next) const {
    check(s, a);
    const int c = std::max(cap(), 1);
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AoiArmParams>) return aoi_reward(ArmState(next, c));
            else if constexpr (std::is_same_v<T, QueueArmParams>) return queue_reward(ArmState(s, c));
            else if constexpr (std::is_same_v<T, AdArmParams>) return ad_reward(ArmState(s, c), a, p);
            else return p.reward(s, a);
        },
        params_);
}

double Arm::mean_reward(int s, ActionId a) const {
    if (kind() != ArmKind::aoi) return reward(s, a, s);
    double r = 0.0;
    for (const auto& o : kernel(s, a).outcomes) r += o.prob * reward(s, a, o.next);
    return r;
}

double standard_normal(Rng& rng) {
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

StepResult sample_step(const Arm& arm, int s, ActionId a, Rng& rng) {
    const int next = sample(arm.kernel(s, a), rng);
    double r = arm.reward(s, a, next);
    if (arm.reward_noise > 0.0) r += arm.reward_noise * standard_normal(rng);
    return {next, r};
}

} // namespace mrrmb
