#include "mrrmb/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mrrmb {

PolicyKind parse_policy_kind(std::string_view name) {
    if (name == "dip") return PolicyKind::dip;
    if (name == "swim") return PolicyKind::swim;
    if (name == "whittle") return PolicyKind::whittle;
    if (name == "deeptop") return PolicyKind::deeptop;
    if (name == "random") return PolicyKind::random;
    throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::dip: return "dip";
    case PolicyKind::swim: return "swim";
    case PolicyKind::whittle: return "whittle";
    case PolicyKind::deeptop: return "deeptop";
    case PolicyKind::random: return "random";
    }
    return "?";
}

double whittle_closed_form(double zeta, double p, int s) {
    if (p == zeta) throw std::invalid_argument("whittle_closed_form: undefined for p == zeta");
    return (3.0 * zeta - p) / (p - zeta) + 2.0 * p * s;
}

ActionId best_channel(const Eigen::Ref<const Eigen::VectorXd>& success_prob) {
    if (success_prob.size() == 0) throw std::invalid_argument("best_channel: no channels");
    Eigen::Index best = 0;
    for (Eigen::Index h = 1; h < success_prob.size(); ++h)
        if (success_prob(h) > success_prob(best)) best = h;
    return static_cast<ActionId>(best) + 1;
}

namespace {

// Arm ids sorted by descending score, ties to the lower id.
std::vector<int> ranked(const std::vector<double>& score, const std::vector<int>& ids) {
    std::vector<int> out = ids;
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) { return score[a] > score[b]; });
    return out;
}

std::vector<double> step_all(std::span<const Arm> arms, std::vector<int>& states, const Assignment& a, Rng& rng) {
    std::vector<double> rewards(arms.size());
    for (std::size_t n = 0; n < arms.size(); ++n) {
        const StepResult r = sample_step(arms[n], states[n], a[n], rng);
        rewards[n] = r.reward;
        states[n] = r.next;
    }
    return rewards;
}

std::vector<int> state_caps(std::span<const Arm> arms) {
    std::vector<int> caps;
    for (const Arm& a : arms) caps.push_back(std::max(1, a.cap()));
    return caps;
}

bool same_model(const ArmMDP& a, const ArmMDP& b) {
    if (a.reward.rows() != b.reward.rows() || a.reward.cols() != b.reward.cols() || a.reward != b.reward)
        return false;
    for (std::size_t k = 0; k < a.transition.size(); ++k)
        if (a.transition[k] != b.transition[k]) return false;
    return true;
}

} // namespace

Assignment whittle_act(std::span<const int> states, const ChannelModel& channels,
                       std::span<const double> arrival_prob, const CapacityVector& caps) {
    const auto N = static_cast<int>(states.size());
    const auto H = static_cast<int>(channels.success_prob.cols());
    if (channels.success_prob.rows() != N || static_cast<int>(arrival_prob.size()) != N ||
        static_cast<int>(caps.size()) != H)
        throw std::invalid_argument("whittle_act: inconsistent sizes");
    std::vector<double> index(N);
    std::vector<std::vector<int>> pool(H);
    for (int n = 0; n < N; ++n) {
        const ActionId h = best_channel(channels.success_prob.row(n).transpose());
        index[n] = whittle_closed_form(arrival_prob[n], channels.success_prob(n, h - 1), states[n]);
        pool[h - 1].push_back(n);
    }
    Assignment a(N, 0);
    for (int h = 0; h < H; ++h) {
        const auto order = ranked(index, pool[h]);
        for (int k = 0; k < std::min<int>(caps[h], static_cast<int>(order.size())); ++k) a[order[k]] = h + 1;
    }
    return a;
}

Assignment deeptop_act(const Eigen::Ref<const Eigen::VectorXd>& indexes, const CapacityVector& caps, Rng& rng) {
    const auto N = static_cast<int>(indexes.size());
    std::vector<int> slots;
    for (std::size_t h = 0; h < caps.size(); ++h)
        for (int c = 0; c < caps[h]; ++c) slots.push_back(static_cast<int>(h) + 1);
    for (int i = static_cast<int>(slots.size()) - 1; i > 0; --i)
        std::swap(slots[i], slots[rng.below(static_cast<std::uint64_t>(i) + 1)]);

    std::vector<int> ids(N);
    std::iota(ids.begin(), ids.end(), 0);
    const auto order = ranked(std::vector<double>(indexes.data(), indexes.data() + N), ids);
    Assignment a(N, 0);
    for (int k = 0; k < std::min<int>(N, static_cast<int>(slots.size())); ++k) a[order[k]] = slots[k];
    return a;
}

SwimPolicy::SwimPolicy(std::span<const Arm> arms, CapacityVector caps, double discount, double lambda_bound,
                       double lambda_rate, int lambda_period, IndexOptions opts)
    : caps_(std::move(caps)), opts_(opts) {
    if (arms.empty()) throw std::invalid_argument("SwimPolicy: no arms");
    const int H = arms[0].num_resources();
    if (static_cast<int>(caps_.size()) != H) throw std::invalid_argument("SwimPolicy: caps do not match arms");
    if (lambda_period < 1) throw std::invalid_argument("SwimPolicy: lambda_period must be >= 1");
    for (const Arm& arm : arms) {
        ArmMDP m = ArmMDP::from_arm(arm, discount);
        if (m.num_resources() != H) throw std::invalid_argument("SwimPolicy: arms disagree on resource count");
        auto it = std::find_if(models_.begin(), models_.end(), [&](const ArmMDP& o) { return same_model(o, m); });
        if (it == models_.end()) {
            model_of_.push_back(static_cast<int>(models_.size()));
            models_.push_back(std::move(m));
        } else {
            model_of_.push_back(static_cast<int>(it - models_.begin()));
        }
    }
    controller_.lambda = LambdaVector(H, lambda_bound);
    controller_.rate = lambda_rate;
    controller_.period = lambda_period;
}

void SwimPolicy::refresh() {
    if (valid_ && cached_.price == controller_.lambda.price) return;
    tables_.clear();
    for (const ArmMDP& m : models_) tables_.push_back(compute_index_table(m, controller_.lambda, opts_));
    cached_ = controller_.lambda;
    valid_ = true;
}

const IndexTable& SwimPolicy::table(int n) {
    refresh();
    return tables_[model_of_.at(n)];
}

WeightMatrix SwimPolicy::indexes(std::span<const int> states) {
    refresh();
    const auto N = static_cast<int>(model_of_.size());
    if (static_cast<int>(states.size()) != N) throw std::invalid_argument("SwimPolicy: one state per arm required");
    WeightMatrix w(N, controller_.lambda.size());
    for (int n = 0; n < N; ++n) w.row(n) = tables_[model_of_[n]].row(states[n]);
    return w;
}

Assignment SwimPolicy::act(std::span<const int> states) { return max_weight_assign(indexes(states), caps_); }

bool SwimPolicy::advance_tick(const WeightMatrix& w) {
    ++tick_;
    if (tick_ % controller_.period != 0) return false;
    controller_.update(w, caps_);
    return true;
}

namespace {

DipConfig pooled(DipConfig cfg, const CapacityVector& caps) {
    cfg.num_resources = 1;
    cfg.caps = {std::accumulate(caps.begin(), caps.end(), 0)};
    return cfg;
}

} // namespace

DeepTopPolicy::DeepTopPolicy(DipConfig cfg, std::span<const Arm> arms, CapacityVector caps, Rng& init_rng)
    : caps_(std::move(caps)), agent_(pooled(std::move(cfg), caps_), state_caps(arms), init_rng) {}

Assignment DeepTopPolicy::act(std::span<const int> states, Rng& rng, bool* explored) const {
    const bool explore = rng.uniform() < agent_.config().epsilon;
    if (explored) *explored = explore;
    if (explore) return random_act(agent_.num_arms(), caps_, rng);
    return deeptop_act(agent_.predict_indexes(states, agent_.lambda()).col(0), caps_, rng);
}

PolicyHandle PolicyHandle::dip(DipConfig cfg, std::span<const Arm> arms, Rng& init_rng) {
    return {PolicyKind::dip, std::make_unique<DipAgent>(std::move(cfg), state_caps(arms), init_rng)};
}

PolicyHandle PolicyHandle::swim(std::span<const Arm> arms, CapacityVector caps, double discount, double lambda_bound,
                                double lambda_rate, int lambda_period) {
    return {PolicyKind::swim,
            std::make_unique<SwimPolicy>(arms, std::move(caps), discount, lambda_bound, lambda_rate, lambda_period)};
}

PolicyHandle PolicyHandle::whittle(std::span<const Arm> arms, CapacityVector caps) {
    WhittleState st;
    st.caps = std::move(caps);
    const auto N = static_cast<Eigen::Index>(arms.size());
    const auto H = static_cast<Eigen::Index>(st.caps.size());
    st.channels.success_prob.resize(N, H);
    for (Eigen::Index n = 0; n < N; ++n) {
        const QueueArmParams* q = arms[n].as_queue();
        if (!q) throw std::invalid_argument("whittle policy needs queue arms");
        if (q->success_prob.size() != H) throw std::invalid_argument("whittle policy: caps do not match arms");
        st.channels.success_prob.row(n) = q->success_prob.transpose();
        st.arrival.push_back(q->arrival_prob);
    }
    return {PolicyKind::whittle, std::move(st)};
}

PolicyHandle PolicyHandle::deeptop(DipConfig cfg, std::span<const Arm> arms, CapacityVector caps, Rng& init_rng) {
    return {PolicyKind::deeptop, std::make_unique<DeepTopPolicy>(std::move(cfg), arms, std::move(caps), init_rng)};
}

PolicyHandle PolicyHandle::random(CapacityVector caps) { return {PolicyKind::random, RandomState{std::move(caps)}}; }

DipAgent* PolicyHandle::dip_agent() {
    auto* p = std::get_if<std::unique_ptr<DipAgent>>(&state_);
    return p ? p->get() : nullptr;
}

SwimPolicy* PolicyHandle::swim_policy() {
    auto* p = std::get_if<std::unique_ptr<SwimPolicy>>(&state_);
    return p ? p->get() : nullptr;
}

DeepTopPolicy* PolicyHandle::deeptop_policy() {
    auto* p = std::get_if<std::unique_ptr<DeepTopPolicy>>(&state_);
    return p ? p->get() : nullptr;
}

PolicyTick PolicyHandle::tick(std::span<const Arm> arms, std::vector<int>& states, Rng& rng) {
    PolicyTick out;
    switch (kind_) {
    case PolicyKind::dip: {
        DipAgent& agent = *dip_agent();
        TickOutcome t = agent.train_tick(arms, states, rng);
        out.assignment = std::move(t.assignment);
        out.rewards = std::move(t.rewards);
        out.lambda = agent.lambda().price;
        break;
    }
    case PolicyKind::swim: {
        SwimPolicy& swim = *swim_policy();
        const WeightMatrix w = swim.indexes(states);
        out.assignment = swim.act(states);
        out.rewards = step_all(arms, states, out.assignment, rng);
        swim.advance_tick(w);
        out.lambda = swim.lambda().price;
        break;
    }
    case PolicyKind::whittle: {
        const auto& st = std::get<WhittleState>(state_);
        out.assignment = whittle_act(states, st.channels, st.arrival, st.caps);
        out.rewards = step_all(arms, states, out.assignment, rng);
        break;
    }
    case PolicyKind::deeptop: {
        DeepTopPolicy& dt = *deeptop_policy();
        DipAgent& agent = dt.agent();
        const WeightMatrix w = agent.predict_indexes(states, agent.lambda());
        out.assignment = dt.act(states, rng);
        const std::vector<int> before = states;
        out.rewards = step_all(arms, states, out.assignment, rng);
        for (int n = 0; n < agent.num_arms(); ++n)
            agent.record(n, {before[n], out.assignment[n] > 0 ? 1 : 0, out.rewards[n], states[n], agent.ticks()});
        agent.advance_tick(w);
        for (int n = 0; n < agent.num_arms(); ++n) agent.train_arm(n, rng);
        out.lambda = agent.lambda().price;
        break;
    }
    case PolicyKind::random: {
        out.assignment = random_act(static_cast<int>(arms.size()), std::get<RandomState>(state_).caps, rng);
        out.rewards = step_all(arms, states, out.assignment, rng);
        break;
    }
    }
    return out;
}

} // namespace mrrmb
