#include "mrrmb/dip_agent.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mrrmb {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const TransitionRecord& rec) {
    if (data_.size() < capacity_) {
        data_.push_back(rec);
    } else {
        data_[next_] = rec;
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<TransitionRecord> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
    if (count > data_.size()) throw std::invalid_argument("ReplayBuffer::sample: not enough records");
    // Floyd's algorithm: distinct indexes in O(count^2) without touching the whole buffer.
    std::vector<std::size_t> picked;
    picked.reserve(count);
    const std::size_t n = data_.size();
    for (std::size_t j = n - count; j < n; ++j) {
        const auto t = static_cast<std::size_t>(rng.below(j + 1));
        const bool seen = std::find(picked.begin(), picked.end(), t) != picked.end();
        picked.push_back(seen ? j : t);
    }
    std::vector<TransitionRecord> out;
    out.reserve(count);
    for (std::size_t i : picked) out.push_back(data_[i]);
    return out;
}

void LambdaController::update(const WeightMatrix& indexes, std::span<const int> caps) {
    const int H = lambda.size();
    if (indexes.cols() != H) throw std::invalid_argument("LambdaController: index matrix has wrong width");
    std::vector<int> counts(H, 0);
    for (int h = 0; h < H; ++h)
        for (Eigen::Index n = 0; n < indexes.rows(); ++n)
            if (indexes(n, h) > lambda.price(h)) ++counts[h];
    lambda = lambda_gradient_update(lambda, counts, caps, rate);
}

void DipConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("DipConfig: " + msg); };
    if (num_resources < 1) fail("num_resources must be >= 1");
    if (static_cast<int>(caps.size()) != num_resources) fail("caps must have one entry per resource");
    for (int c : caps)
        if (c < 0) fail("capacities must be non-negative");
    if (!(discount >= 0.0 && discount < 1.0)) fail("discount must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail("epsilon must lie in [0, 1]");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (buffer_capacity < static_cast<std::size_t>(batch_size)) fail("buffer_capacity must be >= batch_size");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
    if (!(lambda_bound > 0.0)) fail("lambda_bound must be positive");
    if (!(lambda_rate > 0.0)) fail("lambda_rate must be positive");
    if (lambda_period < 1) fail("lambda_period must be >= 1");
    for (int h : hidden)
        if (h < 1) fail("hidden sizes must be positive");
    if (!(actor_learning_rate > 0.0) || !(critic_learning_rate > 0.0)) fail("learning rates must be positive");
    if (!(q_scale > 0.0) || !(index_scale > 0.0)) fail("output scales must be positive");
}

ActionId sigma_prime(const LambdaVector& lambda, const Eigen::Ref<const Eigen::VectorXd>& index_row,
                     ActionId exclude) {
    for (int h = lambda.size(); h >= 1; --h)
        if (h != exclude && index_row(h - 1) >= lambda.price(h - 1)) return h;
    return 0;
}

Assignment random_assignment(int num_arms, const CapacityVector& caps, Rng& rng) {
    std::vector<int> order(num_arms);
    for (int i = 0; i < num_arms; ++i) order[i] = i;
    for (int i = num_arms - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    std::vector<int> left(caps.begin(), caps.end());
    Assignment a(num_arms, 0);
    const auto choices = static_cast<std::uint64_t>(caps.size()) + 1;
    for (int n : order) {
        const auto h = static_cast<int>(rng.below(choices));
        if (h > 0 && left[h - 1] > 0) {
            --left[h - 1];
            a[n] = h;
        }
    }
    return a;
}

namespace {

template <typename Scalar>
Scalar scalar_out(const MlpParams<Scalar>& net, const Eigen::VectorXd& x) {
    return forward(net, x)(0, 0);
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return sizes;
}

} // namespace

template <typename Scalar>
BasicDipAgent<Scalar>::BasicDipAgent(DipConfig cfg, std::span<const int> state_caps, Rng& init_rng)
    : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (state_caps.empty()) throw std::invalid_argument("BasicDipAgent: need at least one arm");
    const int H = cfg_.num_resources;
    const auto actor_sizes = layer_sizes(H, cfg_.hidden); // s plus H-1 prices
    const auto critic_sizes = layer_sizes(1 + (H + 1) + H, cfg_.hidden);
    for (int cap : state_caps) {
        if (cap < 1) throw std::invalid_argument("BasicDipAgent: state caps must be >= 1");
        ArmLearner L;
        L.state_cap = cap;
        for (int h = 0; h < H; ++h) {
            L.actors.push_back(Net::random(actor_sizes, init_rng));
            L.actor_opt.emplace_back(L.actors.back(), cfg_.actor_learning_rate);
            L.actor_opt.back().clip_norm = cfg_.clip_norm;
        }
        L.critic = Net::random(critic_sizes, init_rng);
        L.target = L.critic;
        L.critic_opt = AdamState<Scalar>(L.critic, cfg_.critic_learning_rate);
        L.critic_opt.clip_norm = cfg_.clip_norm;
        L.buffer = ReplayBuffer(cfg_.buffer_capacity);
        arms_.push_back(std::move(L));
    }
    controller_.lambda = LambdaVector(H, cfg_.lambda_bound);
    controller_.rate = cfg_.lambda_rate;
    controller_.period = cfg_.lambda_period;
}

template <typename Scalar>
Eigen::VectorXd BasicDipAgent<Scalar>::actor_input(int n, ActionId h, int s, const LambdaVector& lambda) const {
    const int H = cfg_.num_resources;
    Eigen::VectorXd x(H);
    x(0) = static_cast<double>(s) / arms_.at(n).state_cap;
    for (int k = 1, j = 1; k <= H; ++k)
        if (k != h) x(j++) = lambda.price(k - 1) / cfg_.lambda_bound;
    return x;
}

template <typename Scalar>
Eigen::VectorXd BasicDipAgent<Scalar>::critic_input(int n, int s, ActionId a, const LambdaVector& lambda) const {
    const int H = cfg_.num_resources;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 + 2 * H);
    x(0) = static_cast<double>(s) / arms_.at(n).state_cap;
    x(1 + a) = 1.0;
    x.tail(H) = lambda.price / cfg_.lambda_bound;
    return x;
}

template <typename Scalar>
double BasicDipAgent<Scalar>::predict_index(int n, ActionId h, int s, const LambdaVector& lambda) const {
    if (h < 1 || h > cfg_.num_resources) throw std::out_of_range("predict_index: resource id out of range");
    return cfg_.index_scale * static_cast<double>(scalar_out(arms_.at(n).actors[h - 1], actor_input(n, h, s, lambda)));
}

template <typename Scalar>
WeightMatrix BasicDipAgent<Scalar>::predict_indexes(std::span<const int> states, const LambdaVector& lambda) const {
    if (static_cast<int>(states.size()) != num_arms())
        throw std::invalid_argument("predict_indexes: one state per arm required");
    WeightMatrix w(num_arms(), cfg_.num_resources);
    for (int n = 0; n < num_arms(); ++n)
        for (int h = 1; h <= cfg_.num_resources; ++h) w(n, h - 1) = predict_index(n, h, states[n], lambda);
    return w;
}

template <typename Scalar>
double BasicDipAgent<Scalar>::critic_value(int n, int s, ActionId a, const LambdaVector& lambda) const {
    return cfg_.q_scale * static_cast<double>(scalar_out(arms_.at(n).critic, critic_input(n, s, a, lambda)));
}

template <typename Scalar>
Assignment BasicDipAgent<Scalar>::act(std::span<const int> states, const LambdaVector& lambda, Rng& rng,
                                      bool* explored) const {
    const bool explore = rng.uniform() < cfg_.epsilon;
    if (explored) *explored = explore;
    if (explore) return random_assignment(num_arms(), cfg_.caps, rng);
    return exploit(predict_indexes(states, lambda), lambda);
}

template <typename Scalar>
Assignment BasicDipAgent<Scalar>::exploit(WeightMatrix w, const LambdaVector& lambda) const {
    if (cfg_.suppress_unprofitable)
        for (int h = 0; h < w.cols(); ++h)
            for (int n = 0; n < w.rows(); ++n)
                if (w(n, h) < lambda.price(h)) w(n, h) = -1.0;
    return max_weight_assign(w, cfg_.caps);
}

template <typename Scalar>
typename BasicDipAgent<Scalar>::Matrix
BasicDipAgent<Scalar>::critic_inputs(int n, std::span<const int> s, std::span<const ActionId> a,
                                     std::span<const LambdaVector> lambdas) const {
    const int H = cfg_.num_resources;
    Matrix x = Matrix::Zero(2 + 2 * H, static_cast<Eigen::Index>(s.size()));
    const double cap = arms_.at(n).state_cap;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        x(0, c) = static_cast<Scalar>(s[i] / cap);
        x(1 + a[i], c) = Scalar(1);
        x.col(c).tail(H) = (lambdas[i].price / cfg_.lambda_bound).template cast<Scalar>();
    }
    return x;
}

template <typename Scalar>
std::vector<typename BasicDipAgent<Scalar>::Net>
BasicDipAgent<Scalar>::actor_gradients(int n, std::span<const TransitionRecord> batch,
                                       std::span<const LambdaVector> lambdas, TrainStats* stats) const {
    if (batch.size() != lambdas.size()) throw std::invalid_argument("actor_gradients: one lambda per record");
    const int H = cfg_.num_resources;
    const ArmLearner& L = arms_.at(n);
    std::vector<Net> grads;
    for (const Net& a : L.actors) grads.push_back(a.zeros_like());
    if (batch.empty()) return grads;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double adv_sum = 0.0;
    int routed = 0;

    for (int h = 1; h <= H; ++h) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (batch[i].a == h) rows.push_back(i);
        if (rows.empty()) continue;
        const auto m = static_cast<Eigen::Index>(rows.size());

        Matrix x(H, m);
        for (Eigen::Index j = 0; j < m; ++j)
            x.col(j) = actor_input(n, h, batch[rows[j]].s, lambdas[rows[j]]).template cast<Scalar>();
        const auto trace = forward_trace(L.actors[h - 1], x);

        // Prices with lambda_h replaced by the predicted index.
        std::vector<LambdaVector> shifted;
        shifted.reserve(rows.size());
        for (Eigen::Index j = 0; j < m; ++j)
            shifted.push_back(lambdas[rows[j]].with(h, cfg_.index_scale * static_cast<double>(trace.output(0, j))));

        Eigen::MatrixXd others = Eigen::MatrixXd::Zero(H, m);
        for (int k = 1; k <= H; ++k) {
            if (k == h) continue;
            Matrix xk(H, m);
            for (Eigen::Index j = 0; j < m; ++j)
                xk.col(j) = actor_input(n, k, batch[rows[j]].s, shifted[j]).template cast<Scalar>();
            others.row(k - 1) = cfg_.index_scale * forward(L.actors[k - 1], xk).row(0).template cast<double>();
        }

        std::vector<int> s2(2 * rows.size());
        std::vector<ActionId> a2(2 * rows.size());
        std::vector<LambdaVector> l2(2 * rows.size());
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            s2[j] = s2[j + rows.size()] = batch[rows[j]].s;
            a2[j] = h;
            a2[j + rows.size()] = sigma_prime(shifted[j], others.col(col), h);
            l2[j] = l2[j + rows.size()] = shifted[j];
        }
        const Matrix q = forward(L.critic, critic_inputs(n, s2, a2, l2));

        Matrix upstream(1, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const double adv = static_cast<double>(q(0, j)) - static_cast<double>(q(0, j + m)); // Delta / q_scale
            upstream(0, j) = static_cast<Scalar>(adv * inv_b);
            adv_sum += adv * cfg_.q_scale;
        }
        routed += static_cast<int>(m);
        grads[h - 1] = backward(L.actors[h - 1], trace, upstream);
    }
    if (stats) {
        stats->actor_records = routed;
        stats->mean_advantage = routed ? adv_sum / routed : 0.0;
    }
    return grads;
}

template <typename Scalar>
typename BasicDipAgent<Scalar>::Net
BasicDipAgent<Scalar>::critic_gradient(int n, std::span<const TransitionRecord> batch,
                                       std::span<const LambdaVector> lambdas, TrainStats* stats) const {
    if (batch.size() != lambdas.size()) throw std::invalid_argument("critic_gradient: one lambda per record");
    const int H = cfg_.num_resources;
    const ArmLearner& L = arms_.at(n);
    if (batch.empty()) return L.critic.zeros_like();
    const std::size_t B = batch.size();
    const auto b = static_cast<Eigen::Index>(B);

    std::vector<int> s(B), sn(B * (H + 1));
    std::vector<ActionId> a(B), an(B * (H + 1));
    std::vector<LambdaVector> ln(B * (H + 1));
    for (std::size_t i = 0; i < B; ++i) {
        s[i] = batch[i].s;
        a[i] = batch[i].a;
        for (int k = 0; k <= H; ++k) {
            sn[i * (H + 1) + k] = batch[i].s_next;
            an[i * (H + 1) + k] = k;
            ln[i * (H + 1) + k] = lambdas[i];
        }
    }
    const Matrix next_q = forward(L.target, critic_inputs(n, sn, an, ln));
    const auto trace = forward_trace(L.critic, critic_inputs(n, s, a, lambdas));

    Matrix upstream(1, b);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double best = -INFINITY;
        for (int k = 0; k <= H; ++k)
            best = std::max(best, static_cast<double>(next_q(0, static_cast<Eigen::Index>(i * (H + 1) + k))));
        const double target = batch[i].r - lambdas[i].at(batch[i].a) + cfg_.discount * cfg_.q_scale * best;
        const double delta = static_cast<double>(trace.output(0, static_cast<Eigen::Index>(i))) -
                             target / cfg_.q_scale; // in q_scale units
        upstream(0, static_cast<Eigen::Index>(i)) = static_cast<Scalar>(2.0 * delta / static_cast<double>(B));
        loss += delta * delta;
    }
    if (stats) stats->critic_loss = loss / static_cast<double>(B);
    return backward(L.critic, trace, upstream);
}

template <typename Scalar>
void BasicDipAgent<Scalar>::actor_update(int n, std::span<const TransitionRecord> batch,
                                         std::span<const LambdaVector> lambdas, TrainStats* stats) {
    const auto grads = actor_gradients(n, batch, lambdas, stats);
    ArmLearner& L = arms_.at(n);
    for (int h = 1; h <= cfg_.num_resources; ++h) {
        const bool touched = std::any_of(batch.begin(), batch.end(), [h](const auto& r) { return r.a == h; });
        if (touched) adam_step(L.actors[h - 1], L.actor_opt[h - 1], grads[h - 1], true);
    }
}

template <typename Scalar>
void BasicDipAgent<Scalar>::critic_update(int n, std::span<const TransitionRecord> batch,
                                          std::span<const LambdaVector> lambdas, TrainStats* stats) {
    const auto grad = critic_gradient(n, batch, lambdas, stats);
    ArmLearner& L = arms_.at(n);
    adam_step(L.critic, L.critic_opt, grad, false);
}

template <typename Scalar>
std::vector<LambdaVector> BasicDipAgent<Scalar>::sample_lambdas(std::size_t count, Rng& rng) const {
    const double M = cfg_.lambda_bound;
    std::vector<LambdaVector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LambdaVector l(cfg_.num_resources, M);
        for (int h = 0; h < cfg_.num_resources; ++h) l.price(h) = rng.uniform(-M, M);
        out.push_back(std::move(l));
    }
    return out;
}

template <typename Scalar>
bool BasicDipAgent<Scalar>::train_arm(int n, Rng& rng, TrainStats* stats) {
    ArmLearner& L = arms_.at(n);
    const auto B = static_cast<std::size_t>(cfg_.batch_size);
    if (L.buffer.size() < B) return false;
    const auto batch = L.buffer.sample(B, rng);
    const auto lambdas = sample_lambdas(B, rng);
    actor_update(n, batch, lambdas, stats);
    critic_update(n, batch, lambdas, stats);
    mrrmb::soft_update(L.target, L.critic, cfg_.tau);
    return true;
}

template <typename Scalar>
bool BasicDipAgent<Scalar>::advance_tick(const WeightMatrix& w) {
    ++tick_;
    if (tick_ % controller_.period != 0) return false;
    controller_.update(w, cfg_.caps);
    return true;
}

template <typename Scalar>
TickOutcome BasicDipAgent<Scalar>::train_tick(std::span<const Arm> arms, std::vector<int>& states, Rng& rng) {
    if (static_cast<int>(arms.size()) != num_arms() || static_cast<int>(states.size()) != num_arms())
        throw std::invalid_argument("train_tick: one arm and one state per learner required");
    TickOutcome out;
    const WeightMatrix w = predict_indexes(states, controller_.lambda);
    if (rng.uniform() < cfg_.epsilon) {
        out.explored = true;
        out.assignment = random_assignment(num_arms(), cfg_.caps, rng);
    } else {
        out.assignment = exploit(w, controller_.lambda);
    }
    out.rewards.resize(arms.size());
    for (int n = 0; n < num_arms(); ++n) {
        const StepResult step = sample_step(arms[n], states[n], out.assignment[n], rng);
        record(n, {states[n], out.assignment[n], step.reward, step.next, tick_});
        out.rewards[n] = step.reward;
        states[n] = step.next;
    }
    out.lambda_updated = advance_tick(w);
    for (int n = 0; n < num_arms(); ++n) out.trained = train_arm(n, rng) || out.trained;
    return out;
}

template <typename Scalar>
void BasicDipAgent<Scalar>::save(std::ostream& os) const {
    const auto old = os.precision(17);
    os << "dip 1 " << num_arms() << ' ' << cfg_.num_resources << ' ' << tick_ << '\n';
    os << "lambda " << controller_.lambda.bound;
    for (int h = 0; h < controller_.lambda.size(); ++h) os << ' ' << controller_.lambda.price(h);
    os << '\n';
    os.precision(old);
    for (const ArmLearner& L : arms_) {
        os << "arm " << L.state_cap << '\n';
        for (const Net& a : L.actors) save_params(os, a);
        save_params(os, L.critic);
        save_params(os, L.target);
    }
}

template <typename Scalar>
void BasicDipAgent<Scalar>::load(std::istream& is) {
    std::string tag;
    int version = 0, N = 0, H = 0;
    long tick = 0;
    if (!(is >> tag >> version >> N >> H >> tick) || tag != "dip" || version != 1)
        throw std::runtime_error("DipAgent::load: bad checkpoint header");
    if (N != num_arms() || H != cfg_.num_resources)
        throw std::runtime_error("DipAgent::load: checkpoint shape does not match this agent");
    LambdaVector lambda(H);
    if (!(is >> tag >> lambda.bound) || tag != "lambda") throw std::runtime_error("DipAgent::load: missing prices");
    for (int h = 0; h < H; ++h) is >> lambda.price(h);
    std::vector<ArmLearner> loaded = arms_;
    for (ArmLearner& L : loaded) {
        if (!(is >> tag >> L.state_cap) || tag != "arm") throw std::runtime_error("DipAgent::load: bad arm header");
        for (int h = 0; h < H; ++h) {
            Net a = load_params<Scalar>(is);
            if (!a.same_shape(L.actors[h])) throw std::runtime_error("DipAgent::load: actor shape mismatch");
            L.actors[h] = std::move(a);
            L.actor_opt[h] = AdamState<Scalar>(L.actors[h], cfg_.actor_learning_rate);
            L.actor_opt[h].clip_norm = cfg_.clip_norm;
        }
        Net c = load_params<Scalar>(is), t = load_params<Scalar>(is);
        if (!c.same_shape(L.critic) || !t.same_shape(L.critic))
            throw std::runtime_error("DipAgent::load: critic shape mismatch");
        L.critic = std::move(c);
        L.target = std::move(t);
        L.critic_opt = AdamState<Scalar>(L.critic, cfg_.critic_learning_rate);
        L.critic_opt.clip_norm = cfg_.clip_norm;
    }
    if (!is) throw std::runtime_error("DipAgent::load: truncated checkpoint");
    arms_ = std::move(loaded);
    controller_.lambda = lambda;
    tick_ = tick;
}

template class BasicDipAgent<float>;
template class BasicDipAgent<double>;

} // namespace mrrmb
