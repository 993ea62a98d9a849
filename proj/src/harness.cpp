#include "mrrmb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace mrrmb {

namespace {

struct Group {
    int count;
    std::vector<double> row;
};

Eigen::MatrixXd stack(const std::vector<Group>& groups) {
    int n = 0;
    for (const auto& g : groups) n += g.count;
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(groups.front().row.size()));
    int i = 0;
    for (const auto& g : groups)
        for (int k = 0; k < g.count; ++k, ++i)
            for (std::size_t h = 0; h < g.row.size(); ++h) m(i, static_cast<Eigen::Index>(h)) = g.row[h];
    return m;
}

ExperimentConfig channel_preset(std::string name, ScenarioFamily family, const std::vector<Group>& groups,
                                double zeta) {
    ExperimentConfig c;
    c.scenario = std::move(name);
    c.family = family;
    c.success_prob = stack(groups);
    c.num_arms = static_cast<int>(c.success_prob.rows());
    c.num_resources = static_cast<int>(c.success_prob.cols());
    c.caps.assign(c.num_resources, 2);
    if (family == ScenarioFamily::hold) c.arrival_prob.assign(c.num_arms, zeta);
    return c;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
    double x = 0.0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" + s + "'");
    return x;
}

long to_long(std::string_view key, std::string_view v) {
    long x = 0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::invalid_argument("config: '" + std::string(key) + "' expects an integer, got '" + s + "'");
    return x;
}

std::vector<int> to_int_list(std::string_view key, std::string_view v) {
    std::vector<int> out;
    std::size_t start = 0;
    const std::string s = trim(v);
    while (start <= s.size()) {
        const auto end = std::min(s.find(',', start), s.size());
        out.push_back(static_cast<int>(to_long(key, std::string_view(s).substr(start, end - start))));
        start = end + 1;
    }
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    const auto s = trim(v);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config: '" + std::string(key) + "' expects true/false, got '" + s + "'");
}

std::vector<int> group_starts(const ExperimentConfig& c) {
    auto row = [&](int n) {
        std::vector<double> r;
        if (c.family == ScenarioFamily::ads) {
            for (int h = 0; h < c.num_resources; ++h) r.push_back(c.theta0(n, h)), r.push_back(c.theta1(n, h));
        } else {
            for (int h = 0; h < c.num_resources; ++h) r.push_back(c.success_prob(n, h));
            if (c.family == ScenarioFamily::hold) r.push_back(c.arrival_prob[n]);
        }
        return r;
    };
    std::vector<int> starts{0};
    for (int n = 1; n < c.num_arms; ++n)
        if (row(n) != row(n - 1)) starts.push_back(n);
    return starts;
}

} // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ExperimentConfig: " + m); };
    if (num_arms < 1 || num_resources < 1) fail("need at least one arm and one resource");
    if (static_cast<int>(caps.size()) != num_resources) fail("caps must have one entry per resource");
    for (int c : caps)
        if (c < 0) fail("capacities must be non-negative");
    if (cap < 1) fail("cap must be >= 1");
    auto check_prob = [&](double p) {
        if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must lie in [0, 1]");
    };
    if (family != ScenarioFamily::ads) {
        if (success_prob.rows() != num_arms || success_prob.cols() != num_resources) fail("success_prob is not N x H");
        for (Eigen::Index i = 0; i < success_prob.size(); ++i) check_prob(success_prob.data()[i]);
    }
    if (family == ScenarioFamily::hold) {
        if (static_cast<int>(arrival_prob.size()) != num_arms) fail("arrival_prob needs one entry per arm");
        for (double z : arrival_prob) check_prob(z);
    }
    if (family == ScenarioFamily::ads && (theta0.rows() != num_arms || theta0.cols() != num_resources ||
                                          theta1.rows() != num_arms || theta1.cols() != num_resources))
        fail("theta0/theta1 are not N x H");
    if (steps < 1) fail("steps must be >= 1");
    if (window < 1 || steps < window) fail("window must lie in [1, steps]");
    if (runs < 1) fail("runs must be >= 1");
    if (lambda_period < 1) fail("lambda_period must be >= 1");
    if (!(lambda_rate > 0.0)) fail("lambda_rate must be positive");
    if (!(lambda_bound > 0.0)) fail("lambda_bound must be positive");
    if (policy == PolicyKind::dip || policy == PolicyKind::deeptop) dip_config().validate();
}

std::vector<Arm> ExperimentConfig::make_arms() const {
    std::vector<Arm> arms;
    for (int n = 0; n < num_arms; ++n) {
        switch (family) {
        case ScenarioFamily::aoi: arms.push_back(Arm::aoi({success_prob.row(n).transpose(), cap})); break;
        case ScenarioFamily::hold:
            arms.push_back(Arm::queue({arrival_prob[n], success_prob.row(n).transpose(), cap}));
            break;
        case ScenarioFamily::ads:
            arms.push_back(Arm::ad({theta0.row(n).transpose(), theta1.row(n).transpose(), cap, ad_form}));
            break;
        }
    }
    return arms;
}

DipConfig ExperimentConfig::dip_config() const {
    DipConfig d;
    d.num_resources = num_resources;
    d.caps = caps;
    d.discount = discount;
    d.epsilon = epsilon;
    d.batch_size = batch_size;
    d.buffer_capacity = buffer_capacity;
    d.tau = tau;
    d.lambda_bound = lambda_bound;
    d.lambda_rate = lambda_rate;
    d.lambda_period = lambda_period;
    d.hidden = hidden;
    d.actor_learning_rate = actor_learning_rate;
    d.critic_learning_rate = critic_learning_rate;
    d.clip_norm = clip_norm;
    d.q_scale = q_scale;
    d.index_scale = index_scale;
    d.suppress_unprofitable = suppress_unprofitable;
    return d;
}

std::vector<std::string> preset_names() {
    return {"aoi-het-2ch",  "aoi-het-3ch",  "aoi-hom-2ch",  "aoi-hom-3ch", "hold-het-2ch",
            "hold-het-3ch", "hold-hom-2ch", "hold-hom-3ch", "ads"};
}

ExperimentConfig preset(std::string_view name) {
    const std::vector<Group> het2 = {{14, {0.7, 0.3}}, {6, {0.3, 0.7}}};
    const std::vector<Group> het3 = {{20, {0.9, 0.5, 0.1}}, {4, {0.1, 0.9, 0.5}}, {10, {0.5, 0.1, 0.9}}};
    const std::vector<Group> hom2 = {{14, {0.7, 0.7}}, {6, {0.3, 0.3}}};
    const std::vector<Group> hom3 = {{20, {0.9, 0.9, 0.9}}, {4, {0.7, 0.7, 0.7}}, {10, {0.5, 0.5, 0.5}}};
    const std::string n(name);
    if (n == "aoi-het-2ch") return channel_preset(n, ScenarioFamily::aoi, het2, 0.0);
    if (n == "aoi-het-3ch") return channel_preset(n, ScenarioFamily::aoi, het3, 0.0);
    if (n == "aoi-hom-2ch") return channel_preset(n, ScenarioFamily::aoi, hom2, 0.0);
    if (n == "aoi-hom-3ch") return channel_preset(n, ScenarioFamily::aoi, hom3, 0.0);
    if (n == "hold-het-2ch") return channel_preset(n, ScenarioFamily::hold, het2, 0.11);
    if (n == "hold-het-3ch") return channel_preset(n, ScenarioFamily::hold, het3, 0.11);
    if (n == "hold-hom-2ch") return channel_preset(n, ScenarioFamily::hold, hom2, 0.1);
    if (n == "hold-hom-3ch") return channel_preset(n, ScenarioFamily::hold, hom3, 0.08);
    if (n == "ads") {
        ExperimentConfig c;
        c.scenario = n;
        c.family = ScenarioFamily::ads;
        c.theta0 = stack({{10, {1, 3, 5}}, {10, {5, 1, 3}}, {10, {3, 5, 1}}});
        c.theta1 = Eigen::MatrixXd::Constant(30, 3, 0.1);
        c.num_arms = 30;
        c.num_resources = 3;
        c.caps = {2, 2, 2};
        return c;
    }
    throw std::invalid_argument("unknown preset '" + n + "'");
}

ExperimentConfig scale_down(const ExperimentConfig& cfg, int num_arms, CapacityVector caps, int cap) {
    if (num_arms < 1) throw std::invalid_argument("scale_down: num_arms must be >= 1");
    auto starts = group_starts(cfg);
    starts.push_back(cfg.num_arms);
    const auto G = static_cast<int>(starts.size()) - 1;

    // Largest remainder, then make sure no group vanishes while arms remain.
    std::vector<int> take(G);
    std::vector<std::pair<double, int>> rem;
    int used = 0;
    for (int g = 0; g < G; ++g) {
        const double exact = static_cast<double>(starts[g + 1] - starts[g]) * num_arms / cfg.num_arms;
        take[g] = static_cast<int>(std::floor(exact));
        used += take[g];
        rem.emplace_back(-(exact - take[g]), g);
    }
    std::sort(rem.begin(), rem.end());
    for (int k = 0; used < num_arms; ++k, ++used) ++take[rem[k % G].second];
    for (int g = 0; g < G && num_arms >= G; ++g) {
        if (take[g] > 0) continue;
        const auto donor = static_cast<int>(std::max_element(take.begin(), take.end()) - take.begin());
        --take[donor];
        ++take[g];
    }

    std::vector<int> rows;
    for (int g = 0; g < G; ++g)
        for (int k = 0; k < take[g]; ++k) rows.push_back(starts[g] + k);

    ExperimentConfig out = cfg;
    out.num_arms = num_arms;
    out.caps = std::move(caps);
    out.cap = cap;
    auto pick = [&](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd r(num_arms, m.cols());
        for (int i = 0; i < num_arms; ++i) r.row(i) = m.row(rows[i]);
        return r;
    };
    if (cfg.success_prob.size()) out.success_prob = pick(cfg.success_prob);
    if (cfg.theta0.size()) out.theta0 = pick(cfg.theta0);
    if (cfg.theta1.size()) out.theta1 = pick(cfg.theta1);
    if (!cfg.arrival_prob.empty()) {
        out.arrival_prob.clear();
        for (int r : rows) out.arrival_prob.push_back(cfg.arrival_prob[r]);
    }
    return out;
}

void apply_override(ExperimentConfig& c, std::string_view key, std::string_view value) {
    const std::string k(key);
    if (k == "preset") {
        ExperimentConfig base = preset(trim(value));
        base.policy = c.policy;
        c = base;
    } else if (k == "num_arms") {
        c = scale_down(c, static_cast<int>(to_long(k, value)), c.caps, c.cap);
    } else if (k == "caps") {
        c.caps = to_int_list(k, value);
    } else if (k == "cap") {
        c.cap = static_cast<int>(to_long(k, value));
    } else if (k == "arrival_prob") {
        c.arrival_prob.assign(c.num_arms, to_double(k, value));
    } else if (k == "ad_reward_form") {
        const auto v = trim(value);
        if (v == "recovering") c.ad_form = AdRewardForm::recovering;
        else if (v == "literal") c.ad_form = AdRewardForm::literal;
        else throw std::invalid_argument("config: ad_reward_form must be recovering or literal");
    } else if (k == "policy") {
        c.policy = parse_policy_kind(trim(value));
    } else if (k == "discount") {
        c.discount = to_double(k, value);
    } else if (k == "lambda_rate") {
        c.lambda_rate = to_double(k, value);
    } else if (k == "lambda_period") {
        c.lambda_period = static_cast<int>(to_long(k, value));
    } else if (k == "lambda_bound") {
        c.lambda_bound = to_double(k, value);
    } else if (k == "epsilon") {
        c.epsilon = to_double(k, value);
    } else if (k == "tau") {
        c.tau = to_double(k, value);
    } else if (k == "batch_size") {
        c.batch_size = static_cast<int>(to_long(k, value));
    } else if (k == "buffer_capacity") {
        c.buffer_capacity = static_cast<std::size_t>(to_long(k, value));
    } else if (k == "hidden") {
        c.hidden = to_int_list(k, value);
    } else if (k == "actor_learning_rate") {
        c.actor_learning_rate = to_double(k, value);
    } else if (k == "critic_learning_rate") {
        c.critic_learning_rate = to_double(k, value);
    } else if (k == "clip_norm") {
        c.clip_norm = to_double(k, value);
    } else if (k == "q_scale") {
        c.q_scale = to_double(k, value);
    } else if (k == "index_scale") {
        c.index_scale = to_double(k, value);
    } else if (k == "suppress_unprofitable") {
        c.suppress_unprofitable = to_bool(k, value);
    } else if (k == "steps") {
        c.steps = static_cast<int>(to_long(k, value));
    } else if (k == "window") {
        c.window = static_cast<int>(to_long(k, value));
    } else if (k == "runs") {
        c.runs = static_cast<int>(to_long(k, value));
    } else if (k == "seed") {
        c.base_seed = static_cast<std::uint64_t>(to_long(k, value));
    } else {
        throw std::invalid_argument("config: unknown key '" + k + "'");
    }
}

void apply_overrides(ExperimentConfig& cfg, std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        apply_override(cfg, trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    }
}

PolicyHandle make_policy(const ExperimentConfig& cfg, std::span<const Arm> arms, Rng& init_rng) {
    switch (cfg.policy) {
    case PolicyKind::dip: return PolicyHandle::dip(cfg.dip_config(), arms, init_rng);
    case PolicyKind::swim:
        return PolicyHandle::swim(arms, cfg.caps, cfg.discount, cfg.lambda_bound, cfg.lambda_rate, cfg.lambda_period);
    case PolicyKind::whittle: return PolicyHandle::whittle(arms, cfg.caps);
    case PolicyKind::deeptop: return PolicyHandle::deeptop(cfg.dip_config(), arms, cfg.caps, init_rng);
    case PolicyKind::random: return PolicyHandle::random(cfg.caps);
    }
    throw std::logic_error("make_policy: unhandled kind");
}

RunResult run(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    Rng rng(seed);
    Rng init_rng = rng.split();
    const std::vector<Arm> arms = cfg.make_arms();
    PolicyHandle policy = make_policy(cfg, arms, init_rng);

    std::vector<int> states;
    for (const Arm& a : arms) states.push_back(a.initial_state());

    RunResult r;
    r.seed = seed;
    r.metric.reserve(cfg.steps);
    r.assignments.reserve(cfg.steps);
    r.lambda = Eigen::MatrixXd::Zero(cfg.steps, cfg.num_resources);
    const double sign = cfg.metric_is_cost() ? -1.0 : 1.0;
    for (int t = 0; t < cfg.steps; ++t) {
        PolicyTick tick = policy.tick(arms, states, rng);
        double total = 0.0;
        for (double x : tick.rewards) total += x;
        r.metric.push_back(sign * total);
        if (tick.lambda.size() == cfg.num_resources) r.lambda.row(t) = tick.lambda.transpose();
        r.assignments.push_back(std::move(tick.assignment));
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::vector<RunResult> run_many(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    std::vector<RunResult> out(cfg.runs);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (int k; (k = next.fetch_add(1)) < cfg.runs;) {
            try {
                out[k] = run(cfg, cfg.base_seed + static_cast<std::uint64_t>(k));
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int threads = std::clamp(jobs, 1, cfg.runs);
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

std::vector<double> running_average(std::span<const double> series, int window) {
    if (window < 1) throw std::invalid_argument("running_average: window must be >= 1");
    std::vector<double> out(series.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        sum += series[t];
        if (t >= static_cast<std::size_t>(window)) sum -= series[t - window];
        const auto len = std::min<std::size_t>(t + 1, static_cast<std::size_t>(window));
        out[t] = sum / static_cast<double>(len);
    }
    return out;
}

SummaryStats aggregate(std::span<const std::vector<double>> series) {
    if (series.empty()) throw std::invalid_argument("aggregate: need at least one run");
    const std::size_t T = series.front().size();
    for (const auto& s : series)
        if (s.size() != T) throw std::invalid_argument("aggregate: runs have different lengths");
    const auto k = static_cast<double>(series.size());
    SummaryStats st;
    st.mean.assign(T, 0.0);
    st.std.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double m = 0.0;
        for (const auto& s : series) m += s[t];
        m /= k;
        double ss = 0.0;
        for (const auto& s : series) ss += (s[t] - m) * (s[t] - m);
        st.mean[t] = m;
        st.std[t] = series.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
    }
    return st;
}

SummaryStats aggregate(std::span<const RunResult> results) {
    std::vector<std::vector<double>> series;
    for (const auto& r : results) series.push_back(r.metric);
    return aggregate(series);
}

double tail_mean(std::span<const double> series, int count) {
    if (count < 1 || static_cast<std::size_t>(count) > series.size())
        throw std::invalid_argument("tail_mean: count out of range");
    double s = 0.0;
    for (std::size_t t = series.size() - count; t < series.size(); ++t) s += series[t];
    return s / count;
}

int capacity_violations(const RunResult& r, const CapacityVector& caps) {
    int bad = 0;
    for (const auto& a : r.assignments)
        if (!is_feasible(a, caps)) ++bad;
    return bad;
}

std::string format_real(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void write_raw_csv(std::ostream& os, std::span<const RunResult> results) {
    const Eigen::Index H = results.empty() ? 0 : results.front().lambda.cols();
    os << "run_id,step,metric";
    for (Eigen::Index h = 1; h <= H; ++h) os << ",lambda_" << h;
    os << '\n';
    for (std::size_t k = 0; k < results.size(); ++k) {
        const RunResult& r = results[k];
        for (std::size_t t = 0; t < r.metric.size(); ++t) {
            os << k << ',' << t << ',' << format_real(r.metric[t]);
            for (Eigen::Index h = 0; h < H; ++h) os << ',' << format_real(r.lambda(static_cast<Eigen::Index>(t), h));
            os << '\n';
        }
    }
}

void write_summary_csv(std::ostream& os, const SummaryStats& stats) {
    os << "step,mean,std\n";
    for (std::size_t t = 0; t < stats.mean.size(); ++t)
        os << t << ',' << format_real(stats.mean[t]) << ',' << format_real(stats.std[t]) << '\n';
}

} // namespace mrrmb
