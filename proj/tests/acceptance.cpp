// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "fd_oracle.hpp"
#include "mrrmb/baselines.hpp"
#include "mrrmb/harness.hpp"
#include "mrrmb/index_oracle.hpp"
#include "mrrmb/matching.hpp"
#include "mrrmb/neural.hpp"

using namespace mrrmb;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1. Backprop against central differences on random networks.
Verdict gradient_fidelity() {
    Rng rng(101);
    double worst = 0.0;
    int nets = 0;
    while (nets < 100) {
        const int in = 1 + static_cast<int>(rng.below(6));
        std::vector<int> sizes{in};
        const int depth = 1 + static_cast<int>(rng.below(3));
        for (int l = 0; l < depth; ++l) sizes.push_back(2 + static_cast<int>(rng.below(12)));
        sizes.push_back(1 + static_cast<int>(rng.below(2)));
        const auto act = rng.bernoulli(0.5) ? Activation::relu : Activation::tanh;
        const auto p = MlpParams<double>::random(sizes, rng, act);
        Eigen::MatrixXd x(in, 1 + static_cast<int>(rng.below(5)));
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        if (act == Activation::relu && testing::min_hidden_preactivation(p, x) < 1e-3) continue;
        Eigen::MatrixXd up(sizes.back(), x.cols());
        for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1, 1);
        worst = std::max(worst, testing::max_relative_error(backward(p, x, up),
                                                            testing::finite_difference_gradient(p, x, up)));
        ++nets;
    }
    return {worst < 1e-4, fmt("max relative error %.3g over %d nets (< 1e-4)", worst, nets)};
}

// 2. Max-weight matching against exhaustive search.
Verdict matching_optimality() {
    Rng rng(202);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(6));
        const int h = 1 + static_cast<int>(rng.below(3));
        CapacityVector caps(h);
        for (auto& c : caps) c = static_cast<int>(rng.below(3));
        WeightMatrix w(n, h);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-5, 5);
        const auto fast = max_weight_assign(w, caps);
        if (!is_feasible(fast, caps) || total_weight(w, fast) != total_weight(w, brute_force_assign(w, caps)))
            ++mismatches;
    }
    return {mismatches == 0, fmt("%d of 1000 instances differ from brute force", mismatches)};
}

ArmMDP aoi_cap8() { return ArmMDP::from_arm(Arm::aoi({Eigen::Vector2d(0.7, 0.3), 8}), 0.99); }

// 3. Bisection index against a 1e-2 price grid; Bellman residual of the solver.
Verdict oracle_consistency() {
    const ArmMDP m = aoi_cap8();
    const double M = 20.0, step = 1e-2;
    const int n = static_cast<int>(std::lround(2 * M / step));
    double worst_gap = 0.0, worst_residual = 0.0;
    int probes = 0;
    for (int h = 1; h <= 2; ++h) {
        for (double other : {0.0, 2.0, 5.0}) {
            LambdaVector lambda(2, M);
            lambda.price(2 - h) = other;
            // One sweep of the grid serves every state.
            std::vector<double> grid_w(m.num_states(), -M);
            for (int i = 0; i <= n; ++i) {
                const double y = -M + i * step;
                const ArmSolution sol = solve_arm(m, lambda.with(h, y));
                worst_residual = std::max(worst_residual, bellman_residual(m, lambda.with(h, y), sol.q));
                for (int s = 0; s < m.num_states(); ++s)
                    if (sol.policy[s] == h) grid_w[s] = y;
            }
            for (int s = 1; s < m.num_states(); ++s) {
                worst_gap = std::max(worst_gap, std::abs(partial_index(m, s, h, lambda) - grid_w[s]));
                ++probes;
            }
        }
    }
    const bool pass = worst_gap <= step + 1e-9 && worst_residual <= 1e-8;
    return {pass, fmt("max |bisection - grid| %.3g over %d probes (<= 1e-2), max Bellman residual %.3g (<= 1e-8)",
                      worst_gap, probes, worst_residual)};
}

// 4. The oracle index, used as the fictitious-policy threshold, is optimal at every price.
Verdict oracle_index_is_optimal() {
    const ArmMDP m = aoi_cap8();
    const double M = 20.0;
    double worst = 0.0;
    int points = 0;
    for (int h = 1; h <= 2; ++h) {
        for (double other : {0.0, 3.0}) {
            for (int i = 0; i <= 20; ++i) {
                LambdaVector lambda(2, M);
                lambda.price(2 - h) = other;
                lambda.price(h - 1) = -M + i * (2 * M / 20);
                const IndexTable w = compute_index_table(m, lambda);
                std::vector<int> policy(m.num_states(), 0);
                for (int s = 0; s < m.num_states(); ++s) {
                    if (w(s, h - 1) >= lambda.at(h)) {
                        policy[s] = h;
                        continue;
                    }
                    for (int g = 2; g >= 1; --g)
                        if (g != h && w(s, g - 1) >= lambda.at(g)) {
                            policy[s] = g;
                            break;
                        }
                }
                const Eigen::MatrixXd q = evaluate_policy(m, lambda, policy);
                worst = std::max(worst, (q - solve_arm(m, lambda).q).cwiseAbs().maxCoeff());
                ++points;
            }
        }
    }
    return {worst <= 1e-6, fmt("max |Q_index - Q*| %.3g over %d price points (<= 1e-6)", worst, points)};
}

// 5. Closed-form Whittle index of the queue.
Verdict whittle_closed_form_check() {
    const double w0 = whittle_closed_form(0.11, 0.7, 0), w10 = whittle_closed_form(0.11, 0.7, 10);
    const double e0 = (3 * 0.11 - 0.7) / (0.7 - 0.11), e10 = e0 + 2 * 0.7 * 10;
    bool monotone = true;
    for (int s = 0; s < 20; ++s) monotone &= whittle_closed_form(0.11, 0.7, s + 1) > whittle_closed_form(0.11, 0.7, s);
    const bool pass = std::abs(w0 - e0) <= 1e-9 && std::abs(w10 - e10) <= 1e-9 && monotone;
    return {pass, fmt("w(0) = %.9f, w(10) = %.9f, increasing on 0..20: %s", w0, w10, monotone ? "yes" : "no")};
}

// 6. DIP recovers the index of a one-state arm paying c = 2 when served.
Verdict dip_learns_gain_arm() {
    TabularArmParams tp;
    tp.transition = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
    tp.reward = Eigen::RowVector2d(0.0, 2.0);
    const std::vector<Arm> arms{Arm::tabular(tp)};
    DipConfig cfg;
    cfg.caps = {1};
    cfg.lambda_bound = 10.0;
    std::string detail;
    bool pass = true;
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng rng(seed);
        DipAgent agent(cfg, std::vector<int>{1}, rng);
        std::vector<int> states{0};
        for (int t = 0; t < 20000; ++t) agent.train_tick(arms, states, rng);
        const double w = agent.predict_index(0, 1, 0, agent.lambda());
        pass &= std::abs(w - 2.0) <= 0.2;
        detail += fmt("%sseed %d: w = %.3f", detail.empty() ? "" : ", ", static_cast<int>(seed), w);
    }
    return {pass, detail + " (target 2 +- 0.2 after 20000 ticks)"};
}

// Desk-scale DIP hyperparameters shared by the scenario comparisons.
ExperimentConfig desk(const std::string& name, int num_arms, CapacityVector caps, int cap, double lambda_bound) {
    ExperimentConfig cfg = scale_down(preset(name), num_arms, std::move(caps), cap);
    cfg.steps = 12000;
    cfg.runs = 5;
    cfg.lambda_bound = lambda_bound;
    return cfg;
}

struct PolicyScore {
    double final_mean = 0.0; // mean over runs of the last-1000-step average
    std::vector<double> curve; // mean over runs of the per-tick metric
    double seconds = 0.0;
};

PolicyScore score(ExperimentConfig cfg, PolicyKind kind) {
    cfg.policy = kind;
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_many(cfg);
    PolicyScore s;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& r : results) s.final_mean += tail_mean(r.metric, 1000) / static_cast<double>(results.size());
    s.curve = aggregate(results).mean;
    return s;
}

double window_mean(const std::vector<double>& v, int begin, int end) {
    double sum = 0.0;
    for (int t = begin; t < end; ++t) sum += v[t];
    return sum / (end - begin);
}

// 7. Heterogeneous AoI: DIP approaches the oracle index policy and beats random.
Verdict aoi_heterogeneous() {
    const ExperimentConfig cfg = desk("aoi-het-2ch", 6, {1, 1}, 10, 20.0);
    const PolicyScore dip = score(cfg, PolicyKind::dip);
    const PolicyScore swim = score(cfg, PolicyKind::swim);
    const PolicyScore rnd = score(cfg, PolicyKind::random);
    const double early = window_mean(dip.curve, 3000, 4000);
    const bool close = dip.final_mean <= 1.15 * swim.final_mean;
    const bool better = dip.final_mean <= 0.8 * rnd.final_mean;
    const bool early_close = early <= 1.15 * swim.final_mean;
    return {close && better && early_close,
            fmt("AoI DIP %.3f, SWIM %.3f (ratio %.3f <= 1.15), random %.3f (ratio %.3f <= 0.80); "
                "DIP over ticks 3000-4000 %.3f (ratio %.3f <= 1.15); DIP %.0f s",
                dip.final_mean, swim.final_mean, dip.final_mean / swim.final_mean, rnd.final_mean,
                dip.final_mean / rnd.final_mean, early, early / swim.final_mean, dip.seconds)};
}

// 8. Homogeneous AoI: DIP and the single-index learner end up alike.
Verdict aoi_homogeneous() {
    const ExperimentConfig cfg = desk("aoi-hom-2ch", 6, {1, 1}, 10, 20.0);
    const PolicyScore dip = score(cfg, PolicyKind::dip);
    const PolicyScore dt = score(cfg, PolicyKind::deeptop);
    const double gap = std::abs(dip.final_mean - dt.final_mean) / dt.final_mean;
    return {gap <= 0.10, fmt("AoI DIP %.3f, DeepTOP %.3f, relative gap %.3f (<= 0.10)", dip.final_mean,
                             dt.final_mean, gap)};
}

// 9. Heterogeneous holding cost: DIP beats the best-channel Whittle policy.
Verdict holding_heterogeneous() {
    const ExperimentConfig cfg = desk("hold-het-2ch", 10, {1, 1}, 10, 100.0);
    const PolicyScore dip = score(cfg, PolicyKind::dip);
    const PolicyScore wh = score(cfg, PolicyKind::whittle);
    return {dip.final_mean <= 0.9 * wh.final_mean,
            fmt("holding cost DIP %.3f, Whittle %.3f (ratio %.3f <= 0.90)", dip.final_mean, wh.final_mean,
                dip.final_mean / wh.final_mean)};
}

// 10. Ads: DIP earns at least as much as the single-index learner.
Verdict ads() {
    const ExperimentConfig cfg = desk("ads", 9, {1, 1, 1}, 20, 10.0);
    const PolicyScore dip = score(cfg, PolicyKind::dip);
    const PolicyScore dt = score(cfg, PolicyKind::deeptop);
    return {dip.final_mean >= dt.final_mean,
            fmt("reward DIP %.3f, DeepTOP %.3f (DIP >= DeepTOP)", dip.final_mean, dt.final_mean)};
}

// 11. Price controller on oracle indexes with over-demanded resources.
Verdict lambda_controller() {
    const ExperimentConfig cfg = scale_down(preset("aoi-het-2ch"), 6, {1, 1}, 10);
    const auto arms = cfg.make_arms();
    const double M = 100.0;
    SwimPolicy swim(arms, cfg.caps, 0.99, M, 0.1, 10);
    Rng rng(11);
    std::vector<int> states;
    for (const Arm& a : arms) states.push_back(a.initial_state());
    const int T = 6000, H = 2;
    Eigen::MatrixXi counts(T, H);
    bool bounded = true;
    for (int t = 0; t < T; ++t) {
        const WeightMatrix w = swim.indexes(states);
        for (int h = 0; h < H; ++h) counts(t, h) = static_cast<int>((w.col(h).array() > swim.lambda().price(h)).count());
        const Assignment a = max_weight_assign(w, cfg.caps);
        for (std::size_t n = 0; n < arms.size(); ++n) states[n] = sample_step(arms[n], states[n], a[n], rng).next;
        swim.advance_tick(w);
        bounded &= (swim.lambda().price.array() >= 0.0).all() && (swim.lambda().price.array() <= M).all();
    }
    bool pass = bounded;
    std::string detail;
    for (int h = 0; h < H; ++h) {
        const double first = counts.col(h).head(1000).cast<double>().mean();
        int settled = -1;
        for (int t0 = 0; t0 + 1000 <= T && settled < 0; t0 += 100)
            if (counts.col(h).segment(t0, 1000).cast<double>().mean() <= cfg.caps[h]) settled = t0;
        pass &= first > cfg.caps[h] && settled >= 0 && swim.lambda().price(h) > 0.0;
        detail += fmt("resource %d: eligible %.2f in the first window, <= %d from tick %d, lambda %.3f; ", h + 1,
                      first, cfg.caps[h], settled, swim.lambda().price(h));
    }
    return {pass, detail + fmt("lambda within [0, %g] throughout: %s", M, bounded ? "yes" : "no")};
}

// 12. Identical (config, seed) gives identical CSV bytes, threaded or not.
Verdict determinism() {
    ExperimentConfig cfg = scale_down(preset("aoi-het-2ch"), 6, {1, 1}, 10);
    cfg.steps = 1500;
    cfg.runs = 3;
    cfg.hidden = {32, 32};
    bool pass = true;
    for (auto kind : {PolicyKind::dip, PolicyKind::swim, PolicyKind::deeptop, PolicyKind::random}) {
        cfg.policy = kind;
        auto csv = [&](int jobs) {
            const auto results = run_many(cfg, jobs);
            std::ostringstream raw, summary;
            write_raw_csv(raw, results);
            std::vector<std::vector<double>> smoothed;
            for (const auto& r : results) smoothed.push_back(running_average(r.metric, cfg.window));
            write_summary_csv(summary, aggregate(smoothed));
            return raw.str() + summary.str();
        };
        const std::string a = csv(1);
        pass &= a == csv(1) && a == csv(3);
    }
    return {pass, pass ? "raw and summary CSVs identical across repeats and thread counts for 4 policies"
                       : "CSV bytes differ between repeated runs"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Verdict()>> criteria = {
        gradient_fidelity, matching_optimality, oracle_consistency, oracle_index_is_optimal,
        whittle_closed_form_check, dip_learns_gain_arm, aoi_heterogeneous, aoi_homogeneous,
        holding_heterogeneous, ads, lambda_controller, determinism};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        const Verdict v = criteria[k]();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2d %s: %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
