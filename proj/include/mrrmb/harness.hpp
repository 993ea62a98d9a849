#pragma once

// Scenario presets, seeded experiment runs, aggregation and CSV output.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrrmb/arm_envs.hpp"
#include "mrrmb/baselines.hpp"
#include "mrrmb/dip_agent.hpp"

namespace mrrmb {

enum class ScenarioFamily { aoi, hold, ads };

struct ExperimentConfig {
    std::string scenario;
    ScenarioFamily family = ScenarioFamily::aoi;
    int num_arms = 0;
    int num_resources = 0;
    CapacityVector caps;
    Eigen::MatrixXd success_prob;       // N x H, aoi and hold
    std::vector<double> arrival_prob;   // N, hold
    Eigen::MatrixXd theta0, theta1;     // N x H, ads
    AdRewardForm ad_form = AdRewardForm::recovering;
    int cap = 20;

    PolicyKind policy = PolicyKind::dip;
    double discount = 0.99;
    double lambda_rate = 0.01;
    int lambda_period = 100;
    double lambda_bound = 100.0;
    double epsilon = 0.1;
    double tau = 0.001;
    int batch_size = 64;
    std::size_t buffer_capacity = 10000;
    std::vector<int> hidden{128, 128};
    double actor_learning_rate = 1e-3;
    double critic_learning_rate = 1e-3;
    double clip_norm = 10.0;
    double q_scale = 100.0;
    double index_scale = 10.0;
    bool suppress_unprofitable = false;

    int steps = 12000;
    int window = 100;
    int runs = 20;
    std::uint64_t base_seed = 7;

    void validate() const;
    std::vector<Arm> make_arms() const;
    DipConfig dip_config() const;
    /// True when the reported metric is a cost (negated total reward).
    bool metric_is_cost() const { return family != ScenarioFamily::ads; }
};

std::vector<std::string> preset_names();
/// Full-size scenario parameters; throws std::invalid_argument on unknown names.
ExperimentConfig preset(std::string_view name);

/// Keeps the preset's arm groups (runs of identical parameter rows) in
/// proportion while shrinking to `num_arms` arms (largest-remainder rounding,
/// every group keeps at least one arm when num_arms allows).
ExperimentConfig scale_down(const ExperimentConfig& cfg, int num_arms, CapacityVector caps, int cap);

/// Applies "key = value" lines ('#' starts a comment) on top of `cfg`.
/// Unknown keys throw std::invalid_argument.
void apply_overrides(ExperimentConfig& cfg, std::istream& in);
void apply_override(ExperimentConfig& cfg, std::string_view key, std::string_view value);

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<double> metric;  // per-tick total AoI / holding cost, or total ad reward
    Eigen::MatrixXd lambda;      // steps x H, prices after each tick (zeros if the policy has none)
    std::vector<Assignment> assignments;
    double wall_seconds = 0.0;
};

struct SummaryStats {
    std::vector<double> mean;
    std::vector<double> std; // n-1 denominator; 0 for a single run
};

PolicyHandle make_policy(const ExperimentConfig& cfg, std::span<const Arm> arms, Rng& init_rng);

/// Deterministic in (cfg, seed).
RunResult run(const ExperimentConfig& cfg, std::uint64_t seed);

/// cfg.runs runs with seeds base_seed + k, on up to `jobs` threads.
std::vector<RunResult> run_many(const ExperimentConfig& cfg, int jobs = 1);

std::vector<double> running_average(std::span<const double> series, int window);
SummaryStats aggregate(std::span<const std::vector<double>> series);
SummaryStats aggregate(std::span<const RunResult> results);

/// Mean of the last `count` entries.
double tail_mean(std::span<const double> series, int count);

/// Number of ticks whose assignment breaks a capacity.
int capacity_violations(const RunResult& r, const CapacityVector& caps);

/// Nine significant digits.
std::string format_real(double x);
void write_raw_csv(std::ostream& os, std::span<const RunResult> results);
void write_summary_csv(std::ostream& os, const SummaryStats& stats);

} // namespace mrrmb
