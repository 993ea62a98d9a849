// Command-line front end: experiment runs and oracle queries.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mrrmb/harness.hpp"
#include "mrrmb/index_oracle.hpp"

using namespace mrrmb;

namespace {

std::vector<double> parse_csv_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::vector<Arm> scenario_arms(const std::string& scenario, const std::string& config_path) {
    ExperimentConfig cfg = preset(scenario);
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open " + config_path);
        apply_overrides(cfg, in);
    }
    return cfg.make_arms();
}

int run_command(const std::string& preset_name, const std::string& policy, int runs, int steps, long seed,
                const std::string& out_dir, const std::string& config_path, int jobs) {
    ExperimentConfig cfg = preset(preset_name);
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open " + config_path);
        apply_overrides(cfg, in);
    }
    cfg.policy = parse_policy_kind(policy);
    if (runs > 0) cfg.runs = runs;
    if (steps > 0) cfg.steps = steps;
    if (seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed);
    cfg.window = std::min(cfg.window, cfg.steps);
    cfg.validate();

    const auto results = run_many(cfg, jobs);
    for (const auto& r : results)
        if (capacity_violations(r, cfg.caps) != 0) throw std::logic_error("capacity violated in a logged assignment");

    std::filesystem::create_directories(out_dir);
    const std::string stem = out_dir + "/" + cfg.scenario + "_" + to_string(cfg.policy);
    {
        std::ofstream raw(stem + "_raw.csv");
        write_raw_csv(raw, results);
    }
    std::vector<std::vector<double>> smoothed;
    for (const auto& r : results) smoothed.push_back(running_average(r.metric, cfg.window));
    {
        std::ofstream summary(stem + "_summary.csv");
        write_summary_csv(summary, aggregate(smoothed));
    }
    const int tail = std::min(1000, cfg.steps);
    std::vector<std::vector<double>> tails;
    for (const auto& r : results) tails.push_back({tail_mean(r.metric, tail)});
    const SummaryStats st = aggregate(tails);
    std::cout << cfg.scenario << ' ' << to_string(cfg.policy) << ": last " << tail << " steps mean "
              << (cfg.metric_is_cost() ? "cost " : "reward ") << format_real(st.mean[0]) << " (std "
              << format_real(st.std[0]) << ", " << results.size() << " runs)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-resource restless matching bandit simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a scenario preset under one policy and write CSVs");
    std::string preset_name, policy = "dip", out_dir = "out", config_path;
    int runs = 0, steps = 0, jobs = 1;
    long seed = -1;
    run->add_option("--preset", preset_name, "Scenario preset")->required()->check(CLI::IsMember(preset_names()));
    run->add_option("--policy", policy, "dip, swim, whittle, deeptop or random")
        ->check(CLI::IsMember({"dip", "swim", "whittle", "deeptop", "random"}));
    run->add_option("--runs", runs, "Independent runs (default from preset: 20)");
    run->add_option("--steps", steps, "Ticks per run (default 12000)");
    run->add_option("--seed", seed, "Base seed; run k uses seed + k");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--config", config_path, "key = value overrides")->check(CLI::ExistingFile);
    run->add_option("--jobs", jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);

    auto* oracle = app.add_subcommand("oracle", "Exact single-arm computations");
    oracle->require_subcommand(1);
    std::string scenario, lambda_csv, oracle_config;
    int arm_id = 0;
    auto* index = oracle->add_subcommand("index", "Partial index table of one arm as CSV (s,h,w)");
    index->add_option("--scenario", scenario, "Scenario preset")->required()->check(CLI::IsMember(preset_names()));
    index->add_option("--arm", arm_id, "Arm id within the scenario");
    index->add_option("--lambda", lambda_csv, "Comma-separated prices lambda_1..lambda_H (default all 0)");
    index->add_option("--config", oracle_config, "key = value overrides")->check(CLI::ExistingFile);
    auto* dump = oracle->add_subcommand("dump-kernel", "Transition and reward tables of one arm as CSV");
    dump->add_option("--scenario", scenario, "Scenario preset")->required()->check(CLI::IsMember(preset_names()));
    dump->add_option("--arm", arm_id, "Arm id within the scenario");
    dump->add_option("--config", oracle_config, "key = value overrides")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return run_command(preset_name, policy, runs, steps, seed, out_dir, config_path, jobs);

        const auto arms = scenario_arms(scenario, oracle_config);
        if (arm_id < 0 || arm_id >= static_cast<int>(arms.size())) throw std::out_of_range("--arm out of range");
        const Arm& arm = arms[arm_id];
        std::cout.precision(9);
        if (*index) {
            const ArmMDP mdp = ArmMDP::from_arm(arm, 0.99);
            LambdaVector lambda(arm.num_resources());
            if (!lambda_csv.empty()) {
                const auto v = parse_csv_doubles(lambda_csv);
                if (static_cast<int>(v.size()) != arm.num_resources())
                    throw std::invalid_argument("--lambda needs one price per resource");
                for (int h = 0; h < arm.num_resources(); ++h) lambda.price(h) = v[h];
            }
            const IndexTable t = compute_index_table(mdp, lambda);
            std::cout << "s,h,w\n";
            for (int s = 0; s < t.rows(); ++s)
                for (int h = 1; h <= t.cols(); ++h) std::cout << s << ',' << h << ',' << format_real(t(s, h - 1)) << '\n';
        } else {
            std::cout << "s,a,s_next,prob\n";
            for (int s = 0; s <= arm.cap(); ++s)
                for (int a = 0; a < arm.num_actions(); ++a)
                    for (const auto& o : arm.kernel(s, a).outcomes)
                        std::cout << s << ',' << a << ',' << o.next << ',' << format_real(o.prob) << '\n';
            std::cout << "\ns,a,reward\n";
            for (int s = 0; s <= arm.cap(); ++s)
                for (int a = 0; a < arm.num_actions(); ++a)
                    std::cout << s << ',' << a << ',' << format_real(arm.mean_reward(s, a)) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
