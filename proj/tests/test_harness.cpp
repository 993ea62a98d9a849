#include "doctest.h"

#include <cmath>
#include <sstream>

#include "mrrmb/harness.hpp"

using namespace mrrmb;

namespace {

int count_rows(const Eigen::MatrixXd& m, std::initializer_list<double> row) {
    const Eigen::RowVectorXd r = Eigen::Map<const Eigen::RowVectorXd>(row.begin(), static_cast<Eigen::Index>(row.size()));
    int k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) k += m.row(i) == r;
    return k;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

ExperimentConfig tiny(PolicyKind policy) {
    ExperimentConfig cfg = scale_down(preset("aoi-het-2ch"), 4, {1, 1}, 6);
    cfg.policy = policy;
    cfg.hidden = {8};
    cfg.batch_size = 8;
    cfg.buffer_capacity = 64;
    cfg.steps = 60;
    cfg.window = 10;
    cfg.runs = 2;
    return cfg;
}

} // namespace

TEST_CASE("presets") {
    CHECK(preset_names().size() == 9);
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name).validate());

    const auto het2 = preset("aoi-het-2ch");
    CHECK(het2.num_arms == 20);
    CHECK(het2.caps == CapacityVector{2, 2});
    CHECK(count_rows(het2.success_prob, {0.7, 0.3}) == 14);
    CHECK(count_rows(het2.success_prob, {0.3, 0.7}) == 6);

    const auto het3 = preset("aoi-het-3ch");
    CHECK(het3.num_arms == 34);
    CHECK(het3.caps == CapacityVector{2, 2, 2});
    CHECK(count_rows(het3.success_prob, {0.9, 0.5, 0.1}) == 20);
    CHECK(count_rows(het3.success_prob, {0.1, 0.9, 0.5}) == 4);
    CHECK(count_rows(het3.success_prob, {0.5, 0.1, 0.9}) == 10);

    const auto hold = preset("hold-hom-2ch");
    CHECK(hold.family == ScenarioFamily::hold);
    CHECK(hold.arrival_prob == std::vector<double>(20, 0.1));
    CHECK(count_rows(hold.success_prob, {0.7, 0.7}) == 14);
    CHECK(count_rows(hold.success_prob, {0.3, 0.3}) == 6);
    CHECK(preset("hold-hom-3ch").arrival_prob.front() == 0.08);
    CHECK(preset("hold-het-2ch").arrival_prob.front() == 0.11);

    const auto ads = preset("ads");
    CHECK(ads.num_arms == 30);
    CHECK(ads.caps == CapacityVector{2, 2, 2});
    CHECK(count_rows(ads.theta0, {1, 3, 5}) == 10);
    CHECK(count_rows(ads.theta0, {5, 1, 3}) == 10);
    CHECK(count_rows(ads.theta0, {3, 5, 1}) == 10);
    CHECK((ads.theta1.array() == 0.1).all());
    CHECK_FALSE(ads.metric_is_cost());
    CHECK(het2.metric_is_cost());

    CHECK_THROWS_AS(preset("aoi-het-4ch"), std::invalid_argument);
}

TEST_CASE("scale_down keeps group proportions") {
    const auto s = scale_down(preset("aoi-het-2ch"), 6, {1, 1}, 10);
    CHECK(s.num_arms == 6);
    CHECK(s.cap == 10);
    CHECK(s.caps == CapacityVector{1, 1});
    CHECK(count_rows(s.success_prob, {0.7, 0.3}) == 4);
    CHECK(count_rows(s.success_prob, {0.3, 0.7}) == 2);
    CHECK_NOTHROW(s.validate());

    const auto h = scale_down(preset("hold-het-2ch"), 10, {1, 1}, 10);
    CHECK(count_rows(h.success_prob, {0.7, 0.3}) == 7);
    CHECK(h.arrival_prob.size() == 10);

    const auto a = scale_down(preset("ads"), 9, {1, 1, 1}, 20);
    for (auto row : {std::initializer_list<double>{1, 3, 5}, {5, 1, 3}, {3, 5, 1}}) CHECK(count_rows(a.theta0, row) == 3);

    // Small groups survive as long as there are enough arms.
    const auto t = scale_down(preset("aoi-het-3ch"), 3, {1, 1, 1}, 5);
    CHECK(count_rows(t.success_prob, {0.1, 0.9, 0.5}) == 1);
}

TEST_CASE("config overrides") {
    ExperimentConfig cfg = preset("aoi-het-2ch");
    std::istringstream in("# desk scale\n"
                          "num_arms = 6\n"
                          "caps = 1,1\n"
                          "cap=10\n"
                          "hidden = 32, 16\n"
                          "policy = swim\n"
                          "lambda_bound = 20  # tighter\n"
                          "suppress_unprofitable = true\n"
                          "\n");
    apply_overrides(cfg, in);
    CHECK(cfg.num_arms == 6);
    CHECK(cfg.success_prob.rows() == 6);
    CHECK(cfg.caps == CapacityVector{1, 1});
    CHECK(cfg.cap == 10);
    CHECK(cfg.hidden == std::vector<int>{32, 16});
    CHECK(cfg.policy == PolicyKind::swim);
    CHECK(cfg.lambda_bound == 20.0);
    CHECK(cfg.suppress_unprofitable);
    CHECK(cfg.dip_config().lambda_bound == 20.0);

    CHECK_THROWS_AS(apply_override(cfg, "learning_rate", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "steps", "many"), std::invalid_argument);
    std::istringstream bad("steps 10\n");
    CHECK_THROWS_AS(apply_overrides(cfg, bad), std::invalid_argument);

    apply_override(cfg, "preset", "ads");
    CHECK(cfg.family == ScenarioFamily::ads);
}

TEST_CASE("config validation") {
    auto cfg = preset("aoi-hom-2ch");
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(run(cfg, 1), std::invalid_argument);
    cfg = preset("aoi-hom-2ch");
    cfg.window = cfg.steps + 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = preset("aoi-hom-2ch");
    cfg.success_prob(0, 0) = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = preset("aoi-hom-2ch");
    cfg.caps = {1};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("running average") {
    const std::vector<double> x{1, 2, 3};
    CHECK(running_average(x, 2) == std::vector<double>{1, 1.5, 2.5});
    CHECK(running_average(x, 1) == x);
    const std::vector<double> c(7, 4.25);
    CHECK(running_average(c, 3) == c);
    CHECK_THROWS_AS(running_average(x, 0), std::invalid_argument);
}

TEST_CASE("aggregate") {
    const std::vector<std::vector<double>> two{{1, 5}, {3, 5}};
    const auto st = aggregate(two);
    CHECK(st.mean == std::vector<double>{2, 5});
    CHECK(st.std[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(st.std[1] == 0.0);
    const std::vector<std::vector<double>> one{{1, 2}};
    CHECK(aggregate(one).std == std::vector<double>{0, 0});
    const std::vector<std::vector<double>> ragged{{1, 2}, {1}};
    CHECK_THROWS_AS(aggregate(ragged), std::invalid_argument);
    CHECK(tail_mean(std::vector<double>{9, 1, 2, 3}, 3) == 2.0);
    CHECK(format_real(1.0 / 3.0) == "0.333333333");
}

TEST_CASE("runs are deterministic and feasible for every policy") {
    for (auto kind : {PolicyKind::dip, PolicyKind::swim, PolicyKind::deeptop, PolicyKind::random}) {
        const auto cfg = tiny(kind);
        const RunResult a = run(cfg, 5);
        const RunResult b = run(cfg, 5);
        CHECK(a.metric == b.metric);
        CHECK(a.lambda == b.lambda);
        CHECK(a.assignments == b.assignments);
        CHECK(a.metric.size() == 60);
        CHECK(capacity_violations(a, cfg.caps) == 0);
        for (double m : a.metric) CHECK(m >= 4.0);
    }
    auto hold = scale_down(preset("hold-het-2ch"), 4, {1, 1}, 6);
    hold.policy = PolicyKind::whittle;
    hold.steps = 50;
    hold.window = 10;
    const RunResult w = run(hold, 3);
    CHECK(capacity_violations(w, hold.caps) == 0);
    for (double m : w.metric) CHECK(m >= 0.0);
    CHECK(w.lambda.cols() == 2);
    CHECK((w.lambda.array() == 0.0).all());
}

TEST_CASE("run_many uses consecutive seeds and writes CSVs") {
    auto cfg = tiny(PolicyKind::random);
    cfg.runs = 3;
    cfg.base_seed = 40;
    const auto results = run_many(cfg, 2);
    REQUIRE(results.size() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(results[k].seed == 40u + k);
        CHECK(results[k].metric == run(cfg, 40 + k).metric);
    }

    std::ostringstream raw, summary, again;
    write_raw_csv(raw, results);
    write_raw_csv(again, run_many(cfg, 1));
    CHECK(raw.str() == again.str());
    CHECK(count_lines(raw.str()) == 1 + 3 * 60);
    CHECK(raw.str().rfind("run_id,step,metric,lambda_1,lambda_2\n", 0) == 0);
    write_summary_csv(summary, aggregate(results));
    CHECK(count_lines(summary.str()) == 1 + 60);
    CHECK(summary.str().rfind("step,mean,std\n", 0) == 0);
}

TEST_CASE("random is worse than the oracle policy") {
    auto cfg = preset("aoi-het-2ch");
    cfg.steps = 500;
    cfg.policy = PolicyKind::random;
    const double random_cost = tail_mean(run(cfg, 11).metric, 100);
    cfg.policy = PolicyKind::swim;
    const double swim_cost = tail_mean(run(cfg, 11).metric, 100);
    CHECK(random_cost > swim_cost);
}
