#include "offrl/harness.hpp"

#include "offrl/dp.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace offrl;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig config;
    config.scenario = "random";
    config.scenario_params = {{"n_states", 3}, {"n_actions", 2}, {"gamma", 0.8}, {"seed", 5}};
    config.estimators = {{"fqe", {{"K", 60}}}, {"lstdq", nlohmann::json::object()}};
    config.n_grid = {500, 2000};
    config.seeds = 3;
    config.master_seed = 777;
    return config;
}

} // namespace

TEST_CASE("scenario library builds every named scenario") {
    for (const std::string& name : scenario_names()) {
        Scenario sc = build_scenario(name, nlohmann::json::object());
        CHECK(sc.mdp.n_states > 0);
        CHECK(sc.classes.count("F") == 1);
        CHECK_FALSE(sc.targets.empty());
    }
    CHECK_THROWS_AS(build_scenario("nope", nlohmann::json::object()), std::invalid_argument);
}

TEST_CASE("loop scenario with a cutoff matches the geometric truncation") {
    Scenario sc = build_scenario("loop", {{"gamma", 0.9}, {"H", 4}});
    real j = policy_return(sc.mdp, sc.targets.at("always_a1"));
    CHECK(j == doctest::Approx((1.0 - std::pow(0.9, 4)) / (1.0 - 0.9)).epsilon(1e-12));
    CHECK(j == doctest::Approx(3.439).epsilon(1e-9));
}

TEST_CASE("divergence scenario has the advertised population multiplier") {
    Scenario sc = build_scenario("divergence", {{"gamma", 0.95}});
    // one projected backup step from theta = 1
    ValueFunction f0 = ValueFunction::zeros(2, 1);
    f0.values << 1.0, 2.0;
    FqeResult res = fqe_population(sc.classes.at("F"), sc.mdp, sc.targets.at("target"),
                                   sc.data_dist, 1, &f0);
    CHECK(res.iterates[0].values(0, 0) == doctest::Approx(6.0 * 0.95 / 5.0).epsilon(1e-12));
}

TEST_CASE("one cell produces one row") {
    ExperimentConfig config = small_config();
    config.estimators = {{"fqe", {{"K", 40}}}};
    config.n_grid = {400};
    config.seeds = 1;
    auto rows = run_experiment(config);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].error_code.empty());
    CHECK(rows[0].estimator == "fqe");
    CHECK(std::isfinite(rows[0].point));
    CHECK(std::isfinite(rows[0].truth));
}

TEST_CASE("rerunning with the same master seed is byte identical") {
    ExperimentConfig config = small_config();
    auto a = run_experiment(config);
    auto b = run_experiment(config);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].point == b[i].point);
        CHECK(a[i].abs_error == b[i].abs_error);
    }
}

TEST_CASE("worker count does not change the results") {
    ExperimentConfig config = small_config();
    auto serial = run_experiment(config, 1);
    auto parallel = run_experiment(config, 8);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].estimator == parallel[i].estimator);
        CHECK(serial[i].n == parallel[i].n);
        CHECK(serial[i].seed == parallel[i].seed);
        CHECK(serial[i].point == parallel[i].point);
    }
}

TEST_CASE("a failing cell becomes an error row and the run continues") {
    ExperimentConfig config = small_config();
    config.estimators = {{"fqe", {{"K", 40}}}, {"bogus", nlohmann::json::object()}};
    config.n_grid = {300};
    config.seeds = 1;
    auto rows = run_experiment(config);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].error_code.empty());
    CHECK_FALSE(rows[1].error_code.empty());
}

TEST_CASE("csv and json reports carry the same values") {
    ExperimentConfig config = small_config();
    config.n_grid = {300};
    config.seeds = 2;
    auto rows = run_experiment(config);
    auto dir = std::filesystem::temp_directory_path();
    std::string csv = (dir / "offrl_rows.csv").string();
    std::string js = (dir / "offrl_rows.json").string();
    emit_report(rows, "csv", csv);
    emit_report(rows, "json", js);

    auto back = load_rows_csv(csv);
    REQUIRE(back.size() == rows.size());
    nlohmann::json arr;
    {
        std::ifstream in(js);
        in >> arr;
    }
    REQUIRE(arr.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].point == doctest::Approx(rows[i].point).epsilon(1e-11));
        CHECK(arr[i]["point"].get<real>() == doctest::Approx(rows[i].point).epsilon(1e-12));
    }
    std::filesystem::remove(csv);
    std::filesystem::remove(js);
    std::filesystem::remove(csv + ".summary.csv");
    std::filesystem::remove(js + ".summary.csv");
}

TEST_CASE("summary medians match an independent recomputation") {
    ExperimentConfig config = small_config();
    config.seeds = 5;
    auto rows = run_experiment(config);
    auto dir = std::filesystem::temp_directory_path();
    std::string path = (dir / "offrl_sum.csv").string();
    write_summary(rows, path);

    // recompute one group by hand
    std::vector<real> errs;
    for (const auto& r : rows)
        if (r.estimator == "fqe" && r.n == 500) errs.push_back(r.abs_error);
    std::sort(errs.begin(), errs.end());
    real median = errs[errs.size() / 2];

    std::ifstream in(path);
    std::string line;
    bool found = false;
    while (std::getline(in, line)) {
        if (line.rfind("fqe,500,", 0) == 0) {
            real value = std::stod(line.substr(line.rfind(',') + 1));
            CHECK(value == doctest::Approx(median).epsilon(1e-9));
            found = true;
        }
    }
    CHECK(found);
    std::filesystem::remove(path);
}

TEST_CASE("empty row set writes a header-only report") {
    auto dir = std::filesystem::temp_directory_path();
    std::string path = (dir / "offrl_hdr.csv").string();
    emit_report({}, "csv", path);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 1);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".summary.csv");
}

TEST_CASE("cell seeds differ across every coordinate") {
    uint64_t base = cell_seed(1, "loop", "fqe", 100, 0);
    CHECK(base != cell_seed(2, "loop", "fqe", 100, 0));
    CHECK(base != cell_seed(1, "tree", "fqe", 100, 0));
    CHECK(base != cell_seed(1, "loop", "brm", 100, 0));
    CHECK(base != cell_seed(1, "loop", "fqe", 101, 0));
    CHECK(base != cell_seed(1, "loop", "fqe", 100, 1));
}

TEST_CASE("optimizer rows carry the oracle gap") {
    ExperimentConfig config;
    config.scenario = "bandit";
    config.estimators = {{"vs_pess",
                          {{"policies", {"arm_0", "arm_1", "arm_2"}}, {"comparator", "arm_1"}}}};
    config.n_grid = {60};
    config.seeds = 2;
    config.master_seed = 99;
    auto rows = run_experiment(config);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        REQUIRE(r.error_code.empty());
        CHECK(r.truth == doctest::Approx(0.8)); // J(arm_1)
        CHECK(r.abs_error == doctest::Approx(r.truth - r.point));
    }
}
