#pragma once

#include "offrl/opt.hpp"
#include "offrl/scenarios.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace offrl {

struct EstimatorSpec {
    std::string id;
    nlohmann::json settings = nlohmann::json::object();
};

struct ExperimentConfig {
    std::string scenario;
    nlohmann::json scenario_params = nlohmann::json::object();
    std::vector<EstimatorSpec> estimators;
    std::vector<int> n_grid;
    int seeds = 1;
    uint64_t master_seed = 0;
    real delta = 0.05;
    std::string output = "results.csv";
    std::string format = "csv";

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
};

/// One experiment cell. Estimator rows carry the estimate in `point` and the
/// oracle value of the target in `truth`. Optimizer rows carry the oracle
/// value of the learned policy in `point`, the comparator value in `truth`,
/// and the gap in `abs_error`.
struct ResultRow {
    std::string scenario;
    std::string estimator;
    int n = 0;
    int seed = 0;
    real point = std::numeric_limits<real>::quiet_NaN();
    real lower = std::numeric_limits<real>::quiet_NaN();
    real upper = std::numeric_limits<real>::quiet_NaN();
    real truth = std::numeric_limits<real>::quiet_NaN();
    real abs_error = std::numeric_limits<real>::quiet_NaN();
    real c_inf = std::numeric_limits<real>::quiet_NaN();
    real chi_sq = std::numeric_limits<real>::quiet_NaN();
    std::string error_code; // empty when the cell succeeded
};

/// Deterministic seed for one cell, independent of execution order.
uint64_t cell_seed(uint64_t master, const std::string& scenario, const std::string& estimator,
                   int n, int seed_index);

/// Runs every (estimator, n, seed) cell on a worker pool. Failed cells become
/// rows with an error code; the run continues.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, int workers = 1);

void emit_report(const std::vector<ResultRow>& rows, const std::string& format,
                 const std::string& path);

/// Per-(estimator, n) median absolute error, written next to the main report.
void write_summary(const std::vector<ResultRow>& rows, const std::string& path);

std::vector<ResultRow> load_rows_csv(const std::string& path);

} // namespace offrl
