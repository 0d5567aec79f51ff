#include "offrl/dp.hpp"
#include "offrl/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace offrl;

int main(int argc, char** argv) {
    CLI::App app{"offrl: offline RL estimation and optimization workbench"};
    app.require_subcommand(1);

    // ---- scenario: build and inspect ----
    auto* sc_cmd = app.add_subcommand("scenario", "build a scenario and print its summary");
    std::string sc_name;
    std::string sc_params = "{}";
    std::string sc_out;
    sc_cmd->add_option("--name", sc_name, "scenario name")->required();
    sc_cmd->add_option("--params", sc_params, "scenario parameters as JSON");
    sc_cmd->add_option("--out", sc_out, "write the scenario MDP as JSON to this path");

    // ---- run: execute a config ----
    auto* run_cmd = app.add_subcommand("run", "run an experiment config");
    std::string run_config;
    std::string run_out;
    std::string run_format;
    int run_workers = 1;
    uint64_t run_seed = 0;
    bool run_seed_set = false;
    run_cmd->add_option("--config", run_config, "experiment config JSON file")->required();
    run_cmd->add_option("--workers", run_workers, "worker threads");
    run_cmd->add_option("--out", run_out, "override output path");
    run_cmd->add_option("--format", run_format, "override output format (csv|json)");
    run_cmd
        ->add_option_function<uint64_t>(
            "--seed", [&](uint64_t v) { run_seed = v; run_seed_set = true; },
            "override master seed")
        ->expected(1);

    // ---- report: summarize an existing results file ----
    auto* rep_cmd = app.add_subcommand("report", "recompute the summary of a results CSV");
    std::string rep_in, rep_out;
    rep_cmd->add_option("--in", rep_in, "results CSV")->required();
    rep_cmd->add_option("--out", rep_out, "summary output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc_cmd->parsed()) {
            Scenario sc = build_scenario(sc_name, nlohmann::json::parse(sc_params));
            std::cout << "scenario: " << sc.name << "\n"
                      << "states: " << sc.mdp.n_states << "  actions: " << sc.mdp.n_actions
                      << "  gamma: " << sc.mdp.gamma << "\n"
                      << "notes: " << sc.notes << "\n"
                      << "targets (oracle returns):\n";
            for (const auto& [name, pi] : sc.targets) {
                OccupancyMeasure d_pi = occupancy(sc.mdp, pi);
                real cinf = c_inf(d_pi, sc.data_dist);
                std::cout << "  " << name << ": J = " << policy_return(sc.mdp, pi)
                          << "  C_pi = " << cinf << "\n";
            }
            if (!sc_out.empty()) {
                save_mdp(sc.mdp, sc_out);
                std::cout << "wrote MDP to " << sc_out << "\n";
            }
            return 0;
        }
        if (run_cmd->parsed()) {
            ExperimentConfig config = ExperimentConfig::from_file(run_config);
            if (!run_out.empty()) config.output = run_out;
            if (!run_format.empty()) config.format = run_format;
            if (run_seed_set) config.master_seed = run_seed;
            auto rows = run_experiment(config, run_workers);
            emit_report(rows, config.format, config.output);
            int failures = 0;
            for (const auto& r : rows) failures += r.error_code.empty() ? 0 : 1;
            std::cout << rows.size() << " rows written to " << config.output << " ("
                      << failures << " error rows)\n";
            return failures == static_cast<int>(rows.size()) ? 1 : 0;
        }
        if (rep_cmd->parsed()) {
            write_summary(load_rows_csv(rep_in), rep_out);
            std::cout << "summary written to " << rep_out << "\n";
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
