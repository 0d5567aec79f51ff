#include "offrl/harness.hpp"

#include "offrl/dp.hpp"
#include "offrl/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace offrl {

namespace {

using nlohmann::json;

template <typename T>
T setting(const json& s, const std::string& key, T fallback) {
    if (s.contains(key)) return s.at(key).get<T>();
    return fallback;
}

const StationaryPolicy& resolve_target(const Scenario& sc, const json& settings) {
    std::string name = setting<std::string>(settings, "target", "target");
    auto it = sc.targets.find(name);
    if (it == sc.targets.end())
        throw std::runtime_error("scenario has no target policy named '" + name + "'");
    return it->second;
}

std::vector<StationaryPolicy> resolve_policy_class(const Scenario& sc, const json& settings) {
    std::vector<StationaryPolicy> out;
    if (settings.contains("policies")) {
        for (const auto& name : settings.at("policies")) {
            auto it = sc.targets.find(name.get<std::string>());
            if (it == sc.targets.end())
                throw std::runtime_error("unknown policy name in settings: " +
                                         name.get<std::string>());
            out.push_back(it->second);
        }
        return out;
    }
    // default: every deterministic policy when the space is small, else targets
    const int S = sc.mdp.n_states, A = sc.mdp.n_actions;
    real count = std::pow(static_cast<real>(A), static_cast<real>(S));
    if (count <= 64.0) {
        std::vector<int> assignment(S, 0);
        for (;;) {
            out.push_back(StationaryPolicy::deterministic(S, A, assignment));
            int i = 0;
            while (i < S) {
                if (++assignment[i] < A) break;
                assignment[i] = 0;
                ++i;
            }
            if (i == S) break;
        }
    } else {
        for (const auto& [name, pi] : sc.targets) out.push_back(pi);
    }
    return out;
}

const StationaryPolicy& resolve_comparator(const Scenario& sc, const json& settings,
                                           std::string* name_out) {
    if (settings.contains("comparator")) {
        std::string name = settings.at("comparator").get<std::string>();
        auto it = sc.targets.find(name);
        if (it == sc.targets.end())
            throw std::runtime_error("scenario has no comparator named '" + name + "'");
        *name_out = name;
        return it->second;
    }
    // default: the best oracle target
    const StationaryPolicy* best = nullptr;
    real best_j = -std::numeric_limits<real>::infinity();
    for (const auto& [name, pi] : sc.targets) {
        real j = policy_return(sc.mdp, pi);
        if (j > best_j) {
            best_j = j;
            best = &pi;
            *name_out = name;
        }
    }
    return *best;
}

FunctionClass resolve_class(const Scenario& sc, const json& settings, const std::string& key,
                            const std::string& fallback) {
    std::string name = setting<std::string>(settings, key, fallback);
    auto it = sc.classes.find(name);
    if (it == sc.classes.end())
        throw std::runtime_error("scenario has no function class named '" + name + "'");
    return it->second;
}

FeatureMap resolve_features(const Scenario& sc) {
    if (sc.features) return *sc.features;
    return FeatureMap::tabular_indicators(sc.mdp.n_states, sc.mdp.n_actions);
}

bool is_trajectory_estimator(const std::string& id) { return id == "is" || id == "wis"; }

bool is_optimizer(const std::string& id) {
    return id == "fqi" || id == "fpi" || id == "vs_pess" || id == "pspi" || id == "pevi" ||
           id == "model_pess" || id == "model_pess_rel";
}

/// Candidate transition models for the model-pessimism optimizers: the truth
/// plus seeded perturbations (a realizable finite model class).
std::vector<Mat> perturbed_candidates(const TabularMDP& mdp, int n_candidates, real strength,
                                      uint64_t seed) {
    std::vector<Mat> out;
    out.push_back(mdp.transition);
    Rng rng(mix64(seed ^ 0xabcdef12345ull));
    for (int c = 1; c < n_candidates; ++c) {
        Mat t = mdp.transition;
        for (int i = 0; i < t.rows(); ++i) {
            for (int s = 0; s < t.cols(); ++s)
                t(i, s) = std::max(1e-6, t(i, s) + strength * (rng.uniform01() - 0.5));
            t.row(i) /= t.row(i).sum();
        }
        out.push_back(std::move(t));
    }
    return out;
}

ResultRow run_cell(const Scenario& sc, const EstimatorSpec& spec, int n, int seed_index,
                   const ExperimentConfig& config) {
    ResultRow row;
    row.scenario = sc.name;
    row.estimator = spec.id;
    row.n = n;
    row.seed = seed_index;

    const uint64_t seed = cell_seed(config.master_seed, sc.name, spec.id, n, seed_index);
    const EvalContext ctx = sc.ctx();
    const json& settings = spec.settings;

    if (is_optimizer(spec.id)) {
        std::string cp_name;
        const StationaryPolicy& cp = resolve_comparator(sc, settings, &cp_name);
        TupleDataset tuples = sample_tuples(sc.mdp, sc.data_dist, n, seed);
        Policy learned;
        if (spec.id == "fqi") {
            learned = fqi(resolve_class(sc, settings, "class", "F"), tuples,
                          setting(settings, "K", 100), setting(settings, "ridge", 1e-10), ctx)
                          .policy;
        } else if (spec.id == "fpi") {
            FunctionClass cls = resolve_class(sc, settings, "class", "F");
            FpiEval eval;
            eval.cls = &cls;
            eval.fqe_iters = setting(settings, "fqe_iters", 100);
            learned = fpi(tuples, setting(settings, "K", 10), eval, ctx).policy;
        } else if (spec.id == "vs_pess") {
            auto policies = resolve_policy_class(sc, settings);
            auto res = pessimistic_search(policies, resolve_class(sc, settings, "class", "F"),
                                          tuples, config.delta, ctx,
                                          setting(settings, "c", 2.0));
            learned = res.result.policy;
        } else if (spec.id == "pspi") {
            auto res = pspi(resolve_class(sc, settings, "class", "F"), tuples,
                            setting(settings, "K", 16),
                            settings.contains("eta")
                                ? std::optional<real>(settings.at("eta").get<real>())
                                : std::nullopt,
                            config.delta, ctx);
            learned = res.result.policy;
        } else if (spec.id == "pevi") {
            auto res = pevi(resolve_features(sc), tuples, setting(settings, "K", 50),
                            settings.contains("beta")
                                ? std::optional<real>(settings.at("beta").get<real>())
                                : std::nullopt,
                            config.delta, ctx);
            learned = res.result.policy;
        } else { // model_pess / model_pess_rel
            auto candidates = perturbed_candidates(sc.mdp, setting(settings, "n_candidates", 8),
                                                   setting(settings, "perturb", 0.3), seed);
            auto policies = resolve_policy_class(sc, settings);
            bool relative = spec.id == "model_pess_rel";
            learned = model_pessimism(candidates, sc.mdp, policies, tuples, config.delta,
                                      relative ? PessimismMode::Relative : PessimismMode::Absolute,
                                      relative ? &sc.behavior : nullptr,
                                      setting(settings, "c", 2.0))
                          .policy;
        }
        row.point = policy_return(sc.mdp, learned);       // J(pi_hat), oracle
        row.truth = policy_return(sc.mdp, Policy{cp});    // J(pi_cp)
        row.abs_error = row.truth - row.point;            // the suboptimality gap
        OccupancyMeasure d_cp = occupancy(sc.mdp, cp);
        row.c_inf = c_inf(d_cp, sc.data_dist);
        row.chi_sq = chi_sq_coverage(d_cp, sc.data_dist);
        return row;
    }

    const StationaryPolicy& target = resolve_target(sc, settings);
    row.truth = policy_return(sc.mdp, target);
    OccupancyMeasure d_pi = occupancy(sc.mdp, target);
    row.c_inf = c_inf(d_pi, sc.data_dist);
    row.chi_sq = chi_sq_coverage(d_pi, sc.data_dist);

    Estimate est;
    if (is_trajectory_estimator(spec.id)) {
        int H = setting(settings, "horizon", 10);
        TrajectoryDataset td = sample_trajectories(sc.mdp, sc.behavior, n, H, seed);
        est = is_estimate(td, target, sc.behavior, spec.id == "is" ? ISMode::Plain : ISMode::Weighted,
                          sc.mdp.gamma);
    } else {
        TupleDataset tuples = sample_tuples(sc.mdp, sc.data_dist, n, seed);
        if (spec.id == "fqe") {
            est = fqe(resolve_class(sc, settings, "class", "F"), tuples, target,
                      setting(settings, "K", 100), setting(settings, "ridge", 1e-10), ctx)
                      .estimate;
        } else if (spec.id == "brm") {
            FunctionClass cls = resolve_class(sc, settings, "class", "F");
            if (cls.is_piecewise()) // tabular BRM = LSTDQ on indicator features
                cls = FunctionClass::linear_of(
                    FeatureMap::tabular_indicators(ctx.n_states, ctx.n_actions), 1e9);
            est = brm(cls, nullptr, tuples, target, ctx, setting(settings, "ridge", 1e-8))
                      .estimate;
        } else if (spec.id == "lstdq") {
            est = lstdq(resolve_features(sc), tuples, target, setting(settings, "ridge", 1e-8),
                        ctx)
                      .estimate;
        } else if (spec.id == "mql" || spec.id == "mwl") {
            bool finite_pair = sc.classes.count("F") && sc.classes.at("F").is_finite() &&
                               sc.classes.count("W") && sc.classes.at("W").is_finite();
            FunctionClass F = finite_pair
                                  ? sc.classes.at("F")
                                  : FunctionClass::linear_of(
                                        FeatureMap::tabular_indicators(ctx.n_states,
                                                                       ctx.n_actions),
                                        1e9);
            FunctionClass W = finite_pair ? sc.classes.at("W") : F;
            est = spec.id == "mql" ? mql(F, W, tuples, target, ctx).estimate
                                   : mwl(W, F, tuples, target, ctx).estimate;
        } else if (spec.id == "mle") {
            MleResult model = mle_model_tabular(tuples, ctx.n_states, ctx.n_actions);
            // certainty equivalence: empirical rewards inside the fitted model
            TabularMDP hat = sc.mdp;
            hat.transition = model.transition;
            hat.reward_noise.clear();
            Mat rsum = Mat::Zero(ctx.n_states, ctx.n_actions);
            Mat rcnt = Mat::Zero(ctx.n_states, ctx.n_actions);
            for (const Step& st : tuples.tuples) {
                rsum(st.state, st.action) += st.reward;
                rcnt(st.state, st.action) += 1.0;
            }
            for (int s = 0; s < ctx.n_states; ++s)
                for (int a = 0; a < ctx.n_actions; ++a)
                    hat.reward(s, a) = rcnt(s, a) > 0.0 ? rsum(s, a) / rcnt(s, a) : 0.0;
            est.point = policy_return(hat, target);
        } else if (spec.id == "vs") {
            VersionSpace vs = version_space(resolve_class(sc, settings, "class", "F"), tuples,
                                            target, config.delta, ctx, 1,
                                            setting(settings, "c", 2.0));
            est = vs_interval(vs, ctx);
        } else {
            throw std::runtime_error("unknown estimator id: " + spec.id);
        }
    }
    row.point = est.point;
    if (est.lower) row.lower = *est.lower;
    if (est.upper) row.upper = *est.upper;
    row.abs_error = std::abs(row.point - row.truth);
    return row;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::string fmt(real v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

real parse_real(const std::string& s) {
    if (s.empty()) return std::numeric_limits<real>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<real>::infinity();
    if (s == "-inf") return -std::numeric_limits<real>::infinity();
    return std::stod(s);
}

} // namespace

uint64_t cell_seed(uint64_t master, const std::string& scenario, const std::string& estimator,
                   int n, int seed_index) {
    uint64_t h = mix64(master);
    h = mix64(h ^ hash_str(scenario));
    h = mix64(h ^ hash_str(estimator));
    h = mix64(h ^ static_cast<uint64_t>(n));
    h = mix64(h ^ static_cast<uint64_t>(seed_index));
    return h;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.scenario = j.at("scenario").get<std::string>();
    if (j.contains("scenario_params")) c.scenario_params = j.at("scenario_params");
    for (const auto& e : j.at("estimators")) {
        EstimatorSpec spec;
        spec.id = e.at("id").get<std::string>();
        if (e.contains("settings")) spec.settings = e.at("settings");
        c.estimators.push_back(std::move(spec));
    }
    c.n_grid = j.at("n_grid").get<std::vector<int>>();
    c.seeds = j.at("seeds").get<int>();
    c.master_seed = j.at("master_seed").get<uint64_t>();
    if (j.contains("delta")) c.delta = j.at("delta").get<real>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("format")) c.format = j.at("format").get<std::string>();
    if (c.estimators.empty()) throw std::invalid_argument("config needs at least one estimator");
    if (c.seeds < 1) throw std::invalid_argument("config needs seeds >= 1");
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, int workers) {
    Scenario sc = build_scenario(config.scenario, config.scenario_params);

    struct Cell {
        int estimator;
        int n;
        int seed;
    };
    std::vector<Cell> cells;
    for (size_t e = 0; e < config.estimators.size(); ++e)
        for (int n : config.n_grid)
            for (int s = 0; s < config.seeds; ++s) cells.push_back({static_cast<int>(e), n, s});

    std::vector<ResultRow> rows(cells.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            const Cell& cell = cells[i];
            try {
                rows[i] = run_cell(sc, config.estimators[cell.estimator], cell.n, cell.seed,
                                   config);
            } catch (const std::exception& ex) {
                ResultRow row;
                row.scenario = sc.name;
                row.estimator = config.estimators[cell.estimator].id;
                row.n = cell.n;
                row.seed = cell.seed;
                row.error_code = sanitize(ex.what());
                rows[i] = std::move(row);
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return rows;
}

void emit_report(const std::vector<ResultRow>& rows, const std::string& format,
                 const std::string& path) {
    if (format == "csv") {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
        out << "scenario,estimator,n,seed,point,lower,upper,truth,abs_error,c_inf,chi_sq,error_code\n";
        for (const ResultRow& r : rows)
            out << r.scenario << ',' << r.estimator << ',' << r.n << ',' << r.seed << ','
                << fmt(r.point) << ',' << fmt(r.lower) << ',' << fmt(r.upper) << ','
                << fmt(r.truth) << ',' << fmt(r.abs_error) << ',' << fmt(r.c_inf) << ','
                << fmt(r.chi_sq) << ',' << r.error_code << '\n';
    } else if (format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const ResultRow& r : rows) {
            nlohmann::json j;
            j["scenario"] = r.scenario;
            j["estimator"] = r.estimator;
            j["n"] = r.n;
            j["seed"] = r.seed;
            auto put = [&](const char* key, real v) {
                if (std::isnan(v))
                    j[key] = nullptr;
                else if (std::isinf(v))
                    j[key] = v > 0 ? "inf" : "-inf";
                else
                    j[key] = v;
            };
            put("point", r.point);
            put("lower", r.lower);
            put("upper", r.upper);
            put("truth", r.truth);
            put("abs_error", r.abs_error);
            put("c_inf", r.c_inf);
            put("chi_sq", r.chi_sq);
            j["error_code"] = r.error_code;
            arr.push_back(std::move(j));
        }
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
        out << arr.dump(2) << "\n";
    } else {
        throw std::invalid_argument("unknown report format: " + format);
    }
    write_summary(rows, path + ".summary.csv");
}

void write_summary(const std::vector<ResultRow>& rows, const std::string& path) {
    std::map<std::pair<std::string, int>, std::vector<real>> groups;
    for (const ResultRow& r : rows)
        if (r.error_code.empty() && !std::isnan(r.abs_error))
            groups[{r.estimator, r.n}].push_back(r.abs_error);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "estimator,n,count,median_abs_error\n";
    for (auto& [key, vals] : groups) {
        std::sort(vals.begin(), vals.end());
        size_t m = vals.size();
        real median = m % 2 == 1 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
        out << key.first << ',' << key.second << ',' << m << ',' << fmt(median) << '\n';
    }
}

std::vector<ResultRow> load_rows_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<ResultRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) fields.push_back(field);
        while (fields.size() < 12) fields.emplace_back();
        ResultRow r;
        r.scenario = fields[0];
        r.estimator = fields[1];
        r.n = std::stoi(fields[2]);
        r.seed = std::stoi(fields[3]);
        r.point = parse_real(fields[4]);
        r.lower = parse_real(fields[5]);
        r.upper = parse_real(fields[6]);
        r.truth = parse_real(fields[7]);
        r.abs_error = parse_real(fields[8]);
        r.c_inf = parse_real(fields[9]);
        r.chi_sq = parse_real(fields[10]);
        r.error_code = fields[11];
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace offrl
