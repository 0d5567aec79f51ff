#include "offrl/data.hpp"

#include <fstream>
#include <sstream>

namespace offrl {

namespace {

bool is_absorbing(const TabularMDP& mdp, int s) {
    if (mdp.transition(mdp.sa(s, 0), s) != 1.0) return false;
    for (int a = 0; a < mdp.n_actions; ++a) {
        if (mdp.transition(mdp.sa(s, a), s) != 1.0) return false;
        if (mdp.reward(s, a) != 0.0) return false;
    }
    return true;
}

real draw_reward(const TabularMDP& mdp, int s, int a, Rng& rng) {
    if (!mdp.reward_noise.empty()) {
        const auto& rn = mdp.reward_noise[mdp.sa(s, a)];
        if (rn) {
            Vec p(static_cast<int>(rn->probs.size()));
            for (size_t i = 0; i < rn->probs.size(); ++i) p[static_cast<int>(i)] = rn->probs[i];
            return rn->support[rng.categorical(p)];
        }
    }
    return mdp.reward(s, a);
}

} // namespace

TrajectoryDataset sample_trajectories(const TabularMDP& mdp, const StationaryPolicy& behavior,
                                      int n, int H, uint64_t seed) {
    if (n < 1 || H < 1) throw std::invalid_argument("need n >= 1 and H >= 1");
    TrajectoryDataset out;
    out.behavior = behavior;
    out.horizon = H;
    out.seed = seed;
    out.trajectories.resize(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        Trajectory& traj = out.trajectories[i];
        int s = rng.categorical(mdp.init_dist);
        for (int t = 0; t < H; ++t) {
            if (is_absorbing(mdp, s)) break;
            int a = rng.categorical(behavior.probs.row(s).transpose());
            real r = draw_reward(mdp, s, a, rng);
            int s2 = rng.categorical(mdp.transition.row(mdp.sa(s, a)).transpose());
            traj.steps.push_back(Step{s, a, r, s2});
            s = s2;
        }
    }
    return out;
}

TupleDataset sample_tuples(const TabularMDP& mdp, const OccupancyMeasure& d_D, int n,
                           uint64_t seed) {
    Vec flat(mdp.n_sa());
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) flat[mdp.sa(s, a)] = d_D.dist(s, a);
    if (flat.minCoeff() < -1e-15 || std::abs(flat.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("d_D is not a distribution over (s,a)");

    TupleDataset out;
    out.seed = seed;
    out.data_dist = d_D;
    out.tuples.resize(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        int sa = rng.categorical(flat);
        int s = sa / mdp.n_actions;
        int a = sa % mdp.n_actions;
        real r = draw_reward(mdp, s, a, rng);
        int s2 = rng.categorical(mdp.transition.row(sa).transpose());
        out.tuples[i] = Step{s, a, r, s2};
    }
    return out;
}

TupleDataset tuples_from_trajectories(const TrajectoryDataset& td) {
    TupleDataset out;
    out.seed = td.seed;
    for (const Trajectory& traj : td.trajectories)
        for (const Step& st : traj.steps) out.tuples.push_back(st);
    return out;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + why);
}

std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) fields.push_back(f);
    return fields;
}

} // namespace

void save_tuples(const TupleDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "# offrl tuples seed=" << ds.seed << " count=" << ds.tuples.size() << "\n";
    for (const Step& st : ds.tuples)
        out << st.state << " " << st.action << " " << st.reward << " " << st.next_state << "\n";
}

TupleDataset load_tuples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TupleDataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok)
                if (tok.rfind("seed=", 0) == 0) ds.seed = std::stoull(tok.substr(5));
            continue;
        }
        auto fields = fields_of(line);
        if (fields.size() != 4) parse_fail(path, lineno, "expected 4 fields, got " + std::to_string(fields.size()));
        try {
            ds.tuples.push_back(Step{std::stoi(fields[0]), std::stoi(fields[1]),
                                     std::stod(fields[2]), std::stoi(fields[3])});
        } catch (const std::exception&) {
            parse_fail(path, lineno, "malformed field");
        }
    }
    return ds;
}

void save_trajectories(const TrajectoryDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "# offrl trajectories seed=" << ds.seed << " horizon=" << ds.horizon
        << " count=" << ds.trajectories.size() << "\n";
    out << "# behavior " << ds.behavior.probs.rows() << " " << ds.behavior.probs.cols();
    for (int s = 0; s < ds.behavior.probs.rows(); ++s)
        for (int a = 0; a < ds.behavior.probs.cols(); ++a) out << " " << ds.behavior.probs(s, a);
    out << "\n";
    for (const Trajectory& traj : ds.trajectories) {
        out << traj.steps.size();
        for (const Step& st : traj.steps)
            out << " " << st.state << " " << st.action << " " << st.reward << " " << st.next_state;
        out << "\n";
    }
}

TrajectoryDataset load_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TrajectoryDataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line);
            std::string hash, kind;
            ss >> hash >> kind;
            if (kind == "behavior") {
                int rows = 0, cols = 0;
                ss >> rows >> cols;
                Mat p(rows, cols);
                for (int s = 0; s < rows; ++s)
                    for (int a = 0; a < cols; ++a)
                        if (!(ss >> p(s, a))) parse_fail(path, lineno, "truncated behavior header");
                ds.behavior.probs = p;
            } else {
                std::istringstream ss2(line);
                std::string tok;
                while (ss2 >> tok) {
                    if (tok.rfind("seed=", 0) == 0) ds.seed = std::stoull(tok.substr(5));
                    if (tok.rfind("horizon=", 0) == 0) ds.horizon = std::stoi(tok.substr(8));
                }
            }
            continue;
        }
        auto fields = fields_of(line);
        if (fields.empty()) continue;
        size_t len = 0;
        try {
            len = std::stoul(fields[0]);
        } catch (const std::exception&) {
            parse_fail(path, lineno, "malformed step count");
        }
        if (fields.size() != 1 + 4 * len)
            parse_fail(path, lineno, "expected " + std::to_string(1 + 4 * len) + " fields, got " +
                                         std::to_string(fields.size()));
        Trajectory traj;
        try {
            for (size_t k = 0; k < len; ++k)
                traj.steps.push_back(Step{std::stoi(fields[1 + 4 * k]), std::stoi(fields[2 + 4 * k]),
                                          std::stod(fields[3 + 4 * k]), std::stoi(fields[4 + 4 * k])});
        } catch (const std::exception&) {
            parse_fail(path, lineno, "malformed field");
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

} // namespace offrl
