#include "offrl/mdp.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace offrl {

namespace {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace

void TabularMDP::validate() const {
    check(n_states > 0 && n_actions > 0, "MDP needs at least one state and action");
    check(transition.rows() == n_sa() && transition.cols() == n_states, "transition shape mismatch");
    check(reward.rows() == n_states && reward.cols() == n_actions, "reward shape mismatch");
    check(init_dist.size() == n_states, "init_dist shape mismatch");
    check(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    check(r_max > 0.0, "r_max must be positive");
    for (int i = 0; i < transition.rows(); ++i) {
        check(transition.row(i).minCoeff() >= 0.0, "negative transition probability");
        check(std::abs(transition.row(i).sum() - 1.0) <= 1e-12,
              "transition row " + std::to_string(i) + " does not sum to 1");
    }
    check(init_dist.minCoeff() >= 0.0, "negative initial probability");
    check(std::abs(init_dist.sum() - 1.0) <= 1e-12, "init_dist does not sum to 1");
    check(reward.minCoeff() >= 0.0 && reward.maxCoeff() <= r_max, "rewards must lie in [0, r_max]");
    if (!reward_noise.empty()) {
        check(static_cast<int>(reward_noise.size()) == n_sa(), "reward_noise size mismatch");
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                const auto& rn = reward_noise[sa(s, a)];
                if (!rn) continue;
                check(rn->support.size() == rn->probs.size(), "reward_noise support/probs mismatch");
                real p = 0.0;
                for (size_t i = 0; i < rn->support.size(); ++i) {
                    check(rn->support[i] >= 0.0 && rn->support[i] <= r_max,
                          "reward_noise support outside [0, r_max]");
                    check(rn->probs[i] >= 0.0, "negative reward_noise probability");
                    p += rn->probs[i];
                }
                check(std::abs(p - 1.0) <= 1e-12, "reward_noise probs do not sum to 1");
                check(std::abs(rn->mean() - reward(s, a)) <= 1e-12,
                      "reward_noise mean disagrees with mean reward");
            }
        }
    }
}

void StationaryPolicy::validate() const {
    for (int s = 0; s < probs.rows(); ++s) {
        if (probs.row(s).minCoeff() < 0.0) throw std::invalid_argument("negative action probability");
        if (std::abs(probs.row(s).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("policy row " + std::to_string(s) + " does not sum to 1");
    }
}

StationaryPolicy StationaryPolicy::uniform(int n_states, int n_actions) {
    return StationaryPolicy{Mat::Constant(n_states, n_actions, 1.0 / n_actions)};
}

StationaryPolicy StationaryPolicy::deterministic(int n_states, int n_actions,
                                                 const std::vector<int>& actions) {
    Mat p = Mat::Zero(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) p(s, actions.at(s)) = 1.0;
    return StationaryPolicy{p};
}

NonstationaryPolicy NonstationaryPolicy::repeat(const StationaryPolicy& pi, int k) {
    return NonstationaryPolicy{std::vector<StationaryPolicy>(static_cast<size_t>(k), pi)};
}

void MixturePolicy::validate() const {
    if (components.empty()) throw std::invalid_argument("mixture needs at least one component");
    if (weights.size() != static_cast<Eigen::Index>(components.size()))
        throw std::invalid_argument("mixture weights size mismatch");
    if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("mixture weights must form a distribution");
}

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(j[0].size());
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<real>();
    return m;
}

} // namespace

std::string mdp_to_json(const TabularMDP& mdp) {
    json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    j["r_max"] = mdp.r_max;
    j["transition"] = mat_to_json(mdp.transition);
    j["reward"] = mat_to_json(mdp.reward);
    json d0 = json::array();
    for (int s = 0; s < mdp.n_states; ++s) d0.push_back(mdp.init_dist[s]);
    j["init_dist"] = std::move(d0);
    return j.dump(2);
}

TabularMDP mdp_from_json(const std::string& text) {
    json j = json::parse(text);
    TabularMDP mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.gamma = j.at("gamma").get<real>();
    mdp.r_max = j.at("r_max").get<real>();
    mdp.transition = mat_from_json(j.at("transition"));
    mdp.reward = mat_from_json(j.at("reward"));
    const auto& d0 = j.at("init_dist");
    mdp.init_dist = Vec(d0.size());
    for (size_t s = 0; s < d0.size(); ++s) mdp.init_dist[static_cast<int>(s)] = d0[s].get<real>();
    mdp.validate();
    return mdp;
}

void save_mdp(const TabularMDP& mdp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << mdp_to_json(mdp) << "\n";
}

TabularMDP load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return mdp_from_json(ss.str());
}

} // namespace offrl
