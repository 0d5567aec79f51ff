#include "offrl/scenarios.hpp"

#include "offrl/dp.hpp"

#include <cmath>

namespace offrl {

namespace {

using nlohmann::json;

template <typename T>
T param(const json& p, const std::string& key, T fallback) {
    if (p.contains(key)) return p.at(key).get<T>();
    return fallback;
}

Scenario build_loop(const json& p) {
    Scenario sc;
    sc.name = "loop";
    const real gamma = param(p, "gamma", 0.9);
    const int H = param(p, "H", 0); // 0 = no cutoff, pure self-loop

    if (H <= 0) {
        TabularMDP m;
        m.n_states = 1;
        m.n_actions = 2;
        m.gamma = gamma;
        m.r_max = 1.0;
        m.transition = Mat::Ones(2, 1);
        m.reward = Mat::Zero(1, 2);
        m.reward(0, 0) = 1.0;
        m.init_dist = Vec::Ones(1);
        m.validate();
        sc.mdp = m;
    } else {
        // Time-indexed copies 0..H-1 plus a zero-reward absorbing state H.
        const int S = H + 1;
        TabularMDP m;
        m.n_states = S;
        m.n_actions = 2;
        m.gamma = gamma;
        m.r_max = 1.0;
        m.transition = Mat::Zero(S * 2, S);
        m.reward = Mat::Zero(S, 2);
        for (int t = 0; t < H; ++t) {
            int next = t + 1 < H ? t + 1 : H;
            m.transition(m.sa(t, 0), next) = 1.0;
            m.transition(m.sa(t, 1), next) = 1.0;
            m.reward(t, 0) = 1.0;
        }
        m.transition(m.sa(H, 0), H) = 1.0;
        m.transition(m.sa(H, 1), H) = 1.0;
        m.init_dist = Vec::Zero(S);
        m.init_dist[0] = 1.0;
        m.validate();
        sc.mdp = m;
    }
    const int S = sc.mdp.n_states;
    sc.behavior = StationaryPolicy::uniform(S, 2);
    sc.data_dist = occupancy(sc.mdp, sc.behavior);
    sc.targets["always_a1"] = StationaryPolicy::deterministic(S, 2, std::vector<int>(S, 0));
    sc.targets["always_a2"] = StationaryPolicy::deterministic(S, 2, std::vector<int>(S, 1));
    sc.classes["F"] = FunctionClass::tabular(S, 2);
    sc.notes = "single recurring state; importance weights compound across the horizon";
    return sc;
}

Scenario build_tree(const json& p) {
    const int branch = param(p, "branch", 2);
    const int depth = param(p, "depth", 3);
    const real gamma = param(p, "gamma", 0.9);

    int internal = 0, width = 1;
    for (int l = 0; l < depth; ++l) {
        internal += width;
        width *= branch;
    }
    const int leaves = width;
    const int S = internal + leaves;

    TabularMDP m;
    m.n_states = S;
    m.n_actions = branch;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition = Mat::Zero(S * branch, S);
    m.reward = Mat::Zero(S, branch);
    for (int node = 0; node < internal; ++node)
        for (int a = 0; a < branch; ++a)
            m.transition(m.sa(node, a), branch * node + 1 + a) = 1.0;
    for (int leaf = internal; leaf < S; ++leaf)
        for (int a = 0; a < branch; ++a) m.transition(m.sa(leaf, a), leaf) = 1.0;
    // distinguishable leaf rewards so path policies have distinct returns
    for (int j = 0; j < leaves; ++j)
        for (int a = 0; a < branch; ++a)
            m.reward(internal + j, a) = leaves > 1 ? static_cast<real>(j) / (leaves - 1) : 1.0;
    m.init_dist = Vec::Zero(S);
    m.init_dist[0] = 1.0;
    m.validate();

    Scenario sc;
    sc.name = "tree";
    sc.mdp = m;
    sc.behavior = StationaryPolicy::uniform(S, branch);
    sc.data_dist = occupancy(m, sc.behavior);
    for (int path = 0; path < leaves; ++path) {
        std::vector<int> actions(S, 0);
        int node = 0, rem = path, div = leaves;
        for (int l = 0; l < depth; ++l) {
            div /= branch;
            int a = rem / div;
            rem %= div;
            actions[node] = a;
            node = branch * node + 1 + a;
        }
        sc.targets["path_" + std::to_string(path)] =
            StationaryPolicy::deterministic(S, branch, actions);
    }
    sc.classes["F"] = FunctionClass::tabular(S, branch);
    sc.notes = "deterministic complete tree; every root-to-leaf path is a policy";
    return sc;
}

Scenario build_divergence(const json& p) {
    const real gamma = param(p, "gamma", 0.95);
    TabularMDP m;
    m.n_states = 2;
    m.n_actions = 1;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition = Mat::Zero(2, 2);
    m.transition(0, 1) = 1.0; // s0 -> s1
    m.transition(1, 1) = 1.0; // s1 -> s1
    m.reward = Mat::Zero(2, 1);
    m.init_dist = Vec::Constant(2, 0.5);
    m.validate();

    Scenario sc;
    sc.name = "divergence";
    sc.mdp = m;
    sc.behavior = StationaryPolicy{Mat::Ones(2, 1)};
    sc.data_dist = OccupancyMeasure{Mat::Constant(2, 1, 0.5), std::nullopt};
    sc.targets["target"] = sc.behavior;

    FeatureMap phi;
    phi.dim = 1;
    phi.features = Mat::Zero(2, 1);
    phi.features(0, 0) = 1.0;
    phi.features(1, 0) = 2.0;
    phi.norm_bound = 2.0;
    sc.features = phi;
    sc.classes["F"] = FunctionClass::linear_of(phi, 1e9);
    sc.notes = "zero-reward chain; the projected backup scales coefficients by 6 gamma / 5";
    return sc;
}

Scenario build_bandit(const json& p) {
    std::vector<real> means = param(p, "arm_means", std::vector<real>{0.7, 0.8, 0.5});
    std::vector<real> behavior = param(p, "behavior", std::vector<real>{0.90, 0.05, 0.05});
    const real grid_step = param(p, "grid_step", 0.05);
    const int A = static_cast<int>(means.size());
    if (static_cast<int>(behavior.size()) != A)
        throw std::invalid_argument("bandit behavior and arm_means sizes differ");

    TabularMDP m;
    m.n_states = 1;
    m.n_actions = A;
    m.gamma = 0.0;
    m.r_max = 1.0;
    m.transition = Mat::Ones(A, 1);
    m.reward = Mat::Zero(1, A);
    m.reward_noise.resize(A);
    for (int a = 0; a < A; ++a) {
        m.reward(0, a) = means[a];
        m.reward_noise[a] = RewardNoise{{0.0, 1.0}, {1.0 - means[a], means[a]}};
    }
    m.init_dist = Vec::Ones(1);
    m.validate();

    Scenario sc;
    sc.name = "bandit";
    sc.mdp = m;
    Mat bp(1, A);
    for (int a = 0; a < A; ++a) bp(0, a) = behavior[a];
    sc.behavior = StationaryPolicy{bp};
    sc.behavior.validate();
    sc.data_dist = OccupancyMeasure{bp, std::nullopt};
    for (int a = 0; a < A; ++a)
        sc.targets["arm_" + std::to_string(a)] = StationaryPolicy::deterministic(1, A, {a});
    sc.targets["uniform"] = StationaryPolicy::uniform(1, A);

    // product grid over arm values; the true reward vector lies on the grid
    // whenever the means are multiples of grid_step
    const int levels = static_cast<int>(std::round(1.0 / grid_step)) + 1;
    std::vector<ValueFunction> members;
    std::vector<int> idx(A, 0);
    for (;;) {
        ValueFunction f = ValueFunction::zeros(1, A);
        for (int a = 0; a < A; ++a) f.values(0, a) = std::min(1.0, idx[a] * grid_step);
        members.push_back(f);
        int i = 0;
        while (i < A) {
            if (++idx[i] < levels) break;
            idx[i] = 0;
            ++i;
        }
        if (i == A) break;
    }
    sc.classes["F"] = FunctionClass::finite_of(std::move(members));
    sc.notes = "partial-coverage stochastic arms; point estimates chase under-sampled arms";
    return sc;
}

Scenario build_lowrank(const json& p) {
    const int d = param(p, "d", 2);
    const int S = param(p, "n_states", 6);
    const int A = param(p, "n_actions", 2);
    const real gamma = param(p, "gamma", 0.9);
    const uint64_t seed = param(p, "seed", static_cast<uint64_t>(1));

    LowRankMDP lr = gen_low_rank_mdp(d, S, A, gamma, seed);
    Scenario sc;
    sc.name = "lowrank";
    sc.mdp = lr.mdp;
    sc.behavior = StationaryPolicy::uniform(S, A);
    sc.data_dist = occupancy(lr.mdp, sc.behavior);
    sc.features = lr.phi_star;
    // Q^pi coefficients are bounded by sqrt(d) (r_max + gamma v_max); leave room.
    sc.classes["F"] = FunctionClass::linear_of(lr.phi_star,
                                               10.0 * std::sqrt(d) * lr.mdp.v_max());
    sc.targets["target"] = greedy(solve_q_optimal(lr.mdp, 1e-10));
    sc.targets["behavior"] = sc.behavior;
    sc.notes = "rank-" + std::to_string(d) + " transitions; the linear class on the true features";
    return sc;
}

Scenario build_random(const json& p) {
    const int S = param(p, "n_states", 4);
    const int A = param(p, "n_actions", 2);
    const real gamma = param(p, "gamma", 0.9);
    const uint64_t seed = param(p, "seed", static_cast<uint64_t>(1));

    Rng rng(mix64(seed));
    TabularMDP m;
    m.n_states = S;
    m.n_actions = A;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition = Mat::Zero(S * A, S);
    for (int i = 0; i < S * A; ++i) {
        real total = 0.0;
        for (int s = 0; s < S; ++s) {
            m.transition(i, s) = -std::log(1.0 - rng.uniform01());
            total += m.transition(i, s);
        }
        m.transition.row(i) /= total;
    }
    m.reward = Mat::Zero(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) m.reward(s, a) = rng.uniform(0.0, 1.0);
    m.init_dist = Vec::Zero(S);
    real total = 0.0;
    for (int s = 0; s < S; ++s) {
        m.init_dist[s] = -std::log(1.0 - rng.uniform01());
        total += m.init_dist[s];
    }
    m.init_dist /= total;
    m.validate();

    Scenario sc;
    sc.name = "random";
    sc.mdp = m;
    sc.behavior = StationaryPolicy::uniform(S, A);
    sc.data_dist = occupancy(m, sc.behavior);
    // a fixed stochastic target derived from the same seed
    Mat tp(S, A);
    for (int s = 0; s < S; ++s) {
        real z = 0.0;
        for (int a = 0; a < A; ++a) {
            tp(s, a) = 0.1 + rng.uniform01();
            z += tp(s, a);
        }
        tp.row(s) /= z;
    }
    sc.targets["target"] = StationaryPolicy{tp};
    sc.targets["behavior"] = sc.behavior;
    sc.classes["F"] = FunctionClass::tabular(S, A);
    sc.notes = "dense random MDP with uniform logging";
    return sc;
}

} // namespace

Scenario build_scenario(const std::string& name, const nlohmann::json& params) {
    if (name == "loop") return build_loop(params);
    if (name == "tree") return build_tree(params);
    if (name == "divergence") return build_divergence(params);
    if (name == "bandit") return build_bandit(params);
    if (name == "lowrank") return build_lowrank(params);
    if (name == "random") return build_random(params);
    throw std::invalid_argument("unknown scenario: " + name);
}

std::vector<std::string> scenario_names() {
    return {"loop", "tree", "divergence", "bandit", "lowrank", "random"};
}

} // namespace offrl
