#pragma once

#include "offrl/dp.hpp"
#include "offrl/mdp.hpp"

#include <vector>

namespace offrl::testing {

/// Random dense MDP with strictly positive transition rows.
inline TabularMDP random_mdp(int n_states, int n_actions, real gamma, uint64_t seed,
                             real r_max = 1.0) {
    Rng rng(mix64(seed));
    TabularMDP m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.r_max = r_max;
    m.transition = Mat::Zero(n_states * n_actions, n_states);
    for (int i = 0; i < n_states * n_actions; ++i) {
        real total = 0.0;
        for (int s = 0; s < n_states; ++s) {
            real e = -std::log(1.0 - rng.uniform01());
            m.transition(i, s) = e;
            total += e;
        }
        m.transition.row(i) /= total;
    }
    m.reward = Mat::Zero(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) m.reward(s, a) = rng.uniform(0.0, r_max);
    m.init_dist = Vec::Zero(n_states);
    real total = 0.0;
    for (int s = 0; s < n_states; ++s) {
        m.init_dist[s] = -std::log(1.0 - rng.uniform01());
        total += m.init_dist[s];
    }
    m.init_dist /= total;
    m.validate();
    return m;
}

inline StationaryPolicy random_policy(int n_states, int n_actions, uint64_t seed) {
    Rng rng(mix64(seed ^ 0x5bd1e995u));
    Mat p = Mat::Zero(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        real total = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            p(s, a) = -std::log(1.0 - rng.uniform01());
            total += p(s, a);
        }
        p.row(s) /= total;
    }
    return StationaryPolicy{p};
}

inline ValueFunction random_f(int n_states, int n_actions, real lo, real hi, uint64_t seed) {
    Rng rng(mix64(seed ^ 0x2545f491u));
    ValueFunction f = ValueFunction::zeros(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) f.values(s, a) = rng.uniform(lo, hi);
    return f;
}

inline OccupancyMeasure random_occupancy(int n_states, int n_actions, uint64_t seed) {
    Rng rng(mix64(seed ^ 0x9e3779b9u));
    Mat d = Mat::Zero(n_states, n_actions);
    real total = 0.0;
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            d(s, a) = -std::log(1.0 - rng.uniform01());
            total += d(s, a);
        }
    d /= total;
    return OccupancyMeasure{d, std::nullopt};
}

/// The 1-state loop MDP: R(a1) = 1, R(a2) = 0, self-loop, used across tests.
inline TabularMDP loop_mdp(real gamma) {
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
    return m;
}

/// All deterministic stationary policies of an MDP (|A|^|S| of them).
inline std::vector<StationaryPolicy> enumerate_deterministic_policies(int n_states,
                                                                      int n_actions) {
    std::vector<StationaryPolicy> out;
    std::vector<int> assignment(n_states, 0);
    for (;;) {
        out.push_back(StationaryPolicy::deterministic(n_states, n_actions, assignment));
        int i = 0;
        while (i < n_states) {
            if (++assignment[i] < n_actions) break;
            assignment[i] = 0;
            ++i;
        }
        if (i == n_states) break;
    }
    return out;
}

} // namespace offrl::testing
