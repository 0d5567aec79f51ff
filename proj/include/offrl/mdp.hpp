#pragma once

#include "offrl/rng.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace offrl {

/// A discrete reward distribution attached to one state-action pair.
/// Its mean must match the MDP's mean-reward entry; support stays in
/// [0, r_max].
struct RewardNoise {
    std::vector<real> support;
    std::vector<real> probs;

    real mean() const {
        real m = 0.0;
        for (size_t i = 0; i < support.size(); ++i) m += support[i] * probs[i];
        return m;
    }
};

/// Finite MDP (S, A, P, R, gamma, d0). Transition rows are indexed by the
/// flattened pair sa = s * n_actions + a. Immutable after construction by
/// convention; all solvers treat it as read-only.
struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    Mat transition; // (S*A) x S
    Mat reward;     // S x A, mean rewards in [0, r_max]
    real gamma = 0.0;
    Vec init_dist; // S
    real r_max = 1.0;
    std::vector<std::optional<RewardNoise>> reward_noise; // empty or size S*A

    int sa(int s, int a) const { return s * n_actions + a; }
    int n_sa() const { return n_states * n_actions; }
    real v_max() const { return r_max / (1.0 - gamma); }

    /// Throws std::invalid_argument when a structural invariant fails.
    void validate() const;
};

/// Stationary stochastic policy: probs(s, a) = pi(a | s).
struct StationaryPolicy {
    Mat probs; // S x A

    void validate() const;
    static StationaryPolicy uniform(int n_states, int n_actions);
    static StationaryPolicy deterministic(int n_states, int n_actions, const std::vector<int>& actions);
};

/// Time-indexed policy pi_{K:1}. steps[i] holds pi_{i+1}; execution starts
/// from the last element, i.e. at time t the policy is steps[K-1-t].
struct NonstationaryPolicy {
    std::vector<StationaryPolicy> steps;

    int horizon() const { return static_cast<int>(steps.size()); }
    /// Policy acting at time t (t = 0 uses pi_K).
    const StationaryPolicy& at_time(int t) const { return steps.at(steps.size() - 1 - t); }
    static NonstationaryPolicy repeat(const StationaryPolicy& pi, int k);
};

struct MixturePolicy; // below

using PolicyComponent = std::variant<StationaryPolicy, NonstationaryPolicy>;

/// Trajectory-level mixture: one component is drawn per episode and used for
/// the whole episode. Its return is the weight-average of component returns.
struct MixturePolicy {
    std::vector<PolicyComponent> components;
    Vec weights;

    void validate() const;
};

using Policy = std::variant<StationaryPolicy, NonstationaryPolicy, MixturePolicy>;

/// State-action value table. Also used for arbitrary candidate functions f.
struct ValueFunction {
    Mat values; // S x A

    static ValueFunction zeros(int n_states, int n_actions) {
        return ValueFunction{Mat::Zero(n_states, n_actions)};
    }
    static ValueFunction constant(int n_states, int n_actions, real c) {
        return ValueFunction{Mat::Constant(n_states, n_actions, c)};
    }
    real sup_norm() const { return values.cwiseAbs().maxCoeff(); }
    /// E_{a ~ pi(.|s)}[f(s, a)] for every state.
    Vec against_policy(const StationaryPolicy& pi) const {
        return (values.array() * pi.probs.array()).rowwise().sum();
    }
};

/// Discounted state-action occupancy, optionally with the per-step
/// distributions d_t it aggregates.
struct OccupancyMeasure {
    Mat dist; // S x A, sums to 1
    std::optional<std::vector<Mat>> per_step;

    real mass(int s, int a) const { return dist(s, a); }
};

/// JSON round trips for the MDP; values are printed so that load(save(m))
/// reproduces every double bit-exactly.
std::string mdp_to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(const std::string& text);
void save_mdp(const TabularMDP& mdp, const std::string& path);
TabularMDP load_mdp(const std::string& path);

} // namespace offrl
