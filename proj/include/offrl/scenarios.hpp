#pragma once

#include "offrl/function_class.hpp"
#include "offrl/ope.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace offrl {

/// A fully specified experiment environment: the MDP, the logging
/// distribution, named target policies, and the function classes estimators
/// will use. All oracle truths are computable from `mdp`.
struct Scenario {
    std::string name;
    TabularMDP mdp;
    StationaryPolicy behavior;
    OccupancyMeasure data_dist; // d^D used for tuple sampling
    std::map<std::string, StationaryPolicy> targets;
    std::map<std::string, FunctionClass> classes; // "F" always present
    std::optional<FeatureMap> features;
    std::string notes;

    EvalContext ctx() const { return EvalContext::of(mdp); }
};

/// Builders: "loop" (single-state two-action chain, optional horizon cutoff),
/// "tree" (deterministic complete tree with one policy per path),
/// "divergence" (two-state chain with the 1-dim feature (1,2) and zero
/// rewards), "bandit" (single-state stochastic-reward arms), "lowrank"
/// (random rank-d MDP with its exact features), "random" (dense random MDP).
Scenario build_scenario(const std::string& name, const nlohmann::json& params);

/// Names understood by build_scenario.
std::vector<std::string> scenario_names();

} // namespace offrl
