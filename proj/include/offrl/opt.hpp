#pragma once

#include "offrl/ope.hpp"

namespace offrl {

struct OptResult {
    Policy policy;
    Estimate value_estimate;
    std::optional<real> truth_gap; // J(pi_cp) - J(pi_hat), filled when an oracle is attached
    std::map<std::string, real> trace;
};

/// Fitted-Q iteration: K optimality-backup regressions from f_0 = 0, then the
/// greedy policy of the last iterate.
OptResult fqi(const FunctionClass& cls, const TupleDataset& tuples, int K, real ridge,
              const EvalContext& ctx);

/// Evaluation backend for fitted policy iteration.
struct FpiEval {
    const TabularMDP* oracle = nullptr; // exact Q^pi when set
    const FunctionClass* cls = nullptr; // otherwise FQE on this class
    int fqe_iters = 100;
    real ridge = 1e-10;
};

/// Fitted policy iteration from the uniform policy: evaluate, then greedy,
/// K times.
OptResult fpi(const TupleDataset& tuples, int K, const FpiEval& eval, const EvalContext& ctx);

struct PessimisticSearchResult {
    OptResult result;
    std::vector<Estimate> intervals; // per candidate policy
    int chosen = 0;
};

/// Version-space pessimism: maximize the lower bound min_{f in VS} J_f(pi)
/// over a finite policy class; thresholds are union-bounded over the class.
PessimisticSearchResult pessimistic_search(const std::vector<StationaryPolicy>& policies,
                                           const FunctionClass& classF,
                                           const TupleDataset& tuples, real delta,
                                           const EvalContext& ctx, real c = 2.0);

struct FMinResult {
    ValueFunction f;
    real j_value = 0.0;
    real e_hat = 0.0;
    real lambda = 0.0;  // linear path only
    bool feasible = true; // false when no lambda met the epsilon0 constraint
};

/// Worst-case value function over the version space: the member (finite) or
/// Lagrangian sweep solution (linear) minimizing J_f(pi) subject to
/// E_hat(f;pi) <= epsilon0.
FMinResult f_min_oracle(const FunctionClass& classF, const TupleDataset& tuples,
                        const StationaryPolicy& pi, real epsilon0, const EvalContext& ctx,
                        const std::vector<real>& lambda_grid = {});

/// Mirror-descent pessimistic policy iteration. Returns the trajectory-level
/// uniform mixture of the K iterates. eta defaults to
/// (1-gamma)/v_max sqrt(log|A| / (2K)).
struct PspiResult {
    OptResult result;
    std::vector<StationaryPolicy> iterates;
    std::vector<ValueFunction> f_mins;
};
PspiResult pspi(const FunctionClass& classF, const TupleDataset& tuples, int K,
                std::optional<real> eta, real delta, const EvalContext& ctx,
                const std::vector<real>& lambda_grid = {});

/// Pointwise-pessimistic value iteration with the quadratic bonus
/// beta/sqrt(n) sqrt(phi^T (Sigma_ridge)^-1 phi). beta defaults to
/// v_max sqrt(dim log(n dim / delta)). Iterates are clipped to
/// [-v_max, v_max], which never raises a value above the valid Q range.
struct PeviResult {
    OptResult result;          // policy is the non-stationary pi_{K:1}
    std::vector<ValueFunction> pessimistic_iterates; // f_k^-
    std::vector<ValueFunction> point_iterates;       // f_hat_k
    std::vector<ValueFunction> bonuses;              // b_k
};
PeviResult pevi(const FeatureMap& phi, const TupleDataset& tuples, int K,
                std::optional<real> beta, real delta, const EvalContext& ctx, real ridge = 1.0);

enum class PessimismMode { Absolute, Relative };

/// Information-theoretic model pessimism over a finite candidate list and
/// finite policy class. Absolute mode maximizes worst-case return; relative
/// mode maximizes the worst-case improvement over pi_ref.
OptResult model_pessimism(const ModelVersionSpace& vs, const TabularMDP& shared,
                          const std::vector<StationaryPolicy>& policies, PessimismMode mode,
                          const StationaryPolicy* pi_ref = nullptr);

/// Convenience: build the model version space from data first.
OptResult model_pessimism(const std::vector<Mat>& candidates, const TabularMDP& shared,
                          const std::vector<StationaryPolicy>& policies,
                          const TupleDataset& tuples, real delta, PessimismMode mode,
                          const StationaryPolicy* pi_ref = nullptr, real c = 2.0);

/// Value of a policy in the MDP (shared R, gamma, d0) with transitions P.
real return_under_model(const TabularMDP& shared, const Mat& transition,
                        const StationaryPolicy& pi);

} // namespace offrl
