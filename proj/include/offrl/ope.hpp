#pragma once

#include "offrl/coverage.hpp"
#include "offrl/data.hpp"
#include "offrl/function_class.hpp"

#include <map>
#include <string>

namespace offrl {

/// What an estimator is allowed to know about the environment: shapes, the
/// discount, and the (assumed known) initial distribution. Never the
/// transition kernel or rewards.
struct EvalContext {
    int n_states = 0;
    int n_actions = 0;
    real gamma = 0.0;
    Vec init_dist;
    real v_max = 0.0;

    static EvalContext of(const TabularMDP& mdp) {
        return EvalContext{mdp.n_states, mdp.n_actions, mdp.gamma, mdp.init_dist, mdp.v_max()};
    }
    real plug_in_return(const ValueFunction& f, const StationaryPolicy& pi) const {
        return init_dist.dot(f.against_policy(pi));
    }
};

struct Estimate {
    real point = 0.0;
    std::optional<real> lower;
    std::optional<real> upper;
    std::map<std::string, real> diagnostics;
};

enum class ISMode { Plain, Weighted };

/// Trajectory importance sampling. Plain mode averages the per-trajectory
/// weighted returns; weighted mode normalizes by the weight sum. Throws when
/// the behavior policy has zero probability on a logged action.
Estimate is_estimate(const TrajectoryDataset& td, const StationaryPolicy& pi,
                     const StationaryPolicy& pi_d, ISMode mode, real gamma);

struct FqeResult {
    std::vector<ValueFunction> iterates;
    Estimate estimate;
};

/// Fitted-Q evaluation: K regressions onto the class, starting from f_0 = 0,
/// with targets r + gamma f_{k-1}(s', pi). The estimate is J_{f_K}(pi).
FqeResult fqe(const FunctionClass& cls, const TupleDataset& tuples, const StationaryPolicy& pi,
              int K, real ridge, const EvalContext& ctx);

/// Population-projection variant: exact expectations under d_D, no sampling.
/// Each step projects the exact backup onto the class. f0 defaults to zero.
FqeResult fqe_population(const FunctionClass& cls, const TabularMDP& mdp,
                         const StationaryPolicy& pi, const OccupancyMeasure& d_D, int K,
                         const ValueFunction* f0 = nullptr);

/// Corrected empirical Bellman losses E_hat(f; pi) for every member of a
/// finite class F, using G as the helper class (G = F when null).
std::vector<real> corrected_losses(const FunctionClass& classF, const FunctionClass* classG,
                                   const TupleDataset& tuples, const StationaryPolicy& pi,
                                   const EvalContext& ctx, real ridge = 1e-10);

struct BrmResult {
    ValueFunction f;
    Estimate estimate;
};

/// Minimax Bellman-residual minimization. Finite classes are enumerated
/// exactly; a linear class uses the closed form shared with LSTDQ.
BrmResult brm(const FunctionClass& classF, const FunctionClass* classG,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx,
              real ridge = 1e-10);

struct LstdqResult {
    Vec theta;
    Estimate estimate;
};

/// LSTDQ: theta = A^-1 B with A = Sigma_D - gamma E[phi(s,a) phi(s',pi)^T],
/// B = E[phi r]. Throws when A stays ill conditioned after the ridge.
LstdqResult lstdq(const FeatureMap& phi, const TupleDataset& tuples, const StationaryPolicy& pi,
                  real ridge, const EvalContext& ctx);

struct MqlResult {
    ValueFunction f;
    Estimate estimate;
};

/// Minimax Q learning: minimize over F the worst |L_q(w, f)| over the weight
/// class. Finite/finite by enumeration; linear/linear via LSTDQ.
MqlResult mql(const FunctionClass& classF, const FunctionClass& classW,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx);

struct MwlResult {
    WeightFunction w;
    Estimate estimate;
};

/// Minimax weight learning, the mirror image of MQL; the estimate is
/// E_D[w r] / (1 - gamma).
MwlResult mwl(const FunctionClass& classW, const FunctionClass& classF,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx);

/// Population losses, exact expectations under d_D (diagnostics and tests).
real population_lq(const WeightFunction& w, const ValueFunction& f, const TabularMDP& mdp,
                   const StationaryPolicy& pi, const OccupancyMeasure& d_D);
real population_lw(const WeightFunction& w, const ValueFunction& f, const TabularMDP& mdp,
                   const StationaryPolicy& pi, const OccupancyMeasure& d_D);

struct MleResult {
    Mat transition; // (S*A) x S
    std::vector<real> log_losses; // per candidate (finite mode)
    int argmin_index = -1;
    std::map<std::string, real> diagnostics;
};

/// Log-loss minimization over a finite candidate list. Candidates that put
/// zero probability on an observed transition get infinite loss.
MleResult mle_model_finite(const std::vector<Mat>& candidates, const TupleDataset& tuples,
                           int n_states, int n_actions, const Mat* truth = nullptr);

/// Tabular MLE: empirical transition frequencies; unseen rows are uniform.
MleResult mle_model_tabular(const TupleDataset& tuples, int n_states, int n_actions,
                            const Mat* truth = nullptr);

struct VersionSpace {
    FunctionClass base_class; // finite
    std::vector<char> member_flags;
    std::vector<real> losses; // E_hat per member
    real threshold = 0.0;
    StationaryPolicy policy;
    int minimizer_index = 0;

    int count() const {
        int c = 0;
        for (char f : member_flags) c += f != 0;
        return c;
    }
};

/// Version space for Q^pi: members whose corrected loss is below
/// c v_max^2 log(|F| n_policies / delta) / n plus the minimum loss. The
/// minimizer is always included.
VersionSpace version_space(const FunctionClass& classF, const TupleDataset& tuples,
                           const StationaryPolicy& pi, real delta, const EvalContext& ctx,
                           int n_policies = 1, real c = 2.0);

/// Lower/upper bounds of J_f(pi) over the version space; the point estimate
/// is the loss minimizer's value.
Estimate vs_interval(const VersionSpace& vs, const EvalContext& ctx);

struct ModelVersionSpace {
    std::vector<Mat> candidates;
    std::vector<real> log_losses;
    real threshold = 0.0;
    int mle_index = 0;
    std::vector<char> included;
};

/// Candidates whose log loss is within c log(|P| / delta) / n of the MLE.
ModelVersionSpace model_version_space(const std::vector<Mat>& candidates,
                                      const TupleDataset& tuples, real delta, int n_states,
                                      int n_actions, real c = 2.0);

} // namespace offrl
