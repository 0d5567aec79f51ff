#pragma once

#include "offrl/data.hpp"
#include "offrl/mdp.hpp"

#include <variant>

namespace offrl {

/// Feature map phi: one row per flattened (s,a), `dim` columns. Every row has
/// Euclidean norm at most norm_bound.
struct FeatureMap {
    int dim = 0;
    Mat features; // (S*A) x dim
    real norm_bound = 1.0;

    Vec at(int s, int a, int n_actions) const {
        return features.row(s * n_actions + a).transpose();
    }
    /// E_{a ~ pi(.|s)}[phi(s, a)] for one state.
    Vec at_policy(int s, const StationaryPolicy& pi) const {
        const int A = static_cast<int>(pi.probs.cols());
        Vec v = Vec::Zero(dim);
        for (int a = 0; a < A; ++a) v += pi.probs(s, a) * features.row(s * A + a).transpose();
        return v;
    }
    static FeatureMap tabular_indicators(int n_states, int n_actions);
};

/// Disjoint cover of the state-action space by cells 0 .. n_cells-1.
struct Partition {
    std::vector<int> cell_of; // size S*A
    int n_cells = 0;

    static Partition identity(int n_states, int n_actions);
};

struct FiniteClass {
    std::vector<ValueFunction> members;
};

struct LinearClass {
    FeatureMap features;
    real coef_bound = 1e6; // Euclidean bound on coefficients, enforced by rescaling
};

struct PiecewiseClass {
    Partition partition;
};

/// Value-function class: a finite enumeration, a linear span, or the
/// piecewise-constant class of a partition.
struct FunctionClass {
    std::variant<FiniteClass, LinearClass, PiecewiseClass> kind;

    bool is_finite() const { return std::holds_alternative<FiniteClass>(kind); }
    bool is_linear() const { return std::holds_alternative<LinearClass>(kind); }
    bool is_piecewise() const { return std::holds_alternative<PiecewiseClass>(kind); }
    const FiniteClass& finite() const { return std::get<FiniteClass>(kind); }
    const LinearClass& linear() const { return std::get<LinearClass>(kind); }
    const PiecewiseClass& piecewise() const { return std::get<PiecewiseClass>(kind); }

    static FunctionClass finite_of(std::vector<ValueFunction> members) {
        return FunctionClass{FiniteClass{std::move(members)}};
    }
    static FunctionClass linear_of(FeatureMap phi, real coef_bound = 1e6) {
        return FunctionClass{LinearClass{std::move(phi), coef_bound}};
    }
    static FunctionClass piecewise_of(Partition p) {
        return FunctionClass{PiecewiseClass{std::move(p)}};
    }
    /// Tabular class = piecewise-constant over singleton cells.
    static FunctionClass tabular(int n_states, int n_actions) {
        return piecewise_of(Partition::identity(n_states, n_actions));
    }
};

struct FitResult {
    ValueFunction f;
    Vec coefficients;  // linear kind only
    int member_index = -1; // finite kind only
};

/// Empirical least squares onto the class. Finite: loss-minimizing member
/// (ties to the lowest index). Linear: ridge normal equations, coefficients
/// rescaled into the norm ball. Piecewise: per-cell target mean, empty cells
/// get 0.
FitResult fit_least_squares(const FunctionClass& cls, const TupleDataset& tuples,
                            const std::vector<real>& targets, real ridge,
                            int n_states, int n_actions);

/// Population projection: the class member closest to f in the weighted
/// 2-norm. Piecewise cells with zero weighting mass fall back to the
/// unweighted cell mean, matching the aggregated-MDP convention.
ValueFunction project(const FunctionClass& cls, const ValueFunction& f,
                      const OccupancyMeasure& weighting);

struct CompletenessReport {
    real completeness_gap = 0.0; // max over f in F of min over g in G of ||g - T f||_inf
    real realizability_gap = 0.0; // min over f in F of ||f - Q^pi||_inf (policy targets)
    bool complete = false;
};

struct OptimalityTarget {};
using BackupTarget = std::variant<StationaryPolicy, OptimalityTarget>;

/// Worst Bellman-image approximation gap of F through G. Finite classes are
/// enumerated exactly; a linear F (with linear G sharing its span) reports the
/// sup-norm residual of the exact backup against the span, maximized over the
/// coefficient norm ball.
CompletenessReport check_completeness(const FunctionClass& classF, const FunctionClass& classG,
                                      const TabularMDP& mdp, const BackupTarget& target,
                                      real tol);

struct LowRankMDP {
    TabularMDP mdp;
    FeatureMap phi_star; // dim d
    Mat psi_star;        // d x S, rows are distributions over next states
    Vec theta_r;         // reward coefficients
};

/// Random rank-d MDP: P(s'|s,a) = <phi*(s,a), psi*(s')> with phi* rows on the
/// d-simplex and psi* rows valid distributions, so the factorization is exact
/// by construction. Rewards are linear in phi*.
LowRankMDP gen_low_rank_mdp(int d, int n_states, int n_actions, real gamma, uint64_t seed,
                            real r_max = 1.0);

/// Joint discretization partition of two candidates on the [0, v_max] grid
/// of width eps: two pairs share a cell iff both discretized values agree.
Partition bvft_partition(const ValueFunction& f1, const ValueFunction& f2, real eps, real v_max);

struct AggregatedMDP {
    TabularMDP base;
    Partition partition;
    Mat weights;        // S x A: within-cell weights d_D^phi
    Mat transition_agg; // (S*A) x S
    Mat reward_agg;     // S x A

    /// The aggregated dynamics as a standalone MDP (same S, A, gamma, d0).
    TabularMDP as_mdp() const;
};

/// Within-cell d_D-weighted mixture of transitions and rewards. Cells with no
/// d_D mass use uniform within-cell weights.
AggregatedMDP aggregate_mdp(const TabularMDP& mdp, const Partition& partition,
                            const OccupancyMeasure& d_D);

std::string function_class_to_json(const FunctionClass& cls);
FunctionClass function_class_from_json(const std::string& text);

} // namespace offrl
