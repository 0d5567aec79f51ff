#pragma once

#include "offrl/mdp.hpp"

namespace offrl {

/// One application of the policy Bellman operator T^pi.
ValueFunction bellman_backup(const TabularMDP& mdp, const ValueFunction& f, const StationaryPolicy& pi);

/// One application of the optimality operator T (max over next actions).
ValueFunction bellman_backup_optimal(const TabularMDP& mdp, const ValueFunction& f);

/// Exact Q^pi via the linear system (I - gamma P_pi) Q = R.
ValueFunction solve_q(const TabularMDP& mdp, const StationaryPolicy& pi);

/// Q* via value iteration, stopped at ||f_{k+1} - f_k||_inf <= tol (1-gamma)/gamma,
/// which puts the result within tol of the fixed point in sup norm.
ValueFunction solve_q_optimal(const TabularMDP& mdp, real tol = 1e-12);

/// Discounted occupancy d^pi by the flow linear system; per-step d_t^pi is
/// filled up to `horizon` steps when requested.
OccupancyMeasure occupancy(const TabularMDP& mdp, const StationaryPolicy& pi,
                           std::optional<int> horizon = std::nullopt);

/// Per-step occupancies of a K-step nonstationary policy; dist holds the
/// discounted average over the K steps, normalized by (1 - gamma^K)/(1 - gamma).
OccupancyMeasure occupancy(const TabularMDP& mdp, const NonstationaryPolicy& pi);

/// J(pi) exactly (no f), or the plug-in J_f(pi) = E_{d0}[f(s, pi)] when f is
/// given. Nonstationary policies are K-step objects and return the truncated
/// J_K; mixtures average their components.
real policy_return(const TabularMDP& mdp, const Policy& pi,
                   const ValueFunction* f = nullptr);
real policy_return(const TabularMDP& mdp, const StationaryPolicy& pi,
                   const ValueFunction* f = nullptr);

/// Deterministic greedy policy; exact ties go to the lowest action index.
StationaryPolicy greedy(const ValueFunction& f);

/// Q_1 ... Q_K of the nonstationary policy by exact backward recursion with
/// Q_0 = 0; Q_k is the k-step value of acting once and then following
/// pi_{k-1:1}.
std::vector<ValueFunction> finite_horizon_values(const TabularMDP& mdp,
                                                 const NonstationaryPolicy& pi, int K);

/// Truncated K-step return J_K(pi_{K:1}) = E_{d0}[Q_K(s, pi_K)].
real finite_horizon_return(const TabularMDP& mdp, const NonstationaryPolicy& pi);

/// Transition matrix of the state-action chain under pi:
/// M[(s,a), (s',a')] = P(s'|s,a) pi(a'|s').
Mat sa_chain_matrix(const TabularMDP& mdp, const StationaryPolicy& pi);

} // namespace offrl
