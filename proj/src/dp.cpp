#include "offrl/dp.hpp"

#include <Eigen/LU>

namespace offrl {

namespace {

void check_shape(const TabularMDP& mdp, const ValueFunction& f) {
    if (f.values.rows() != mdp.n_states || f.values.cols() != mdp.n_actions)
        throw std::invalid_argument("value function shape does not match MDP");
}

/// Expected next-state value vector: for each (s,a), E_{s'}[v(s')].
Vec expected_next(const TabularMDP& mdp, const Vec& state_values) {
    return mdp.transition * state_values;
}

} // namespace

ValueFunction bellman_backup(const TabularMDP& mdp, const ValueFunction& f,
                             const StationaryPolicy& pi) {
    check_shape(mdp, f);
    Vec v = f.against_policy(pi); // v(s') = f(s', pi)
    Vec next = expected_next(mdp, v);
    ValueFunction out = ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            out.values(s, a) = mdp.reward(s, a) + mdp.gamma * next[mdp.sa(s, a)];
    return out;
}

ValueFunction bellman_backup_optimal(const TabularMDP& mdp, const ValueFunction& f) {
    check_shape(mdp, f);
    Vec v = f.values.rowwise().maxCoeff();
    Vec next = expected_next(mdp, v);
    ValueFunction out = ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            out.values(s, a) = mdp.reward(s, a) + mdp.gamma * next[mdp.sa(s, a)];
    return out;
}

Mat sa_chain_matrix(const TabularMDP& mdp, const StationaryPolicy& pi) {
    const int n = mdp.n_sa();
    Mat M = Mat::Zero(n, n);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                for (int a2 = 0; a2 < mdp.n_actions; ++a2)
                    M(mdp.sa(s, a), mdp.sa(s2, a2)) =
                        mdp.transition(mdp.sa(s, a), s2) * pi.probs(s2, a2);
    return M;
}

ValueFunction solve_q(const TabularMDP& mdp, const StationaryPolicy& pi) {
    const int n = mdp.n_sa();
    Mat A = Mat::Identity(n, n) - mdp.gamma * sa_chain_matrix(mdp, pi);
    Vec r(n);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) r[mdp.sa(s, a)] = mdp.reward(s, a);
    Vec q = A.partialPivLu().solve(r);
    ValueFunction out = ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) out.values(s, a) = q[mdp.sa(s, a)];
    return out;
}

ValueFunction solve_q_optimal(const TabularMDP& mdp, real tol) {
    if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
    ValueFunction f = ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    if (mdp.gamma == 0.0) return bellman_backup_optimal(mdp, f);
    const real stop = tol * (1.0 - mdp.gamma) / mdp.gamma;
    for (;;) {
        ValueFunction next = bellman_backup_optimal(mdp, f);
        real delta = (next.values - f.values).cwiseAbs().maxCoeff();
        f = std::move(next);
        if (delta <= stop) break;
    }
    return f;
}

OccupancyMeasure occupancy(const TabularMDP& mdp, const StationaryPolicy& pi,
                           std::optional<int> horizon) {
    const int n = mdp.n_sa();
    Vec mu0(n);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            mu0[mdp.sa(s, a)] = mdp.init_dist[s] * pi.probs(s, a);

    Mat M = sa_chain_matrix(mdp, pi);
    // Flow system: d = (1-gamma) mu0 + gamma M^T d.
    Mat A = Mat::Identity(n, n) - mdp.gamma * M.transpose();
    Vec d = A.partialPivLu().solve(Vec((1.0 - mdp.gamma) * mu0));

    OccupancyMeasure out;
    out.dist = Mat::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) out.dist(s, a) = d[mdp.sa(s, a)];

    if (horizon) {
        std::vector<Mat> steps;
        steps.reserve(*horizon);
        Vec dt = mu0;
        for (int t = 0; t < *horizon; ++t) {
            Mat step = Mat::Zero(mdp.n_states, mdp.n_actions);
            for (int s = 0; s < mdp.n_states; ++s)
                for (int a = 0; a < mdp.n_actions; ++a) step(s, a) = dt[mdp.sa(s, a)];
            steps.push_back(std::move(step));
            dt = M.transpose() * dt;
        }
        out.per_step = std::move(steps);
    }
    return out;
}

OccupancyMeasure occupancy(const TabularMDP& mdp, const NonstationaryPolicy& pi) {
    const int K = pi.horizon();
    std::vector<Mat> steps;
    steps.reserve(K);
    Vec state_dist = mdp.init_dist;
    Mat discounted = Mat::Zero(mdp.n_states, mdp.n_actions);
    real norm = 0.0;
    for (int t = 0; t < K; ++t) {
        const StationaryPolicy& pt = pi.at_time(t);
        Mat step = Mat::Zero(mdp.n_states, mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) step(s, a) = state_dist[s] * pt.probs(s, a);
        real w = std::pow(mdp.gamma, t);
        discounted += w * step;
        norm += w;
        // advance the state marginal
        Vec next = Vec::Zero(mdp.n_states);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                next += step(s, a) * mdp.transition.row(mdp.sa(s, a)).transpose();
        state_dist = next;
        steps.push_back(std::move(step));
    }
    OccupancyMeasure out;
    out.dist = discounted / norm;
    out.per_step = std::move(steps);
    return out;
}

real policy_return(const TabularMDP& mdp, const StationaryPolicy& pi, const ValueFunction* f) {
    if (f) {
        Vec v = f->against_policy(pi);
        return mdp.init_dist.dot(v);
    }
    ValueFunction q = solve_q(mdp, pi);
    return mdp.init_dist.dot(q.against_policy(pi));
}

real policy_return(const TabularMDP& mdp, const Policy& pi, const ValueFunction* f) {
    if (const auto* sp = std::get_if<StationaryPolicy>(&pi)) return policy_return(mdp, *sp, f);
    if (const auto* np = std::get_if<NonstationaryPolicy>(&pi)) {
        if (f) {
            Vec v = f->against_policy(np->at_time(0));
            return mdp.init_dist.dot(v);
        }
        return finite_horizon_return(mdp, *np);
    }
    const auto& mix = std::get<MixturePolicy>(pi);
    real total = 0.0;
    for (size_t i = 0; i < mix.components.size(); ++i) {
        real ji = std::visit(
            [&](const auto& comp) { return policy_return(mdp, Policy{comp}, f); },
            mix.components[i]);
        total += mix.weights[static_cast<int>(i)] * ji;
    }
    return total;
}

StationaryPolicy greedy(const ValueFunction& f) {
    const int S = static_cast<int>(f.values.rows());
    const int A = static_cast<int>(f.values.cols());
    Mat p = Mat::Zero(S, A);
    for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a)
            if (f.values(s, a) > f.values(s, best)) best = a;
        p(s, best) = 1.0;
    }
    return StationaryPolicy{p};
}

std::vector<ValueFunction> finite_horizon_values(const TabularMDP& mdp,
                                                 const NonstationaryPolicy& pi, int K) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (K > pi.horizon()) throw std::invalid_argument("policy has fewer than K steps");
    std::vector<ValueFunction> qs;
    qs.reserve(K);
    ValueFunction q = ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    for (int k = 1; k <= K; ++k) {
        // Q_k = T^{pi_{k-1}} Q_{k-1}; at k = 1 the backup of 0 is just R.
        q = (k == 1) ? ValueFunction{mdp.reward} : bellman_backup(mdp, q, pi.steps[k - 2]);
        qs.push_back(q);
    }
    return qs;
}

real finite_horizon_return(const TabularMDP& mdp, const NonstationaryPolicy& pi) {
    const int K = pi.horizon();
    ValueFunction qk = finite_horizon_values(mdp, pi, K).back();
    return mdp.init_dist.dot(qk.against_policy(pi.steps.back()));
}

} // namespace offrl
