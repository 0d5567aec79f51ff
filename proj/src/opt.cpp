#include "offrl/opt.hpp"

#include "offrl/dp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace offrl {

namespace {

constexpr real kInf = std::numeric_limits<real>::infinity();

ValueFunction value_from_flat(const Vec& flat, int S, int A) {
    ValueFunction f = ValueFunction::zeros(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) f.values(s, a) = flat[s * A + a];
    return f;
}

} // namespace

OptResult fqi(const FunctionClass& cls, const TupleDataset& tuples, int K, real ridge,
              const EvalContext& ctx) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    ValueFunction f = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    for (int k = 1; k <= K; ++k) {
        std::vector<real> y(tuples.tuples.size());
        Vec fmax = f.values.rowwise().maxCoeff();
        for (size_t i = 0; i < tuples.tuples.size(); ++i) {
            const Step& st = tuples.tuples[i];
            y[i] = st.reward + ctx.gamma * fmax[st.next_state];
        }
        f = fit_least_squares(cls, tuples, y, ridge, ctx.n_states, ctx.n_actions).f;
    }
    OptResult out;
    StationaryPolicy pi = greedy(f);
    out.value_estimate.point = ctx.plug_in_return(f, pi);
    out.value_estimate.diagnostics["final_sup_norm"] = f.sup_norm();
    out.policy = pi;
    return out;
}

OptResult fpi(const TupleDataset& tuples, int K, const FpiEval& eval, const EvalContext& ctx) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (!eval.oracle && !eval.cls)
        throw std::invalid_argument("fpi needs an oracle MDP or a function class");
    StationaryPolicy pi = StationaryPolicy::uniform(ctx.n_states, ctx.n_actions);
    ValueFunction q = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    for (int k = 0; k < K; ++k) {
        q = eval.oracle ? solve_q(*eval.oracle, pi)
                        : fqe(*eval.cls, tuples, pi, eval.fqe_iters, eval.ridge, ctx)
                              .iterates.back();
        pi = greedy(q);
    }
    OptResult out;
    out.policy = pi;
    out.value_estimate.point = ctx.plug_in_return(q, pi);
    return out;
}

PessimisticSearchResult pessimistic_search(const std::vector<StationaryPolicy>& policies,
                                           const FunctionClass& classF,
                                           const TupleDataset& tuples, real delta,
                                           const EvalContext& ctx, real c) {
    if (policies.empty()) throw std::invalid_argument("policy class is empty");
    PessimisticSearchResult out;
    real best = -kInf;
    for (size_t i = 0; i < policies.size(); ++i) {
        VersionSpace vs = version_space(classF, tuples, policies[i], delta, ctx,
                                        static_cast<int>(policies.size()), c);
        Estimate interval = vs_interval(vs, ctx);
        if (*interval.lower > best + 1e-15) { // ties stay at the first index
            best = *interval.lower;
            out.chosen = static_cast<int>(i);
        }
        out.intervals.push_back(std::move(interval));
    }
    out.result.policy = policies[out.chosen];
    out.result.value_estimate = out.intervals[out.chosen];
    out.result.trace["chosen_index"] = static_cast<real>(out.chosen);
    return out;
}

namespace {

/// Quadratic representation E_hat(theta) = theta^T P theta - 2 q^T theta + c0
/// of the corrected Bellman loss for a linear class with G = F.
struct QuadraticLoss {
    Mat P;
    Vec q;
    real c0 = 0.0;

    real at(const Vec& theta) const { return theta.dot(P * theta) - 2.0 * q.dot(theta) + c0; }
};

QuadraticLoss assemble_quadratic(const FeatureMap& fm, const TupleDataset& tuples,
                                 const StationaryPolicy& pi, real gamma, int n_actions) {
    const int d = fm.dim;
    const real n = static_cast<real>(tuples.size());
    Mat X(tuples.size(), d);
    Mat Xn(tuples.size(), d);
    Vec r(tuples.size());
    for (size_t i = 0; i < tuples.tuples.size(); ++i) {
        const Step& st = tuples.tuples[i];
        X.row(static_cast<int>(i)) = fm.features.row(st.state * n_actions + st.action);
        Vec xn = Vec::Zero(d);
        for (int a2 = 0; a2 < n_actions; ++a2)
            xn += pi.probs(st.next_state, a2) *
                  fm.features.row(st.next_state * n_actions + a2).transpose();
        Xn.row(static_cast<int>(i)) = xn.transpose();
        r[static_cast<int>(i)] = st.reward;
    }
    Mat D = X - gamma * Xn;

    Mat C = X.transpose() * X / n + 1e-10 * Mat::Identity(d, d);
    Mat Cinv = C.inverse();
    Mat XtX = X.transpose() * X / n;

    // E_hat(theta) = ||D theta - r||^2/n - ||u||^2/n + 2 k^T C^-1 k - k^T M2 k
    // with u = r + gamma Xn theta and k = X^T u / n affine in theta.
    Vec k0 = X.transpose() * r / n;
    Mat K = gamma * X.transpose() * Xn / n;
    Mat M2 = Cinv * XtX * Cinv;

    QuadraticLoss ql;
    ql.P = D.transpose() * D / n - gamma * gamma * Xn.transpose() * Xn / n +
           2.0 * K.transpose() * Cinv * K - K.transpose() * M2 * K;
    ql.q = D.transpose() * r / n + gamma * Xn.transpose() * r / n -
           2.0 * K.transpose() * Cinv * k0 + K.transpose() * M2 * k0;
    ql.c0 = 2.0 * k0.dot(Cinv * k0) - k0.dot(M2 * k0); // the ||r||^2/n terms cancel
    return ql;
}

} // namespace

FMinResult f_min_oracle(const FunctionClass& classF, const TupleDataset& tuples,
                        const StationaryPolicy& pi, real epsilon0, const EvalContext& ctx,
                        const std::vector<real>& lambda_grid) {
    FMinResult out;
    if (classF.is_finite()) {
        auto losses = corrected_losses(classF, nullptr, tuples, pi, ctx);
        const auto& members = classF.finite().members;
        real best_j = kInf;
        int best = -1;
        int minimizer = 0;
        for (size_t i = 1; i < losses.size(); ++i)
            if (losses[i] < losses[minimizer]) minimizer = static_cast<int>(i);
        for (size_t i = 0; i < members.size(); ++i) {
            if (losses[i] > epsilon0 && static_cast<int>(i) != minimizer) continue;
            real j = ctx.plug_in_return(members[i], pi);
            if (j < best_j - 1e-15) {
                best_j = j;
                best = static_cast<int>(i);
            }
        }
        out.f = members[best];
        out.j_value = best_j;
        out.e_hat = losses[best];
        return out;
    }
    if (!classF.is_linear()) throw std::invalid_argument("f_min_oracle needs finite or linear F");

    const auto& lin = classF.linear();
    std::vector<real> grid = lambda_grid;
    if (grid.empty())
        for (real l = 1.0 / 1024.0; l <= 4096.0; l *= 2.0) grid.push_back(l);

    QuadraticLoss ql = assemble_quadratic(lin.features, tuples, pi, ctx.gamma, ctx.n_actions);
    Vec v = Vec::Zero(lin.features.dim);
    for (int s = 0; s < ctx.n_states; ++s) v += ctx.init_dist[s] * lin.features.at_policy(s, pi);

    real best_e = -kInf;
    bool found = false;
    Vec fallback_theta;
    real fallback_e = 0.0, fallback_lambda = 0.0;
    for (real lambda : grid) {
        // minimize v^T theta + lambda E_hat(theta)
        Mat H = 2.0 * lambda * ql.P + 1e-12 * Mat::Identity(v.size(), v.size());
        Vec theta = H.ldlt().solve(2.0 * lambda * ql.q - v);
        real norm = theta.norm();
        if (norm > lin.coef_bound) theta *= lin.coef_bound / norm;
        real e = ql.at(theta);
        fallback_theta = theta;
        fallback_e = e;
        fallback_lambda = lambda;
        if (e <= epsilon0 && e > best_e) {
            best_e = e;
            out.f = value_from_flat(lin.features.features * theta, ctx.n_states, ctx.n_actions);
            out.e_hat = e;
            out.lambda = lambda;
            out.j_value = v.dot(theta);
            found = true;
        }
    }
    if (!found) {
        // no feasible lambda; report the largest-lambda solution with a warning
        out.f = value_from_flat(lin.features.features * fallback_theta, ctx.n_states,
                                ctx.n_actions);
        out.e_hat = fallback_e;
        out.lambda = fallback_lambda;
        out.j_value = v.dot(fallback_theta);
        out.feasible = false;
    }
    return out;
}

PspiResult pspi(const FunctionClass& classF, const TupleDataset& tuples, int K,
                std::optional<real> eta, real delta, const EvalContext& ctx,
                const std::vector<real>& lambda_grid) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    const real lr = eta ? *eta
                        : (1.0 - ctx.gamma) / ctx.v_max *
                              std::sqrt(std::log(static_cast<real>(ctx.n_actions)) / (2.0 * K));

    real m = 1.0;
    if (classF.is_finite()) m = static_cast<real>(classF.finite().members.size());
    const real epsilon0_stat = 2.0 * ctx.v_max * ctx.v_max *
                               std::log(std::max(m, 2.0) * K / delta) /
                               static_cast<real>(tuples.size());

    PspiResult out;
    StationaryPolicy pi = StationaryPolicy::uniform(ctx.n_states, ctx.n_actions);
    real pess_value = 0.0;
    for (int k = 1; k <= K; ++k) {
        out.iterates.push_back(pi);
        real eps0 = epsilon0_stat;
        if (classF.is_finite()) {
            auto losses = corrected_losses(classF, nullptr, tuples, pi, ctx);
            eps0 += *std::min_element(losses.begin(), losses.end());
        }
        FMinResult fm = f_min_oracle(classF, tuples, pi, eps0, ctx, lambda_grid);
        out.f_mins.push_back(fm.f);
        pess_value += fm.j_value;
        // mirror-descent step on every state
        Mat next = Mat::Zero(ctx.n_states, ctx.n_actions);
        for (int s = 0; s < ctx.n_states; ++s) {
            real mx = fm.f.values.row(s).maxCoeff();
            real z = 0.0;
            for (int a = 0; a < ctx.n_actions; ++a) {
                next(s, a) = pi.probs(s, a) * std::exp(lr * (fm.f.values(s, a) - mx));
                z += next(s, a);
            }
            next.row(s) /= z;
        }
        pi = StationaryPolicy{next};
    }

    MixturePolicy mix;
    for (const auto& it : out.iterates) mix.components.push_back(PolicyComponent{it});
    mix.weights = Vec::Constant(K, 1.0 / K);
    out.result.policy = mix;
    out.result.value_estimate.point = pess_value / K;
    out.result.trace["eta"] = lr;
    out.result.trace["epsilon0"] = epsilon0_stat;
    return out;
}

PeviResult pevi(const FeatureMap& phi, const TupleDataset& tuples, int K,
                std::optional<real> beta, real delta, const EvalContext& ctx, real ridge) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    const int d = phi.dim;
    const real n = static_cast<real>(tuples.size());
    const real b_scale =
        beta ? *beta : ctx.v_max * std::sqrt(d * std::log(n * d / delta));

    Mat gram = ridge * Mat::Identity(d, d); // sum phi phi^T + ridge I
    for (const Step& st : tuples.tuples) {
        Vec x = phi.features.row(st.state * ctx.n_actions + st.action).transpose();
        gram += x * x.transpose();
    }
    Mat gram_inv = gram.inverse();

    // bonus is data independent across iterations
    ValueFunction bonus = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    for (int s = 0; s < ctx.n_states; ++s)
        for (int a = 0; a < ctx.n_actions; ++a) {
            Vec x = phi.features.row(s * ctx.n_actions + a).transpose();
            bonus.values(s, a) = b_scale * std::sqrt(std::max(0.0, x.dot(gram_inv * x)));
        }

    PeviResult out;
    NonstationaryPolicy policy;
    ValueFunction fminus = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    for (int k = 1; k <= K; ++k) {
        Vec rhs = Vec::Zero(d);
        Vec vmaxed = fminus.values.rowwise().maxCoeff();
        for (const Step& st : tuples.tuples) {
            Vec x = phi.features.row(st.state * ctx.n_actions + st.action).transpose();
            rhs += x * (st.reward + ctx.gamma * vmaxed[st.next_state]);
        }
        Vec theta = gram_inv * rhs;
        ValueFunction fhat = value_from_flat(phi.features * theta, ctx.n_states, ctx.n_actions);
        ValueFunction next = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
        for (int s = 0; s < ctx.n_states; ++s)
            for (int a = 0; a < ctx.n_actions; ++a)
                next.values(s, a) = std::clamp(fhat.values(s, a) - bonus.values(s, a),
                                               -ctx.v_max, ctx.v_max);
        fminus = next;
        out.point_iterates.push_back(fhat);
        out.pessimistic_iterates.push_back(fminus);
        out.bonuses.push_back(bonus);
        policy.steps.push_back(greedy(fminus)); // steps[k-1] = pi_k
    }
    out.result.policy = policy;
    out.result.value_estimate.point = ctx.init_dist.dot(fminus.against_policy(policy.steps.back()));
    out.result.trace["beta"] = b_scale;
    return out;
}

real return_under_model(const TabularMDP& shared, const Mat& transition,
                        const StationaryPolicy& pi) {
    TabularMDP m = shared;
    m.transition = transition;
    return policy_return(m, pi);
}

OptResult model_pessimism(const ModelVersionSpace& vs, const TabularMDP& shared,
                          const std::vector<StationaryPolicy>& policies, PessimismMode mode,
                          const StationaryPolicy* pi_ref) {
    if (policies.empty()) throw std::invalid_argument("policy class is empty");
    if (mode == PessimismMode::Relative && !pi_ref)
        throw std::invalid_argument("relative mode needs a reference policy");

    std::vector<real> ref_values(vs.candidates.size(), 0.0);
    if (mode == PessimismMode::Relative)
        for (size_t c = 0; c < vs.candidates.size(); ++c)
            if (vs.included[c]) ref_values[c] = return_under_model(shared, vs.candidates[c], *pi_ref);

    real best = -kInf;
    int chosen = 0;
    for (size_t i = 0; i < policies.size(); ++i) {
        real worst = kInf;
        for (size_t c = 0; c < vs.candidates.size(); ++c) {
            if (!vs.included[c]) continue;
            real v = return_under_model(shared, vs.candidates[c], policies[i]) - ref_values[c];
            worst = std::min(worst, v);
        }
        if (worst > best + 1e-15) {
            best = worst;
            chosen = static_cast<int>(i);
        }
    }
    OptResult out;
    out.policy = policies[chosen];
    out.value_estimate.point = best;
    out.trace["chosen_index"] = static_cast<real>(chosen);
    out.trace["vs_size"] = static_cast<real>(
        std::count(vs.included.begin(), vs.included.end(), static_cast<char>(1)));
    return out;
}

OptResult model_pessimism(const std::vector<Mat>& candidates, const TabularMDP& shared,
                          const std::vector<StationaryPolicy>& policies,
                          const TupleDataset& tuples, real delta, PessimismMode mode,
                          const StationaryPolicy* pi_ref, real c) {
    ModelVersionSpace vs =
        model_version_space(candidates, tuples, delta, shared.n_states, shared.n_actions, c);
    return model_pessimism(vs, shared, policies, mode, pi_ref);
}

} // namespace offrl
