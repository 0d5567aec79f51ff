#include "offrl/ope.hpp"

#include "offrl/dp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace offrl {

namespace {

constexpr real kInf = std::numeric_limits<real>::infinity();

Vec flat_of(const Mat& m) {
    Vec v(m.rows() * m.cols());
    for (int s = 0; s < m.rows(); ++s)
        for (int a = 0; a < m.cols(); ++a) v[s * m.cols() + a] = m(s, a);
    return v;
}

/// Regression targets r + gamma f(s', pi) for every tuple.
std::vector<real> backup_targets(const TupleDataset& tuples, const ValueFunction& f,
                                 const StationaryPolicy& pi, real gamma) {
    std::vector<real> y(tuples.tuples.size());
    Vec fpi = f.against_policy(pi);
    for (size_t i = 0; i < tuples.tuples.size(); ++i) {
        const Step& st = tuples.tuples[i];
        y[i] = st.reward + gamma * fpi[st.next_state];
    }
    return y;
}

std::vector<real> optimality_targets(const TupleDataset& tuples, const ValueFunction& f,
                                     real gamma) {
    std::vector<real> y(tuples.tuples.size());
    Vec fmax = f.values.rowwise().maxCoeff();
    for (size_t i = 0; i < tuples.tuples.size(); ++i) {
        const Step& st = tuples.tuples[i];
        y[i] = st.reward + gamma * fmax[st.next_state];
    }
    return y;
}

real mse_against(const ValueFunction& f, const TupleDataset& tuples, const std::vector<real>& y) {
    real loss = 0.0;
    for (size_t i = 0; i < tuples.tuples.size(); ++i) {
        const Step& st = tuples.tuples[i];
        real d = f.values(st.state, st.action) - y[i];
        loss += d * d;
    }
    return loss / static_cast<real>(tuples.tuples.size());
}

} // namespace

Estimate is_estimate(const TrajectoryDataset& td, const StationaryPolicy& pi,
                     const StationaryPolicy& pi_d, ISMode mode, real gamma) {
    Estimate out;
    real sum = 0.0, wsum = 0.0, wmax = 0.0;
    for (const Trajectory& traj : td.trajectories) {
        real w = 1.0;
        real g = 0.0, disc = 1.0;
        for (const Step& st : traj.steps) {
            real pd = pi_d.probs(st.state, st.action);
            if (pd <= 0.0)
                throw std::runtime_error("behavior policy has zero probability on logged action (s=" +
                                         std::to_string(st.state) + ", a=" +
                                         std::to_string(st.action) + ")");
            w *= pi.probs(st.state, st.action) / pd;
            g += disc * st.reward;
            disc *= gamma;
        }
        sum += w * g;
        wsum += w;
        wmax = std::max(wmax, w);
    }
    const real n = static_cast<real>(td.trajectories.size());
    out.point = mode == ISMode::Plain ? sum / n : (wsum > 0.0 ? sum / wsum : 0.0);
    out.diagnostics["max_weight"] = wmax;
    out.diagnostics["mean_weight"] = wsum / n;
    return out;
}

FqeResult fqe(const FunctionClass& cls, const TupleDataset& tuples, const StationaryPolicy& pi,
              int K, real ridge, const EvalContext& ctx) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    FqeResult out;
    ValueFunction f = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    real max_change = 0.0, last_change = 0.0;
    for (int k = 1; k <= K; ++k) {
        auto y = backup_targets(tuples, f, pi, ctx.gamma);
        ValueFunction next = fit_least_squares(cls, tuples, y, ridge, ctx.n_states, ctx.n_actions).f;
        last_change = (next.values - f.values).cwiseAbs().maxCoeff();
        max_change = std::max(max_change, last_change);
        f = std::move(next);
        out.iterates.push_back(f);
    }
    out.estimate.point = ctx.plug_in_return(f, pi);
    out.estimate.diagnostics["iterations"] = static_cast<real>(K);
    out.estimate.diagnostics["last_sup_change"] = last_change;
    out.estimate.diagnostics["max_sup_change"] = max_change;
    out.estimate.diagnostics["final_sup_norm"] = f.sup_norm();
    return out;
}

FqeResult fqe_population(const FunctionClass& cls, const TabularMDP& mdp,
                         const StationaryPolicy& pi, const OccupancyMeasure& d_D, int K,
                         const ValueFunction* f0) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    FqeResult out;
    ValueFunction f = f0 ? *f0 : ValueFunction::zeros(mdp.n_states, mdp.n_actions);
    for (int k = 1; k <= K; ++k) {
        f = project(cls, bellman_backup(mdp, f, pi), d_D);
        out.iterates.push_back(f);
    }
    out.estimate.point = mdp.init_dist.dot(f.against_policy(pi));
    out.estimate.diagnostics["iterations"] = static_cast<real>(K);
    out.estimate.diagnostics["final_sup_norm"] = f.sup_norm();
    return out;
}

std::vector<real> corrected_losses(const FunctionClass& classF, const FunctionClass* classG,
                                   const TupleDataset& tuples, const StationaryPolicy& pi,
                                   const EvalContext& ctx, real ridge) {
    if (!classF.is_finite()) throw std::invalid_argument("corrected_losses needs a finite F");
    const auto& members = classF.finite().members;
    const FunctionClass& G = classG ? *classG : classF;
    std::vector<real> out(members.size());

    // At gamma = 0 the regression targets do not depend on f, so the helper
    // fit is shared across members.
    if (ctx.gamma == 0.0) {
        auto y = backup_targets(tuples, members.front(), pi, 0.0);
        real floor;
        if (G.is_finite()) {
            floor = kInf;
            for (const auto& g : G.finite().members) floor = std::min(floor, mse_against(g, tuples, y));
        } else {
            floor = mse_against(fit_least_squares(G, tuples, y, ridge, ctx.n_states, ctx.n_actions).f,
                                tuples, y);
        }
        for (size_t i = 0; i < members.size(); ++i)
            out[i] = mse_against(members[i], tuples, y) - floor;
        return out;
    }

    for (size_t i = 0; i < members.size(); ++i) {
        auto y = backup_targets(tuples, members[i], pi, ctx.gamma);
        real raw = mse_against(members[i], tuples, y);
        real floor;
        if (G.is_finite()) {
            floor = kInf;
            for (const auto& g : G.finite().members) floor = std::min(floor, mse_against(g, tuples, y));
        } else {
            floor = mse_against(fit_least_squares(G, tuples, y, ridge, ctx.n_states, ctx.n_actions).f,
                                tuples, y);
        }
        out[i] = raw - floor;
    }
    return out;
}

BrmResult brm(const FunctionClass& classF, const FunctionClass* classG,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx,
              real ridge) {
    BrmResult out;
    if (classF.is_finite()) {
        auto losses = corrected_losses(classF, classG, tuples, pi, ctx, ridge);
        size_t best = 0;
        for (size_t i = 1; i < losses.size(); ++i)
            if (losses[i] < losses[best] - 1e-15) best = i;
        out.f = classF.finite().members[best];
        out.estimate.point = ctx.plug_in_return(out.f, pi);
        out.estimate.diagnostics["e_hat"] = losses[best];
        out.estimate.diagnostics["member_index"] = static_cast<real>(best);
        return out;
    }
    if (!classF.is_linear())
        throw std::invalid_argument("brm needs a finite or linear class");
    // Linear minimax BRM coincides with LSTDQ.
    LstdqResult ls = lstdq(classF.linear().features, tuples, pi, ridge, ctx);
    const Mat& phi = classF.linear().features.features;
    Vec flat = phi * ls.theta;
    out.f = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
    for (int s = 0; s < ctx.n_states; ++s)
        for (int a = 0; a < ctx.n_actions; ++a)
            out.f.values(s, a) = flat[s * ctx.n_actions + a];
    out.estimate = ls.estimate;
    auto y = backup_targets(tuples, out.f, pi, ctx.gamma);
    real raw = mse_against(out.f, tuples, y);
    real floor = mse_against(
        fit_least_squares(classF, tuples, y, ridge, ctx.n_states, ctx.n_actions).f, tuples, y);
    out.estimate.diagnostics["e_hat"] = raw - floor;
    return out;
}

LstdqResult lstdq(const FeatureMap& phi, const TupleDataset& tuples, const StationaryPolicy& pi,
                  real ridge, const EvalContext& ctx) {
    const int d = phi.dim;
    const int n = tuples.size();
    Mat A = Mat::Zero(d, d);
    Vec B = Vec::Zero(d);
    for (const Step& st : tuples.tuples) {
        Vec x = phi.features.row(st.state * ctx.n_actions + st.action).transpose();
        Vec xn = Vec::Zero(d);
        for (int a2 = 0; a2 < ctx.n_actions; ++a2)
            xn += pi.probs(st.next_state, a2) *
                  phi.features.row(st.next_state * ctx.n_actions + a2).transpose();
        A += x * (x - ctx.gamma * xn).transpose();
        B += x * st.reward;
    }
    A /= static_cast<real>(n);
    B /= static_cast<real>(n);
    A += ridge * Mat::Identity(d, d);

    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    real sigma_min = svd.singularValues().minCoeff();
    if (sigma_min < 1e-10)
        throw std::runtime_error("LSTDQ matrix is ill conditioned (sigma_min = " +
                                 std::to_string(sigma_min) + "); increase ridge");
    LstdqResult out;
    out.theta = svd.solve(B);

    Vec v0 = Vec::Zero(d);
    for (int s = 0; s < ctx.n_states; ++s) v0 += ctx.init_dist[s] * phi.at_policy(s, pi);
    out.estimate.point = v0.dot(out.theta);
    out.estimate.diagnostics["sigma_min_A"] = sigma_min;
    return out;
}

namespace {

/// Empirical L_q(w, f) = (1/(1-gamma)) mean[ w (f - r - gamma f(s',pi)) ].
real empirical_lq(const WeightFunction& w, const ValueFunction& f, const TupleDataset& tuples,
                  const StationaryPolicy& pi, real gamma) {
    Vec fpi = f.against_policy(pi);
    real total = 0.0;
    for (const Step& st : tuples.tuples)
        total += w.values(st.state, st.action) *
                 (f.values(st.state, st.action) - st.reward - gamma * fpi[st.next_state]);
    return total / (static_cast<real>(tuples.size()) * (1.0 - gamma));
}

/// Empirical L_w(w, f) = E_{d0}[f(s,pi)] + mean[ w (gamma f(s',pi) - f(s,a)) ]/(1-gamma).
real empirical_lw(const WeightFunction& w, const ValueFunction& f, const TupleDataset& tuples,
                  const StationaryPolicy& pi, real gamma, const Vec& init_dist) {
    Vec fpi = f.against_policy(pi);
    real head = init_dist.dot(fpi);
    real total = 0.0;
    for (const Step& st : tuples.tuples)
        total += w.values(st.state, st.action) *
                 (gamma * fpi[st.next_state] - f.values(st.state, st.action));
    return head + total / (static_cast<real>(tuples.size()) * (1.0 - gamma));
}

std::vector<WeightFunction> weights_of(const FunctionClass& classW) {
    if (!classW.is_finite())
        throw std::invalid_argument("weight class must be finite for the enumeration path");
    std::vector<WeightFunction> ws;
    for (const auto& m : classW.finite().members) ws.push_back(WeightFunction{m.values});
    return ws;
}

} // namespace

MqlResult mql(const FunctionClass& classF, const FunctionClass& classW,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx) {
    MqlResult out;
    if (classF.is_linear() && classW.is_linear()) {
        // Linear/linear minimax reduces to LSTDQ on the shared features.
        LstdqResult ls = lstdq(classF.linear().features, tuples, pi, 1e-10, ctx);
        const Mat& phi = classF.linear().features.features;
        Vec flat = phi * ls.theta;
        out.f = ValueFunction::zeros(ctx.n_states, ctx.n_actions);
        for (int s = 0; s < ctx.n_states; ++s)
            for (int a = 0; a < ctx.n_actions; ++a)
                out.f.values(s, a) = flat[s * ctx.n_actions + a];
        out.estimate = ls.estimate;
        return out;
    }
    if (!classF.is_finite()) throw std::invalid_argument("mql needs finite or linear classes");
    auto ws = weights_of(classW);
    real best = kInf;
    size_t best_i = 0;
    for (size_t i = 0; i < classF.finite().members.size(); ++i) {
        real worst = 0.0;
        for (const auto& w : ws)
            worst = std::max(worst,
                             std::abs(empirical_lq(w, classF.finite().members[i], tuples, pi, ctx.gamma)));
        if (worst < best - 1e-15) {
            best = worst;
            best_i = i;
        }
    }
    out.f = classF.finite().members[best_i];
    out.estimate.point = ctx.plug_in_return(out.f, pi);
    out.estimate.diagnostics["minimax_loss"] = best;
    out.estimate.diagnostics["member_index"] = static_cast<real>(best_i);
    return out;
}

MwlResult mwl(const FunctionClass& classW, const FunctionClass& classF,
              const TupleDataset& tuples, const StationaryPolicy& pi, const EvalContext& ctx) {
    MwlResult out;
    if (classW.is_linear() && classF.is_linear()) {
        // Dual of the LSTDQ reduction: w = phi^T z with A^T z = (1-gamma) v0.
        const FeatureMap& phi = classW.linear().features;
        const int d = phi.dim;
        Mat A = Mat::Zero(d, d);
        real n = static_cast<real>(tuples.size());
        for (const Step& st : tuples.tuples) {
            Vec x = phi.features.row(st.state * ctx.n_actions + st.action).transpose();
            Vec xn = Vec::Zero(d);
            for (int a2 = 0; a2 < ctx.n_actions; ++a2)
                xn += pi.probs(st.next_state, a2) *
                      phi.features.row(st.next_state * ctx.n_actions + a2).transpose();
            A += x * (x - ctx.gamma * xn).transpose();
        }
        A /= n;
        A += 1e-10 * Mat::Identity(d, d);
        Vec v0 = Vec::Zero(d);
        for (int s = 0; s < ctx.n_states; ++s) v0 += ctx.init_dist[s] * phi.at_policy(s, pi);
        Vec z = A.transpose().partialPivLu().solve((1.0 - ctx.gamma) * v0);
        out.w.values = Mat::Zero(ctx.n_states, ctx.n_actions);
        for (int s = 0; s < ctx.n_states; ++s)
            for (int a = 0; a < ctx.n_actions; ++a)
                out.w.values(s, a) = phi.features.row(s * ctx.n_actions + a).dot(z);
    } else {
        auto ws = weights_of(classW);
        if (!classF.is_finite()) throw std::invalid_argument("mwl needs finite or linear classes");
        real best = kInf;
        size_t best_i = 0;
        for (size_t i = 0; i < ws.size(); ++i) {
            real worst = 0.0;
            for (const auto& f : classF.finite().members)
                worst = std::max(worst, std::abs(empirical_lw(ws[i], f, tuples, pi, ctx.gamma,
                                                              ctx.init_dist)));
            if (worst < best - 1e-15) {
                best = worst;
                best_i = i;
            }
        }
        out.w = ws[best_i];
        out.estimate.diagnostics["minimax_loss"] = best;
        out.estimate.diagnostics["member_index"] = static_cast<real>(best_i);
    }
    real total = 0.0;
    for (const Step& st : tuples.tuples) total += out.w.values(st.state, st.action) * st.reward;
    out.estimate.point = total / (static_cast<real>(tuples.size()) * (1.0 - ctx.gamma));
    return out;
}

real population_lq(const WeightFunction& w, const ValueFunction& f, const TabularMDP& mdp,
                   const StationaryPolicy& pi, const OccupancyMeasure& d_D) {
    Mat residual = f.values - bellman_backup(mdp, f, pi).values;
    return (d_D.dist.array() * w.values.array() * residual.array()).sum() / (1.0 - mdp.gamma);
}

real population_lw(const WeightFunction& w, const ValueFunction& f, const TabularMDP& mdp,
                   const StationaryPolicy& pi, const OccupancyMeasure& d_D) {
    Vec fpi = f.against_policy(pi);
    real head = mdp.init_dist.dot(fpi);
    Vec next = mdp.transition * fpi; // E_{s'}[f(s', pi)] per (s,a)
    real total = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            total += d_D.dist(s, a) * w.values(s, a) *
                     (mdp.gamma * next[mdp.sa(s, a)] - f.values(s, a));
    return head + total / (1.0 - mdp.gamma);
}

MleResult mle_model_finite(const std::vector<Mat>& candidates, const TupleDataset& tuples,
                           int n_states, int n_actions, const Mat* truth) {
    if (candidates.empty()) throw std::invalid_argument("need at least one candidate model");
    MleResult out;
    out.log_losses.resize(candidates.size());
    real best = kInf;
    for (size_t c = 0; c < candidates.size(); ++c) {
        real loss = 0.0;
        for (const Step& st : tuples.tuples) {
            real p = candidates[c](st.state * n_actions + st.action, st.next_state);
            if (p <= 0.0) {
                loss = kInf;
                break;
            }
            loss -= std::log(p);
        }
        if (std::isfinite(loss)) loss /= static_cast<real>(tuples.size());
        out.log_losses[c] = loss;
        if (loss < best) {
            best = loss;
            out.argmin_index = static_cast<int>(c);
        }
    }
    if (out.argmin_index < 0)
        throw std::runtime_error("every candidate model has zero likelihood on the data");
    out.transition = candidates[out.argmin_index];
    if (truth) {
        real worst = 0.0;
        for (int i = 0; i < truth->rows(); ++i)
            worst = std::max(worst, (out.transition.row(i) - truth->row(i)).cwiseAbs().sum());
        out.diagnostics["max_row_l1_error"] = worst;
    }
    return out;
}

MleResult mle_model_tabular(const TupleDataset& tuples, int n_states, int n_actions,
                            const Mat* truth) {
    MleResult out;
    Mat counts = Mat::Zero(n_states * n_actions, n_states);
    for (const Step& st : tuples.tuples)
        counts(st.state * n_actions + st.action, st.next_state) += 1.0;
    out.transition = Mat::Zero(n_states * n_actions, n_states);
    for (int i = 0; i < counts.rows(); ++i) {
        real total = counts.row(i).sum();
        if (total > 0.0)
            out.transition.row(i) = counts.row(i) / total;
        else
            out.transition.row(i).setConstant(1.0 / n_states); // unseen pair: uniform
    }
    if (truth) {
        real worst = 0.0;
        for (int i = 0; i < truth->rows(); ++i)
            worst = std::max(worst, (out.transition.row(i) - truth->row(i)).cwiseAbs().sum());
        out.diagnostics["max_row_l1_error"] = worst;
    }
    return out;
}

VersionSpace version_space(const FunctionClass& classF, const TupleDataset& tuples,
                           const StationaryPolicy& pi, real delta, const EvalContext& ctx,
                           int n_policies, real c) {
    if (!classF.is_finite()) throw std::invalid_argument("version_space needs a finite class");
    VersionSpace vs;
    vs.base_class = classF;
    vs.policy = pi;
    vs.losses = corrected_losses(classF, nullptr, tuples, pi, ctx);

    const real n = static_cast<real>(tuples.size());
    const real m = static_cast<real>(classF.finite().members.size());
    real min_loss = kInf;
    for (size_t i = 0; i < vs.losses.size(); ++i)
        if (vs.losses[i] < min_loss) {
            min_loss = vs.losses[i];
            vs.minimizer_index = static_cast<int>(i);
        }
    vs.threshold = c * ctx.v_max * ctx.v_max * std::log(m * n_policies / delta) / n + min_loss;
    vs.member_flags.resize(vs.losses.size());
    for (size_t i = 0; i < vs.losses.size(); ++i)
        vs.member_flags[i] = vs.losses[i] <= vs.threshold ? 1 : 0;
    vs.member_flags[vs.minimizer_index] = 1;
    return vs;
}

Estimate vs_interval(const VersionSpace& vs, const EvalContext& ctx) {
    Estimate out;
    real lo = kInf, hi = -kInf;
    const auto& members = vs.base_class.finite().members;
    for (size_t i = 0; i < members.size(); ++i) {
        if (!vs.member_flags[i]) continue;
        real j = ctx.plug_in_return(members[i], vs.policy);
        lo = std::min(lo, j);
        hi = std::max(hi, j);
    }
    out.lower = lo;
    out.upper = hi;
    out.point = ctx.plug_in_return(members[vs.minimizer_index], vs.policy);
    out.diagnostics["threshold"] = vs.threshold;
    out.diagnostics["vs_size"] = static_cast<real>(vs.count());
    return out;
}

ModelVersionSpace model_version_space(const std::vector<Mat>& candidates,
                                      const TupleDataset& tuples, real delta, int n_states,
                                      int n_actions, real c) {
    MleResult mle = mle_model_finite(candidates, tuples, n_states, n_actions);
    ModelVersionSpace out;
    out.candidates = candidates;
    out.log_losses = mle.log_losses;
    out.mle_index = mle.argmin_index;
    const real n = static_cast<real>(tuples.size());
    out.threshold = mle.log_losses[mle.argmin_index] +
                    c * std::log(static_cast<real>(candidates.size()) / delta) / n;
    out.included.resize(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i)
        out.included[i] = out.log_losses[i] <= out.threshold ? 1 : 0;
    out.included[out.mle_index] = 1;
    return out;
}

} // namespace offrl
