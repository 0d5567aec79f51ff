#include "offrl/function_class.hpp"

#include "offrl/dp.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <map>

namespace offrl {

FeatureMap FeatureMap::tabular_indicators(int n_states, int n_actions) {
    FeatureMap fm;
    fm.dim = n_states * n_actions;
    fm.features = Mat::Identity(fm.dim, fm.dim);
    fm.norm_bound = 1.0;
    return fm;
}

Partition Partition::identity(int n_states, int n_actions) {
    Partition p;
    p.n_cells = n_states * n_actions;
    p.cell_of.resize(p.n_cells);
    for (int i = 0; i < p.n_cells; ++i) p.cell_of[i] = i;
    return p;
}

namespace {

ValueFunction from_flat(const Vec& flat, int n_states, int n_actions) {
    ValueFunction f = ValueFunction::zeros(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) f.values(s, a) = flat[s * n_actions + a];
    return f;
}

Vec to_flat(const ValueFunction& f) {
    const int S = static_cast<int>(f.values.rows());
    const int A = static_cast<int>(f.values.cols());
    Vec flat(S * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) flat[s * A + a] = f.values(s, a);
    return flat;
}

Vec clip_to_ball(const Vec& theta, real bound) {
    real norm = theta.norm();
    if (norm <= bound || norm == 0.0) return theta;
    return theta * (bound / norm);
}

} // namespace

FitResult fit_least_squares(const FunctionClass& cls, const TupleDataset& tuples,
                            const std::vector<real>& targets, real ridge,
                            int n_states, int n_actions) {
    if (targets.size() != tuples.tuples.size())
        throw std::invalid_argument("targets size must match dataset size");
    const int n = tuples.size();
    FitResult out;

    if (cls.is_finite()) {
        const auto& members = cls.finite().members;
        if (members.empty()) throw std::invalid_argument("finite class is empty");
        real best = std::numeric_limits<real>::infinity();
        int best_i = 0;
        for (size_t i = 0; i < members.size(); ++i) {
            real loss = 0.0;
            for (int k = 0; k < n; ++k) {
                const Step& st = tuples.tuples[k];
                real d = members[i].values(st.state, st.action) - targets[k];
                loss += d * d;
            }
            if (loss < best - 1e-15) {
                best = loss;
                best_i = static_cast<int>(i);
            }
        }
        out.f = members[best_i];
        out.member_index = best_i;
        return out;
    }

    if (cls.is_linear()) {
        const auto& lin = cls.linear();
        const int d = lin.features.dim;
        Mat gram = Mat::Zero(d, d);
        Vec rhs = Vec::Zero(d);
        for (int k = 0; k < n; ++k) {
            const Step& st = tuples.tuples[k];
            Vec phi = lin.features.features.row(st.state * n_actions + st.action).transpose();
            gram += phi * phi.transpose();
            rhs += phi * targets[k];
        }
        Mat A = gram + ridge * Mat::Identity(d, d);
        Eigen::FullPivLU<Mat> lu(A);
        if (ridge == 0.0 && !lu.isInvertible())
            throw std::invalid_argument("singular gram matrix: pass ridge > 0");
        Vec theta = clip_to_ball(lu.solve(rhs), lin.coef_bound);
        out.coefficients = theta;
        out.f = from_flat(lin.features.features * theta, n_states, n_actions);
        return out;
    }

    const auto& pw = cls.piecewise();
    Vec sums = Vec::Zero(pw.partition.n_cells);
    Vec counts = Vec::Zero(pw.partition.n_cells);
    for (int k = 0; k < n; ++k) {
        const Step& st = tuples.tuples[k];
        int cell = pw.partition.cell_of[st.state * n_actions + st.action];
        sums[cell] += targets[k];
        counts[cell] += 1.0;
    }
    Vec flat(n_states * n_actions);
    for (int i = 0; i < n_states * n_actions; ++i) {
        int cell = pw.partition.cell_of[i];
        flat[i] = counts[cell] > 0.0 ? sums[cell] / counts[cell] : 0.0;
    }
    out.f = from_flat(flat, n_states, n_actions);
    return out;
}

ValueFunction project(const FunctionClass& cls, const ValueFunction& f,
                      const OccupancyMeasure& weighting) {
    const int S = static_cast<int>(f.values.rows());
    const int A = static_cast<int>(f.values.cols());
    Vec w = to_flat(ValueFunction{weighting.dist});
    Vec target = to_flat(f);

    if (cls.is_finite()) {
        const auto& members = cls.finite().members;
        real best = std::numeric_limits<real>::infinity();
        int best_i = 0;
        for (size_t i = 0; i < members.size(); ++i) {
            Vec diff = to_flat(members[i]) - target;
            real loss = diff.cwiseProduct(diff).dot(w);
            if (loss < best - 1e-15) {
                best = loss;
                best_i = static_cast<int>(i);
            }
        }
        return members[best_i];
    }

    if (cls.is_linear()) {
        const auto& lin = cls.linear();
        const Mat& phi = lin.features.features;
        Mat gram = phi.transpose() * w.asDiagonal() * phi;
        Vec rhs = phi.transpose() * w.cwiseProduct(target);
        Eigen::FullPivLU<Mat> lu(gram);
        if (!lu.isInvertible())
            throw std::invalid_argument("weighted gram matrix singular: weighting does not span the class");
        Vec theta = clip_to_ball(lu.solve(rhs), lin.coef_bound);
        return from_flat(phi * theta, S, A);
    }

    const auto& pw = cls.piecewise();
    Vec wsum = Vec::Zero(pw.partition.n_cells);
    Vec wavg = Vec::Zero(pw.partition.n_cells);
    Vec usum = Vec::Zero(pw.partition.n_cells);
    Vec uavg = Vec::Zero(pw.partition.n_cells);
    for (int i = 0; i < S * A; ++i) {
        int cell = pw.partition.cell_of[i];
        wsum[cell] += w[i];
        wavg[cell] += w[i] * target[i];
        usum[cell] += 1.0;
        uavg[cell] += target[i];
    }
    Vec flat(S * A);
    for (int i = 0; i < S * A; ++i) {
        int cell = pw.partition.cell_of[i];
        flat[i] = wsum[cell] > 0.0 ? wavg[cell] / wsum[cell] : uavg[cell] / usum[cell];
    }
    return from_flat(flat, S, A);
}

namespace {

ValueFunction exact_backup(const TabularMDP& mdp, const ValueFunction& f, const BackupTarget& t) {
    if (const auto* pi = std::get_if<StationaryPolicy>(&t)) return bellman_backup(mdp, f, *pi);
    return bellman_backup_optimal(mdp, f);
}

real min_gap_to_class(const FunctionClass& G, const ValueFunction& tf) {
    if (G.is_finite()) {
        real best = std::numeric_limits<real>::infinity();
        for (const auto& g : G.finite().members)
            best = std::min(best, (g.values - tf.values).cwiseAbs().maxCoeff());
        return best;
    }
    if (G.is_linear()) {
        // Sup-norm of the residual after least-squares projection onto the span.
        const Mat& phi = G.linear().features.features;
        Vec target = to_flat(tf);
        Vec theta = (phi.transpose() * phi).ldlt().solve(phi.transpose() * target);
        return (phi * theta - target).cwiseAbs().maxCoeff();
    }
    const auto& pw = G.piecewise();
    // Best piecewise-constant sup-norm approx: per-cell midrange.
    Vec lo = Vec::Constant(pw.partition.n_cells, std::numeric_limits<real>::infinity());
    Vec hi = Vec::Constant(pw.partition.n_cells, -std::numeric_limits<real>::infinity());
    Vec target = to_flat(tf);
    for (int i = 0; i < target.size(); ++i) {
        int cell = pw.partition.cell_of[i];
        lo[cell] = std::min(lo[cell], target[i]);
        hi[cell] = std::max(hi[cell], target[i]);
    }
    real gap = 0.0;
    for (int c = 0; c < pw.partition.n_cells; ++c)
        if (hi[c] >= lo[c]) gap = std::max(gap, (hi[c] - lo[c]) / 2.0);
    return gap;
}

} // namespace

CompletenessReport check_completeness(const FunctionClass& classF, const FunctionClass& classG,
                                      const TabularMDP& mdp, const BackupTarget& target,
                                      real tol) {
    CompletenessReport rep;

    ValueFunction qpi;
    bool have_q = false;
    if (const auto* pi = std::get_if<StationaryPolicy>(&target)) {
        qpi = solve_q(mdp, *pi);
        have_q = true;
    } else {
        qpi = solve_q_optimal(mdp, 1e-12);
        have_q = true;
    }

    if (classF.is_finite() || classF.is_piecewise()) {
        std::vector<ValueFunction> members;
        if (classF.is_finite()) {
            members = classF.finite().members;
        } else {
            throw std::invalid_argument(
                "check_completeness supports finite or linear F (enumerate piecewise classes explicitly)");
        }
        real gap = 0.0;
        real rgap = std::numeric_limits<real>::infinity();
        for (const auto& f : members) {
            gap = std::max(gap, min_gap_to_class(classG, exact_backup(mdp, f, target)));
            if (have_q) rgap = std::min(rgap, (f.values - qpi.values).cwiseAbs().maxCoeff());
        }
        rep.completeness_gap = gap;
        rep.realizability_gap = rgap;
    } else {
        // Linear F: T^pi (Phi theta) = R + gamma P_pi Phi theta is affine in
        // theta. The residual against span(Phi) is r0 + M theta; its sup norm
        // over the coefficient ball has the exact closed form below.
        const auto* pi = std::get_if<StationaryPolicy>(&target);
        if (!pi)
            throw std::invalid_argument("linear completeness check supports policy targets only");
        const auto& lin = classF.linear();
        const Mat& phi = lin.features.features;
        const int nsa = mdp.n_sa();
        const int d = lin.features.dim;

        Mat ppi(nsa, nsa); // P_pi over flattened pairs
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    for (int a2 = 0; a2 < mdp.n_actions; ++a2)
                        ppi(mdp.sa(s, a), mdp.sa(s2, a2)) =
                            mdp.transition(mdp.sa(s, a), s2) * pi->probs(s2, a2);

        Vec r(nsa);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) r[mdp.sa(s, a)] = mdp.reward(s, a);

        Mat proj = phi * (phi.transpose() * phi).ldlt().solve(phi.transpose());
        Mat resid_op = Mat::Identity(nsa, nsa) - proj;
        Vec r0 = resid_op * r;
        Mat M = resid_op * (mdp.gamma * ppi * phi); // nsa x d

        real gap = 0.0;
        for (int i = 0; i < nsa; ++i)
            gap = std::max(gap, std::abs(r0[i]) + lin.coef_bound * M.row(i).norm());
        rep.completeness_gap = gap;

        Vec q = to_flat(qpi);
        Vec theta_q = (phi.transpose() * phi).ldlt().solve(phi.transpose() * q);
        theta_q = clip_to_ball(theta_q, lin.coef_bound);
        rep.realizability_gap = (phi * theta_q - q).cwiseAbs().maxCoeff();
    }

    rep.complete = rep.completeness_gap <= tol;
    return rep;
}

LowRankMDP gen_low_rank_mdp(int d, int n_states, int n_actions, real gamma, uint64_t seed,
                            real r_max) {
    if (d > n_states * n_actions)
        throw std::invalid_argument("rank cannot exceed the number of state-action pairs");
    Rng rng(mix64(seed));
    const int nsa = n_states * n_actions;

    // phi rows on the d-simplex; psi rows are next-state distributions.
    Mat phi(nsa, d);
    for (int i = 0; i < nsa; ++i) {
        real total = 0.0;
        for (int j = 0; j < d; ++j) {
            real e = -std::log(1.0 - rng.uniform01());
            phi(i, j) = e;
            total += e;
        }
        phi.row(i) /= total;
    }
    Mat psi(d, n_states);
    for (int j = 0; j < d; ++j) {
        real total = 0.0;
        for (int s = 0; s < n_states; ++s) {
            real e = -std::log(1.0 - rng.uniform01());
            psi(j, s) = e;
            total += e;
        }
        psi.row(j) /= total;
    }
    Vec theta_r(d);
    for (int j = 0; j < d; ++j) theta_r[j] = rng.uniform(0.0, r_max);

    LowRankMDP out;
    out.mdp.n_states = n_states;
    out.mdp.n_actions = n_actions;
    out.mdp.gamma = gamma;
    out.mdp.r_max = r_max;
    out.mdp.transition = phi * psi;
    out.mdp.reward = Mat::Zero(n_states, n_actions);
    Vec rflat = phi * theta_r;
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) out.mdp.reward(s, a) = rflat[s * n_actions + a];
    Vec d0(n_states);
    real total = 0.0;
    for (int s = 0; s < n_states; ++s) {
        d0[s] = -std::log(1.0 - rng.uniform01());
        total += d0[s];
    }
    out.mdp.init_dist = d0 / total;
    out.mdp.validate();

    out.phi_star.dim = d;
    out.phi_star.features = phi;
    out.phi_star.norm_bound = 1.0;
    out.psi_star = psi;
    out.theta_r = theta_r;
    return out;
}

Partition bvft_partition(const ValueFunction& f1, const ValueFunction& f2, real eps, real v_max) {
    if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
    const int S = static_cast<int>(f1.values.rows());
    const int A = static_cast<int>(f1.values.cols());
    if (f1.values.minCoeff() < 0.0 || f1.values.maxCoeff() > v_max ||
        f2.values.minCoeff() < 0.0 || f2.values.maxCoeff() > v_max)
        throw std::invalid_argument("candidate values must lie in [0, v_max]");

    const int levels = static_cast<int>(std::ceil(v_max / eps)) + 1;
    auto level_of = [&](real v) {
        int g = static_cast<int>(std::floor(v / eps));
        return std::min(g, levels - 1);
    };
    std::map<std::pair<int, int>, int> ids;
    Partition p;
    p.cell_of.resize(S * A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            std::pair<int, int> key{level_of(f1.values(s, a)), level_of(f2.values(s, a))};
            auto [it, inserted] = ids.try_emplace(key, static_cast<int>(ids.size()));
            p.cell_of[s * A + a] = it->second;
        }
    }
    p.n_cells = static_cast<int>(ids.size());
    return p;
}

AggregatedMDP aggregate_mdp(const TabularMDP& mdp, const Partition& partition,
                            const OccupancyMeasure& d_D) {
    AggregatedMDP out;
    out.base = mdp;
    out.partition = partition;

    const int nsa = mdp.n_sa();
    Vec cell_mass = Vec::Zero(partition.n_cells);
    Vec cell_size = Vec::Zero(partition.n_cells);
    Vec w = Vec::Zero(nsa);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            int i = mdp.sa(s, a);
            w[i] = d_D.dist(s, a);
            cell_mass[partition.cell_of[i]] += w[i];
            cell_size[partition.cell_of[i]] += 1.0;
        }

    out.weights = Mat::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            int i = mdp.sa(s, a);
            int c = partition.cell_of[i];
            out.weights(s, a) = cell_mass[c] > 0.0 ? w[i] / cell_mass[c] : 1.0 / cell_size[c];
        }

    Mat p_cell = Mat::Zero(partition.n_cells, mdp.n_states);
    Vec r_cell = Vec::Zero(partition.n_cells);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            int i = mdp.sa(s, a);
            int c = partition.cell_of[i];
            p_cell.row(c) += out.weights(s, a) * mdp.transition.row(i);
            r_cell[c] += out.weights(s, a) * mdp.reward(s, a);
        }

    out.transition_agg = Mat::Zero(nsa, mdp.n_states);
    out.reward_agg = Mat::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            int i = mdp.sa(s, a);
            int c = partition.cell_of[i];
            out.transition_agg.row(i) = p_cell.row(c);
            out.reward_agg(s, a) = r_cell[c];
        }
    return out;
}

TabularMDP AggregatedMDP::as_mdp() const {
    TabularMDP m = base;
    m.transition = transition_agg;
    m.reward = reward_agg;
    m.reward_noise.clear();
    // Aggregated rewards are convex combinations, so they stay in [0, r_max].
    return m;
}

namespace {

using nlohmann::json;

json mat_json(const Mat& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_unjson(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(j[0].size());
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<real>();
    return m;
}

} // namespace

std::string function_class_to_json(const FunctionClass& cls) {
    json j;
    if (cls.is_finite()) {
        j["kind"] = "finite";
        json members = json::array();
        for (const auto& m : cls.finite().members) members.push_back(mat_json(m.values));
        j["members"] = std::move(members);
    } else if (cls.is_linear()) {
        j["kind"] = "linear";
        j["dim"] = cls.linear().features.dim;
        j["features"] = mat_json(cls.linear().features.features);
        j["norm_bound"] = cls.linear().features.norm_bound;
        j["coef_bound"] = cls.linear().coef_bound;
    } else {
        j["kind"] = "piecewise";
        j["n_cells"] = cls.piecewise().partition.n_cells;
        j["cell_of"] = cls.piecewise().partition.cell_of;
    }
    return j.dump(2);
}

FunctionClass function_class_from_json(const std::string& text) {
    json j = json::parse(text);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "finite") {
        std::vector<ValueFunction> members;
        for (const auto& m : j.at("members")) members.push_back(ValueFunction{mat_unjson(m)});
        return FunctionClass::finite_of(std::move(members));
    }
    if (kind == "linear") {
        FeatureMap fm;
        fm.dim = j.at("dim").get<int>();
        fm.features = mat_unjson(j.at("features"));
        fm.norm_bound = j.at("norm_bound").get<real>();
        return FunctionClass::linear_of(std::move(fm), j.at("coef_bound").get<real>());
    }
    if (kind == "piecewise") {
        Partition p;
        p.n_cells = j.at("n_cells").get<int>();
        p.cell_of = j.at("cell_of").get<std::vector<int>>();
        return FunctionClass::piecewise_of(std::move(p));
    }
    throw std::invalid_argument("unknown function class kind: " + kind);
}

} // namespace offrl
