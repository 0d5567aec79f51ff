#include "offrl/coverage.hpp"

#include "offrl/dp.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <limits>

namespace offrl {

namespace {

constexpr real kInf = std::numeric_limits<real>::infinity();

} // namespace

real c_inf(const OccupancyMeasure& d_pi, const OccupancyMeasure& d_D) {
    real worst = 0.0;
    for (int s = 0; s < d_pi.dist.rows(); ++s) {
        for (int a = 0; a < d_pi.dist.cols(); ++a) {
            real num = d_pi.dist(s, a);
            real den = d_D.dist(s, a);
            if (num == 0.0) continue; // 0/0 = 0 convention
            if (den == 0.0) return kInf;
            worst = std::max(worst, num / den);
        }
    }
    return worst;
}

real chi_sq_coverage(const OccupancyMeasure& d_pi, const OccupancyMeasure& d_D) {
    real total = 0.0;
    for (int s = 0; s < d_pi.dist.rows(); ++s) {
        for (int a = 0; a < d_pi.dist.cols(); ++a) {
            real num = d_pi.dist(s, a);
            real den = d_D.dist(s, a);
            if (num == 0.0) continue;
            if (den == 0.0) return kInf;
            total += num * num / den; // d_D * (d_pi/d_D)^2
        }
    }
    return total;
}

Mat feature_gram(const FeatureMap& phi, const OccupancyMeasure& mu, int n_actions) {
    Mat gram = Mat::Zero(phi.dim, phi.dim);
    for (int s = 0; s < mu.dist.rows(); ++s)
        for (int a = 0; a < mu.dist.cols(); ++a) {
            Vec v = phi.features.row(s * n_actions + a).transpose();
            gram += mu.dist(s, a) * v * v.transpose();
        }
    return gram;
}

Vec feature_mean(const FeatureMap& phi, const OccupancyMeasure& mu, int n_actions) {
    Vec mean = Vec::Zero(phi.dim);
    for (int s = 0; s < mu.dist.rows(); ++s)
        for (int a = 0; a < mu.dist.cols(); ++a)
            mean += mu.dist(s, a) * phi.features.row(s * n_actions + a).transpose();
    return mean;
}

namespace {

/// Exact Bellman residual f - T^pi f for one candidate.
Mat bellman_residual(const TabularMDP& mdp, const ValueFunction& f, const StationaryPolicy& pi) {
    return f.values - bellman_backup(mdp, f, pi).values;
}

struct Moments {
    real num_sq = 0.0;  // E_{d_pi}[res^2]
    real num_mean = 0.0; // E_{d_pi}[res]
    real den = 0.0;      // E_{d_D}[res^2]
};

Moments residual_moments(const Mat& res, const OccupancyMeasure& d_pi,
                         const OccupancyMeasure& d_D) {
    Moments m;
    for (int s = 0; s < res.rows(); ++s)
        for (int a = 0; a < res.cols(); ++a) {
            m.num_sq += d_pi.dist(s, a) * res(s, a) * res(s, a);
            m.num_mean += d_pi.dist(s, a) * res(s, a);
            m.den += d_D.dist(s, a) * res(s, a) * res(s, a);
        }
    return m;
}

real symmetric_lambda_max(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().maxCoeff();
}

} // namespace

CoverageValue c_sq(const FunctionClass& classF, const TabularMDP& mdp, const StationaryPolicy& pi,
                   const OccupancyMeasure& d_D) {
    OccupancyMeasure d_pi = occupancy(mdp, pi);
    if (classF.is_finite()) {
        real worst = 0.0;
        for (const auto& f : classF.finite().members) {
            Moments m = residual_moments(bellman_residual(mdp, f, pi), d_pi, d_D);
            if (m.num_sq <= 1e-300) continue; // zero Bellman error contributes 0
            if (m.den <= 0.0) return {kInf, false};
            worst = std::max(worst, m.num_sq / m.den);
        }
        return {worst, false};
    }
    if (!classF.is_linear())
        throw std::invalid_argument("c_sq needs a finite or linear class");
    const FeatureMap& phi = classF.linear().features;
    Mat sig_d = feature_gram(phi, d_D, mdp.n_actions);
    Mat sig_pi = feature_gram(phi, d_pi, mdp.n_actions);
    // Symmetrize before factorizing to absorb round-off.
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (sig_pi + sig_pi.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0);
    Mat half = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    Eigen::FullPivLU<Mat> lu(sig_d);
    if (!lu.isInvertible()) return {kInf, true};
    return {symmetric_lambda_max(half * lu.inverse() * half), true};
}

CoverageValue c_avg(const FunctionClass& classF, const TabularMDP& mdp, const StationaryPolicy& pi,
                    const OccupancyMeasure& d_D) {
    OccupancyMeasure d_pi = occupancy(mdp, pi);
    if (classF.is_finite()) {
        real worst = 0.0;
        for (const auto& f : classF.finite().members) {
            Moments m = residual_moments(bellman_residual(mdp, f, pi), d_pi, d_D);
            if (m.num_mean * m.num_mean <= 1e-300) continue;
            if (m.den <= 0.0) return {kInf, false};
            worst = std::max(worst, m.num_mean * m.num_mean / m.den);
        }
        return {worst, false};
    }
    if (!classF.is_linear())
        throw std::invalid_argument("c_avg needs a finite or linear class");
    const FeatureMap& phi = classF.linear().features;
    Mat sig_d = feature_gram(phi, d_D, mdp.n_actions);
    Vec mean_pi = feature_mean(phi, d_pi, mdp.n_actions);
    Eigen::FullPivLU<Mat> lu(sig_d);
    if (!lu.isInvertible()) return {kInf, true};
    return {mean_pi.dot(lu.solve(mean_pi)), true};
}

EffectiveWeightResult effective_weight(const FeatureMap& phi, const TabularMDP& mdp,
                                       const StationaryPolicy& pi, const OccupancyMeasure& d_D) {
    OccupancyMeasure d_pi = occupancy(mdp, pi);
    Mat sig_d = feature_gram(phi, d_D, mdp.n_actions);
    Vec mean_pi = feature_mean(phi, d_pi, mdp.n_actions);

    EffectiveWeightResult out;
    Eigen::FullPivLU<Mat> lu(sig_d);
    Vec x;
    if (lu.isInvertible()) {
        x = lu.solve(mean_pi);
    } else {
        out.ridged = true;
        Mat ridged = sig_d + 1e-10 * Mat::Identity(phi.dim, phi.dim);
        x = ridged.partialPivLu().solve(mean_pi);
    }
    out.w.values = Mat::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            out.w.values(s, a) = phi.features.row(mdp.sa(s, a)).dot(x.transpose());
    return out;
}

CoverageReport coverage_report(const FunctionClass& classF, const TabularMDP& mdp,
                               const StationaryPolicy& pi, const OccupancyMeasure& d_D,
                               const FeatureMap* phi) {
    CoverageReport rep;
    OccupancyMeasure d_pi = occupancy(mdp, pi);
    rep.c_inf = c_inf(d_pi, d_D);
    rep.chi_sq = chi_sq_coverage(d_pi, d_D);
    CoverageValue sq = c_sq(classF, mdp, pi, d_D);
    CoverageValue avg = c_avg(classF, mdp, pi, d_D);
    rep.c_sq = sq.value;
    rep.c_avg = avg.value;
    rep.linear_bounds = sq.is_upper_bound;
    if (phi) {
        rep.gram_D = feature_gram(*phi, d_D, mdp.n_actions);
        rep.gram_pi = feature_gram(*phi, d_pi, mdp.n_actions);
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rep.gram_D + rep.gram_D.transpose()));
        rep.sigma_min_D = es.eigenvalues().minCoeff();
    }
    return rep;
}

std::string coverage_report_to_json(const CoverageReport& rep) {
    nlohmann::json j;
    auto put = [&](const char* key, real v) {
        if (std::isinf(v))
            j[key] = "inf";
        else
            j[key] = v;
    };
    put("c_inf", rep.c_inf);
    put("c_sq", rep.c_sq);
    put("c_avg", rep.c_avg);
    put("chi_sq", rep.chi_sq);
    j["linear_bounds"] = rep.linear_bounds;
    j["sigma_min_D"] = rep.sigma_min_D;
    return j.dump();
}

} // namespace offrl
