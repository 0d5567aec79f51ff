#pragma once

#include "offrl/function_class.hpp"

namespace offrl {

/// State-action weight function, e.g. a density ratio d^pi/d^D.
struct WeightFunction {
    Mat values; // S x A
};

struct CoverageReport {
    real c_inf = 0.0;  // may be +infinity
    real c_sq = 0.0;
    real c_avg = 0.0;
    real chi_sq = 0.0;
    bool linear_bounds = false; // c_sq / c_avg are the closed-form upper bounds
    Mat gram_D;  // d x d when a feature map was supplied
    Mat gram_pi;
    real sigma_min_D = 0.0;
};

/// Max density ratio ||d_pi / d_D||_inf with the 0/0 = 0 convention;
/// +infinity when d_pi puts mass where d_D has none.
real c_inf(const OccupancyMeasure& d_pi, const OccupancyMeasure& d_D);

/// Second moment E_{d_D}[(d_pi/d_D)^2], same conventions as c_inf.
real chi_sq_coverage(const OccupancyMeasure& d_pi, const OccupancyMeasure& d_D);

struct CoverageValue {
    real value = 0.0;
    bool is_upper_bound = false; // true on the linear closed-form path
};

/// Squared-Bellman-error transfer coefficient. Finite classes: exact max over
/// members using the exact T^pi. Linear classes: the spectral upper bound
/// sigma_max(Sigma_pi^{1/2} Sigma_D^{-1} Sigma_pi^{1/2}).
CoverageValue c_sq(const FunctionClass& classF, const TabularMDP& mdp, const StationaryPolicy& pi,
                   const OccupancyMeasure& d_D);

/// Mean-Bellman-error transfer coefficient; linear classes report the
/// quadratic-form bound E_{d_pi}[phi]^T Sigma_D^{-1} E_{d_pi}[phi].
CoverageValue c_avg(const FunctionClass& classF, const TabularMDP& mdp, const StationaryPolicy& pi,
                    const OccupancyMeasure& d_D);

struct EffectiveWeightResult {
    WeightFunction w;
    bool ridged = false; // Sigma_D was singular; ridge 1e-10 was added
};

/// Mean-matching weight w_eff(s,a) = phi(s,a)^T Sigma_D^{-1} E_{d_pi}[phi].
EffectiveWeightResult effective_weight(const FeatureMap& phi, const TabularMDP& mdp,
                                       const StationaryPolicy& pi, const OccupancyMeasure& d_D);

/// Full diagnostics block; feature-gram fields filled when phi is given.
CoverageReport coverage_report(const FunctionClass& classF, const TabularMDP& mdp,
                               const StationaryPolicy& pi, const OccupancyMeasure& d_D,
                               const FeatureMap* phi = nullptr);

/// Feature second-moment matrix E_mu[phi phi^T].
Mat feature_gram(const FeatureMap& phi, const OccupancyMeasure& mu, int n_actions);

/// Mean feature E_mu[phi].
Vec feature_mean(const FeatureMap& phi, const OccupancyMeasure& mu, int n_actions);

std::string coverage_report_to_json(const CoverageReport& rep);

} // namespace offrl
