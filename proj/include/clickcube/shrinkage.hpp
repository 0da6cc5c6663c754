#pragma once

// Keyword random effects by two-stage fitting and normal-means shrinkage.
//
// Stage one fits log cost ~ country + category by weighted least squares on
// (country, category) cell totals. Stage two summarises per-keyword
// residuals into (n_k, R_k, sigma_k^2) and shrinks R_k toward 0. The risk
// functionals below are expectations over the prior G of sigma_k, with the
// loss weighted by 1/sigma_k^2:
//     R_Bayes = E[tau / (1 + tau)],
//     R_Trunc = E[tau / (1 + tau) * (1 + tau * 1{tau < T})],
// where tau = eta^2 / sigma^2 is the keyword signal-to-noise ratio.

#include "clickcube/engine.hpp"
#include "clickcube/synthlog.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace clickcube {

// --- stage one --------------------------------------------------------------

struct CoarseModel {
    double intercept = 0.0;
    /// Sum-to-zero effects per level.
    std::map<std::string, double> country_effects;
    std::map<std::string, double> category_effects;

    /// Throws std::invalid_argument for levels the model was not fitted on.
    double predict(const std::string& country, const std::string& category) const;
};

/// Mapper emitting ({country, category}, (1, log cost, log cost^2)).
Mapper<KeywordClick> coarse_mapper();

/// Weighted least squares of cell mean log cost on the two factors, weights
/// = cell click counts. Expects arity-2 keys (country, category) whose sums
/// are log costs. Throws std::invalid_argument naming aliased levels when
/// the design is rank deficient.
CoarseModel fit_coarse(const DataCube& cells);

// --- stage two --------------------------------------------------------------

struct KeywordStat {
    std::string keyword;
    std::uint64_t n = 0;
    double mean_residual = 0.0;
    /// Variance of the mean residual.
    double variance = 0.0;
    /// eta^2 / variance.
    double snr = 0.0;
    /// True when `variance` came from the pooled within-keyword variance.
    bool pooled = false;
};

/// Per-keyword residual statistics under `model`. Keywords with one click
/// (or zero sample variance) use the pooled within-keyword variance.
std::vector<KeywordStat> keyword_residuals(std::span<const KeywordClick> log, const CoarseModel& model, double eta,
                                           MapReduceOptions options = {});

/// Posterior mean eta^2 / (sigma^2 + eta^2) * R. Throws std::invalid_argument
/// unless sigma > 0 and eta >= 0.
double bayes_estimate(double R, double sigma, double eta);

/// bayes_estimate when tau = eta^2 / sigma^2 >= T, otherwise 0. An unseen
/// keyword is sigma = +infinity (tau = 0).
double truncated_estimate(double R, double sigma, double eta, double T);

// --- priors and risk ----------------------------------------------------------

/// log sigma ~ N(mu_log, s_log^2).
struct LognormalSigma {
    double mu_log = 2.25;
    double s_log = 1.5;
};

struct PointMassSigma {
    double sigma = 1.0;
};

struct EmpiricalSigma {
    std::vector<double> sigmas;
};

using SigmaPrior = std::variant<LognormalSigma, PointMassSigma, EmpiricalSigma>;

struct PriorSpec {
    double eta = 1.0;
    SigmaPrior G = LognormalSigma{};
    double T = 0.0;
};

void validate(const PriorSpec& prior);

/// Lognormal prior with E[1/sigma^2] = 1, i.e. mu_log = s_log^2.
LognormalSigma unit_precision_lognormal(double s_log);

struct McOptions {
    std::size_t draws = 1'000'000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
};

struct RiskValue {
    /// Closed form (point mass, empirical) or adaptive quadrature (lognormal).
    double exact = 0.0;
    double monte_carlo = 0.0;
    double mc_se = 0.0;
};

RiskValue bayes_risk(const PriorSpec& prior, const McOptions& mc = {});
RiskValue truncated_risk(const PriorSpec& prior, const McOptions& mc = {});

/// P[tau >= T] under G.
double keep_fraction(const PriorSpec& prior);

/// Threshold T whose keep fraction is `keep` under a lognormal G.
double threshold_for_keep_fraction(double eta, const LognormalSigma& G, double keep);

struct RiskCurveRow {
    double T = 0.0;
    double keep_fraction = 1.0;
    /// Monte Carlo risks sharing one set of sigma draws across the grid.
    double r_bayes = 0.0;
    double r_trunc = 0.0;
    double ratio = 1.0;
    /// Standard error of `ratio`.
    double mc_se = 0.0;
    double r_bayes_exact = 0.0;
    double r_trunc_exact = 0.0;
    double ratio_exact = 1.0;
};

std::vector<RiskCurveRow> risk_curve(double eta, const SigmaPrior& G, std::span<const double> thresholds,
                                     const McOptions& mc = {});

/// T = 0 followed by thresholds whose keep fractions are 10^(-i/m),
/// i = 1..points-1, with m chosen so the grid reaches roughly 0.004. Every
/// decade (0.1, 0.01) lands on a grid point.
std::vector<double> default_threshold_grid(double eta, const LognormalSigma& G, std::size_t points);

/// T, keep_fraction, r_bayes, r_trunc, ratio, mc_se, then the exact
/// r_bayes_exact, r_trunc_exact, ratio_exact.
void write_curve_csv(std::ostream& out, std::span<const RiskCurveRow> rows);

/// Realised frequency-weighted losses from simulating the full model
/// mu_k ~ N(0, eta^2), sigma_k ~ G, R_k ~ N(mu_k, sigma_k^2).
struct LossSimulation {
    double bayes_loss = 0.0;
    double bayes_se = 0.0;
    double truncated_loss = 0.0;
    double truncated_se = 0.0;
    /// Loss of the zero estimator minus the Bayes loss.
    double reduction = 0.0;
    double reduction_se = 0.0;
};

LossSimulation simulate_loss(const PriorSpec& prior, const McOptions& mc = {});

}  // namespace clickcube
