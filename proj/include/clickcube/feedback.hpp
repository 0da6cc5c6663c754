#pragma once

// Linear feedback of deployed predictions into a predictor, detected and
// removed by injecting known noise into what is deployed.
//
// Per item i and period t:
//     Y^t        = alpha + beta X^t[0] + eps,               eps ~ N(0, sigma^2)
//     X^{t+1}[0] = X^t[0] + delta Y^t + xi,                 xi  ~ N(0, tau_x^2)
//     X^{t+1}    = X^{t+1}[0] + gamma (Yhat^t + nu^t),      nu  ~ N(0, omega^2)
// X[0] is the counterfactual predictor (no feedback) and X the realised one.
// The outcome depends on the counterfactual predictor only; feedback
// contaminates what the model sees. The implied feedback function is
// f(y) = gamma * beta * y.
//
// All draws come from counter-based streams keyed by (seed, kind, t, i), so
// results do not depend on the worker count, and runs that differ only in
// omega share eps, xi and the standardised noise.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clickcube {

enum class RegressionDesign {
    /// X^{t+1} ~ 1 + Yhat^t + nu^t
    with_prediction,
    /// X^{t+1} ~ 1 + nu^t
    noise_only,
};

struct FeedbackConfig {
    double alpha = 0.0;
    double beta = 1.0;
    double sigma = 1.0;
    double gamma = 0.3;
    double delta = 0.15;
    double tau_x = 1.0;
    double omega = 0.7;
    std::size_t n = 10000;
    std::size_t horizon = 52;
    std::uint64_t seed = 1;
    /// X^0[0] ~ N(init_mean, init_sd^2).
    double init_mean = 1.0;
    double init_sd = 1.0;
    RegressionDesign design = RegressionDesign::with_prediction;
    unsigned workers = 0;
};

void validate(const FeedbackConfig& config);

struct WorldState {
    std::size_t t = 0;
    std::vector<double> x_counterfactual;
    std::vector<double> x_realized;
    std::vector<double> response;
    /// Raw model prediction Yhat^t.
    std::vector<double> prediction;
    /// Injected noise nu^t (zeros when noise is off).
    std::vector<double> noise;

    /// Yhat^t + nu^t, the value other systems see.
    std::vector<double> deployed() const;
};

WorldState initial_state(const FeedbackConfig& config, bool use_noise);

struct GammaEstimate {
    double gamma_hat = 0.0;
    double se = 0.0;
};

struct StepResult {
    WorldState state;
    /// Present when the step corrected its prediction.
    std::optional<GammaEstimate> estimate;
};

/// Advances one period. With use_correction the new prediction removes the
/// estimated feedback, otherwise it is alpha + beta X^{t+1}.
StepResult step_world(const WorldState& state, const FeedbackConfig& config, bool use_noise, bool use_correction);

/// OLS coefficient of nu in the regression of X^{t+1} on the chosen design,
/// with its usual standard error. Throws unidentifiable_error when nu has no
/// variance and std::invalid_argument for n < 3 or mismatched lengths.
GammaEstimate estimate_gamma(std::span<const double> x_next, std::span<const double> prediction,
                             std::span<const double> noise,
                             RegressionDesign design = RegressionDesign::with_prediction, unsigned workers = 1);

/// beta * (X^{t+1} - gamma_hat * deployed^t), elementwise.
std::vector<double> corrected_prediction(std::span<const double> x_next, std::span<const double> deployed_prev,
                                         double gamma_hat, double beta);

/// Generic form: raw_next - theta_hat * deployed^t.
std::vector<double> sanitized_prediction(std::span<const double> raw_next, std::span<const double> deployed_prev,
                                         double theta_hat);

/// sqrt(mean((p - y)^2) / mean(y)^2). Throws std::domain_error when
/// |mean(y)| < 1e-9.
double relative_rmse(std::span<const double> predictions, std::span<const double> truths);

struct TracePoint {
    std::size_t t = 0;
    double gamma_hat = 0.0;
    double gamma_se = 0.0;
    double theta_hat = 0.0;
    /// Relative RMSE of the deployed prediction against Y^t.
    double rel_rmse = 0.0;
    double mean_prediction = 0.0;
    double mean_response = 0.0;
};

struct FeedbackTrace {
    /// Empty for the naive baseline (no noise, no correction).
    std::optional<double> omega;
    std::vector<TracePoint> points;

    std::string label() const;
};

/// One trace for t = 1..horizon.
FeedbackTrace run_trace(const FeedbackConfig& config, std::optional<double> omega);

/// Naive baseline followed by one corrected trace per omega.
std::vector<FeedbackTrace> run_sim(const FeedbackConfig& config, std::span<const double> omegas);

/// omega (or "naive"), t, gamma_hat, gamma_se, rel_rmse.
void write_trace_csv(std::ostream& out, std::span<const FeedbackTrace> traces);

/// Inverse-variance pooled estimate over periods [t_from, t_to].
GammaEstimate pooled_gamma(const FeedbackTrace& trace, std::size_t t_from, std::size_t t_to);

struct NoisePrecision {
    /// n Var(theta_hat) Var(nu) / Var(Yhat^{t+1}[Yhat^t]); near 1 in theory.
    double ratio = 0.0;
    double var_theta = 0.0;
    double var_noise = 0.0;
    double var_next_prediction = 0.0;
    std::size_t replications = 0;
};

/// Repeats the first period `replications` times with independent seeds,
/// estimating theta by regressing on the noise alone.
NoisePrecision noise_precision_check(const FeedbackConfig& config, std::size_t replications);

}  // namespace clickcube
