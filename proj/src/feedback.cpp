#include "clickcube/feedback.hpp"

#include "clickcube/csv_io.hpp"
#include "clickcube/errors.hpp"
#include "clickcube/fingerprint.hpp"
#include "clickcube/parallel.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace clickcube {

namespace {

constexpr std::size_t kChunks = 64;

enum class Draw : std::uint64_t { init = 1, response = 2, innovation = 3, noise = 4 };

/// Standard normal for (kind, t, item) under `seed`.
double std_normal(std::uint64_t seed, Draw kind, std::size_t t, std::size_t item) {
    const std::uint64_t key = substream_seed(substream_seed(seed, static_cast<std::uint64_t>(kind)), t);
    SplitMix64 rng(substream_seed(key, item));
    return std::normal_distribution<double>()(rng);
}

template <class Fn>
void for_items(std::size_t n, unsigned workers, Fn&& fn) {
    const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(n, 1));
    parallel_for(chunks, workers, [&](std::size_t c) {
        const auto range = chunk_range(n, chunks, c);
        for (std::size_t i = range.begin; i < range.end; ++i) fn(i);
    });
}

/// Sum of f(i) over [0, n), accumulated per fixed chunk and combined in
/// chunk order.
template <class Fn>
double chunked_sum(std::size_t n, unsigned workers, Fn&& f) {
    const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(n, 1));
    std::vector<double> partial(chunks, 0.0);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const auto range = chunk_range(n, chunks, c);
        double s = 0.0;
        for (std::size_t i = range.begin; i < range.end; ++i) s += f(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double sample_variance(std::span<const double> v) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (v[i] - mean);
    }
    return v.size() > 1 ? m2 / static_cast<double>(v.size() - 1) : 0.0;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

void validate(const FeedbackConfig& c) {
    const auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(c.alpha) || !finite(c.beta) || !finite(c.gamma) || !finite(c.delta) || !finite(c.init_mean)) {
        throw std::invalid_argument("FeedbackConfig: coefficients must be finite");
    }
    if (!(c.sigma >= 0.0) || !(c.tau_x >= 0.0) || !(c.omega >= 0.0) || !(c.init_sd >= 0.0) || !finite(c.sigma) ||
        !finite(c.tau_x) || !finite(c.omega) || !finite(c.init_sd)) {
        throw std::invalid_argument("FeedbackConfig: sigma, tau_x, omega and init_sd must be finite and >= 0");
    }
    if (c.n < 2) throw std::invalid_argument("FeedbackConfig: n must be at least 2");
    if (c.horizon < 1) throw std::invalid_argument("FeedbackConfig: horizon must be at least 1");
}

std::vector<double> WorldState::deployed() const {
    std::vector<double> out(prediction.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = prediction[i] + noise[i];
    return out;
}

WorldState initial_state(const FeedbackConfig& c, bool use_noise) {
    validate(c);
    WorldState s;
    s.t = 0;
    s.x_counterfactual.resize(c.n);
    s.x_realized.resize(c.n);
    s.response.resize(c.n);
    s.prediction.resize(c.n);
    s.noise.assign(c.n, 0.0);
    for_items(c.n, c.workers, [&](std::size_t i) {
        const double x = c.init_mean + c.init_sd * std_normal(c.seed, Draw::init, 0, i);
        s.x_counterfactual[i] = x;
        s.x_realized[i] = x;
        s.response[i] = c.alpha + c.beta * x + c.sigma * std_normal(c.seed, Draw::response, 0, i);
        s.prediction[i] = c.alpha + c.beta * x;
        if (use_noise) s.noise[i] = c.omega * std_normal(c.seed, Draw::noise, 0, i);
    });
    return s;
}

StepResult step_world(const WorldState& state, const FeedbackConfig& c, bool use_noise, bool use_correction) {
    validate(c);
    const std::size_t n = state.prediction.size();
    if (state.x_counterfactual.size() != n || state.x_realized.size() != n || state.response.size() != n ||
        state.noise.size() != n) {
        throw std::invalid_argument("step_world: state vectors differ in length");
    }
    const std::size_t t1 = state.t + 1;
    const std::vector<double> deployed = state.deployed();

    StepResult out;
    WorldState& next = out.state;
    next.t = t1;
    next.x_counterfactual.resize(n);
    next.x_realized.resize(n);
    next.response.resize(n);
    next.noise.assign(n, 0.0);
    for_items(n, c.workers, [&](std::size_t i) {
        const double xi = c.tau_x * std_normal(c.seed, Draw::innovation, state.t, i);
        const double x_cf = state.x_counterfactual[i] + c.delta * state.response[i] + xi;
        next.x_counterfactual[i] = x_cf;
        next.x_realized[i] = x_cf + c.gamma * deployed[i];
        next.response[i] = c.alpha + c.beta * x_cf + c.sigma * std_normal(c.seed, Draw::response, t1, i);
        if (use_noise) next.noise[i] = c.omega * std_normal(c.seed, Draw::noise, t1, i);
    });

    if (use_correction) {
        const GammaEstimate est = estimate_gamma(next.x_realized, state.prediction, state.noise, c.design, c.workers);
        next.prediction = corrected_prediction(next.x_realized, deployed, est.gamma_hat, c.beta);
        for (double& p : next.prediction) p += c.alpha;
        out.estimate = est;
    } else {
        next.prediction.resize(n);
        for (std::size_t i = 0; i < n; ++i) next.prediction[i] = c.alpha + c.beta * next.x_realized[i];
    }
    return out;
}

GammaEstimate estimate_gamma(std::span<const double> x_next, std::span<const double> prediction,
                             std::span<const double> noise, RegressionDesign design, unsigned workers) {
    const std::size_t n = x_next.size();
    require_same_length(n, noise.size(), "estimate_gamma");
    if (design == RegressionDesign::with_prediction) require_same_length(n, prediction.size(), "estimate_gamma");
    if (n < 3) throw std::invalid_argument("estimate_gamma: need at least 3 items");
    const bool with_pred = design == RegressionDesign::with_prediction;

    const auto N = static_cast<double>(n);
    const double my = chunked_sum(n, workers, [&](std::size_t i) { return x_next[i]; }) / N;
    const double mv = chunked_sum(n, workers, [&](std::size_t i) { return noise[i]; }) / N;
    const double mp = with_pred ? chunked_sum(n, workers, [&](std::size_t i) { return prediction[i]; }) / N : 0.0;

    const double s_vv = chunked_sum(n, workers, [&](std::size_t i) { return (noise[i] - mv) * (noise[i] - mv); });
    const double s_vy = chunked_sum(n, workers, [&](std::size_t i) { return (noise[i] - mv) * (x_next[i] - my); });
    if (!(s_vv > 0.0)) throw unidentifiable_error("estimate_gamma: injected noise has zero variance");

    double b_v = 0.0, b_p = 0.0, inv_vv = 0.0;
    std::size_t params = 2;
    if (with_pred) {
        params = 3;
        const double s_pp =
            chunked_sum(n, workers, [&](std::size_t i) { return (prediction[i] - mp) * (prediction[i] - mp); });
        const double s_pv =
            chunked_sum(n, workers, [&](std::size_t i) { return (prediction[i] - mp) * (noise[i] - mv); });
        const double s_py =
            chunked_sum(n, workers, [&](std::size_t i) { return (prediction[i] - mp) * (x_next[i] - my); });
        const double det = s_pp * s_vv - s_pv * s_pv;
        if (!(det > 1e-12 * s_pp * s_vv)) {
            throw unidentifiable_error("estimate_gamma: prediction and noise are collinear");
        }
        b_p = (s_vv * s_py - s_pv * s_vy) / det;
        b_v = (s_pp * s_vy - s_pv * s_py) / det;
        inv_vv = s_pp / det;
    } else {
        b_v = s_vy / s_vv;
        inv_vv = 1.0 / s_vv;
    }
    const double ssr = chunked_sum(n, workers, [&](std::size_t i) {
        const double r = (x_next[i] - my) - b_v * (noise[i] - mv) - (with_pred ? b_p * (prediction[i] - mp) : 0.0);
        return r * r;
    });
    const double sigma2 = ssr / (N - static_cast<double>(params));
    return GammaEstimate{b_v, std::sqrt(sigma2 * inv_vv)};
}

std::vector<double> corrected_prediction(std::span<const double> x_next, std::span<const double> deployed_prev,
                                         double gamma_hat, double beta) {
    require_same_length(x_next.size(), deployed_prev.size(), "corrected_prediction");
    std::vector<double> out(x_next.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * (x_next[i] - gamma_hat * deployed_prev[i]);
    return out;
}

std::vector<double> sanitized_prediction(std::span<const double> raw_next, std::span<const double> deployed_prev,
                                         double theta_hat) {
    require_same_length(raw_next.size(), deployed_prev.size(), "sanitized_prediction");
    std::vector<double> out(raw_next.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = raw_next[i] - theta_hat * deployed_prev[i];
    return out;
}

double relative_rmse(std::span<const double> predictions, std::span<const double> truths) {
    require_same_length(predictions.size(), truths.size(), "relative_rmse");
    if (truths.empty()) throw std::invalid_argument("relative_rmse: empty input");
    double se = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const double d = predictions[i] - truths[i];
        se += d * d;
        sy += truths[i];
    }
    const auto n = static_cast<double>(truths.size());
    const double mean_y = sy / n;
    if (std::abs(mean_y) < 1e-9) throw std::domain_error("relative_rmse: mean response is zero");
    return std::sqrt(se / n) / std::abs(mean_y);
}

std::string FeedbackTrace::label() const { return omega ? format_double(*omega) : std::string("naive"); }

FeedbackTrace run_trace(const FeedbackConfig& config, std::optional<double> omega) {
    FeedbackConfig c = config;
    if (omega) c.omega = *omega;
    validate(c);
    const bool active = omega.has_value();
    FeedbackTrace trace{omega, {}};
    trace.points.reserve(c.horizon);
    WorldState state = initial_state(c, active);
    for (std::size_t step = 0; step < c.horizon; ++step) {
        StepResult r = step_world(state, c, active, active);
        state = std::move(r.state);
        TracePoint p;
        p.t = state.t;
        const double nan = std::nan("");
        p.gamma_hat = r.estimate ? r.estimate->gamma_hat : nan;
        p.gamma_se = r.estimate ? r.estimate->se : nan;
        p.theta_hat = p.gamma_hat * c.beta;
        const auto deployed = state.deployed();
        p.rel_rmse = relative_rmse(deployed, state.response);
        p.mean_prediction = mean_of(state.prediction);
        p.mean_response = mean_of(state.response);
        trace.points.push_back(p);
    }
    return trace;
}

std::vector<FeedbackTrace> run_sim(const FeedbackConfig& config, std::span<const double> omegas) {
    std::vector<FeedbackTrace> traces;
    traces.push_back(run_trace(config, std::nullopt));
    for (double w : omegas) traces.push_back(run_trace(config, w));
    return traces;
}

void write_trace_csv(std::ostream& out, std::span<const FeedbackTrace> traces) {
    out << "omega,t,gamma_hat,gamma_se,rel_rmse\n";
    for (const auto& trace : traces) {
        const std::string label = trace.label();
        for (const auto& p : trace.points) {
            out << label << ',' << p.t << ',' << format_double(p.gamma_hat) << ',' << format_double(p.gamma_se) << ','
                << format_double(p.rel_rmse) << '\n';
        }
    }
}

GammaEstimate pooled_gamma(const FeedbackTrace& trace, std::size_t t_from, std::size_t t_to) {
    double weight = 0.0, weighted = 0.0;
    for (const auto& p : trace.points) {
        if (p.t < t_from || p.t > t_to || !std::isfinite(p.gamma_hat) || !(p.gamma_se > 0.0)) continue;
        const double w = 1.0 / (p.gamma_se * p.gamma_se);
        weight += w;
        weighted += w * p.gamma_hat;
    }
    if (!(weight > 0.0)) throw insufficient_data_error("pooled_gamma: no estimates in the requested periods");
    return GammaEstimate{weighted / weight, std::sqrt(1.0 / weight)};
}

NoisePrecision noise_precision_check(const FeedbackConfig& config, std::size_t replications) {
    validate(config);
    if (replications < 2) throw std::invalid_argument("noise_precision_check: need at least 2 replications");
    FeedbackConfig c = config;
    c.design = RegressionDesign::noise_only;
    const std::uint64_t root = derive_seed(config.seed, "noise_precision");
    std::vector<double> theta(replications), var_noise(replications), var_next(replications);
    for (std::size_t r = 0; r < replications; ++r) {
        c.seed = substream_seed(root, r);
        const WorldState s0 = initial_state(c, true);
        const StepResult s1 = step_world(s0, c, true, true);
        theta[r] = s1.estimate->gamma_hat * c.beta;
        // Prediction the model would make at t+1 without the injected noise.
        std::vector<double> next(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            next[i] = c.alpha + c.beta * (s1.state.x_counterfactual[i] + c.gamma * s0.prediction[i]);
        }
        var_noise[r] = sample_variance(s0.noise);
        var_next[r] = sample_variance(next);
    }
    NoisePrecision out;
    out.replications = replications;
    out.var_theta = sample_variance(theta);
    out.var_noise = mean_of(var_noise);
    out.var_next_prediction = mean_of(var_next);
    out.ratio = static_cast<double>(c.n) * out.var_theta * out.var_noise / out.var_next_prediction;
    return out;
}

}  // namespace clickcube
