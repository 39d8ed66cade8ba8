#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gccm/denoiser.hpp"
#include "gccm/diffusion.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/rng.hpp"
#include "gccm/tensor.hpp"

namespace gccm {

struct PredictionResult {
    Tensor y_hat;
    std::vector<Tensor> per_sample;       // populated by multi-sample aggregation
    std::vector<Tensor> step_predictions; // per-step clean-target estimates (iterative only)
    int n_samples = 1;
    int n_steps = 1;
};

namespace detail {

// Prior draw at t = T: uniform categorical rows for classification targets,
// a standard normal scalar for regression.
inline Tensor sample_prior(std::size_t n_nodes, std::size_t d_k, TaskKind task, Rng& rng) {
    const std::size_t rows = is_node_level(task) ? n_nodes : 1;
    if (is_classification(task)) {
        Tensor y(rows, d_k, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            y(i, static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(d_k) - 1))) = 1.0;
        return y;
    }
    Tensor y(rows, d_k);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
    return y;
}

// Evenly strided reverse timesteps tau_1 < ... < tau_n = T.
inline std::vector<int> strided_timesteps(int t_total, int n_steps) {
    std::vector<int> ts(static_cast<std::size_t>(n_steps));
    for (int k = 1; k <= n_steps; ++k)
        ts[static_cast<std::size_t>(k) - 1] = static_cast<int>(
            std::llround(static_cast<double>(k) * static_cast<double>(t_total) / static_cast<double>(n_steps)));
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (ts[i] <= ts[i - 1]) ts[i] = ts[i - 1] + 1;
    ts.back() = t_total;
    return ts;
}

}  // namespace detail

// Algorithm-2 prediction: one denoiser pass on a prior sample at t = T.
inline PredictionResult one_step_predict(const Graph& graph, const DenoiserParams& params,
                                         TaskKind task, const NoiseSchedule& schedule, Rng& rng) {
    const int t_total = schedule.steps();
    Tensor y_prior = detail::sample_prior(graph.num_nodes(), params.d_k, task, rng);
    DenoiserOutput out = denoise(y_prior, t_total, t_total, graph, params, task);
    return PredictionResult{out.y_hat.value(), {}, {}, 1, 1};
}

// Reverse-diffusion prediction. Discrete targets: at each step the sampling
// distribution marginalizes the per-class posterior against the predicted
// clean-target distribution. Continuous targets: ancestral steps through the
// noise-prediction mean, with no noise injected at the final step. When
// n_steps < T the chain walks an evenly strided sub-schedule.
inline PredictionResult iterative_denoise(const Graph& graph, const DenoiserParams& params,
                                          TaskKind task, const NoiseSchedule& schedule,
                                          int n_steps, Rng& rng) {
    const int t_total = schedule.steps();
    if (n_steps < 1 || n_steps > t_total)
        throw std::invalid_argument("iterative_denoise: n_steps must be in 1..T");
    const std::vector<int> ts = detail::strided_timesteps(t_total, n_steps);
    Tensor y = detail::sample_prior(graph.num_nodes(), params.d_k, task, rng);
    std::vector<Tensor> step_preds;
    step_preds.reserve(ts.size());

    for (std::size_t k = ts.size(); k-- > 0;) {
        const int t = ts[k];
        const int s = k == 0 ? 0 : ts[k - 1];
        DenoiserOutput out = denoise(y, t, t_total, graph, params, task);
        const Tensor y_hat = out.y_hat.value();
        step_preds.push_back(y_hat);

        if (is_classification(task)) {
            // p(Y_s | Y_t) = sum_c q(Y_s | Y_t, e_c) * y_hat[., c]
            const std::size_t d_k = params.d_k;
            Tensor next(y.rows(), d_k, 0.0);
            for (std::size_t i = 0; i < y.rows(); ++i) {
                std::vector<double> probs(d_k, 0.0);
                const Tensor y_row = y.row(i);
                const std::size_t pred_row = is_node_level(task) ? i : 0;
                for (std::size_t c = 0; c < d_k; ++c) {
                    Tensor e_c(1, d_k, 0.0);
                    e_c(0, c) = 1.0;
                    const Tensor post = discrete_posterior_segment(y_row, e_c, s, t, schedule);
                    const double w = y_hat(pred_row, c);
                    for (std::size_t j = 0; j < d_k; ++j) probs[j] += w * post(0, j);
                }
                next(i, rng.categorical(probs)) = 1.0;
            }
            y = std::move(next);
        } else {
            // Segment ancestral step with alpha_seg = abar_t / abar_s.
            const double abar_t = schedule.alpha_bar(t);
            const double abar_s = schedule.alpha_bar(s);
            const double alpha_seg = abar_t / abar_s;
            const double beta_seg = 1.0 - alpha_seg;
            const double coef = beta_seg / std::sqrt(1.0 - abar_t);
            const double inv = 1.0 / std::sqrt(alpha_seg);
            Tensor next = y;
            for (std::size_t i = 0; i < next.size(); ++i)
                next[i] = (next[i] - coef * y_hat[i]) * inv;
            if (s > 0) {
                const double sigma = std::sqrt(beta_seg);
                for (std::size_t i = 0; i < next.size(); ++i) next[i] += sigma * rng.normal();
            }
            y = std::move(next);
        }
    }
    return PredictionResult{std::move(y), {}, std::move(step_preds), 1, n_steps};
}

// Classification: average the per-sample probability rows, then harden by
// argmax. Regression: elementwise mean.
inline Tensor aggregate_predictions(const std::vector<Tensor>& samples, TaskKind task) {
    if (samples.empty()) throw std::invalid_argument("aggregate_predictions: empty sample list");
    Tensor mean = samples.front();
    for (std::size_t k = 1; k < samples.size(); ++k) {
        if (!samples[k].same_shape(mean))
            throw std::invalid_argument("aggregate_predictions: mixed shapes (" + mean.shape() + " vs " +
                                        samples[k].shape() + ")");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += samples[k][i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] /= static_cast<double>(samples.size());
    if (!is_classification(task)) return mean;
    Tensor hard(mean.rows(), mean.cols(), 0.0);
    for (std::size_t i = 0; i < mean.rows(); ++i) hard(i, mean.argmax_row(i)) = 1.0;
    return hard;
}

// Aggregated prediction over n_samples independent noise draws; n_steps = 1
// selects one-step prediction, larger values run the reverse chain.
inline PredictionResult predict(const Graph& graph, const DenoiserParams& params, TaskKind task,
                                const NoiseSchedule& schedule, int n_samples, int n_steps, Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
    std::vector<Tensor> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (int m = 0; m < n_samples; ++m) {
        PredictionResult r = n_steps <= 1 ? one_step_predict(graph, params, task, schedule, rng)
                                          : iterative_denoise(graph, params, task, schedule, n_steps, rng);
        samples.push_back(std::move(r.y_hat));
    }
    Tensor agg = aggregate_predictions(samples, task);
    return PredictionResult{std::move(agg), std::move(samples), {}, n_samples, std::max(1, n_steps)};
}

// Micro-averaged accuracy for classification, mean absolute error for
// regression, over the instances named by idx.
inline double evaluate_split(const Dataset& ds, const std::vector<std::size_t>& idx,
                             const DenoiserParams& params, const NoiseSchedule& schedule,
                             int n_samples, int n_steps, std::uint64_t seed) {
    if (idx.empty()) throw std::invalid_argument("evaluate_split: empty split");
    const TaskKind task = ds.task();
    double correct = 0.0, count = 0.0, abs_err = 0.0;
    for (std::size_t i : idx) {
        Rng rng(derive_seed(seed, {0xe7a1ull, i}));
        PredictionResult r = predict(ds[i].graph, params, task, schedule, n_samples, n_steps, rng);
        const Tensor& y = ds[i].y;
        if (is_classification(task)) {
            for (std::size_t row = 0; row < y.rows(); ++row) {
                correct += r.y_hat.argmax_row(row) == y.argmax_row(row) ? 1.0 : 0.0;
                count += 1.0;
            }
        } else {
            for (std::size_t k = 0; k < y.size(); ++k) abs_err += std::abs(r.y_hat[k] - y[k]);
            count += static_cast<double>(y.size());
        }
    }
    return is_classification(task) ? correct / count : abs_err / count;
}

}  // namespace gccm
