#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gccm/rng.hpp"
#include "gccm/tensor.hpp"

namespace gccm {

enum class NoiseKind { discrete, continuous };

inline std::string noise_kind_name(NoiseKind k) {
    return k == NoiseKind::discrete ? "discrete" : "continuous";
}

inline NoiseKind noise_kind_from_name(const std::string& s) {
    if (s == "discrete") return NoiseKind::discrete;
    if (s == "continuous") return NoiseKind::continuous;
    throw std::invalid_argument("unknown noise kind: " + s);
}

// Uniform-mixing transition matrix Q = (1-beta) I + (beta/K) 11^T.
inline Tensor make_transition_matrix(double beta, std::size_t k) {
    if (k < 2) throw std::invalid_argument("make_transition_matrix: need K >= 2");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("make_transition_matrix: beta must be in [0,1], got " + std::to_string(beta));
    Tensor q(k, k, beta / static_cast<double>(k));
    for (std::size_t i = 0; i < k; ++i) q(i, i) += 1.0 - beta;
    return q;
}

// Q_bar_t = Q_bar_{t-1} Q_t for t = 1..T; index 0 holds the identity.
inline std::vector<Tensor> cumulative_discrete(const std::vector<double>& betas, std::size_t k) {
    std::vector<Tensor> qbar;
    qbar.reserve(betas.size() + 1);
    qbar.push_back(Tensor::identity(k));
    for (double beta : betas) qbar.push_back(matmul(qbar.back(), make_transition_matrix(beta, k)));
    for (const Tensor& q : qbar)
        for (std::size_t i = 0; i < k; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < k; ++j) row += q(i, j);
            if (std::abs(row - 1.0) > 1e-10)
                throw std::logic_error("cumulative_discrete: row sum drifted to " + std::to_string(row));
        }
    return qbar;
}

// Per-step corruption rates with the derived cumulative quantities: alpha_bar
// products for the continuous chain, Q_bar matrices for the discrete one.
// Index convention is 1-based in t with alpha_bar(0) = 1 and qbar(0) = I.
class NoiseSchedule {
  public:
    static NoiseSchedule from_betas(NoiseKind kind, std::vector<double> betas, std::size_t k = 0) {
        if (betas.empty()) throw std::invalid_argument("NoiseSchedule: need at least one step");
        for (double b : betas)
            if (!(b >= 0.0 && b < 1.0))
                throw std::invalid_argument("NoiseSchedule: beta out of [0,1): " + std::to_string(b));
        NoiseSchedule s;
        s.kind_ = kind;
        s.k_ = k;
        s.betas_ = std::move(betas);
        s.alpha_bars_.assign(s.betas_.size() + 1, 1.0);
        for (std::size_t t = 1; t <= s.betas_.size(); ++t)
            s.alpha_bars_[t] = s.alpha_bars_[t - 1] * (1.0 - s.betas_[t - 1]);
        if (kind == NoiseKind::discrete) {
            if (k < 2) throw std::invalid_argument("NoiseSchedule: discrete schedule needs K >= 2");
            s.qbars_ = cumulative_discrete(s.betas_, k);
        }
        return s;
    }

    // Conventional linear schedule, beta from 1e-4 to 0.02.
    static NoiseSchedule linear_continuous(int t_total) {
        return from_betas(NoiseKind::continuous, linear_betas(t_total, 1e-4, 0.02));
    }

    // Linear from 1/T to 0.5, clipped inside (0,1); keeps Q_bar_T near uniform.
    static NoiseSchedule linear_discrete(int t_total, std::size_t k) {
        std::vector<double> betas = linear_betas(t_total, 1.0 / static_cast<double>(t_total), 0.5);
        for (double& b : betas) b = std::min(std::max(b, 1e-9), 1.0 - 1e-9);
        return from_betas(NoiseKind::discrete, std::move(betas), k);
    }

    // Schedule over the first t_per steps, reinterpreted for the given kind
    // (feature perturbation reuses the label schedule's early, light betas).
    NoiseSchedule prefix(int t_per, NoiseKind kind, std::size_t k = 0) const {
        if (t_per < 1 || static_cast<std::size_t>(t_per) > betas_.size())
            throw std::invalid_argument("NoiseSchedule::prefix: t_per out of range");
        std::vector<double> betas(betas_.begin(), betas_.begin() + t_per);
        return from_betas(kind, std::move(betas), k);
    }

    NoiseKind kind() const { return kind_; }
    int steps() const { return static_cast<int>(betas_.size()); }
    std::size_t num_classes() const { return k_; }
    const std::vector<double>& betas() const { return betas_; }

    double beta(int t) const {
        check_t(t);
        return betas_[static_cast<std::size_t>(t) - 1];
    }

    double alpha_bar(int t) const {
        if (t < 0 || static_cast<std::size_t>(t) >= alpha_bars_.size())
            throw std::invalid_argument("NoiseSchedule::alpha_bar: t out of range");
        return alpha_bars_[static_cast<std::size_t>(t)];
    }

    const Tensor& qbar(int t) const {
        require_discrete();
        if (t < 0 || static_cast<std::size_t>(t) >= qbars_.size())
            throw std::invalid_argument("NoiseSchedule::qbar: t out of range");
        return qbars_[static_cast<std::size_t>(t)];
    }

    Tensor transition(int t) const {
        require_discrete();
        check_t(t);
        return make_transition_matrix(beta(t), k_);
    }

    // Mixing coefficient of the multi-step discrete transition from step s to
    // step t: Q_{s->t} = rho I + (1-rho) 11^T/K with rho = prod (1-beta_i).
    double segment_retention(int s, int t) const {
        if (s < 0 || t < s || static_cast<std::size_t>(t) >= alpha_bars_.size())
            throw std::invalid_argument("NoiseSchedule::segment_retention: bad segment");
        return alpha_bars_[static_cast<std::size_t>(t)] / alpha_bars_[static_cast<std::size_t>(s)];
    }

  private:
    static std::vector<double> linear_betas(int t_total, double lo, double hi) {
        if (t_total < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        std::vector<double> betas(static_cast<std::size_t>(t_total));
        for (int t = 0; t < t_total; ++t)
            betas[static_cast<std::size_t>(t)] =
                t_total == 1 ? lo : lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(t_total - 1);
        return betas;
    }

    void check_t(int t) const {
        if (t < 1 || static_cast<std::size_t>(t) > betas_.size())
            throw std::invalid_argument("NoiseSchedule: t=" + std::to_string(t) + " outside 1.." +
                                        std::to_string(betas_.size()));
    }

    void require_discrete() const {
        if (kind_ != NoiseKind::discrete)
            throw std::logic_error("NoiseSchedule: discrete quantities requested from a continuous schedule");
    }

    NoiseKind kind_ = NoiseKind::continuous;
    std::size_t k_ = 0;
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
    std::vector<Tensor> qbars_;
};

// A corrupted label with its step index; continuous views keep the sampled
// noise so the diffusion loss can target it.
struct NoisyView {
    Tensor y_t;
    int t = 0;
    std::optional<Tensor> eps;
};

namespace detail {

inline void require_one_hot_rows(const Tensor& y, const char* who) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) {
            if (y(i, j) != 0.0 && y(i, j) != 1.0)
                throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) + " is not one-hot");
            sum += y(i, j);
        }
        if (sum != 1.0)
            throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) + " is not one-hot");
    }
}

}  // namespace detail

// One-shot categorical corruption: each row is drawn from Cat(y0_row Q_bar_t).
inline NoisyView sample_discrete_forward(const Tensor& y0, int t, const NoiseSchedule& schedule, Rng& rng) {
    detail::require_one_hot_rows(y0, "sample_discrete_forward");
    const Tensor& qbar = schedule.qbar(t);
    if (y0.cols() != qbar.rows())
        throw std::invalid_argument("sample_discrete_forward: labels " + y0.shape() + " vs K=" +
                                    std::to_string(qbar.rows()));
    Tensor y_t(y0.rows(), y0.cols(), 0.0);
    std::vector<double> probs(y0.cols());
    for (std::size_t i = 0; i < y0.rows(); ++i) {
        const std::size_t cls = y0.argmax_row(i);
        for (std::size_t j = 0; j < y0.cols(); ++j) probs[j] = qbar(cls, j);
        y_t(i, rng.categorical(probs)) = 1.0;
    }
    return NoisyView{std::move(y_t), t, std::nullopt};
}

// q(Y_{t-1} | Y_t, Y_0) over the K classes, from the Bayes identity
// q(Y_t | Y_{t-1}) q(Y_{t-1} | Y_0) / q(Y_t | Y_0) with one-hot arguments.
inline Tensor discrete_posterior(const Tensor& y_t_row, const Tensor& y_0_row, int t,
                                 const NoiseSchedule& schedule) {
    if (t < 1) throw std::invalid_argument("discrete_posterior: t must be >= 1");
    detail::require_one_hot_rows(y_t_row, "discrete_posterior(y_t)");
    detail::require_one_hot_rows(y_0_row, "discrete_posterior(y_0)");
    const std::size_t k = schedule.num_classes();
    if (y_t_row.rows() != 1 || y_t_row.cols() != k || y_0_row.rows() != 1 || y_0_row.cols() != k)
        throw std::invalid_argument("discrete_posterior: rows must be 1x" + std::to_string(k));
    const std::size_t jt = y_t_row.argmax_row(0);
    const std::size_t j0 = y_0_row.argmax_row(0);
    const Tensor q_t = schedule.transition(t);
    const Tensor& qbar_prev = schedule.qbar(t - 1);
    const double denom = schedule.qbar(t)(j0, jt);
    if (denom <= 0.0) throw std::runtime_error("discrete_posterior: zero denominator q(Y_t|Y_0)");
    Tensor post(1, k, 0.0);
    for (std::size_t c = 0; c < k; ++c) post(0, c) = q_t(c, jt) * qbar_prev(j0, c) / denom;
    return post;
}

// Multi-step variant used by strided reverse sampling: q(Y_s | Y_t, Y_0) for
// any 0 <= s < t, with the segment transition in closed form.
inline Tensor discrete_posterior_segment(const Tensor& y_t_row, const Tensor& y_0_row, int s, int t,
                                         const NoiseSchedule& schedule) {
    if (s < 0 || s >= t) throw std::invalid_argument("discrete_posterior_segment: need 0 <= s < t");
    const std::size_t k = schedule.num_classes();
    const std::size_t jt = y_t_row.argmax_row(0);
    const std::size_t j0 = y_0_row.argmax_row(0);
    const double rho = schedule.segment_retention(s, t);
    const double uniform = (1.0 - rho) / static_cast<double>(k);
    const Tensor& qbar_s = schedule.qbar(s);
    const double denom = schedule.qbar(t)(j0, jt);
    if (denom <= 0.0) throw std::runtime_error("discrete_posterior_segment: zero denominator");
    Tensor post(1, k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const double seg = (c == jt ? rho : 0.0) + uniform;
        post(0, c) = seg * qbar_s(j0, c) / denom;
    }
    return post;
}

// Closed-form Gaussian corruption Y_t = sqrt(abar_t) Y_0 + sqrt(1-abar_t) eps.
inline NoisyView sample_continuous_forward(const Tensor& y0, int t, const NoiseSchedule& schedule, Rng& rng) {
    const double abar = schedule.alpha_bar(t);
    Tensor eps(y0.rows(), y0.cols());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    Tensor y_t = y0;
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    for (std::size_t i = 0; i < y_t.size(); ++i) y_t[i] = a * y_t[i] + b * eps[i];
    return NoisyView{std::move(y_t), t, std::move(eps)};
}

// Reverse transition mean mu = (Y_t - beta_t / sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t).
inline Tensor reverse_mean(const Tensor& y_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule) {
    if (!y_t.same_shape(eps_hat))
        throw std::invalid_argument("reverse_mean: shape mismatch (" + y_t.shape() + " vs " + eps_hat.shape() + ")");
    const double abar = schedule.alpha_bar(t);
    if (abar >= 1.0) throw std::invalid_argument("reverse_mean: alpha_bar(t) = 1 at t >= 1");
    const double beta = schedule.beta(t);
    const double coef = beta / std::sqrt(1.0 - abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    Tensor mu = y_t;
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = (mu[i] - coef * eps_hat[i]) * inv_sqrt_alpha;
    return mu;
}

// Light forward-process corruption of the conditioning features: draws a step
// s uniformly from {1..T_per} and applies the matching forward process once.
inline Tensor perturb_features(const Tensor& x, NoiseKind kind, int t_per,
                               const NoiseSchedule& schedule_per, Rng& rng) {
    if (t_per < 1) throw std::invalid_argument("perturb_features: T_per must be >= 1");
    if (t_per > schedule_per.steps())
        throw std::invalid_argument("perturb_features: T_per exceeds the perturbation schedule");
    const int s = static_cast<int>(rng.uniform_int(1, t_per));
    if (kind == NoiseKind::discrete) return sample_discrete_forward(x, s, schedule_per, rng).y_t;
    return sample_continuous_forward(x, s, schedule_per, rng).y_t;
}

}  // namespace gccm
