#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "gccm/autodiff.hpp"
#include "gccm/denoiser.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/tensor.hpp"

namespace gccm {

// Per-step loss decomposition; total = lambda1 (b1 + b2) + lambda2 * consistency.
struct LossBreakdown {
    double boundary_t1 = 0.0;
    double boundary_t2 = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double tau = 0.0;
};

constexpr double kProbFloor = 1e-12;

// Supervised boundary term: cross-entropy against the one-hot target for
// classification (probability floored so saturated softmax stays finite),
// mean absolute error for regression.
inline ad::Var boundary_loss(const ad::Var& y_hat, const Tensor& y, TaskKind task) {
    const Tensor& pred = y_hat.value();
    if (!pred.same_shape(y))
        throw std::invalid_argument("boundary_loss: prediction " + pred.shape() + " vs target " + y.shape());
    const std::size_t n = pred.rows();
    if (is_classification(task)) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < pred.cols(); ++j) {
                if (pred(i, j) < -1e-9)
                    throw std::invalid_argument("boundary_loss: negative probability in row " + std::to_string(i));
                sum += pred(i, j);
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw std::invalid_argument("boundary_loss: row " + std::to_string(i) +
                                            " is not a probability vector (sum=" + std::to_string(sum) + ")");
        }
        ad::Var p_true = ad::sum_rows(ad::mul(y_hat, ad::Var::leaf(y)));
        return ad::scale(ad::sum_all(ad::log(ad::clamp_min(p_true, kProbFloor))),
                         -1.0 / static_cast<double>(n));
    }
    ad::Var diff = ad::sub(y_hat, ad::Var::leaf(y));
    return ad::scale(ad::sum_all(ad::abs(diff)), 1.0 / static_cast<double>(pred.size()));
}

// d^s: mean squared difference between the two predictions.
inline ad::Var self_consistency_loss(const ad::Var& y_hat_t1, const ad::Var& y_hat_t2) {
    if (!y_hat_t1.value().same_shape(y_hat_t2.value()))
        throw std::invalid_argument("self_consistency_loss: shape mismatch (" + y_hat_t1.value().shape() +
                                    " vs " + y_hat_t2.value().shape() + ")");
    ad::Var d = ad::sub(y_hat_t1, y_hat_t2);
    return ad::scale(ad::sum_all(ad::mul(d, d)), 1.0 / static_cast<double>(d.value().size()));
}

// d^c: symmetric InfoNCE over cosine similarities. Row i of Z^{t1} pairs
// positively with row i of Z^{t2}; all other rows are negatives. Each
// direction is computed as mean_i [ logsumexp_j(S_ij / tau) - S_ii / tau ].
inline ad::Var contrastive_loss(const ad::Var& z_t1, const ad::Var& z_t2, double tau) {
    const Tensor& z1 = z_t1.value();
    const Tensor& z2 = z_t2.value();
    if (!z1.same_shape(z2))
        throw std::invalid_argument("contrastive_loss: shape mismatch (" + z1.shape() + " vs " + z2.shape() + ")");
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
    const std::size_t n = z1.rows();
    if (n < 1) throw std::invalid_argument("contrastive_loss: empty batch");
    auto check_norms = [](const Tensor& z, const char* which) {
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < z.cols(); ++j) s += z(i, j) * z(i, j);
            if (s == 0.0)
                throw std::invalid_argument(std::string("contrastive_loss: zero-norm latent row ") +
                                            std::to_string(i) + " in " + which);
        }
    };
    check_norms(z1, "Z^t1");
    check_norms(z2, "Z^t2");

    ad::Var norms1 = ad::l2norm_rows(z_t1);
    ad::Var norms2 = ad::l2norm_rows(z_t2);
    ad::Var sim = ad::divide(ad::matmul(z_t1, ad::transpose(z_t2)),
                             ad::matmul(norms1, ad::transpose(norms2)));
    ad::Var sim_tau = ad::scale(sim, 1.0 / tau);
    ad::Var diag = ad::sum_rows(ad::mul(sim_tau, ad::Var::leaf(Tensor::identity(n))));
    const double inv_n = 1.0 / static_cast<double>(n);
    ad::Var fwd = ad::scale(ad::sum_all(ad::sub(ad::logsumexp_rows(sim_tau), diag)), inv_n);
    ad::Var bwd = ad::scale(ad::sum_all(ad::sub(ad::logsumexp_rows(ad::transpose(sim_tau)), diag)), inv_n);
    return ad::scale(ad::add(fwd, bwd), 0.5);
}

struct Objective {
    ad::Var total;
    LossBreakdown parts;
};

namespace detail {

inline Objective combine(const ad::Var& b1, const ad::Var& b2, const ad::Var& consistency,
                         double lambda1, double lambda2, double tau) {
    ad::Var total = ad::add(ad::scale(ad::add(b1, b2), lambda1), ad::scale(consistency, lambda2));
    LossBreakdown parts;
    parts.boundary_t1 = b1.value()(0, 0);
    parts.boundary_t2 = b2.value()(0, 0);
    parts.consistency = consistency.value()(0, 0);
    parts.total = total.value()(0, 0);
    parts.lambda1 = lambda1;
    parts.lambda2 = lambda2;
    parts.tau = tau;
    return Objective{std::move(total), parts};
}

}  // namespace detail

// Triadic consistency objective: two boundary terms plus the pairwise
// self-consistency distance between the predictions.
inline Objective pcl_objective(const ad::Var& y_hat_t1, const ad::Var& y_hat_t2, const Tensor& y,
                               double lambda1, double lambda2, TaskKind task) {
    ad::Var b1 = boundary_loss(y_hat_t1, y, task);
    ad::Var b2 = boundary_loss(y_hat_t2, y, task);
    ad::Var ds = self_consistency_loss(y_hat_t1, y_hat_t2);
    return detail::combine(b1, b2, ds, lambda1, lambda2, 0.0);
}

inline Objective pcl_objective(const DenoiserOutput& out_t1, const DenoiserOutput& out_t2,
                               const Tensor& y, double lambda1, double lambda2, TaskKind task) {
    return pcl_objective(out_t1.y_hat, out_t2.y_hat, y, lambda1, lambda2, task);
}

// The self-consistency distance replaced by contrastive consistency over the
// latent views.
inline Objective gccm_objective(const ad::Var& y_hat_t1, const ad::Var& y_hat_t2,
                                const ad::Var& z_t1, const ad::Var& z_t2, const Tensor& y,
                                double lambda1, double lambda2, double tau, TaskKind task) {
    ad::Var b1 = boundary_loss(y_hat_t1, y, task);
    ad::Var b2 = boundary_loss(y_hat_t2, y, task);
    ad::Var dc = contrastive_loss(z_t1, z_t2, tau);
    return detail::combine(b1, b2, dc, lambda1, lambda2, tau);
}

inline Objective gccm_objective(const DenoiserOutput& out_t1, const DenoiserOutput& out_t2,
                                const Tensor& y, double lambda1, double lambda2, double tau,
                                TaskKind task) {
    return gccm_objective(out_t1.y_hat, out_t2.y_hat, out_t1.z, out_t2.z, y, lambda1, lambda2, tau, task);
}

}  // namespace gccm
