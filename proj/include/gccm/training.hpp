#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gccm/autodiff.hpp"
#include "gccm/denoiser.hpp"
#include "gccm/diffusion.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/inference.hpp"
#include "gccm/objectives.hpp"
#include "gccm/rng.hpp"

namespace gccm {

// The ablation ladder: plain diffusion training, consistency training with
// the self-consistency distance, the same with the contrastive distance, and
// the full model with feature perturbation on top.
enum class Variant { diffusion, pcl, pcl_contrastive, gccm };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::diffusion: return "diffusion";
        case Variant::pcl: return "pcl";
        case Variant::pcl_contrastive: return "pcl-contrastive";
        case Variant::gccm: return "gccm";
    }
    throw std::logic_error("variant_name: bad enum");
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "diffusion") return Variant::diffusion;
    if (s == "pcl") return Variant::pcl;
    if (s == "pcl-contrastive") return Variant::pcl_contrastive;
    if (s == "gccm") return Variant::gccm;
    throw std::invalid_argument("unknown variant: " + s);
}

struct TrainConfig {
    Variant variant = Variant::gccm;
    int T = 1000;
    double alpha = 0.2;       // time-decay ratio: t2 = max(1, floor(alpha * t1))
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double tau = 0.5;
    int T_per = 10;
    NoiseKind perturb_kind = NoiseKind::continuous;
    bool perturb = true;      // feature perturbation (gccm only; off reduces gccm to pcl-contrastive)
    int epochs = 100;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::size_t layers = 3;
    std::size_t d_h = 16;
    std::size_t d_z = 16;
    std::size_t contrastive_cap = 64;  // N_c: max node instances per contrastive batch
    int eval_samples = 1;              // noise draws aggregated per validation prediction

    void validate() const {
        if (T < 1) throw std::invalid_argument("TrainConfig: T must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("TrainConfig: alpha must be in (0,1)");
        if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("TrainConfig: negative loss weight");
        if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be positive");
        if (T_per < 1 || T_per > T) throw std::invalid_argument("TrainConfig: T_per must be in 1..T");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (d_h < 1 || d_z < 1) throw std::invalid_argument("TrainConfig: dims must be positive");
        if (contrastive_cap < 1) throw std::invalid_argument("TrainConfig: contrastive_cap must be >= 1");
        if (eval_samples < 1) throw std::invalid_argument("TrainConfig: eval_samples must be >= 1");
    }
};

// First/second-moment accumulators per parameter block.
struct AdamState {
    std::map<std::string, std::pair<Tensor, Tensor>> moments;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam step over every parameter block, reading gradients
// from the leaves. NaN gradients abort the step.
inline void adam_update(DenoiserParams& params, AdamState& state, double lr) {
    params.for_each([&state](const std::string& name, ad::Var& v) {
        if (!state.moments.count(name))
            state.moments.emplace(name, std::make_pair(Tensor(v.value().rows(), v.value().cols(), 0.0),
                                                       Tensor(v.value().rows(), v.value().cols(), 0.0)));
    });
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.for_each([&](const std::string& name, ad::Var& v) {
        auto& [m, s] = state.moments.at(name);
        const Tensor& g = v.grad();
        Tensor& w = v.mutable_value();
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (std::isnan(g[k]))
                throw std::runtime_error("adam_update: NaN gradient in block " + name);
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            s[k] = state.beta2 * s[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double s_hat = s[k] / bc2;
            w[k] -= lr * m_hat / (std::sqrt(s_hat) + state.eps);
        }
    });
}

struct TrainState {
    DenoiserParams params;
    AdamState opt;
    int epoch = 0;
    std::optional<DenoiserParams> best_params;
    double best_val = 0.0;
    bool has_best = false;
};

struct MetricsRow {
    int epoch = 0;
    int step = 0;
    Variant variant = Variant::gccm;
    int t1 = 0;
    int t2 = 0;
    LossBreakdown loss;
    std::optional<double> val_metric;  // filled on the last step row of each epoch
};

// t1 ~ U{1..T}, t2 = max(1, floor(alpha * t1)).
inline std::pair<int, int> sample_timestep_pair(int t_total, double alpha, Rng& rng) {
    if (t_total < 1) throw std::invalid_argument("sample_timestep_pair: T must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("sample_timestep_pair: alpha must be in (0,1)");
    const int t1 = static_cast<int>(rng.uniform_int(1, t_total));
    const int t2 = std::max(1, static_cast<int>(std::floor(alpha * static_cast<double>(t1))));
    return {t1, t2};
}

namespace detail {

// Purpose salts for derived rng streams. Every consumer draws from its own
// stream keyed by (seed, epoch, step, instance, salt), so adding or removing
// one consumer (e.g. perturbation) never shifts any other draw.
enum StreamSalt : std::uint64_t {
    kSaltInit = 1,
    kSaltShuffle = 2,
    kSaltTimestep = 3,
    kSaltNoise1 = 4,
    kSaltNoise2 = 5,
    kSaltPerturb1 = 6,
    kSaltPerturb2 = 7,
    kSaltSubsample = 8,
    kSaltVal = 9,
};

inline Rng step_stream(const TrainConfig& cfg, int epoch, int step, std::size_t instance,
                       StreamSalt salt) {
    return Rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(instance), salt}));
}

inline NoisyView sample_forward(const Tensor& y0, int t, const NoiseSchedule& schedule, Rng& rng) {
    return schedule.kind() == NoiseKind::discrete ? sample_discrete_forward(y0, t, schedule, rng)
                                                  : sample_continuous_forward(y0, t, schedule, rng);
}

}  // namespace detail

// Everything per-run that the steps need besides the evolving state.
struct TrainPlan {
    TrainConfig config;
    NoiseSchedule schedule;
    std::optional<NoiseSchedule> perturb_schedule;

    static TrainPlan make(const Dataset& ds, const TrainConfig& cfg) {
        cfg.validate();
        if (ds.empty()) throw std::invalid_argument("TrainPlan: empty dataset");
        const bool discrete = is_classification(ds.task());
        NoiseSchedule sched = discrete ? NoiseSchedule::linear_discrete(cfg.T, ds.label_dim())
                                       : NoiseSchedule::linear_continuous(cfg.T);
        std::optional<NoiseSchedule> per;
        if (cfg.variant == Variant::gccm && cfg.perturb)
            per = sched.prefix(cfg.T_per, cfg.perturb_kind, ds.feature_dim());
        return TrainPlan{cfg, std::move(sched), std::move(per)};
    }
};

namespace detail {

struct BatchViews {
    std::vector<ad::Var> y_hat_t1, y_hat_t2, z_t1, z_t2;
    std::vector<Tensor> labels;
    int first_t1 = 0, first_t2 = 0;
};

// Runs the two consistency passes for each instance of the batch and stacks
// the heads; the per-instance timestep pair follows Algorithm 1.
inline BatchViews run_consistency_passes(const std::vector<const LabeledInstance*>& batch,
                                         const TrainPlan& plan, const DenoiserParams& params,
                                         int epoch, int step) {
    const TrainConfig& cfg = plan.config;
    BatchViews views;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const LabeledInstance& inst = *batch[i];
        Rng rng_t = step_stream(cfg, epoch, step, i, kSaltTimestep);
        const auto [t1, t2] = sample_timestep_pair(cfg.T, cfg.alpha, rng_t);
        if (i == 0) {
            views.first_t1 = t1;
            views.first_t2 = t2;
        }
        Rng rng_n1 = step_stream(cfg, epoch, step, i, kSaltNoise1);
        Rng rng_n2 = step_stream(cfg, epoch, step, i, kSaltNoise2);
        const NoisyView v1 = sample_forward(inst.y, t1, plan.schedule, rng_n1);
        const NoisyView v2 = sample_forward(inst.y, t2, plan.schedule, rng_n2);

        const Graph* g1 = &inst.graph;
        const Graph* g2 = &inst.graph;
        std::optional<Graph> pg1, pg2;
        if (plan.perturb_schedule) {
            Rng rng_p1 = step_stream(cfg, epoch, step, i, kSaltPerturb1);
            Rng rng_p2 = step_stream(cfg, epoch, step, i, kSaltPerturb2);
            pg1.emplace(perturb_features(inst.graph.x, cfg.perturb_kind, cfg.T_per,
                                         *plan.perturb_schedule, rng_p1),
                        inst.graph.a);
            pg2.emplace(perturb_features(inst.graph.x, cfg.perturb_kind, cfg.T_per,
                                         *plan.perturb_schedule, rng_p2),
                        inst.graph.a);
            g1 = &*pg1;
            g2 = &*pg2;
        }

        DenoiserOutput o1 = denoise(v1.y_t, t1, cfg.T, *g1, params, inst.task);
        DenoiserOutput o2 = denoise(v2.y_t, t2, cfg.T, *g2, params, inst.task);
        views.y_hat_t1.push_back(std::move(o1.y_hat));
        views.y_hat_t2.push_back(std::move(o2.y_hat));
        views.z_t1.push_back(std::move(o1.z));
        views.z_t2.push_back(std::move(o2.z));
        views.labels.push_back(inst.y);
    }
    return views;
}

inline Tensor stack_labels(const std::vector<Tensor>& labels) {
    std::size_t rows = 0;
    for (const Tensor& l : labels) rows += l.rows();
    Tensor out(rows, labels.front().cols());
    std::size_t r = 0;
    for (const Tensor& l : labels)
        for (std::size_t i = 0; i < l.rows(); ++i, ++r)
            for (std::size_t j = 0; j < l.cols(); ++j) out(r, j) = l(i, j);
    return out;
}

}  // namespace detail

// One consistency training step (PCL flavor): per-instance noisy pairs with
// identical conditioning, triadic objective, one optimizer update.
inline LossBreakdown train_step_pcl(const std::vector<const LabeledInstance*>& batch,
                                    TrainState& state, const TrainPlan& plan, int epoch, int step) {
    if (batch.empty()) throw std::invalid_argument("train_step_pcl: empty batch");
    auto views = detail::run_consistency_passes(batch, plan, state.params, epoch, step);
    ad::Var y1 = ad::concat_rows(views.y_hat_t1);
    ad::Var y2 = ad::concat_rows(views.y_hat_t2);
    Tensor y = detail::stack_labels(views.labels);
    Objective obj = pcl_objective(y1, y2, y, plan.config.lambda1, plan.config.lambda2,
                                  batch.front()->task);
    state.params.zero_grads();
    ad::backward(obj.total);
    adam_update(state.params, state.opt, plan.config.learning_rate);
    return obj.parts;
}

// One GCCM step: independent noisy labels, independently perturbed feature
// views (when enabled), contrastive consistency over the stacked latents.
// Node tasks subsample at most contrastive_cap node instances, the same
// indices on both sides.
inline LossBreakdown train_step_gccm(const std::vector<const LabeledInstance*>& batch,
                                     TrainState& state, const TrainPlan& plan, int epoch, int step) {
    if (batch.empty()) throw std::invalid_argument("train_step_gccm: empty batch");
    const TrainConfig& cfg = plan.config;
    auto views = detail::run_consistency_passes(batch, plan, state.params, epoch, step);
    ad::Var y1 = ad::concat_rows(views.y_hat_t1);
    ad::Var y2 = ad::concat_rows(views.y_hat_t2);
    ad::Var z1 = ad::concat_rows(views.z_t1);
    ad::Var z2 = ad::concat_rows(views.z_t2);
    if (z1.value().rows() > cfg.contrastive_cap) {
        Rng rng_sub = detail::step_stream(cfg, epoch, step, 0, detail::kSaltSubsample);
        auto idx = rng_sub.sample_without_replacement(z1.value().rows(), cfg.contrastive_cap);
        z1 = ad::select_rows(z1, idx);
        z2 = ad::select_rows(z2, idx);
    }
    Tensor y = detail::stack_labels(views.labels);
    Objective obj = gccm_objective(y1, y2, z1, z2, y, cfg.lambda1, cfg.lambda2, cfg.tau,
                                   batch.front()->task);
    state.params.zero_grads();
    ad::backward(obj.total);
    adam_update(state.params, state.opt, cfg.learning_rate);
    return obj.parts;
}

// Plain diffusion training: one timestep per instance; classification targets
// train cross-entropy against the clean labels, regression targets train MSE
// of the predicted noise against the injected noise.
inline LossBreakdown train_step_diffusion(const std::vector<const LabeledInstance*>& batch,
                                          TrainState& state, const TrainPlan& plan, int epoch,
                                          int step) {
    if (batch.empty()) throw std::invalid_argument("train_step_diffusion: empty batch");
    const TrainConfig& cfg = plan.config;
    const TaskKind task = batch.front()->task;
    std::vector<ad::Var> preds;
    std::vector<Tensor> targets;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const LabeledInstance& inst = *batch[i];
        Rng rng_t = detail::step_stream(cfg, epoch, step, i, detail::kSaltTimestep);
        const int t = static_cast<int>(rng_t.uniform_int(1, cfg.T));
        Rng rng_n = detail::step_stream(cfg, epoch, step, i, detail::kSaltNoise1);
        const NoisyView view = detail::sample_forward(inst.y, t, plan.schedule, rng_n);
        DenoiserOutput out = denoise(view.y_t, t, cfg.T, inst.graph, state.params, task);
        preds.push_back(std::move(out.y_hat));
        targets.push_back(is_classification(task) ? inst.y : *view.eps);
    }
    ad::Var pred = ad::concat_rows(preds);
    Tensor target = detail::stack_labels(targets);
    ad::Var loss;
    if (is_classification(task)) {
        loss = boundary_loss(pred, target, task);
    } else {
        ad::Var d = ad::sub(pred, ad::Var::leaf(target));
        loss = ad::scale(ad::sum_all(ad::mul(d, d)), 1.0 / static_cast<double>(target.size()));
    }
    ad::Var total = ad::scale(loss, cfg.lambda1);
    state.params.zero_grads();
    ad::backward(total);
    adam_update(state.params, state.opt, cfg.learning_rate);
    LossBreakdown parts;
    parts.boundary_t1 = loss.value()(0, 0);
    parts.total = total.value()(0, 0);
    parts.lambda1 = cfg.lambda1;
    parts.lambda2 = cfg.lambda2;
    parts.tau = 0.0;
    return parts;
}

inline LossBreakdown train_step(const std::vector<const LabeledInstance*>& batch, TrainState& state,
                                const TrainPlan& plan, int epoch, int step) {
    switch (plan.config.variant) {
        case Variant::diffusion: return train_step_diffusion(batch, state, plan, epoch, step);
        case Variant::pcl: return train_step_pcl(batch, state, plan, epoch, step);
        case Variant::pcl_contrastive:
        case Variant::gccm: return train_step_gccm(batch, state, plan, epoch, step);
    }
    throw std::logic_error("train_step: bad variant");
}

struct TrainResult {
    TrainState state;
    std::vector<MetricsRow> history;
    TrainPlan plan;
};

// Epoch loop over the shuffled train split with per-epoch validation through
// one-step prediction; the best-on-validation parameter snapshot is retained.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    if (cfg.variant != Variant::gccm) cfg.perturb = false;
    TrainPlan plan = TrainPlan::make(ds, cfg);
    const std::vector<std::size_t> train_idx = ds.indices_of(Split::train);
    const std::vector<std::size_t> val_idx = ds.indices_of(Split::val);
    if (train_idx.empty() && cfg.epochs > 0)
        throw std::invalid_argument("train: no training instances in dataset");

    Rng rng_init(derive_seed(cfg.seed, {detail::kSaltInit}));
    DenoiserConfig dcfg{cfg.d_h, cfg.d_z, cfg.layers};
    TrainState state{DenoiserParams::init(ds.label_dim(), ds.feature_dim(), dcfg, rng_init), AdamState{}};

    TrainResult result{std::move(state), {}, plan};
    const bool higher_better = is_classification(ds.task());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng rng_shuffle(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), detail::kSaltShuffle}));
        rng_shuffle.shuffle(order);

        int step = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const LabeledInstance*> batch;
            for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++k)
                batch.push_back(&ds[order[k]]);
            int t1 = 0, t2 = 0;
            if (cfg.variant != Variant::diffusion) {
                Rng probe = detail::step_stream(cfg, epoch, step, 0, detail::kSaltTimestep);
                std::tie(t1, t2) = sample_timestep_pair(cfg.T, cfg.alpha, probe);
            } else {
                Rng probe = detail::step_stream(cfg, epoch, step, 0, detail::kSaltTimestep);
                t1 = static_cast<int>(probe.uniform_int(1, cfg.T));
            }
            LossBreakdown parts = train_step(batch, result.state, plan, epoch, step);
            if (!std::isfinite(parts.total))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step));
            result.history.push_back(MetricsRow{epoch, step, cfg.variant, t1, t2, parts, std::nullopt});
            ++step;
        }

        if (!val_idx.empty()) {
            const double val = evaluate_split(ds, val_idx, result.state.params, plan.schedule,
                                              cfg.eval_samples, 1,
                                              derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch),
                                                                     detail::kSaltVal}));
            if (!result.history.empty()) result.history.back().val_metric = val;
            const bool better = !result.state.has_best ||
                                (higher_better ? val > result.state.best_val : val < result.state.best_val);
            if (better) {
                result.state.best_val = val;
                result.state.best_params = result.state.params.clone();
                result.state.has_best = true;
            }
        }
        result.state.epoch = epoch + 1;
    }
    return result;
}

}  // namespace gccm
