#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gccm/denoiser.hpp"
#include "gccm/diffusion.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/objectives.hpp"
#include "gccm/rng.hpp"
#include "gccm/training.hpp"

namespace gccm {

// Elementwise share of the fused representation contributed by the noisy
// label and timestep pathways:
//   (|Y_t W_y| + |t_emb W_t|) / (|Y_t W_y| + |t_emb W_t| + |X W_x|),
// zero where the denominator vanishes. Dark maps are the shortcut signature.
inline Tensor contribution_heatmap(const FusionTerms& terms) {
    const Tensor& ty = terms.term_y;
    const Tensor& tt = terms.term_t;
    const Tensor& tx = terms.term_x;
    if (!ty.same_shape(tt) || !ty.same_shape(tx))
        throw std::invalid_argument("contribution_heatmap: addend shapes differ (" + ty.shape() + ", " +
                                    tt.shape() + ", " + tx.shape() + ")");
    Tensor out(ty.rows(), ty.cols(), 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double num = std::abs(ty[k]) + std::abs(tt[k]);
        const double denom = num + std::abs(tx[k]);
        out[k] = denom < 1e-15 ? 0.0 : num / denom;
    }
    return out;
}

inline double mean_value(const Tensor& t) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) s += t[k];
    return s / static_cast<double>(t.size());
}

struct Lemma1Report {
    double max_ds = 0.0;                // max d^s over all draws; 0 under the shortcut set
    double max_boundary_equiv_gap = 0.0;  // |PCL total - 2 lambda1 d^b(g(G), Y)|
    int draws = 0;
    bool pass = false;
};

struct Lemma2Report {
    std::vector<int> batch_sizes;
    double max_collapse_gap = 0.0;  // |d^c(collapse) - log N|
    double dc_collapse = 0.0;       // value at the largest N
    double dc_distinct = 0.0;       // orthonormal-latents value at the largest N
    double logn_reference = 0.0;
    bool distinct_below_logn = false;
    bool pass = false;
};

struct Lemma3Report {
    double z_gap_norm = 0.0;   // ||Z^t1 - Z^t2||_F with perturbation on
    double control_gap = 0.0;  // same with perturbation off; exactly 0
    bool degenerate_network = false;
    bool pass = false;
};

struct GradcheckReport {
    std::map<std::string, double> max_error_per_block;
    double max_error = 0.0;
    std::string worst_block;
    bool pass = false;
};

struct DiagnosticsReport {
    Tensor contribution;
    double contribution_mean = 0.0;
    int probe_t = 0;
    Lemma1Report lemma1;
    Lemma2Report lemma2;
    Lemma3Report lemma3;
    GradcheckReport gradcheck;
};

// Checks the Lemma 1 identities on a shortcut-projected copy of the given
// parameters: over random timestep pairs and noisy labels, d^s must vanish
// exactly and the PCL total must equal twice the supervised boundary term of
// the collapsed deterministic predictor.
inline Lemma1Report verify_lemma1(const DenoiserParams& base,
                                  const std::vector<const LabeledInstance*>& batch,
                                  const NoiseSchedule& schedule, double lambda1, double lambda2,
                                  int draws, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("verify_lemma1: empty batch");
    DenoiserParams sc = base.shortcut_copy();
    const int t_total = schedule.steps();
    Lemma1Report report;
    report.draws = draws;
    for (int d = 0; d < draws; ++d) {
        for (const LabeledInstance* inst : batch) {
            const int t1 = static_cast<int>(rng.uniform_int(1, t_total));
            const int t2 = static_cast<int>(rng.uniform_int(1, t_total));
            const NoisyView v1 = schedule.kind() == NoiseKind::discrete
                                     ? sample_discrete_forward(inst->y, t1, schedule, rng)
                                     : sample_continuous_forward(inst->y, t1, schedule, rng);
            const NoisyView v2 = schedule.kind() == NoiseKind::discrete
                                     ? sample_discrete_forward(inst->y, t2, schedule, rng)
                                     : sample_continuous_forward(inst->y, t2, schedule, rng);
            DenoiserOutput o1 = denoise(v1.y_t, t1, t_total, inst->graph, sc, inst->task);
            DenoiserOutput o2 = denoise(v2.y_t, t2, t_total, inst->graph, sc, inst->task);
            Objective obj = pcl_objective(o1, o2, inst->y, lambda1, lambda2, inst->task);
            report.max_ds = std::max(report.max_ds, obj.parts.consistency);

            // Deterministic reduction g(G): the same network on arbitrary
            // (Y_t, t); by construction it ignores them.
            ad::Var gb = boundary_loss(o1.y_hat, inst->y, inst->task);
            const double reference = 2.0 * lambda1 * gb.value()(0, 0);
            report.max_boundary_equiv_gap =
                std::max(report.max_boundary_equiv_gap, std::abs(obj.parts.total - reference));
        }
    }
    report.pass = report.max_ds == 0.0 && report.max_boundary_equiv_gap <= 1e-12;
    return report;
}

// Checks the Appendix closed form for the collapsed configuration: with
// W_y = W_t = W_x = 0 every instance maps to the same latent, and d^c equals
// log N; a distinct orthonormal latent configuration scores strictly below,
// so the shortcut set cannot be a minimizer of d^c.
inline Lemma2Report verify_lemma2(const std::vector<int>& batch_sizes, std::size_t d_z, double tau,
                                  Rng& rng) {
    Lemma2Report report;
    report.batch_sizes = batch_sizes;
    for (int n : batch_sizes) {
        if (n < 2) throw std::invalid_argument("verify_lemma2: N must be >= 2");
        const std::size_t un = static_cast<std::size_t>(n);
        const std::size_t dz = std::max(d_z, un);

        // Full collapse through the network: zero fusion weights, nonzero
        // head biases, so all N instances share one nonzero latent.
        DenoiserConfig cfg{4, dz, 1};
        Rng init_rng(rng.next_u64());
        DenoiserParams params = DenoiserParams::init(2, 3, cfg, init_rng);
        params.w_y = ad::Var::leaf(Tensor(params.d_k, params.d_h, 0.0), true);
        params.w_t = ad::Var::leaf(Tensor(params.d_h, params.d_h, 0.0), true);
        params.w_x = ad::Var::leaf(Tensor(params.d_x, params.d_h, 0.0), true);
        Tensor b2(1, dz);
        for (std::size_t j = 0; j < dz; ++j) b2(0, j) = rng.uniform(0.1, 1.0);
        params.proj_c_b2 = ad::Var::leaf(b2, true);

        std::vector<ad::Var> latents1, latents2;
        NoiseSchedule sched = NoiseSchedule::linear_discrete(8, 2);
        for (int i = 0; i < n; ++i) {
            Tensor x(2, 3);
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.uniform(-1.0, 1.0);
            Tensor a(2, 2, 0.0);
            a(0, 1) = a(1, 0) = 1.0;
            Graph g(std::move(x), std::move(a));
            Tensor y0 = Tensor::from_rows({{1.0, 0.0}});
            Rng rn(rng.next_u64());
            const int t1 = static_cast<int>(rn.uniform_int(1, 8));
            const int t2 = static_cast<int>(rn.uniform_int(1, 8));
            const NoisyView v1 = sample_discrete_forward(y0, t1, sched, rn);
            const NoisyView v2 = sample_discrete_forward(y0, t2, sched, rn);
            latents1.push_back(denoise(v1.y_t, t1, 8, g, params, TaskKind::graph_classification).z);
            latents2.push_back(denoise(v2.y_t, t2, 8, g, params, TaskKind::graph_classification).z);
        }
        ad::Var z1 = ad::concat_rows(latents1);
        ad::Var z2 = ad::concat_rows(latents2);
        const double dc = contrastive_loss(z1, z2, tau).value()(0, 0);
        const double logn = std::log(static_cast<double>(n));
        report.max_collapse_gap = std::max(report.max_collapse_gap, std::abs(dc - logn));
        report.dc_collapse = dc;
        report.logn_reference = logn;

        // Distinct orthonormal latents: strictly below log N.
        Tensor ortho(un, dz, 0.0);
        for (std::size_t i = 0; i < un; ++i) ortho(i, i) = 1.0;
        ad::Var zo = ad::Var::leaf(ortho);
        report.dc_distinct = contrastive_loss(zo, zo, tau).value()(0, 0);
        report.distinct_below_logn = report.dc_distinct < logn;
        if (!report.distinct_below_logn) break;
    }
    report.pass = report.max_collapse_gap <= 1e-9 && report.distinct_below_logn;
    return report;
}

// Checks that independent feature perturbations break the shortcut set's
// positive-pair agreement: with perturbation the two latent views differ,
// without it the gap is exactly zero.
inline Lemma3Report verify_lemma3(const DenoiserParams& base, const LabeledInstance& inst,
                                  NoiseKind perturb_kind, int t_per,
                                  const NoiseSchedule& schedule_per, const NoiseSchedule& schedule,
                                  Rng& rng) {
    DenoiserParams sc = base.shortcut_copy();
    const int t_total = schedule.steps();
    const int t1 = static_cast<int>(rng.uniform_int(1, t_total));
    const int t2 = static_cast<int>(rng.uniform_int(1, t_total));
    const NoisyView v1 = schedule.kind() == NoiseKind::discrete
                             ? sample_discrete_forward(inst.y, t1, schedule, rng)
                             : sample_continuous_forward(inst.y, t1, schedule, rng);
    const NoisyView v2 = schedule.kind() == NoiseKind::discrete
                             ? sample_discrete_forward(inst.y, t2, schedule, rng)
                             : sample_continuous_forward(inst.y, t2, schedule, rng);

    Lemma3Report report;

    // Control: identical conditioning, gap must be exactly zero.
    {
        DenoiserOutput o1 = denoise(v1.y_t, t1, t_total, inst.graph, sc, inst.task);
        DenoiserOutput o2 = denoise(v2.y_t, t2, t_total, inst.graph, sc, inst.task);
        report.control_gap = frobenius_norm(sub(o1.z.value(), o2.z.value()));
    }

    // Perturbed conditioning: draw two independent views (one retry if the
    // draws coincide, then give up).
    Tensor x1 = perturb_features(inst.graph.x, perturb_kind, t_per, schedule_per, rng);
    Tensor x2 = perturb_features(inst.graph.x, perturb_kind, t_per, schedule_per, rng);
    if (same_values(x1, x2)) {
        x2 = perturb_features(inst.graph.x, perturb_kind, t_per, schedule_per, rng);
        if (same_values(x1, x2))
            throw std::runtime_error("verify_lemma3: degenerate perturbation, X1 == X2 after retry");
    }
    Graph g1(x1, inst.graph.a);
    Graph g2(x2, inst.graph.a);
    DenoiserOutput o1 = denoise(v1.y_t, t1, t_total, g1, sc, inst.task);
    DenoiserOutput o2 = denoise(v2.y_t, t2, t_total, g2, sc, inst.task);
    report.z_gap_norm = frobenius_norm(sub(o1.z.value(), o2.z.value()));

    // All-zero encoder weights map every input to the same latent; that is a
    // degenerate-network caveat, not a lemma failure.
    double enc_norm = 0.0;
    for (const auto& l : sc.enc) enc_norm += frobenius_norm(l.w.value());
    enc_norm += frobenius_norm(sc.w_x.value()) + frobenius_norm(sc.proj_c_w1.value()) +
                frobenius_norm(sc.proj_c_w2.value());
    report.degenerate_network = enc_norm == 0.0;

    report.pass = report.control_gap == 0.0 && (report.degenerate_network || report.z_gap_norm > 1e-9);
    return report;
}

struct GradcheckConfig {
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    std::string corrupt_block;  // test fixture: offsets this block's analytic gradient
    std::vector<Variant> variants{Variant::diffusion, Variant::pcl, Variant::pcl_contrastive,
                                  Variant::gccm};
};

namespace detail {

// Central finite differences of loss() over every parameter block against the
// analytic gradients left by one backward pass. Small-magnitude pairs are
// compared absolutely.
inline GradcheckReport finite_difference_check(DenoiserParams& params,
                                               const std::function<ad::Var()>& loss,
                                               const GradcheckConfig& cfg) {
    GradcheckReport report;
    ad::Var root = loss();
    params.zero_grads();
    ad::zero_grad(root);
    ad::backward(root);

    std::map<std::string, Tensor> analytic;
    params.for_each([&analytic](const std::string& name, ad::Var& v) {
        analytic.emplace(name, v.grad());
    });
    if (!cfg.corrupt_block.empty()) {
        auto it = analytic.find(cfg.corrupt_block);
        if (it == analytic.end())
            throw std::invalid_argument("gradcheck: unknown corrupt block " + cfg.corrupt_block);
        for (std::size_t k = 0; k < it->second.size(); ++k) it->second[k] += 0.5;
    }

    params.for_each([&](const std::string& name, ad::Var& v) {
        double worst = 0.0;
        Tensor& w = v.mutable_value();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double saved = w[k];
            w[k] = saved + cfg.step;
            const double up = loss().value()(0, 0);
            w[k] = saved - cfg.step;
            const double down = loss().value()(0, 0);
            w[k] = saved;
            const double fd = (up - down) / (2.0 * cfg.step);
            const double an = analytic.at(name)[k];
            const double mag = std::max(std::abs(fd), std::abs(an));
            const double err = mag < 1e-8 ? std::abs(fd - an) : std::abs(fd - an) / mag;
            worst = std::max(worst, err);
        }
        report.max_error_per_block[name] = worst;
        if (worst > report.max_error) {
            report.max_error = worst;
            report.worst_block = name;
        }
    });
    report.pass = report.max_error < cfg.tolerance;
    return report;
}

}  // namespace detail

// Gradient check of every variant's full training loss on a small fixture
// model (d_h = 8, two encoder layers, four graphs). All random draws are
// frozen up front so each loss is a deterministic function of the parameters.
inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, {0x6bad5eedull}));
    Dataset ds = generate_sbm_cluster(4, 8, 3, 0.7, 0.1, 0.5, rng);
    const TaskKind task = ds.task();
    const int t_total = 12;
    NoiseSchedule schedule = NoiseSchedule::linear_discrete(t_total, ds.label_dim());
    const int t_per = 4;
    NoiseSchedule sched_per = schedule.prefix(t_per, NoiseKind::continuous);

    DenoiserConfig dcfg{8, 8, 2};
    DenoiserParams params = DenoiserParams::init(ds.label_dim(), ds.feature_dim(), dcfg, rng);

    // Frozen per-instance draws shared by the loss closures.
    struct FrozenDraws {
        int t1, t2;
        Tensor y_t1, y_t2;
        Tensor x1, x2;  // independently perturbed features (gccm)
    };
    std::vector<FrozenDraws> draws;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        FrozenDraws d;
        d.t1 = static_cast<int>(rng.uniform_int(1, t_total));
        d.t2 = std::max(1, static_cast<int>(std::floor(0.2 * d.t1)));
        d.y_t1 = sample_discrete_forward(ds[i].y, d.t1, schedule, rng).y_t;
        d.y_t2 = sample_discrete_forward(ds[i].y, d.t2, schedule, rng).y_t;
        d.x1 = perturb_features(ds[i].graph.x, NoiseKind::continuous, t_per, sched_per, rng);
        d.x2 = perturb_features(ds[i].graph.x, NoiseKind::continuous, t_per, sched_per, rng);
        draws.push_back(std::move(d));
    }

    const double lambda1 = 1.0, lambda2 = 0.1, tau = 0.5;
    auto loss_for = [&](Variant variant) {
        return [&, variant]() -> ad::Var {
            std::vector<ad::Var> y1s, y2s, z1s, z2s;
            std::vector<Tensor> labels;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const FrozenDraws& d = draws[i];
                const bool perturbed = variant == Variant::gccm;
                Graph g1(perturbed ? d.x1 : ds[i].graph.x, ds[i].graph.a);
                Graph g2(perturbed ? d.x2 : ds[i].graph.x, ds[i].graph.a);
                DenoiserOutput o1 = denoise(d.y_t1, d.t1, t_total, g1, params, task);
                y1s.push_back(std::move(o1.y_hat));
                z1s.push_back(std::move(o1.z));
                if (variant != Variant::diffusion) {
                    DenoiserOutput o2 = denoise(d.y_t2, d.t2, t_total, g2, params, task);
                    y2s.push_back(std::move(o2.y_hat));
                    z2s.push_back(std::move(o2.z));
                }
                labels.push_back(ds[i].y);
            }
            ad::Var y1 = ad::concat_rows(y1s);
            Tensor y = detail::stack_labels(labels);
            switch (variant) {
                case Variant::diffusion: return boundary_loss(y1, y, task);
                case Variant::pcl:
                    return pcl_objective(y1, ad::concat_rows(y2s), y, lambda1, lambda2, task).total;
                case Variant::pcl_contrastive:
                case Variant::gccm:
                    return gccm_objective(y1, ad::concat_rows(y2s), ad::concat_rows(z1s),
                                          ad::concat_rows(z2s), y, lambda1, lambda2, tau, task)
                        .total;
            }
            throw std::logic_error("run_gradcheck: bad variant");
        };
    };

    GradcheckReport merged;
    merged.pass = true;
    for (Variant variant : cfg.variants) {
        GradcheckReport r = detail::finite_difference_check(params, loss_for(variant), cfg);
        for (const auto& [block, err] : r.max_error_per_block) {
            double& slot = merged.max_error_per_block[block];
            slot = std::max(slot, err);
        }
        if (r.max_error > merged.max_error) {
            merged.max_error = r.max_error;
            merged.worst_block = r.worst_block;
        }
        merged.pass = merged.pass && r.pass;
    }
    return merged;
}

// Contribution heatmap of one instance at the fixed probe condition
// t = T/2 with a single seeded noisy draw.
inline Tensor probe_contribution(const DenoiserParams& params, const LabeledInstance& inst,
                                 const NoiseSchedule& schedule, std::uint64_t seed) {
    const int t = std::max(1, schedule.steps() / 2);
    Rng rng(derive_seed(seed, {0x9eaull, static_cast<std::uint64_t>(t)}));
    const NoisyView view = schedule.kind() == NoiseKind::discrete
                               ? sample_discrete_forward(inst.y, t, schedule, rng)
                               : sample_continuous_forward(inst.y, t, schedule, rng);
    DenoiserOutput out = denoise(view.y_t, t, schedule.steps(), inst.graph, params, inst.task);
    return contribution_heatmap(out.fusion);
}

// Full report against a checkpoint: fixed-probe heatmap on the first
// instance, the three lemma constructions seeded from the checkpoint's
// weights, and the gradcheck fixture.
inline DiagnosticsReport build_diagnostics_report(const DenoiserParams& params, const Dataset& ds,
                                                  const TrainConfig& cfg) {
    if (ds.empty()) throw std::invalid_argument("build_diagnostics_report: empty dataset");
    DiagnosticsReport report;
    const bool discrete = is_classification(ds.task());
    NoiseSchedule schedule = discrete ? NoiseSchedule::linear_discrete(cfg.T, ds.label_dim())
                                      : NoiseSchedule::linear_continuous(cfg.T);
    report.probe_t = std::max(1, schedule.steps() / 2);
    report.contribution = probe_contribution(params, ds[0], schedule, cfg.seed);
    report.contribution_mean = mean_value(report.contribution);

    std::vector<const LabeledInstance*> batch;
    for (std::size_t i = 0; i < std::min<std::size_t>(4, ds.size()); ++i) batch.push_back(&ds[i]);
    Rng rng1(derive_seed(cfg.seed, {0x1ull}));
    report.lemma1 = verify_lemma1(params, batch, schedule, cfg.lambda1, cfg.lambda2, 100, rng1);
    Rng rng2(derive_seed(cfg.seed, {0x2ull}));
    report.lemma2 = verify_lemma2({2, 4, 8, 16}, params.d_z, cfg.tau, rng2);
    NoiseSchedule sched_per = schedule.prefix(cfg.T_per, cfg.perturb_kind, ds.feature_dim());
    Rng rng3(derive_seed(cfg.seed, {0x3ull}));
    report.lemma3 = verify_lemma3(params, ds[0], cfg.perturb_kind, cfg.T_per, sched_per, schedule, rng3);
    GradcheckConfig gcfg;
    gcfg.seed = cfg.seed;
    report.gradcheck = run_gradcheck(gcfg);
    return report;
}

inline bool diagnostics_pass(const DiagnosticsReport& r) {
    return r.lemma1.pass && r.lemma2.pass && r.lemma3.pass && r.gradcheck.pass;
}

}  // namespace gccm
