#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "gccm/diagnostics.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/objectives.hpp"
#include "gccm/rng.hpp"

using namespace gccm;

namespace {

Dataset fixture_dataset(std::uint64_t seed) {
    Rng rng(seed);
    return generate_sbm_cluster(4, 8, 3, 0.8, 0.1, 0.5, rng);
}

}  // namespace

TEST(ContributionHeatmap, ClosedFormCases) {
    // Scalar case |a| = 1, |b| = 1, |c| = 2 -> 0.5.
    FusionTerms terms{Tensor(1, 1, 1.0), Tensor(1, 1, -1.0), Tensor(1, 1, 2.0)};
    EXPECT_DOUBLE_EQ(contribution_heatmap(terms)(0, 0), 0.5);

    // Shortcut signature: zero label/timestep addends give an all-zero map.
    FusionTerms shortcut{Tensor(3, 4, 0.0), Tensor(3, 4, 0.0), Tensor(3, 4, 0.7)};
    Tensor dark = contribution_heatmap(shortcut);
    EXPECT_DOUBLE_EQ(frobenius_norm(dark), 0.0);

    // W_x = 0 with nonzero others: ones wherever the numerator is nonzero.
    FusionTerms bright{Tensor(2, 2, 0.3), Tensor(2, 2, 0.0), Tensor(2, 2, 0.0)};
    Tensor ones = contribution_heatmap(bright);
    for (std::size_t k = 0; k < ones.size(); ++k) EXPECT_DOUBLE_EQ(ones[k], 1.0);

    // Vanishing denominator defined as zero.
    FusionTerms empty{Tensor(1, 1, 0.0), Tensor(1, 1, 0.0), Tensor(1, 1, 0.0)};
    EXPECT_DOUBLE_EQ(contribution_heatmap(empty)(0, 0), 0.0);

    FusionTerms bad{Tensor(1, 2, 0.0), Tensor(1, 1, 0.0), Tensor(1, 1, 0.0)};
    EXPECT_THROW(contribution_heatmap(bad), std::invalid_argument);
}

TEST(ContributionHeatmap, MonotoneInLabelPathwayScale) {
    Rng rng(1);
    Dataset ds = fixture_dataset(2);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 1}, rng);
    NoiseSchedule s = NoiseSchedule::linear_discrete(10, 3);
    NoisyView v = sample_discrete_forward(ds[0].y, 5, s, rng);

    FusionResult base = fuse(v.y_t, 5, 10, ds[0].graph.x, p);
    Tensor h_base = contribution_heatmap(base.terms);

    DenoiserParams scaled = p.clone();
    scaled.w_y = ad::Var::leaf(scale(p.w_y.value(), 3.0), true);
    FusionResult up = fuse(v.y_t, 5, 10, ds[0].graph.x, scaled);
    Tensor h_up = contribution_heatmap(up.terms);

    for (std::size_t k = 0; k < h_base.size(); ++k) EXPECT_GE(h_up[k], h_base[k] - 1e-15);
}

TEST(ContributionHeatmap, ShortcutProbeIsExactlyZeroMean) {
    Rng rng(3);
    Dataset ds = fixture_dataset(4);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng)
            .shortcut_copy();
    NoiseSchedule s = NoiseSchedule::linear_discrete(10, 3);
    Tensor heat = probe_contribution(p, ds[0], s, 9);
    EXPECT_DOUBLE_EQ(mean_value(heat), 0.0);
}

TEST(Lemma1, ShortcutPassesAndRandomWxKeepsHolding) {
    Rng rng(5);
    Dataset ds = fixture_dataset(6);
    std::vector<const LabeledInstance*> batch;
    for (std::size_t i = 0; i < ds.size(); ++i) batch.push_back(&ds[i]);
    NoiseSchedule s = NoiseSchedule::linear_discrete(20, 3);

    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng);
    Rng check_rng(7);
    Lemma1Report r = verify_lemma1(p, batch, s, 1.0, 0.1, 20, check_rng);
    EXPECT_TRUE(r.pass);
    EXPECT_DOUBLE_EQ(r.max_ds, 0.0);
    EXPECT_LE(r.max_boundary_equiv_gap, 1e-12);

    // The shortcut holds across the whole set: randomize W_x too.
    DenoiserParams p2 = p.clone();
    Tensor wx(p.d_x, p.d_h);
    for (std::size_t k = 0; k < wx.size(); ++k) wx[k] = rng.uniform(-2.0, 2.0);
    p2.w_x = ad::Var::leaf(wx, true);
    Rng check_rng2(8);
    EXPECT_TRUE(verify_lemma1(p2, batch, s, 1.0, 0.1, 20, check_rng2).pass);
}

TEST(Lemma1, NonShortcutParamsHaveNonzeroSelfConsistency) {
    // Negative control: without zeroing W_y/W_t the self-consistency distance
    // is strictly positive, so the lemma check is non-vacuous.
    Rng rng(9);
    Dataset ds = fixture_dataset(10);
    NoiseSchedule s = NoiseSchedule::linear_discrete(20, 3);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng);
    NoisyView v1 = sample_discrete_forward(ds[0].y, 15, s, rng);
    NoisyView v2 = sample_discrete_forward(ds[0].y, 3, s, rng);
    DenoiserOutput o1 = denoise(v1.y_t, 15, 20, ds[0].graph, p, ds[0].task);
    DenoiserOutput o2 = denoise(v2.y_t, 3, 20, ds[0].graph, p, ds[0].task);
    Objective obj = pcl_objective(o1, o2, ds[0].y, 1.0, 0.1, ds[0].task);
    EXPECT_GT(obj.parts.consistency, 0.0);
}

TEST(Lemma2, CollapseEqualsLogNAndDistinctBeatsIt) {
    Rng rng(11);
    Lemma2Report r = verify_lemma2({2, 4, 8, 16}, 16, 0.5, rng);
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.max_collapse_gap, 1e-9);
    EXPECT_NEAR(r.logn_reference, std::log(16.0), 1e-15);
    EXPECT_LT(r.dc_distinct, r.logn_reference);
    // The distinct configuration is strictly below, not equal: non-vacuous.
    EXPECT_GT(r.logn_reference - r.dc_distinct, 0.1);

    Rng rng2(12);
    Lemma2Report n4 = verify_lemma2({4}, 8, 0.5, rng2);
    EXPECT_NEAR(n4.dc_collapse, 1.3862943611198906, 1e-9);

    // N = 2 with orthonormal latents at tau = 1: the hand value 0.3132617.
    Rng rng3(13);
    Lemma2Report n2 = verify_lemma2({2}, 2, 1.0, rng3);
    EXPECT_NEAR(n2.dc_distinct, 0.31326168751822286, 1e-9);
    EXPECT_LT(n2.dc_distinct, std::log(2.0));

    Rng rng4(14);
    EXPECT_THROW(verify_lemma2({1}, 4, 0.5, rng4), std::invalid_argument);
}

TEST(Lemma3, PerturbationBreaksAgreementControlIsExactZero) {
    Rng rng(15);
    Dataset ds = fixture_dataset(16);
    NoiseSchedule s = NoiseSchedule::linear_discrete(20, 3);
    NoiseSchedule per = s.prefix(4, NoiseKind::continuous);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng);

    Rng check_rng(17);
    Lemma3Report r = verify_lemma3(p, ds[0], NoiseKind::continuous, 4, per, s, check_rng);
    EXPECT_TRUE(r.pass);
    EXPECT_DOUBLE_EQ(r.control_gap, 0.0);
    EXPECT_GT(r.z_gap_norm, 1e-9);
    EXPECT_FALSE(r.degenerate_network);
}

TEST(Lemma3, AllZeroEncoderIsDegenerateCaveatNotFailure) {
    Rng rng(18);
    Dataset ds = fixture_dataset(19);
    NoiseSchedule s = NoiseSchedule::linear_discrete(20, 3);
    NoiseSchedule per = s.prefix(4, NoiseKind::continuous);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng);
    p.w_x = ad::Var::leaf(Tensor(p.d_x, p.d_h, 0.0), true);
    for (auto& l : p.enc) l.w = ad::Var::leaf(Tensor(p.d_h, p.d_h, 0.0), true);
    p.proj_c_w1 = ad::Var::leaf(Tensor(p.d_h, p.d_h, 0.0), true);
    p.proj_c_w2 = ad::Var::leaf(Tensor(p.d_h, p.d_z, 0.0), true);

    Rng check_rng(20);
    Lemma3Report r = verify_lemma3(p, ds[0], NoiseKind::continuous, 4, per, s, check_rng);
    EXPECT_TRUE(r.degenerate_network);
    EXPECT_DOUBLE_EQ(r.z_gap_norm, 0.0);
    EXPECT_TRUE(r.pass);  // reported as a caveat, not a failure
}

TEST(Gradcheck, AllVariantsPassAndCorruptionFails) {
    GradcheckConfig cfg;
    cfg.seed = 21;
    GradcheckReport r = run_gradcheck(cfg);
    EXPECT_TRUE(r.pass);
    EXPECT_LT(r.max_error, 1e-4);
    EXPECT_FALSE(r.max_error_per_block.empty());

    GradcheckConfig bad = cfg;
    bad.corrupt_block = "w_y";
    GradcheckReport rb = run_gradcheck(bad);
    EXPECT_FALSE(rb.pass);
    EXPECT_GT(rb.max_error, 1e-4);

    GradcheckConfig unknown = cfg;
    unknown.corrupt_block = "nonexistent";
    EXPECT_THROW(run_gradcheck(unknown), std::invalid_argument);
}

TEST(Gradcheck, BoundaryOnlyLossPasses) {
    GradcheckConfig cfg;
    cfg.seed = 22;
    cfg.variants = {Variant::diffusion};  // cross-entropy-only loss
    EXPECT_TRUE(run_gradcheck(cfg).pass);
}

TEST(FullReport, AssemblesAndSerializes) {
    Rng rng(23);
    Dataset ds = fixture_dataset(24);
    DenoiserParams p =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{8, 8, 2}, rng);
    TrainConfig cfg;
    cfg.T = 20;
    cfg.T_per = 4;
    cfg.seed = 25;
    DiagnosticsReport report = build_diagnostics_report(p, ds, cfg);
    EXPECT_TRUE(report.lemma1.pass);
    EXPECT_TRUE(report.lemma2.pass);
    EXPECT_TRUE(report.lemma3.pass);
    EXPECT_TRUE(report.gradcheck.pass);
    EXPECT_TRUE(diagnostics_pass(report));
    EXPECT_EQ(report.contribution.rows(), ds[0].graph.num_nodes());
    EXPECT_EQ(report.contribution.cols(), 8u);
    for (std::size_t k = 0; k < report.contribution.size(); ++k) {
        EXPECT_GE(report.contribution[k], 0.0);
        EXPECT_LE(report.contribution[k], 1.0);
    }
}
