// Acceptance suite: runs every graded criterion at its stated tolerance and
// prints one [PASS]/[FAIL] line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gccm/gccm.hpp"

using namespace gccm;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(int criterion, bool pass, const std::string& what, double elapsed) {
    std::printf("[%s] criterion %2d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion,
                what.c_str(), elapsed);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

// --- 1: gradient correctness across all variants ----------------------------

void criterion1() {
    const auto start = std::chrono::steady_clock::now();
    GradcheckConfig cfg;
    cfg.seed = 1;
    GradcheckReport r = run_gradcheck(cfg);
    const double elapsed = seconds_since(start);
    const bool pass = r.pass && r.max_error < 1e-4 && elapsed < 60.0;
    report(1, pass,
           "gradients of all four variant losses match finite differences, max rel err " +
               format_double(r.max_error) + " < 1e-4",
           elapsed);
}

// --- 2: discrete forward fidelity -------------------------------------------

void criterion2() {
    const auto start = std::chrono::steady_clock::now();
    const int t_total = 20;
    double worst_l1 = 0.0;
    Rng draw_rng(2);
    for (std::size_t k : {2u, 3u, 5u}) {
        NoiseSchedule s = NoiseSchedule::linear_discrete(t_total, k);
        for (int t : {1, t_total / 2, t_total}) {
            Tensor y0(1, k, 0.0);
            y0(0, 0) = 1.0;
            std::vector<double> freq(k, 0.0);
            const int draws = 100000;
            for (int d = 0; d < draws; ++d)
                freq[sample_discrete_forward(y0, t, s, draw_rng).y_t.argmax_row(0)] += 1.0 / draws;
            double l1 = 0.0;
            for (std::size_t j = 0; j < k; ++j) l1 += std::abs(freq[j] - s.qbar(t)(0, j));
            worst_l1 = std::max(worst_l1, l1);
        }
    }
    const double elapsed = seconds_since(start);
    report(2, worst_l1 < 0.02 && elapsed < 60.0,
           "discrete forward frequencies match Y0*Qbar_t, worst L1 " + format_double(worst_l1) +
               " < 0.02 (K in {2,3,5}, t in {1,10,20})",
           elapsed);
}

// --- 3: continuous forward fidelity ------------------------------------------

void criterion3() {
    const auto start = std::chrono::steady_clock::now();
    NoiseSchedule s = NoiseSchedule::linear_continuous(20);
    Rng rng(3);
    bool pass = true;
    std::string detail;
    for (int t : {1, 10, 20}) {
        const double y0 = 1.3;
        const int draws = 100000;
        double mean = 0.0, m2 = 0.0;
        Tensor y0t = Tensor::from_rows({{y0}});
        for (int d = 0; d < draws; ++d) {
            const double v = sample_continuous_forward(y0t, t, s, rng).y_t(0, 0);
            mean += v;
            m2 += v * v;
        }
        mean /= draws;
        m2 /= draws;
        const double abar = s.alpha_bar(t);
        const double want_mean = std::sqrt(abar) * y0;
        const double want_var = 1.0 - abar;
        const double var = m2 - mean * mean;
        const double mean_tol = 3.0 * std::sqrt(want_var / draws);
        const double var_tol = 3.0 * want_var * std::sqrt(2.0 / draws);
        if (std::abs(mean - want_mean) > mean_tol || std::abs(var - want_var) > var_tol) pass = false;
    }
    const double elapsed = seconds_since(start);
    report(3, pass && elapsed < 60.0,
           "continuous forward moments match (sqrt(abar)*Y0, 1-abar) within 3 sigma at 1e5 draws",
           elapsed);
}

// --- 4: posterior correctness -------------------------------------------------

Tensor posterior_oracle(const Tensor& y_t_row, const Tensor& y_0_row, int t,
                        const std::vector<double>& betas, std::size_t k) {
    Tensor dist = y_0_row;
    for (int s = 1; s < t; ++s) dist = matmul(dist, make_transition_matrix(betas[s - 1], k));
    const Tensor q_t = make_transition_matrix(betas[t - 1], k);
    const std::size_t jt = y_t_row.argmax_row(0);
    Tensor joint(1, k, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        joint(0, c) = q_t(c, jt) * dist(0, c);
        total += joint(0, c);
    }
    for (std::size_t c = 0; c < k; ++c) joint(0, c) /= total;
    return joint;
}

void criterion4() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(4);
    double worst = 0.0;
    for (std::size_t k = 2; k <= 5; ++k) {
        std::vector<double> betas(10);
        for (double& b : betas) b = rng.uniform(0.02, 0.6);
        NoiseSchedule s = NoiseSchedule::from_betas(NoiseKind::discrete, betas, k);
        for (int t = 1; t <= 10; ++t)
            for (std::size_t jt = 0; jt < k; ++jt)
                for (std::size_t j0 = 0; j0 < k; ++j0) {
                    Tensor yt(1, k, 0.0), y0(1, k, 0.0);
                    yt(0, jt) = 1.0;
                    y0(0, j0) = 1.0;
                    worst = std::max(worst, max_abs_diff(discrete_posterior(yt, y0, t, s),
                                                         posterior_oracle(yt, y0, t, betas, k)));
                }
    }
    const double elapsed = seconds_since(start);
    report(4, worst < 1e-10,
           "discrete posterior equals enumeration for all one-hot pairs, K<=5, t<=10, max abs err " +
               format_double(worst) + " < 1e-10",
           elapsed);
}

// --- 5: Lemma 1 ---------------------------------------------------------------

void criterion5() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(5);
    Dataset ds = generate_sbm_cluster(4, 10, 3, 0.7, 0.1, 0.5, rng);
    NoiseSchedule s = NoiseSchedule::linear_discrete(50, ds.label_dim());
    DenoiserParams params =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{16, 16, 3}, rng);
    std::vector<const LabeledInstance*> batch;
    for (std::size_t i = 0; i < ds.size(); ++i) batch.push_back(&ds[i]);
    Rng check_rng(55);
    // 25 draws x 4 instances = 100 random (t1, t2, noise) draws.
    Lemma1Report r = verify_lemma1(params, batch, s, 1.0, 0.1, 25, check_rng);
    const double elapsed = seconds_since(start);
    report(5, r.pass,
           "shortcut set:  d^s = " + format_double(r.max_ds) + " exactly 0 and PCL total equals "
           "2*lambda1*supervised within " + format_double(r.max_boundary_equiv_gap) +
               " <= 1e-12 over 100 draws",
           elapsed);
}

// --- 6: Lemma 2 ---------------------------------------------------------------

void criterion6() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(6);
    Lemma2Report r = verify_lemma2({2, 4, 8, 16}, 16, 0.5, rng);
    const double elapsed = seconds_since(start);
    report(6, r.pass,
           "full-collapse d^c = log N within " + format_double(r.max_collapse_gap) +
               " <= 1e-9 for N in {2,4,8,16}; distinct latents reach " +
               format_double(r.dc_distinct) + " < log 16",
           elapsed);
}

// --- 7: Lemma 3 ---------------------------------------------------------------

void criterion7() {
    const auto start = std::chrono::steady_clock::now();
    bool pass = true;
    double min_gap = 1e300;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        Dataset ds = generate_sbm_cluster(1, 10, 3, 0.7, 0.1, 0.5, rng);
        NoiseSchedule s = NoiseSchedule::linear_discrete(50, ds.label_dim());
        NoiseSchedule per = s.prefix(10, NoiseKind::continuous);
        DenoiserParams params =
            DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{16, 16, 3}, rng);
        Rng check_rng(seed * 100);
        Lemma3Report r = verify_lemma3(params, ds[0], NoiseKind::continuous, 10, per, s, check_rng);
        pass = pass && r.pass && r.z_gap_norm > 1e-9 && r.control_gap == 0.0;
        min_gap = std::min(min_gap, r.z_gap_norm);
    }
    const double elapsed = seconds_since(start);
    report(7, pass,
           "perturbed shortcut passes give ||Z1-Z2||_F >= " + format_double(min_gap) +
               " > 1e-9 over 5 seeds; unperturbed control gap exactly 0",
           elapsed);
}

// --- 8: ablation-ladder trend --------------------------------------------------

struct LadderOutcome {
    double acc = 0.0;
    double contribution_mean = 0.0;
};

LadderOutcome run_ladder_arm(const Dataset& ds, Variant variant, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.variant = variant;
    cfg.T = 200;
    cfg.alpha = 0.2;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = 0.1;
    cfg.tau = 0.5;
    cfg.T_per = 10;
    cfg.perturb_kind = NoiseKind::continuous;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    cfg.layers = 3;
    cfg.d_h = 16;
    cfg.d_z = 16;
    TrainResult r = train(ds, cfg);
    const DenoiserParams& params = r.state.has_best ? *r.state.best_params : r.state.params;

    const auto test_idx = ds.indices_of(Split::test);
    LadderOutcome out;
    out.acc = evaluate_split(ds, test_idx, params, r.plan.schedule, 1, 1, seed * 31 + 7);
    double mean_sum = 0.0;
    for (std::size_t i : test_idx)
        mean_sum += mean_value(probe_contribution(params, ds[i], r.plan.schedule, seed));
    out.contribution_mean = mean_sum / static_cast<double>(test_idx.size());
    return out;
}

void criterion8() {
    const auto start = std::chrono::steady_clock::now();
    double gccm_contrib = 0.0, pcl_contrib = 0.0, gccm_acc = 0.0, pcl_acc = 0.0;
    const int n_seeds = 5;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
        Rng rng(derive_seed(seed, {0xdaaull}));
        Dataset ds = generate_sbm_cluster(140, 40, 4, 0.5, 0.05, 0.3, rng);
        Rng split_rng(derive_seed(seed, {0x5911ull}));
        assign_splits(ds, 100.0 / 140.0, 20.0 / 140.0, split_rng);

        LadderOutcome g = run_ladder_arm(ds, Variant::gccm, seed);
        LadderOutcome p = run_ladder_arm(ds, Variant::pcl, seed);
        gccm_contrib += g.contribution_mean / n_seeds;
        pcl_contrib += p.contribution_mean / n_seeds;
        gccm_acc += g.acc / n_seeds;
        pcl_acc += p.acc / n_seeds;
    }
    const double elapsed = seconds_since(start);
    const bool contrib_ok = gccm_contrib > pcl_contrib;
    const bool acc_ok = gccm_acc >= pcl_acc - 0.005;
    std::ostringstream detail;
    detail << "SBM-CLUSTER over 5 seeds: mean contribution gccm " << format_double(gccm_contrib)
           << (contrib_ok ? " > " : " <= ") << "pcl " << format_double(pcl_contrib)
           << "; test acc gccm " << format_double(gccm_acc) << " vs pcl " << format_double(pcl_acc)
           << " (margin -0.005)";
    report(8, contrib_ok && acc_ok && elapsed < 1200.0, detail.str(), elapsed);
}

// --- 9: step-level efficiency ---------------------------------------------------

void criterion9() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(9);
    Dataset ds = generate_sbm_cluster(1, 12, 3, 0.7, 0.1, 0.5, rng);
    NoiseSchedule s = NoiseSchedule::linear_discrete(100, ds.label_dim());
    DenoiserParams params =
        DenoiserParams::init(ds.label_dim(), ds.feature_dim(), DenoiserConfig{16, 16, 3}, rng);

    params.forward_calls = 0;
    Rng r1(91);
    one_step_predict(ds[0].graph, params, ds.task(), s, r1);
    const long one_step_calls = params.forward_calls;

    params.forward_calls = 0;
    Rng r2(92);
    iterative_denoise(ds[0].graph, params, ds.task(), s, 50, r2);
    const long iterative_calls = params.forward_calls;

    const double elapsed = seconds_since(start);
    report(9, one_step_calls == 1 && iterative_calls == 50,
           "one-step prediction uses exactly " + std::to_string(one_step_calls) +
               " denoiser pass; 50-step iterative uses exactly " + std::to_string(iterative_calls),
           elapsed);
}

// --- 10: end-to-end smoke on the degenerate dataset ------------------------------

void criterion10() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(10);
    Dataset ds = generate_sbm_cluster(80, 16, 3, 1.0, 0.0, 1.0, rng);
    Rng split_rng(101);
    assign_splits(ds, 0.75, 0.125, split_rng);
    const auto test_idx = ds.indices_of(Split::test);

    bool pass = true;
    std::ostringstream detail;
    detail << "degenerate SBM one-step acc:";
    DenoiserParams diffusion_params{};
    NoiseSchedule schedule = NoiseSchedule::linear_discrete(50, ds.label_dim());
    for (Variant v : {Variant::diffusion, Variant::pcl, Variant::pcl_contrastive, Variant::gccm}) {
        TrainConfig cfg;
        cfg.variant = v;
        cfg.T = 50;
        cfg.T_per = 5;
        cfg.epochs = 20;
        cfg.batch_size = 16;
        cfg.seed = 12;
        cfg.layers = 2;
        cfg.d_h = 16;
        cfg.d_z = 16;
        TrainResult r = train(ds, cfg);
        const DenoiserParams& params = r.state.has_best ? *r.state.best_params : r.state.params;
        const double acc = evaluate_split(ds, test_idx, params, r.plan.schedule, 1, 1, 77);
        detail << " " << variant_name(v) << "=" << format_double(acc);
        pass = pass && acc >= 0.99;
        if (v == Variant::diffusion) diffusion_params = params.clone();
    }

    // Diffusion baseline: 50-step reverse chain, 10 samples aggregated.
    double correct = 0.0, count = 0.0;
    for (std::size_t i : test_idx) {
        Rng pr(derive_seed(130, {i}));
        PredictionResult p = predict(ds[i].graph, diffusion_params, ds.task(), schedule, 10, 50, pr);
        for (std::size_t row = 0; row < ds[i].y.rows(); ++row) {
            correct += p.y_hat.argmax_row(row) == ds[i].y.argmax_row(row) ? 1.0 : 0.0;
            count += 1.0;
        }
    }
    const double iter_acc = correct / count;
    detail << "; diffusion 50-step x 10-sample acc=" << format_double(iter_acc);
    pass = pass && iter_acc >= 0.99;

    const double elapsed = seconds_since(start);
    report(10, pass && elapsed < 300.0, detail.str(), elapsed);
}

// --- 11: CLI determinism ----------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GCCM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

void criterion11() {
    const auto start = std::chrono::steady_clock::now();
    const std::string dir = "/tmp/gccm_acceptance";
    std::system(("rm -rf " + dir + " && mkdir -p " + dir + "/a " + dir + "/b").c_str());

    bool pass = true;
    auto twice = [&](const std::string& args_a, const std::string& args_b,
                     const std::string& file_a, const std::string& file_b) {
        pass = pass && run_cli(args_a) == 0 && run_cli(args_b) == 0;
        const std::string a = slurp(file_a);
        pass = pass && !a.empty() && a == slurp(file_b);
    };

    twice("gen-data sbm --graphs 20 --nodes 12 --classes 3 --p-in 0.8 --p-out 0.1 --seed 5 --out " +
              dir + "/a/d.jsonl",
          "gen-data sbm --graphs 20 --nodes 12 --classes 3 --p-in 0.8 --p-out 0.1 --seed 5 --out " +
              dir + "/b/d.jsonl",
          dir + "/a/d.jsonl", dir + "/b/d.jsonl");

    const std::string train_args = " --variant gccm --epochs 2 --T 20 --t-per 4 --batch-size 4"
                                   " --d-h 8 --d-z 8 --layers 2 --seed 1";
    twice("train --data " + dir + "/a/d.jsonl" + train_args + " --out-dir " + dir + "/a/run",
          "train --data " + dir + "/b/d.jsonl" + train_args + " --out-dir " + dir + "/b/run",
          dir + "/a/run/metrics.csv", dir + "/b/run/metrics.csv");
    pass = pass && slurp(dir + "/a/run/checkpoint.json") == slurp(dir + "/b/run/checkpoint.json");

    const std::string predict_args = " --split test --T 20 --samples 3 --seed 4";
    twice("predict --checkpoint " + dir + "/a/run/checkpoint.json --data " + dir + "/a/d.jsonl" +
              predict_args + " --out-dir " + dir + "/a/pred",
          "predict --checkpoint " + dir + "/b/run/checkpoint.json --data " + dir + "/b/d.jsonl" +
              predict_args + " --out-dir " + dir + "/b/pred",
          dir + "/a/pred/predictions.jsonl", dir + "/b/pred/predictions.jsonl");

    twice("verify-lemmas --seed 3 --out " + dir + "/a/lemmas.json",
          "verify-lemmas --seed 3 --out " + dir + "/b/lemmas.json", dir + "/a/lemmas.json",
          dir + "/b/lemmas.json");

    const double elapsed = seconds_since(start);
    report(11, pass, "gen-data, train, predict, and verify-lemmas reruns are byte-identical",
           elapsed);
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    criterion10();
    criterion11();
    if (g_failures == 0) {
        std::printf("all 11 criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", g_failures);
    return 1;
}
