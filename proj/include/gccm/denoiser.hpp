#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gccm/autodiff.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/rng.hpp"
#include "gccm/tensor.hpp"

namespace gccm {

struct DenoiserConfig {
    std::size_t d_h = 16;
    std::size_t d_z = 16;
    std::size_t layers = 3;
    // d_t is tied to d_h.
};

// All learnable weights of the denoising network: the three fusion
// projections, the message-passing encoder stack, the prediction head and the
// two-layer contrastive head. Parameters are autodiff leaves shared by every
// forward graph built from them.
struct DenoiserParams {
    std::size_t d_k = 0, d_x = 0, d_h = 0, d_z = 0, layers = 0;

    ad::Var w_y;  // d_k x d_h
    ad::Var w_t;  // d_t x d_h (d_t = d_h)
    ad::Var w_x;  // d_x x d_h
    struct EncLayer {
        ad::Var w;  // d_h x d_h
        ad::Var b;  // 1 x d_h
    };
    std::vector<EncLayer> enc;
    ad::Var proj_p_w;   // d_h x d_k
    ad::Var proj_p_b;   // 1 x d_k
    ad::Var proj_c_w1;  // d_h x d_h
    ad::Var proj_c_b1;  // 1 x d_h
    ad::Var proj_c_w2;  // d_h x d_z
    ad::Var proj_c_b2;  // 1 x d_z

    mutable long forward_calls = 0;  // instrumentation: one tick per denoise()

    static DenoiserParams init(std::size_t d_k, std::size_t d_x, const DenoiserConfig& cfg, Rng& rng) {
        if (d_k < 1 || d_x < 1 || cfg.d_h < 1 || cfg.d_z < 1)
            throw std::invalid_argument("DenoiserParams: dimensions must be positive");
        DenoiserParams p;
        p.d_k = d_k;
        p.d_x = d_x;
        p.d_h = cfg.d_h;
        p.d_z = cfg.d_z;
        p.layers = cfg.layers;
        auto uniform_init = [&rng](std::size_t rows, std::size_t cols) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
            Tensor t(rows, cols);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
            return ad::Var::leaf(std::move(t), true);
        };
        auto zeros = [](std::size_t rows, std::size_t cols) {
            return ad::Var::leaf(Tensor(rows, cols, 0.0), true);
        };
        p.w_y = uniform_init(d_k, cfg.d_h);
        p.w_t = uniform_init(cfg.d_h, cfg.d_h);
        p.w_x = uniform_init(d_x, cfg.d_h);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            p.enc.push_back({uniform_init(cfg.d_h, cfg.d_h), zeros(1, cfg.d_h)});
        p.proj_p_w = uniform_init(cfg.d_h, d_k);
        p.proj_p_b = zeros(1, d_k);
        p.proj_c_w1 = uniform_init(cfg.d_h, cfg.d_h);
        p.proj_c_b1 = zeros(1, cfg.d_h);
        p.proj_c_w2 = uniform_init(cfg.d_h, cfg.d_z);
        p.proj_c_b2 = zeros(1, cfg.d_z);
        return p;
    }

    void for_each(const std::function<void(const std::string&, ad::Var&)>& fn) {
        fn("w_y", w_y);
        fn("w_t", w_t);
        fn("w_x", w_x);
        for (std::size_t l = 0; l < enc.size(); ++l) {
            fn("enc" + std::to_string(l) + ".w", enc[l].w);
            fn("enc" + std::to_string(l) + ".b", enc[l].b);
        }
        fn("proj_p.w", proj_p_w);
        fn("proj_p.b", proj_p_b);
        fn("proj_c.w1", proj_c_w1);
        fn("proj_c.b1", proj_c_b1);
        fn("proj_c.w2", proj_c_w2);
        fn("proj_c.b2", proj_c_b2);
    }

    void for_each(const std::function<void(const std::string&, const ad::Var&)>& fn) const {
        const_cast<DenoiserParams*>(this)->for_each(
            [&fn](const std::string& name, ad::Var& v) { fn(name, v); });
    }

    // Deep copy with fresh leaves (fresh gradient accumulators).
    DenoiserParams clone() const {
        DenoiserParams c;
        c.d_k = d_k;
        c.d_x = d_x;
        c.d_h = d_h;
        c.d_z = d_z;
        c.layers = layers;
        c.w_y = ad::Var::leaf(w_y.value(), true);
        c.w_t = ad::Var::leaf(w_t.value(), true);
        c.w_x = ad::Var::leaf(w_x.value(), true);
        for (const auto& l : enc)
            c.enc.push_back({ad::Var::leaf(l.w.value(), true), ad::Var::leaf(l.b.value(), true)});
        c.proj_p_w = ad::Var::leaf(proj_p_w.value(), true);
        c.proj_p_b = ad::Var::leaf(proj_p_b.value(), true);
        c.proj_c_w1 = ad::Var::leaf(proj_c_w1.value(), true);
        c.proj_c_b1 = ad::Var::leaf(proj_c_b1.value(), true);
        c.proj_c_w2 = ad::Var::leaf(proj_c_w2.value(), true);
        c.proj_c_b2 = ad::Var::leaf(proj_c_b2.value(), true);
        return c;
    }

    void zero_grads() {
        for_each([](const std::string&, ad::Var& v) { v.zero_grad(); });
    }

    // The Lemma 1 construction: W_y = 0 and W_t = 0 make the network ignore
    // the noisy label and timestep entirely.
    DenoiserParams shortcut_copy() const {
        DenoiserParams c = clone();
        c.w_y = ad::Var::leaf(Tensor(d_k, d_h, 0.0), true);
        c.w_t = ad::Var::leaf(Tensor(d_h, d_h, 0.0), true);
        return c;
    }
};

// Sinusoidal embedding: pairs (sin(t/w_k), cos(t/w_k)) with geometric
// frequencies spanning [1, 10T].
inline Tensor timestep_embedding(int t, std::size_t d_t, int t_total) {
    if (d_t % 2 != 0) throw std::invalid_argument("timestep_embedding: d_t must be even");
    if (d_t == 0) throw std::invalid_argument("timestep_embedding: d_t must be positive");
    if (t < 1 || t > t_total) throw std::invalid_argument("timestep_embedding: t outside 1..T");
    const std::size_t half = d_t / 2;
    Tensor emb(1, d_t);
    for (std::size_t k = 0; k < half; ++k) {
        const double omega =
            half > 1 ? std::pow(10.0 * static_cast<double>(t_total),
                                static_cast<double>(k) / static_cast<double>(half - 1))
                     : 1.0;
        emb(0, 2 * k) = std::sin(static_cast<double>(t) / omega);
        emb(0, 2 * k + 1) = std::cos(static_cast<double>(t) / omega);
    }
    return emb;
}

// The three addends of the fused input, retained for the contribution metric.
struct FusionTerms {
    Tensor term_y;  // Y_t W_y, n x d_h
    Tensor term_t;  // t_emb W_t broadcast to n rows
    Tensor term_x;  // X W_x
};

struct FusionResult {
    ad::Var h0;
    FusionTerms terms;
};

// H0 = Y_t W_y + t_emb(t) W_t + X W_x.
inline FusionResult fuse(const Tensor& y_t_broadcast, int t, int t_total, const Tensor& x,
                         const DenoiserParams& params) {
    if (y_t_broadcast.rows() != x.rows())
        throw std::invalid_argument("fuse: label rows " + y_t_broadcast.shape() + " vs feature rows " + x.shape());
    ad::Var vy = ad::matmul(ad::Var::leaf(y_t_broadcast), params.w_y);
    ad::Var vt = ad::matmul(ad::Var::leaf(timestep_embedding(t, params.d_h, t_total)), params.w_t);
    ad::Var vx = ad::matmul(ad::Var::leaf(x), params.w_x);
    ad::Var h0 = ad::add(ad::add(vx, vy), vt);  // vt row-broadcasts over nodes
    FusionTerms terms{vy.value(), tile_rows(vt.value(), x.rows()), vx.value()};
    return FusionResult{std::move(h0), std::move(terms)};
}

// Symmetric-normalized adjacency with self-loops: D^{-1/2} (A + I) D^{-1/2}.
inline Tensor normalized_adjacency(const Tensor& a) {
    const std::size_t n = a.rows();
    Tensor ahat = a;
    for (std::size_t i = 0; i < n; ++i) ahat(i, i) += 1.0;
    std::vector<double> dinv(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += ahat(i, j);
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ahat(i, j) *= dinv[i] * dinv[j];
    return ahat;
}

// L rounds of H <- tanh(Ahat H W + b) + H.
inline ad::Var encode(const ad::Var& h0, const Tensor& a, const DenoiserParams& params) {
    if (a.rows() != a.cols() || a.rows() != h0.value().rows())
        throw std::invalid_argument("encode: adjacency " + a.shape() + " vs embeddings " + h0.value().shape());
    ad::Var ahat = ad::Var::leaf(normalized_adjacency(a));
    ad::Var h = h0;
    for (const auto& layer : params.enc)
        h = ad::add(ad::tanh(ad::add(ad::matmul(ad::matmul(ahat, h), layer.w), layer.b)), h);
    return h;
}

// Node tasks map each node embedding to the label space; graph tasks pool by
// column mean first. Classification rows pass through a softmax.
inline ad::Var predict_head(const ad::Var& h, TaskKind task, const DenoiserParams& params) {
    ad::Var pooled = is_node_level(task) ? h : ad::mean_cols(h);
    ad::Var out = ad::add(ad::matmul(pooled, params.proj_p_w), params.proj_p_b);
    if (is_classification(task)) out = ad::softmax_rows(out);
    return out;
}

// Two-layer projection into the contrastive latent space; graph tasks pool
// before projecting so the instance is the graph.
inline ad::Var contrastive_head(const ad::Var& h, TaskKind task, const DenoiserParams& params) {
    ad::Var pooled = is_node_level(task) ? h : ad::mean_cols(h);
    ad::Var hidden = ad::tanh(ad::add(ad::matmul(pooled, params.proj_c_w1), params.proj_c_b1));
    return ad::add(ad::matmul(hidden, params.proj_c_w2), params.proj_c_b2);
}

struct DenoiserOutput {
    ad::Var y_hat;  // n x d_k for node tasks, 1 x d_k for graph tasks
    ad::Var z;      // n x d_z for node tasks, 1 x d_z for graph tasks
    ad::Var h0;
    FusionTerms fusion;
};

// Full pass: broadcast graph-level noisy labels to all nodes, fuse, encode,
// and read out both heads from the shared encoder output.
inline DenoiserOutput denoise(const Tensor& noisy_y, int t, int t_total, const Graph& graph,
                              const DenoiserParams& params, TaskKind task) {
    Tensor y_broadcast = noisy_y;
    if (!is_node_level(task)) {
        if (noisy_y.rows() != 1)
            throw std::invalid_argument("denoise: graph-task noisy label must be 1xd_k, got " + noisy_y.shape());
        y_broadcast = tile_rows(noisy_y, graph.num_nodes());
    } else if (noisy_y.rows() != graph.num_nodes()) {
        throw std::invalid_argument("denoise: node-task noisy label " + noisy_y.shape() + " for " +
                                    std::to_string(graph.num_nodes()) + " nodes");
    }
    FusionResult fused = fuse(y_broadcast, t, t_total, graph.x, params);
    ad::Var h = encode(fused.h0, graph.a, params);
    DenoiserOutput out{predict_head(h, task, params), contrastive_head(h, task, params),
                       std::move(fused.h0), std::move(fused.terms)};
    ++params.forward_calls;
    return out;
}

// --- Checkpoint I/O ----------------------------------------------------------

inline void save_checkpoint(const DenoiserParams& params, const std::string& path,
                            const std::string& config_hash = "") {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["d_k"] = params.d_k;
    j["d_x"] = params.d_x;
    j["d_h"] = params.d_h;
    j["d_z"] = params.d_z;
    j["layers"] = params.layers;
    nlohmann::json weights;
    params.for_each([&weights](const std::string& name, const ad::Var& v) {
        weights[name] = {{"rows", v.value().rows()}, {"cols", v.value().cols()},
                         {"values", v.value().values()}};
    });
    j["weights"] = std::move(weights);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline DenoiserParams load_checkpoint(const std::string& path, std::string* config_hash = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_checkpoint: " + path + ": " + e.what());
    }
    if (config_hash) *config_hash = j.value("config_hash", "");
    DenoiserConfig cfg{j.at("d_h").get<std::size_t>(), j.at("d_z").get<std::size_t>(),
                       j.at("layers").get<std::size_t>()};
    Rng dummy(0);
    DenoiserParams p = DenoiserParams::init(j.at("d_k").get<std::size_t>(),
                                            j.at("d_x").get<std::size_t>(), cfg, dummy);
    const auto& weights = j.at("weights");
    p.for_each([&weights](const std::string& name, ad::Var& v) {
        if (!weights.contains(name)) throw std::runtime_error("load_checkpoint: missing block " + name);
        const auto& w = weights.at(name);
        const auto rows = w.at("rows").get<std::size_t>();
        const auto cols = w.at("cols").get<std::size_t>();
        if (rows != v.value().rows() || cols != v.value().cols())
            throw std::runtime_error("load_checkpoint: block " + name + " has shape " +
                                     Tensor::shape_str(rows, cols) + ", expected " + v.value().shape());
        v = ad::Var::leaf(Tensor::from_values(rows, cols, w.at("values").get<std::vector<double>>()), true);
    });
    return p;
}

}  // namespace gccm
