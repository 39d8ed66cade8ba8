#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gccm/rng.hpp"
#include "gccm/tensor.hpp"

namespace gccm {

enum class TaskKind { node_classification, graph_classification, graph_regression };

inline bool is_classification(TaskKind t) { return t != TaskKind::graph_regression; }
inline bool is_node_level(TaskKind t) { return t == TaskKind::node_classification; }

inline std::string task_name(TaskKind t) {
    switch (t) {
        case TaskKind::node_classification: return "node-classification";
        case TaskKind::graph_classification: return "graph-classification";
        case TaskKind::graph_regression: return "graph-regression";
    }
    throw std::logic_error("task_name: bad enum");
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "node-classification") return TaskKind::node_classification;
    if (s == "graph-classification") return TaskKind::graph_classification;
    if (s == "graph-regression") return TaskKind::graph_regression;
    throw std::invalid_argument("unknown task kind: " + s);
}

enum class Split { train, val, test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw std::logic_error("split_name: bad enum");
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + s);
}

// Conditioning input: node features X (nxd_x) and a binary symmetric
// adjacency A (nxn) with empty diagonal.
struct Graph {
    Tensor x;
    Tensor a;

    Graph(Tensor features, Tensor adjacency) : x(std::move(features)), a(std::move(adjacency)) {
        const std::size_t n = x.rows();
        if (n < 1 || x.cols() < 1) throw std::invalid_argument("Graph: features must be at least 1x1");
        if (a.rows() != n || a.cols() != n)
            throw std::invalid_argument("Graph: adjacency " + a.shape() + " does not match " +
                                        std::to_string(n) + " nodes");
        for (std::size_t i = 0; i < n; ++i) {
            if (a(i, i) != 0.0) throw std::invalid_argument("Graph: nonzero diagonal in adjacency");
            for (std::size_t j = 0; j < n; ++j) {
                if (a(i, j) != 0.0 && a(i, j) != 1.0)
                    throw std::invalid_argument("Graph: adjacency entries must be 0 or 1");
                if (a(i, j) != a(j, i)) throw std::invalid_argument("Graph: adjacency not symmetric");
            }
        }
    }

    std::size_t num_nodes() const { return x.rows(); }
    std::size_t feature_dim() const { return x.cols(); }
};

// One training example: a graph, its task kind, and the target label layout
// the task dictates (per-node one-hot rows, a one-hot graph row, or a 1x1
// regression scalar).
struct LabeledInstance {
    Graph graph;
    TaskKind task;
    Tensor y;
    Split split = Split::train;

    LabeledInstance(Graph g, TaskKind t, Tensor label, Split sp = Split::train)
        : graph(std::move(g)), task(t), y(std::move(label)), split(sp) {
        validate();
    }

    std::size_t label_dim() const { return y.cols(); }

  private:
    void validate() const {
        if (is_node_level(task)) {
            if (y.rows() != graph.num_nodes())
                throw std::invalid_argument("LabeledInstance: node labels " + y.shape() + " for " +
                                            std::to_string(graph.num_nodes()) + " nodes");
        } else if (y.rows() != 1) {
            throw std::invalid_argument("LabeledInstance: graph-level label must be 1xd_k, got " + y.shape());
        }
        if (is_classification(task)) {
            if (y.cols() < 2) throw std::invalid_argument("LabeledInstance: classification needs K >= 2");
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    if (y(i, j) != 0.0 && y(i, j) != 1.0)
                        throw std::invalid_argument("LabeledInstance: labels must be one-hot");
                    sum += y(i, j);
                }
                if (sum != 1.0) throw std::invalid_argument("LabeledInstance: one-hot row must sum to 1");
            }
        } else if (y.cols() != 1) {
            throw std::invalid_argument("LabeledInstance: regression label must be 1x1, got " + y.shape());
        }
    }
};

class Dataset {
  public:
    Dataset() = default;

    void push_back(LabeledInstance inst) {
        if (!instances_.empty()) {
            if (inst.task != task() || inst.label_dim() != label_dim())
                throw std::invalid_argument("Dataset: mixed task kinds or label dims");
        }
        instances_.push_back(std::move(inst));
    }

    std::size_t size() const { return instances_.size(); }
    bool empty() const { return instances_.empty(); }
    const LabeledInstance& operator[](std::size_t i) const { return instances_[i]; }
    LabeledInstance& operator[](std::size_t i) { return instances_[i]; }

    TaskKind task() const {
        require_nonempty();
        return instances_.front().task;
    }
    std::size_t label_dim() const {
        require_nonempty();
        return instances_.front().label_dim();
    }
    std::size_t feature_dim() const {
        require_nonempty();
        return instances_.front().graph.feature_dim();
    }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < instances_.size(); ++i)
            if (instances_[i].split == s) idx.push_back(i);
        return idx;
    }

    const std::vector<LabeledInstance>& instances() const { return instances_; }

  private:
    void require_nonempty() const {
        if (instances_.empty()) throw std::logic_error("Dataset: empty");
    }
    std::vector<LabeledInstance> instances_;
};

namespace detail {

inline Tensor one_hot_row(std::size_t index, std::size_t k) {
    Tensor t(1, k, 0.0);
    t(0, index) = 1.0;
    return t;
}

inline Tensor normalized_degree_features(const Tensor& a) {
    const std::size_t n = a.rows();
    Tensor x(n, 1, 0.0);
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
        x(i, 0) = deg / denom;
    }
    return x;
}

inline void require_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument(std::string(name) + " must be a probability, got " + std::to_string(p));
}

}  // namespace detail

// SBM node classification: K planted blocks, dense within and sparse across.
// A slice of nodes gets its block revealed through the features (one-hot plus
// a revealed flag); all other feature rows are zero, so labels must be
// propagated over edges.
inline Dataset generate_sbm_cluster(std::size_t n_graphs, std::size_t nodes_per_graph,
                                    std::size_t k_classes, double p_in, double p_out,
                                    double seed_fraction, Rng& rng) {
    detail::require_probability(p_in, "p_in");
    detail::require_probability(p_out, "p_out");
    if (p_in <= p_out) throw std::invalid_argument("generate_sbm_cluster: need p_out < p_in");
    if (k_classes < 2) throw std::invalid_argument("generate_sbm_cluster: need K >= 2");
    if (!(seed_fraction > 0.0 && seed_fraction <= 1.0))
        throw std::invalid_argument("generate_sbm_cluster: seed_fraction must be in (0,1]");
    if (nodes_per_graph < 1) throw std::invalid_argument("generate_sbm_cluster: need at least 1 node");

    Dataset ds;
    for (std::size_t g = 0; g < n_graphs; ++g) {
        Rng gr(rng.next_u64());
        const std::size_t n = nodes_per_graph;
        std::vector<std::size_t> block(n);
        for (std::size_t i = 0; i < n; ++i)
            block[i] = static_cast<std::size_t>(gr.uniform_int(0, static_cast<std::int64_t>(k_classes) - 1));

        Tensor a(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double p = block[i] == block[j] ? p_in : p_out;
                if (gr.uniform() < p) a(i, j) = a(j, i) = 1.0;
            }

        const std::size_t n_seed =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seed_fraction * static_cast<double>(n))));
        const auto revealed = gr.sample_without_replacement(n, std::min(n_seed, n));

        Tensor x(n, k_classes + 1, 0.0);
        for (std::size_t i : revealed) {
            x(i, block[i]) = 1.0;
            x(i, k_classes) = 1.0;
        }

        Tensor y(n, k_classes, 0.0);
        for (std::size_t i = 0; i < n; ++i) y(i, block[i]) = 1.0;

        ds.push_back(LabeledInstance(Graph(std::move(x), std::move(a)),
                                     TaskKind::node_classification, std::move(y)));
    }
    return ds;
}

// Binary node classification: Erdos-Renyi background with one denser planted
// subgraph; pattern membership is the label, normalized degree the feature.
inline Dataset generate_planted_pattern(std::size_t n_graphs, std::size_t nodes_per_graph,
                                        std::size_t pattern_size, double p_bg, double p_pattern,
                                        Rng& rng) {
    detail::require_probability(p_bg, "p_bg");
    detail::require_probability(p_pattern, "p_pattern");
    if (p_pattern <= p_bg) throw std::invalid_argument("generate_planted_pattern: need p_bg < p_pattern");
    if (pattern_size >= nodes_per_graph)
        throw std::invalid_argument("generate_planted_pattern: pattern_size must be < nodes_per_graph");
    if (pattern_size < 1) throw std::invalid_argument("generate_planted_pattern: pattern_size must be >= 1");

    Dataset ds;
    for (std::size_t g = 0; g < n_graphs; ++g) {
        Rng gr(rng.next_u64());
        const std::size_t n = nodes_per_graph;

        Tensor a(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (gr.uniform() < p_bg) a(i, j) = a(j, i) = 1.0;

        const auto members = gr.sample_without_replacement(n, pattern_size);
        std::vector<bool> in_pattern(n, false);
        for (std::size_t i : members) in_pattern[i] = true;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (in_pattern[i] && in_pattern[j]) {
                    const double e = gr.uniform() < p_pattern ? 1.0 : 0.0;
                    a(i, j) = a(j, i) = e;
                }

        Tensor y(n, 2, 0.0);
        for (std::size_t i = 0; i < n; ++i) y(i, in_pattern[i] ? 1 : 0) = 1.0;

        Tensor x = detail::normalized_degree_features(a);
        ds.push_back(LabeledInstance(Graph(std::move(x), std::move(a)),
                                     TaskKind::node_classification, std::move(y)));
    }
    return ds;
}

// Per-node triangle density of an adjacency matrix, computed through the
// trace of A^3. The test suite checks this against direct triple enumeration.
inline double triangle_density(const Tensor& a) {
    const Tensor a2 = matmul(a, a);
    const Tensor a3 = matmul(a2, a);
    double trace = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) trace += a3(i, i);
    return trace / 6.0 / static_cast<double>(a.rows());
}

// Graph regression: Erdos-Renyi graphs, target = triangle count / n.
inline Dataset generate_triangle_regression(std::size_t n_graphs,
                                            std::pair<std::size_t, std::size_t> nodes_range,
                                            double p_edge, Rng& rng) {
    if (!(p_edge > 0.0 && p_edge < 1.0))
        throw std::invalid_argument("generate_triangle_regression: p_edge must be in (0,1)");
    if (nodes_range.first < 1 || nodes_range.first > nodes_range.second)
        throw std::invalid_argument("generate_triangle_regression: bad nodes_range");

    Dataset ds;
    for (std::size_t g = 0; g < n_graphs; ++g) {
        Rng gr(rng.next_u64());
        const std::size_t n = static_cast<std::size_t>(
            gr.uniform_int(static_cast<std::int64_t>(nodes_range.first),
                           static_cast<std::int64_t>(nodes_range.second)));

        Tensor a(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (gr.uniform() < p_edge) a(i, j) = a(j, i) = 1.0;

        Tensor y(1, 1, 0.0);
        y(0, 0) = triangle_density(a);
        Tensor x = detail::normalized_degree_features(a);
        ds.push_back(LabeledInstance(Graph(std::move(x), std::move(a)),
                                     TaskKind::graph_regression, std::move(y)));
    }
    return ds;
}

// Tags instances with train/val/test splits. Graph-classification datasets
// are stratified per class (largest-remainder allocation, off by at most one
// instance per class); other tasks use a plain shuffled slice.
inline void assign_splits(Dataset& ds, double train_frac, double val_frac, Rng& rng) {
    if (!(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0))
        throw std::invalid_argument("assign_splits: fractions must be nonnegative and sum to <= 1");
    if (ds.empty()) return;

    auto tag_group = [&](std::vector<std::size_t>& idx) {
        rng.shuffle(idx);
        const auto n = idx.size();
        const std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
        const std::size_t n_val = std::min(
            n - n_train, static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n))));
        for (std::size_t i = 0; i < n; ++i) {
            Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
            ds[idx[i]].split = s;
        }
    };

    if (ds.task() == TaskKind::graph_classification) {
        std::map<std::size_t, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds[i].y.argmax_row(0)].push_back(i);
        for (auto& [cls, idx] : by_class) tag_group(idx);
    } else {
        std::vector<std::size_t> idx(ds.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        tag_group(idx);
    }
}

// --- JSONL persistence -----------------------------------------------------
// One graph per line: {"n", "task", "x", "d_x", "adj", "y", "d_k", "split"}
// with x/y as row-major floats and adj as [i, j] pairs with i < j.

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (std::size_t k = 0; k < ds.size(); ++k) {
        const LabeledInstance& inst = ds[k];
        nlohmann::json j;
        j["n"] = inst.graph.num_nodes();
        j["task"] = task_name(inst.task);
        j["x"] = inst.graph.x.values();
        j["d_x"] = inst.graph.feature_dim();
        std::vector<std::array<std::size_t, 2>> edges;
        for (std::size_t i = 0; i < inst.graph.num_nodes(); ++i)
            for (std::size_t jj = i + 1; jj < inst.graph.num_nodes(); ++jj)
                if (inst.graph.a(i, jj) != 0.0) edges.push_back({i, jj});
        j["adj"] = edges;
        j["y"] = inst.y.values();
        j["d_k"] = inst.label_dim();
        j["split"] = split_name(inst.split);
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const std::size_t n = j.at("n").get<std::size_t>();
            const TaskKind task = task_from_name(j.at("task").get<std::string>());
            const std::size_t d_x = j.at("d_x").get<std::size_t>();
            const std::size_t d_k = j.at("d_k").get<std::size_t>();
            Tensor x = Tensor::from_values(n, d_x, j.at("x").get<std::vector<double>>());
            Tensor a(n, n, 0.0);
            for (const auto& e : j.at("adj")) {
                const std::size_t i = e.at(0).get<std::size_t>();
                const std::size_t jj = e.at(1).get<std::size_t>();
                if (i >= jj || jj >= n) throw std::runtime_error("bad edge [" + std::to_string(i) +
                                                                 "," + std::to_string(jj) + "]");
                a(i, jj) = a(jj, i) = 1.0;
            }
            const std::size_t y_rows = is_node_level(task) ? n : 1;
            Tensor y = Tensor::from_values(y_rows, d_k, j.at("y").get<std::vector<double>>());
            const Split split = split_from_name(j.at("split").get<std::string>());
            ds.push_back(LabeledInstance(Graph(std::move(x), std::move(a)), task, std::move(y), split));
        } catch (const std::exception& e) {
            throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    return ds;
}

inline bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& ia = a[i];
        const auto& ib = b[i];
        if (ia.task != ib.task || ia.split != ib.split) return false;
        if (!same_values(ia.graph.x, ib.graph.x)) return false;
        if (!same_values(ia.graph.a, ib.graph.a)) return false;
        if (!same_values(ia.y, ib.y)) return false;
    }
    return true;
}

}  // namespace gccm
