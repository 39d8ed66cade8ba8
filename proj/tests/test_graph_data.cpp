#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "gccm/graph_data.hpp"
#include "gccm/rng.hpp"

using namespace gccm;

namespace {

std::string temp_path(const std::string& name) { return testing::TempDir() + name; }

}  // namespace

TEST(Graph, ValidatesAdjacency) {
    Tensor x(2, 1, 0.5);
    Tensor bad_diag(2, 2, 0.0);
    bad_diag(0, 0) = 1.0;
    EXPECT_THROW(Graph(x, bad_diag), std::invalid_argument);
    Tensor asym(2, 2, 0.0);
    asym(0, 1) = 1.0;
    EXPECT_THROW(Graph(x, asym), std::invalid_argument);
    Tensor weighted(2, 2, 0.0);
    weighted(0, 1) = weighted(1, 0) = 0.5;
    EXPECT_THROW(Graph(x, weighted), std::invalid_argument);
}

TEST(SbmCluster, DegenerateSeparationIsCliques) {
    Rng rng(11);
    Dataset ds = generate_sbm_cluster(5, 12, 3, 1.0, 0.0, 1.0, rng);
    ASSERT_EQ(ds.size(), 5u);
    EXPECT_EQ(ds.task(), TaskKind::node_classification);
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const auto& inst = ds[g];
        const std::size_t n = inst.graph.num_nodes();
        for (std::size_t i = 0; i < n; ++i) {
            // Features fully reveal the label: one-hot of the block plus flag.
            const std::size_t cls = inst.y.argmax_row(i);
            EXPECT_DOUBLE_EQ(inst.graph.x(i, cls), 1.0);
            EXPECT_DOUBLE_EQ(inst.graph.x(i, 3), 1.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const bool same_block = inst.y.argmax_row(i) == inst.y.argmax_row(j);
                EXPECT_DOUBLE_EQ(inst.graph.a(i, j), same_block ? 1.0 : 0.0);
            }
        }
    }
}

TEST(SbmCluster, RejectsUninformativeEdgeProbabilities) {
    Rng rng(1);
    EXPECT_THROW(generate_sbm_cluster(1, 10, 2, 0.3, 0.3, 0.5, rng), std::invalid_argument);
    EXPECT_THROW(generate_sbm_cluster(1, 10, 2, 0.1, 0.5, 0.5, rng), std::invalid_argument);
    EXPECT_THROW(generate_sbm_cluster(1, 10, 1, 0.5, 0.1, 0.5, rng), std::invalid_argument);
    EXPECT_THROW(generate_sbm_cluster(1, 10, 2, 0.5, 0.1, 0.0, rng), std::invalid_argument);
}

TEST(SbmCluster, IntraBlockDensityMatchesPIn) {
    Rng rng(2024);
    Dataset ds = generate_sbm_cluster(100, 40, 4, 0.5, 0.05, 0.3, rng);
    double intra_edges = 0.0, intra_pairs = 0.0;
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const auto& inst = ds[g];
        for (std::size_t i = 0; i < inst.graph.num_nodes(); ++i)
            for (std::size_t j = i + 1; j < inst.graph.num_nodes(); ++j)
                if (inst.y.argmax_row(i) == inst.y.argmax_row(j)) {
                    intra_pairs += 1.0;
                    intra_edges += inst.graph.a(i, j);
                }
    }
    EXPECT_NEAR(intra_edges / intra_pairs, 0.5, 0.02);
}

TEST(PlantedPattern, DegenerateCliqueInEmptyGraph) {
    Rng rng(3);
    Dataset ds = generate_planted_pattern(3, 10, 4, 0.0, 1.0, rng);
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const auto& inst = ds[g];
        for (std::size_t i = 0; i < 10; ++i) {
            const bool in_pattern = inst.y(i, 1) == 1.0;
            // Degree feature alone separates the classes.
            EXPECT_DOUBLE_EQ(inst.graph.x(i, 0), in_pattern ? 3.0 / 9.0 : 0.0);
        }
    }
}

TEST(PlantedPattern, PreconditionsAndExactBalance) {
    Rng rng(4);
    EXPECT_THROW(generate_planted_pattern(1, 10, 10, 0.1, 0.6, rng), std::invalid_argument);
    EXPECT_THROW(generate_planted_pattern(1, 10, 4, 0.6, 0.6, rng), std::invalid_argument);

    Dataset ds = generate_planted_pattern(20, 16, 5, 0.1, 0.7, rng);
    for (std::size_t g = 0; g < ds.size(); ++g) {
        double positives = 0.0;
        for (std::size_t i = 0; i < 16; ++i) positives += ds[g].y(i, 1);
        EXPECT_DOUBLE_EQ(positives, 5.0);  // balance is pattern_size/nodes by construction
    }
}

TEST(TriangleRegression, HandValues) {
    // K4: four triangles over four nodes.
    Tensor k4(4, 4, 1.0);
    for (std::size_t i = 0; i < 4; ++i) k4(i, i) = 0.0;
    EXPECT_DOUBLE_EQ(triangle_density(k4), 1.0);

    // A tree is triangle-free.
    Tensor tree(4, 4, 0.0);
    tree(0, 1) = tree(1, 0) = 1.0;
    tree(1, 2) = tree(2, 1) = 1.0;
    tree(1, 3) = tree(3, 1) = 1.0;
    EXPECT_DOUBLE_EQ(triangle_density(tree), 0.0);
}

TEST(TriangleRegression, MatchesTripleEnumerationOracle) {
    Rng rng(5);
    Dataset ds = generate_triangle_regression(10, {6, 14}, 0.35, rng);
    EXPECT_EQ(ds.task(), TaskKind::graph_regression);
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const Tensor& a = ds[g].graph.a;
        const std::size_t n = a.rows();
        double triangles = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                for (std::size_t k = j + 1; k < n; ++k)
                    triangles += a(i, j) * a(j, k) * a(i, k);
        EXPECT_NEAR(ds[g].y(0, 0), triangles / static_cast<double>(n), 1e-12);
    }
    EXPECT_THROW(generate_triangle_regression(1, {4, 8}, 0.0, rng), std::invalid_argument);
}

TEST(Generators, AdjacencyInvariantsAndReproducibility) {
    Rng rng_a(77);
    Rng rng_b(77);
    Dataset a = generate_sbm_cluster(10, 15, 3, 0.6, 0.1, 0.4, rng_a);
    Dataset b = generate_sbm_cluster(10, 15, 3, 0.6, 0.1, 0.4, rng_b);
    EXPECT_TRUE(datasets_equal(a, b));
    for (std::size_t g = 0; g < a.size(); ++g) {
        const Tensor& adj = a[g].graph.a;
        for (std::size_t i = 0; i < adj.rows(); ++i) {
            EXPECT_DOUBLE_EQ(adj(i, i), 0.0);
            for (std::size_t j = 0; j < adj.cols(); ++j) EXPECT_DOUBLE_EQ(adj(i, j), adj(j, i));
        }
    }
    Rng rng_c(78);
    Dataset c = generate_sbm_cluster(10, 15, 3, 0.6, 0.1, 0.4, rng_c);
    EXPECT_FALSE(datasets_equal(a, c));
}

TEST(Splits, StratifiedPreservesClassProportions) {
    // Hand-built graph-classification dataset: 20 of class 0, 10 of class 1.
    Dataset ds;
    Rng rng(6);
    for (int i = 0; i < 30; ++i) {
        Tensor x(3, 2, 0.1);
        Tensor a(3, 3, 0.0);
        a(0, 1) = a(1, 0) = 1.0;
        Tensor y(1, 2, 0.0);
        y(0, i < 20 ? 0 : 1) = 1.0;
        ds.push_back(LabeledInstance(Graph(x, a), TaskKind::graph_classification, y));
    }
    assign_splits(ds, 0.6, 0.2, rng);
    std::map<std::string, std::map<std::size_t, int>> counts;
    for (std::size_t i = 0; i < ds.size(); ++i)
        ++counts[split_name(ds[i].split)][ds[i].y.argmax_row(0)];
    // Class 0 expects 12/4/4, class 1 expects 6/2/2, both within one instance.
    EXPECT_NEAR(counts["train"][0], 12, 1);
    EXPECT_NEAR(counts["val"][0], 4, 1);
    EXPECT_NEAR(counts["train"][1], 6, 1);
    EXPECT_NEAR(counts["val"][1], 2, 1);
}

TEST(Persistence, EmptyDatasetRoundTrips) {
    const std::string path = temp_path("empty.jsonl");
    Dataset empty;
    save_dataset(empty, path);
    Dataset loaded = load_dataset(path);
    EXPECT_TRUE(loaded.empty());
}

TEST(Persistence, RoundTripIsLossless) {
    Rng rng(8);
    Dataset ds = generate_sbm_cluster(6, 10, 3, 0.7, 0.1, 0.5, rng);
    Rng split_rng(9);
    assign_splits(ds, 0.5, 0.25, split_rng);
    const std::string path = temp_path("sbm.jsonl");
    save_dataset(ds, path);
    Dataset loaded = load_dataset(path);
    EXPECT_TRUE(datasets_equal(ds, loaded));

    Rng rng2(10);
    Dataset reg = generate_triangle_regression(5, {5, 9}, 0.4, rng2);
    const std::string path2 = temp_path("reg.jsonl");
    save_dataset(reg, path2);
    EXPECT_TRUE(datasets_equal(reg, load_dataset(path2)));
}

TEST(Persistence, TruncatedFileNamesLineNumber) {
    Rng rng(12);
    Dataset ds = generate_sbm_cluster(3, 6, 2, 0.8, 0.1, 0.5, rng);
    const std::string path = temp_path("trunc.jsonl");
    save_dataset(ds, path);
    std::ifstream in(path);
    std::string line1, line2;
    std::getline(in, line1);
    std::getline(in, line2);
    in.close();
    std::ofstream out(path);
    out << line1 << "\n" << line2.substr(0, line2.size() / 2) << "\n";
    out.close();
    try {
        load_dataset(path);
        FAIL() << "expected parse error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Persistence, MixedTaskKindsRejected) {
    Rng rng(13);
    Dataset a = generate_sbm_cluster(1, 6, 2, 0.8, 0.1, 0.5, rng);
    Dataset b = generate_triangle_regression(1, {5, 5}, 0.4, rng);
    Dataset mixed;
    mixed.push_back(a[0]);
    EXPECT_THROW(mixed.push_back(b[0]), std::invalid_argument);
}
