#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gccm/diagnostics.hpp"
#include "gccm/training.hpp"

namespace gccm {

// Round-trip-exact double formatting for CSV cells.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"rows", t.rows()}, {"cols", t.cols()}, {"values", t.values()}};
}

inline nlohmann::json report_to_json(const DiagnosticsReport& r) {
    nlohmann::json j;
    j["contribution"] = tensor_to_json(r.contribution);
    j["contribution_mean"] = r.contribution_mean;
    j["probe_t"] = r.probe_t;
    j["lemma1"] = {{"max_ds", r.lemma1.max_ds},
                   {"max_boundary_equiv_gap", r.lemma1.max_boundary_equiv_gap},
                   {"draws", r.lemma1.draws},
                   {"pass", r.lemma1.pass}};
    j["lemma2"] = {{"batch_sizes", r.lemma2.batch_sizes},
                   {"max_collapse_gap", r.lemma2.max_collapse_gap},
                   {"dc_collapse", r.lemma2.dc_collapse},
                   {"dc_distinct", r.lemma2.dc_distinct},
                   {"logn_reference", r.lemma2.logn_reference},
                   {"distinct_below_logn", r.lemma2.distinct_below_logn},
                   {"pass", r.lemma2.pass}};
    j["lemma3"] = {{"z_gap_norm", r.lemma3.z_gap_norm},
                   {"control_gap", r.lemma3.control_gap},
                   {"degenerate_network", r.lemma3.degenerate_network},
                   {"pass", r.lemma3.pass}};
    j["gradcheck"] = {{"max_error_per_block", r.gradcheck.max_error_per_block},
                      {"max_error", r.gradcheck.max_error},
                      {"worst_block", r.gradcheck.worst_block},
                      {"pass", r.gradcheck.pass}};
    j["pass"] = diagnostics_pass(r);
    return j;
}

// Heatmap CSV, rows = nodes, cols = hidden dims.
inline void write_heatmap_csv(const Tensor& heatmap, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_heatmap_csv: cannot open " + path);
    for (std::size_t i = 0; i < heatmap.rows(); ++i) {
        for (std::size_t j = 0; j < heatmap.cols(); ++j) {
            if (j) out << ",";
            out << format_double(heatmap(i, j));
        }
        out << "\n";
    }
}

inline void write_metrics_csv(const std::vector<MetricsRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << "epoch,step,variant,t1,t2,boundary_t1,boundary_t2,consistency,total,val_metric\n";
    for (const MetricsRow& row : history) {
        out << row.epoch << "," << row.step << "," << variant_name(row.variant) << "," << row.t1
            << "," << row.t2 << "," << format_double(row.loss.boundary_t1) << ","
            << format_double(row.loss.boundary_t2) << "," << format_double(row.loss.consistency)
            << "," << format_double(row.loss.total) << ","
            << (row.val_metric ? format_double(*row.val_metric) : "") << "\n";
    }
}

}  // namespace gccm
