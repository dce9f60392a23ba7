#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abcsmc/linalg.hpp"
#include "abcsmc/smc.hpp"

namespace abcsmc {

struct DiagnosticsReport {
    double final_epsilon = 0.0;
    long final_iteration = 0;
    std::optional<double> wasserstein;
    long n_output = 0;
    double elapsed_s = 0.0;
};

struct ReportOptions {
    int wasserstein_order = 1;
    // Large reference files are strided down to this many rows before the
    // exact transport solve.
    long max_reference_points = 2000;
};

DiagnosticsReport build_report(const SmcResult& run,
                               const std::optional<Matrix>& reference,
                               const ReportOptions& opts = {});

// 3 significant figures; scientific below 0.01 or at 1000 and above.
std::string format_sig3(double x);

struct TraceGroupSummary {
    std::string group;  // "model/kernel/proposal" label
    long n_runs = 0;
    double mean_final_epsilon = 0.0;
    std::optional<double> mean_wasserstein;
};

struct RunSummaryInput {
    std::string group;
    double final_epsilon = 0.0;
    std::optional<double> wasserstein;
};

std::vector<TraceGroupSummary> trace_aggregate(
    const std::vector<RunSummaryInput>& runs);

// Aligned plain-text table; flags the best three values per metric column.
std::string render_summary_table(const std::vector<TraceGroupSummary>& rows,
                                 const std::string& metric);

}  // namespace abcsmc
