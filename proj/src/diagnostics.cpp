#include "abcsmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "abcsmc/error.hpp"
#include "abcsmc/wasserstein.hpp"

namespace abcsmc {

namespace {

Matrix stride_rows(const Matrix& m, long cap) {
    if (static_cast<long>(m.rows) <= cap) return m;
    Matrix out(static_cast<std::size_t>(cap), m.cols);
    for (long i = 0; i < cap; ++i) {
        const auto src = static_cast<std::size_t>(
            (static_cast<long long>(i) * static_cast<long long>(m.rows)) / cap);
        out.set_row(static_cast<std::size_t>(i), m.row(src));
    }
    return out;
}

}  // namespace

DiagnosticsReport build_report(const SmcResult& run,
                               const std::optional<Matrix>& reference,
                               const ReportOptions& opts) {
    if (run.iterations.empty())
        throw Error("no-complete-iteration", "run has no complete iteration");
    DiagnosticsReport rep;
    rep.final_epsilon = run.iterations.back().epsilon;
    rep.final_iteration = run.iterations.back().t;
    rep.n_output = static_cast<long>(run.output_thetas.rows);
    rep.elapsed_s = run.elapsed_s;
    if (reference) {
        if (reference->cols != run.output_thetas.cols)
            throw Error("dimension-mismatch",
                        "reference sample has wrong parameter dimension");
        const Matrix ref = stride_rows(*reference, opts.max_reference_points);
        const Matrix out = stride_rows(run.output_thetas, opts.max_reference_points);
        rep.wasserstein = wasserstein(out, ref, opts.wasserstein_order);
    }
    return rep;
}

std::string format_sig3(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    const double a = std::abs(x);
    char buf[48];
    if (a < 0.01 || a >= 1000.0) {
        std::snprintf(buf, sizeof(buf), "%.2e", x);
        return buf;
    }
    int decimals = 2 - static_cast<int>(std::floor(std::log10(a)));
    std::snprintf(buf, sizeof(buf), "%.*f", std::max(decimals, 0), x);
    // rounding may push the value over a decade boundary (999.6 -> 1000)
    if (std::abs(std::stod(buf)) >= 1000.0) {
        std::snprintf(buf, sizeof(buf), "%.2e", x);
    }
    return buf;
}

std::vector<TraceGroupSummary> trace_aggregate(
    const std::vector<RunSummaryInput>& runs) {
    if (runs.empty()) throw Error("empty-group", "no runs to aggregate");
    std::map<std::string, std::vector<const RunSummaryInput*>> groups;
    for (const auto& r : runs) groups[r.group].push_back(&r);
    std::vector<TraceGroupSummary> out;
    for (const auto& [name, members] : groups) {
        TraceGroupSummary s;
        s.group = name;
        s.n_runs = static_cast<long>(members.size());
        double eps_sum = 0.0, w_sum = 0.0;
        long w_count = 0;
        for (const auto* m : members) {
            eps_sum += m->final_epsilon;
            if (m->wasserstein) {
                w_sum += *m->wasserstein;
                ++w_count;
            }
        }
        s.mean_final_epsilon = eps_sum / static_cast<double>(members.size());
        if (w_count > 0) s.mean_wasserstein = w_sum / static_cast<double>(w_count);
        out.push_back(std::move(s));
    }
    return out;
}

std::string render_summary_table(const std::vector<TraceGroupSummary>& rows,
                                 const std::string& metric) {
    if (rows.empty()) throw Error("empty-group", "no rows to render");
    // rank within each model (the part of the label before the first '/')
    std::map<std::string, std::vector<std::pair<double, std::size_t>>> ranked;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::string model = r.group.substr(0, r.group.find('/'));
        if (metric == "loss") {
            if (r.mean_wasserstein)
                ranked[model].emplace_back(*r.mean_wasserstein, i);
        } else {
            ranked[model].emplace_back(r.mean_final_epsilon, i);
        }
    }
    std::vector<std::string> flag(rows.size());
    const char* marks[3] = {"best", "2nd", "3rd"};
    for (auto& [model, entries] : ranked) {
        std::sort(entries.begin(), entries.end());
        for (std::size_t r = 0; r < entries.size() && r < 3; ++r)
            flag[entries[r].second] = marks[r];
    }

    std::size_t width = 5;
    for (const auto& r : rows) width = std::max(width, r.group.size());
    std::ostringstream out;
    out << std::string(width, ' ') << "  runs  mean_eps   mean_loss  rank\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::string eps = format_sig3(r.mean_final_epsilon);
        std::string loss = r.mean_wasserstein ? format_sig3(*r.mean_wasserstein) : "-";
        char line[256];
        std::snprintf(line, sizeof(line), "%-*s  %4ld  %-9s  %-9s  %s\n",
                      static_cast<int>(width), r.group.c_str(), r.n_runs,
                      eps.c_str(), loss.c_str(), flag[i].c_str());
        out << line;
    }
    return out.str();
}

}  // namespace abcsmc
