#pragma once

#include <optional>
#include <string>

#include "abcsmc/config.hpp"
#include "abcsmc/diagnostics.hpp"
#include "abcsmc/smc.hpp"

namespace abcsmc {

inline constexpr const char* library_version = "0.1.0";

struct RunRecord {
    int schema = 1;
    ExperimentConfig config;  // echo; max_iterations resolved for replay
    std::vector<IterationTrace> iterations;
    Matrix output_sample;
    Matrix test_sample;  // transport runs; empty otherwise
    DiagnosticsReport diagnostics;
    std::string version = library_version;
    std::string started_at;
    std::string finished_at;
};

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const std::string& text);

// Byte-for-byte reproducibility modulo wall-clock fields.
bool records_equal_modulo_timing(const RunRecord& a, const RunRecord& b);

void write_run_record(const std::string& path, const RunRecord& record);
RunRecord read_run_record(const std::string& path);

// columns exactly: t, epsilon, wall_clock_s, n_simulations, accept_rate,
// unique_after_resample, proposal_fit_s
void write_trace_csv(const std::string& path,
                     const std::vector<IterationTrace>& iterations);

// Resolves observed data for a model: built-in y0 for quadratic/gm, shipped
// CSV files for mg1/seir/slcp (path override via `observed`).
ObservedTarget load_observed_target(const std::string& model,
                                    const std::optional<std::string>& observed,
                                    const std::string& data_dir);

Matrix load_reference_csv(const std::string& path);

// Executes one experiment cell end to end and assembles the record.
RunRecord execute_run(const ExperimentConfig& cfg, const std::string& data_dir,
                      int workers);

std::string default_data_dir();

}  // namespace abcsmc
