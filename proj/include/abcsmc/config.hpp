#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "abcsmc/kernels.hpp"
#include "abcsmc/proposal.hpp"

namespace abcsmc {

enum class ProposalType { classic_rw, classic_independence, mixture, flow };

ProposalType proposal_type_from_string(const std::string& s);
std::string to_string(ProposalType t);

// One fully resolved experiment cell. `seed` is the master seed; the run
// seed is derived from (seed, replication) so replications share seeds
// across models, kernels and proposals.
struct ExperimentConfig {
    std::string model;
    KernelFamily kernel = KernelFamily::one_hit;
    int r = 2;
    ProposalType proposal = ProposalType::mixture;
    int components = 5;
    bool auto_components = false;
    std::optional<double> defensive_eta;
    bool fallback = false;
    TrainingMode training_set = TrainingMode::b_t;
    long n_particles = 1000;
    long n_train = 900;
    long n_test = 100;
    double omega = 0.5;
    double time_budget_s = std::numeric_limits<double>::infinity();
    std::optional<long> max_iterations;
    std::optional<double> epsilon_target;
    std::uint64_t seed = 0;
    long replication = 0;
    std::optional<std::string> observed;
    std::optional<std::string> reference;
    int wasserstein_order = 1;
    long wasserstein_max_points = 2000;

    std::string run_name() const;
    std::uint64_t run_seed() const;

    // "" when the combination is allowed, otherwise the reason it is not.
    std::string compatibility_error(bool allow_inefficient) const;
};

// Minimal TOML-style subset: [section], key = value, values are strings,
// numbers, booleans or flat arrays; '#' starts a comment.
struct TomlValue {
    enum class Kind { string, number, boolean, array } kind = Kind::string;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<TomlValue> array;
    int line = 0;
};

using TomlSection = std::map<std::string, TomlValue>;
using TomlFile = std::map<std::string, TomlSection>;

TomlFile parse_toml(const std::string& text);

// Expands [run] defaults with the Cartesian product of the [grid] arrays and
// `replications`. Throws Error("config-invalid", ...) with line context.
std::vector<ExperimentConfig> expand_config(const std::string& text);

std::uint64_t derive_run_seed(std::uint64_t master, long replication);

}  // namespace abcsmc
