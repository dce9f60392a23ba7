#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "abcsmc/flow.hpp"
#include "abcsmc/kernels.hpp"
#include "abcsmc/model.hpp"
#include "abcsmc/proposal.hpp"

namespace abcsmc {

struct IterationTrace {
    long t = 0;
    double epsilon = 0.0;
    double wall_clock_s = 0.0;
    long n_simulations = 0;  // cumulative over the run
    double accept_rate = 0.0;
    long unique_after_resample = 0;
    double proposal_fit_s = 0.0;
    bool epsilon_reused = false;  // no candidate below the previous epsilon
    bool used_fallback = false;   // transport runs: classic proposal selected
};

struct SmcConfig {
    long n_particles = 1000;
    long n_train = 900;
    long n_test = 100;
    double omega = 0.5;
    double time_budget_s = std::numeric_limits<double>::infinity();
    std::optional<long> max_iterations;
    std::optional<double> epsilon_target;  // stop once epsilon_t <= target
    TrainingMode training_mode = TrainingMode::b_t;
    int workers = 1;
    std::uint64_t seed = 0;
};

struct SmcResult {
    std::vector<IterationTrace> iterations;
    Matrix output_thetas;  // final complete iteration; train population for
                           // transport runs
    Vector output_dists;
    Matrix test_thetas;    // transport runs only
    double elapsed_s = 0.0;
};

// index j is selected once for each k with (k + u)/N in [W_{j-1}, W_j) under
// the normalised cumulative weights W; output is sorted ascending.
std::vector<std::size_t> systematic_resample(const Vector& weights,
                                             std::size_t n, double u);

// Particles compare equal iff (theta, summary) are bitwise equal; duplicates
// only arise as resampling copies.
std::vector<std::size_t> particle_content_ids(const std::vector<Particle>& ps);

struct EpsilonChoice {
    double epsilon = 0.0;
    long unique_after_resample = 0;
};

// Smallest candidate epsilon (candidates are the observed distances strictly
// below eps_prev, bisected) whose thresholded weights resample, with the
// fixed draw u, to at least ceil(omega*N) unique particles. Throws
// "no-feasible-epsilon" when no candidate qualifies.
EpsilonChoice choose_epsilon(const Vector& dists,
                             const std::vector<std::size_t>& content_ids,
                             double omega, double u, double eps_prev);

long count_unique_after_resample(const Vector& dists,
                                 const std::vector<std::size_t>& content_ids,
                                 double epsilon, double u);

using ProposalFitter = std::function<std::shared_ptr<const ProposalKernel>(
    const TrainingSet&, RandomStream&)>;

SmcResult run_abc_smc(const ObservedTarget& target, const KernelConfig& kernel,
                      const ProposalFitter& fitter, const SmcConfig& cfg);

struct TransportSpec {
    FlowArchitecture architecture;
    FlowTrainConfig training;
    bool fallback = false;
    std::optional<double> defensive_eta;
};

SmcResult run_transport_abc(const ObservedTarget& target,
                            const KernelConfig& kernel,
                            const TransportSpec& spec, const SmcConfig& cfg);

}  // namespace abcsmc
