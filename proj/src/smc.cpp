#include "abcsmc/smc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <unordered_map>

#include "abcsmc/error.hpp"

namespace abcsmc {

namespace {

// substream phases; population index is folded into the phase word
constexpr std::uint64_t phase_init = 0;
constexpr std::uint64_t phase_resample = 1;
constexpr std::uint64_t phase_fit = 2;
constexpr std::uint64_t phase_step = 3;

std::uint64_t phase_key(std::uint64_t phase, std::uint64_t population) {
    return phase | (population << 8);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
}

}  // namespace

std::vector<std::size_t> systematic_resample(const Vector& weights,
                                             std::size_t n, double u) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw Error("all-zero-weights", "negative weight");
        total += w;
    }
    if (total <= 0.0) throw Error("all-zero-weights", "weights sum to zero");

    // index j covers the normalised-cumulative-weight cell [W_{j-1}, W_j);
    // the half-open convention keeps "each index exactly once" exact for
    // equal weights at every u in [0,1), including u = 0
    std::vector<std::size_t> out;
    out.reserve(n);
    const std::size_t src = weights.size();
    double cum = weights[0] / total;
    std::size_t j = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double pos = (static_cast<double>(k) + u) / static_cast<double>(n);
        while (j + 1 < src && cum <= pos) {
            ++j;
            cum += weights[j] / total;
        }
        out.push_back(j);
    }
    return out;
}

std::vector<std::size_t> particle_content_ids(const std::vector<Particle>& ps) {
    std::unordered_map<std::string, std::size_t> seen;
    std::vector<std::size_t> ids(ps.size());
    std::string key;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps[i];
        key.assign(reinterpret_cast<const char*>(p.theta.data()),
                   p.theta.size() * sizeof(double));
        key.append(reinterpret_cast<const char*>(p.summary.data()),
                   p.summary.size() * sizeof(double));
        ids[i] = seen.emplace(key, seen.size()).first->second;
    }
    return ids;
}

long count_unique_after_resample(const Vector& dists,
                                 const std::vector<std::size_t>& ids,
                                 double epsilon, double u) {
    const std::size_t n = dists.size();
    Vector w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = dists[i] <= epsilon ? 1.0 : 0.0;
    std::vector<std::size_t> idx;
    try {
        idx = systematic_resample(w, n, u);
    } catch (const Error&) {
        return 0;
    }
    std::vector<char> taken(n, 0);
    long unique = 0;
    for (std::size_t i : idx) {
        if (!taken[ids[i]]) {
            taken[ids[i]] = 1;
            ++unique;
        }
    }
    return unique;
}

EpsilonChoice choose_epsilon(const Vector& dists,
                             const std::vector<std::size_t>& ids, double omega,
                             double u, double eps_prev) {
    const std::size_t n = dists.size();
    const long need = static_cast<long>(
        std::ceil(omega * static_cast<double>(n) - 1e-12));
    Vector candidates;
    candidates.reserve(n);
    for (double d : dists)
        if (d < eps_prev) candidates.push_back(d);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    if (candidates.empty())
        throw Error("no-feasible-epsilon", "no distances below previous epsilon");

    // The unique count is a step function changing only at observed
    // distances, so bisection over the sorted candidates finds the smallest
    // feasible threshold.
    auto unique_at = [&](double eps) {
        return count_unique_after_resample(dists, ids, eps, u);
    };
    std::size_t lo = 0, hi = candidates.size() - 1;
    if (unique_at(candidates[hi]) < need)
        throw Error("no-feasible-epsilon",
                    "not enough unique particles at any candidate epsilon");
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (unique_at(candidates[mid]) >= need)
            hi = mid;
        else
            lo = mid + 1;
    }
    return EpsilonChoice{candidates[lo], unique_at(candidates[lo])};
}

namespace {

struct SweepResult {
    bool aborted = false;
    long n_sims = 0;
    long n_accepted = 0;
};

// One kernel step per particle, each on its own (seed, t, phase, i)
// substream, so the outcome is identical for any worker count.
SweepResult sweep(std::vector<Particle>& particles, const ObservedTarget& target,
                  const KernelConfig& kernel, const ProposalKernel& proposal,
                  double eps, const Deadline& deadline, const SmcConfig& cfg,
                  long t, std::uint64_t population) {
    const std::size_t n = particles.size();
    std::vector<StepOutcome> outcomes(n);
    const int workers = std::max(1, cfg.workers);
    auto worker_fn = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RandomStream rng = RandomStream::substream(
                cfg.seed, static_cast<std::uint64_t>(t),
                phase_key(phase_step, population), i);
            outcomes[i] = kernel_step(kernel, particles[i], target, proposal,
                                      eps, deadline, rng);
        }
    };
    if (workers == 1) {
        worker_fn(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(n, w * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            if (begin < end) pool.emplace_back(worker_fn, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    SweepResult res;
    for (std::size_t i = 0; i < n; ++i) {
        res.aborted = res.aborted || outcomes[i].aborted;
        res.n_sims += outcomes[i].n_sims;
        res.n_accepted += outcomes[i].accepted ? 1 : 0;
    }
    if (!res.aborted)
        for (std::size_t i = 0; i < n; ++i) particles[i] = outcomes[i].particle;
    return res;
}

std::vector<Particle> init_population(const ObservedTarget& target,
                                      const SmcConfig& cfg, long n,
                                      std::uint64_t population,
                                      const Deadline& deadline, long& n_sims) {
    std::vector<Particle> ps(static_cast<std::size_t>(n));
    const int workers = std::max(1, cfg.workers);
    std::atomic<bool> expired{false};
    auto worker_fn = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            if (deadline.expired()) {
                expired = true;
                return;
            }
            RandomStream rng = RandomStream::substream(
                cfg.seed, 0, phase_key(phase_init, population), i);
            ps[i] = target.make_particle(target.model->prior_sample(rng), rng);
        }
    };
    const auto un = static_cast<std::size_t>(n);
    if (workers == 1) {
        worker_fn(0, un);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (un + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(un, w * chunk);
            const std::size_t end = std::min(un, begin + chunk);
            if (begin < end) pool.emplace_back(worker_fn, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    if (expired)
        throw Error("budget-exhausted-in-iteration-1",
                    "time budget expired during initialisation");
    n_sims += n;
    return ps;
}

Matrix thetas_of(const std::vector<Particle>& ps) {
    Matrix m(ps.size(), ps.empty() ? 0 : ps[0].theta.size());
    for (std::size_t i = 0; i < ps.size(); ++i) m.set_row(i, ps[i].theta);
    return m;
}

TrainingSet make_training_set(const std::vector<Particle>& ps, double eps,
                              TrainingMode mode) {
    TrainingSet d;
    d.mode = mode;
    std::vector<const Particle*> keep;
    for (const auto& p : ps)
        if (mode == TrainingMode::a_t || p.dist <= eps) keep.push_back(&p);
    d.thetas = Matrix(keep.size(), ps.empty() ? 0 : ps[0].theta.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
        d.thetas.set_row(i, keep[i]->theta);
    return d;
}

Vector dists_of(const std::vector<Particle>& ps) {
    Vector d(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) d[i] = ps[i].dist;
    return d;
}

void apply_resample(std::vector<Particle>& ps,
                    const std::vector<std::size_t>& idx) {
    std::vector<Particle> next;
    next.reserve(idx.size());
    for (std::size_t i : idx) next.push_back(ps[i]);
    ps = std::move(next);
}

}  // namespace

SmcResult run_abc_smc(const ObservedTarget& target, const KernelConfig& kernel,
                      const ProposalFitter& fitter, const SmcConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const Deadline deadline = std::isfinite(cfg.time_budget_s)
                                  ? Deadline::after(cfg.time_budget_s)
                                  : Deadline::never();
    long cum_sims = 0;
    std::vector<Particle> particles =
        init_population(target, cfg, cfg.n_particles, 0, deadline, cum_sims);

    SmcResult result;
    double eps_prev = std::numeric_limits<double>::infinity();
    for (long t = 1;; ++t) {
        if (cfg.max_iterations && t > *cfg.max_iterations) break;
        if (deadline.expired()) break;

        const double u = RandomStream::substream(cfg.seed, static_cast<std::uint64_t>(t),
                                                 phase_key(phase_resample, 0), 0)
                             .uniform01();
        const Vector dists = dists_of(particles);
        const auto ids = particle_content_ids(particles);
        double eps_t;
        long unique;
        bool reused = false;
        try {
            const EpsilonChoice choice =
                choose_epsilon(dists, ids, cfg.omega, u, eps_prev);
            eps_t = choice.epsilon;
            unique = choice.unique_after_resample;
        } catch (const Error& e) {
            if (std::string(e.code()) != "no-feasible-epsilon") throw;
            eps_t = eps_prev;
            unique = count_unique_after_resample(dists, ids, eps_t, u);
            reused = true;
        }

        const TrainingSet training =
            make_training_set(particles, eps_t, cfg.training_mode);
        Vector weights(particles.size());
        for (std::size_t i = 0; i < particles.size(); ++i)
            weights[i] = particles[i].dist <= eps_t ? 1.0 : 0.0;
        apply_resample(particles, systematic_resample(weights, particles.size(), u));

        const auto fit_start = std::chrono::steady_clock::now();
        RandomStream fit_rng = RandomStream::substream(
            cfg.seed, static_cast<std::uint64_t>(t), phase_key(phase_fit, 0), 0);
        const std::shared_ptr<const ProposalKernel> proposal =
            fitter(training, fit_rng);
        const double fit_s = seconds_since(fit_start);

        const SweepResult sw = sweep(particles, target, kernel, *proposal, eps_t,
                                     deadline, cfg, t, 0);
        if (sw.aborted) break;  // partial iteration is discarded
        cum_sims += sw.n_sims;

        IterationTrace trace;
        trace.t = t;
        trace.epsilon = eps_t;
        trace.wall_clock_s = seconds_since(start);
        trace.n_simulations = cum_sims;
        trace.accept_rate = static_cast<double>(sw.n_accepted) /
                            static_cast<double>(particles.size());
        trace.unique_after_resample = unique;
        trace.proposal_fit_s = fit_s;
        trace.epsilon_reused = reused;
        result.iterations.push_back(trace);
        result.output_thetas = thetas_of(particles);
        result.output_dists = dists_of(particles);

        eps_prev = eps_t;
        if (cfg.epsilon_target && eps_t <= *cfg.epsilon_target) break;
    }
    if (result.iterations.empty())
        throw Error("budget-exhausted-in-iteration-1",
                    "no ABC-SMC iteration completed within the budget");
    result.elapsed_s = seconds_since(start);
    return result;
}

SmcResult run_transport_abc(const ObservedTarget& target,
                            const KernelConfig& kernel,
                            const TransportSpec& spec, const SmcConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const Deadline deadline = std::isfinite(cfg.time_budget_s)
                                  ? Deadline::after(cfg.time_budget_s)
                                  : Deadline::never();
    long cum_sims = 0;
    std::vector<Particle> train =
        init_population(target, cfg, cfg.n_train, 0, deadline, cum_sims);
    std::vector<Particle> test =
        init_population(target, cfg, cfg.n_test, 1, deadline, cum_sims);

    FlowArchitecture arch = spec.architecture;
    arch.dim = target.model->dim_theta();

    // t = 1 starts from a fit to prior samples; later iterations warm start.
    double pending_fit_s = 0.0;
    RandomStream init_rng =
        RandomStream::substream(cfg.seed, 0, phase_key(phase_fit, 0), 1);
    SplineFlow flow(arch, init_rng);
    {
        const auto fit_start = std::chrono::steady_clock::now();
        RandomStream fit_rng =
            RandomStream::substream(cfg.seed, 0, phase_key(phase_fit, 0), 0);
        flow = train_flow(flow, thetas_of(train), thetas_of(test), spec.training,
                          fit_rng)
                   .flow;
        pending_fit_s = seconds_since(fit_start);
    }

    SmcResult result;
    double eps_prev = std::numeric_limits<double>::infinity();
    for (long t = 1;; ++t) {
        if (cfg.max_iterations && t > *cfg.max_iterations) break;
        if (deadline.expired()) break;

        const double u_train =
            RandomStream::substream(cfg.seed, static_cast<std::uint64_t>(t),
                                    phase_key(phase_resample, 0), 0)
                .uniform01();
        const double u_test =
            RandomStream::substream(cfg.seed, static_cast<std::uint64_t>(t),
                                    phase_key(phase_resample, 1), 0)
                .uniform01();
        const Vector train_dists = dists_of(train), test_dists = dists_of(test);
        const auto train_ids = particle_content_ids(train);
        const auto test_ids = particle_content_ids(test);

        // per-population candidates; a population with no feasible candidate
        // effectively demands the previous epsilon
        auto candidate = [&](const Vector& dists,
                             const std::vector<std::size_t>& ids,
                             double u) -> double {
            try {
                return choose_epsilon(dists, ids, cfg.omega, u, eps_prev).epsilon;
            } catch (const Error& e) {
                if (std::string(e.code()) != "no-feasible-epsilon") throw;
                return eps_prev;
            }
        };
        const double eps_t = std::min(
            eps_prev, std::max(candidate(train_dists, train_ids, u_train),
                               candidate(test_dists, test_ids, u_test)));
        const bool reused = !(eps_t < eps_prev);
        const long unique =
            count_unique_after_resample(train_dists, train_ids, eps_t, u_train);

        const TrainingSet d_train =
            make_training_set(train, eps_t, cfg.training_mode);
        const TrainingSet d_test =
            make_training_set(test, eps_t, cfg.training_mode);

        auto resample_population = [&](std::vector<Particle>& ps, double u) {
            Vector w(ps.size());
            for (std::size_t i = 0; i < ps.size(); ++i)
                w[i] = ps[i].dist <= eps_t ? 1.0 : 0.0;
            apply_resample(ps, systematic_resample(w, ps.size(), u));
        };
        resample_population(train, u_train);
        resample_population(test, u_test);

        const auto fit_start = std::chrono::steady_clock::now();
        RandomStream fit_rng = RandomStream::substream(
            cfg.seed, static_cast<std::uint64_t>(t), phase_key(phase_fit, 0), 0);
        std::shared_ptr<const ProposalKernel> proposal;
        bool flow_ok = true;
        bool used_fallback = false;
        try {
            FlowTrainResult fit = train_flow(flow, d_train.thetas, d_test.thetas,
                                             spec.training, fit_rng);
            flow = fit.flow;
        } catch (const Error& e) {
            if (std::string(e.code()) != "training-diverged" || !spec.fallback)
                throw;
            flow_ok = false;
        }
        if (flow_ok && spec.fallback) {
            auto flow_prop = std::make_shared<FlowProposalKernel>(flow);
            std::shared_ptr<const ProposalKernel> classic(
                fit_classic_independence(d_train).release());
            const ProposalKernel& chosen =
                select_fallback(*flow_prop, *classic, d_test);
            used_fallback = &chosen != flow_prop.get();
            proposal = used_fallback
                           ? classic
                           : std::static_pointer_cast<const ProposalKernel>(flow_prop);
        } else if (flow_ok) {
            proposal = std::make_shared<FlowProposalKernel>(flow);
        } else {
            used_fallback = true;
            proposal = std::shared_ptr<const ProposalKernel>(
                fit_classic_independence(d_train).release());
        }
        if (spec.defensive_eta) {
            proposal = std::shared_ptr<const ProposalKernel>(
                defensive_wrap(proposal, target.model, *spec.defensive_eta)
                    .release());
        }
        const double fit_s = seconds_since(fit_start) + pending_fit_s;
        pending_fit_s = 0.0;

        const SweepResult sw_train = sweep(train, target, kernel, *proposal,
                                           eps_t, deadline, cfg, t, 0);
        if (sw_train.aborted) break;
        const SweepResult sw_test = sweep(test, target, kernel, *proposal, eps_t,
                                          deadline, cfg, t, 1);
        if (sw_test.aborted) break;
        cum_sims += sw_train.n_sims + sw_test.n_sims;

        IterationTrace trace;
        trace.t = t;
        trace.epsilon = eps_t;
        trace.wall_clock_s = seconds_since(start);
        trace.n_simulations = cum_sims;
        trace.accept_rate =
            static_cast<double>(sw_train.n_accepted + sw_test.n_accepted) /
            static_cast<double>(train.size() + test.size());
        trace.unique_after_resample = unique;
        trace.proposal_fit_s = fit_s;
        trace.epsilon_reused = reused;
        trace.used_fallback = used_fallback;
        result.iterations.push_back(trace);
        result.output_thetas = thetas_of(train);
        result.output_dists = dists_of(train);
        result.test_thetas = thetas_of(test);

        eps_prev = eps_t;
        if (cfg.epsilon_target && eps_t <= *cfg.epsilon_target) break;
    }
    if (result.iterations.empty())
        throw Error("budget-exhausted-in-iteration-1",
                    "no transport-ABC iteration completed within the budget");
    result.elapsed_s = seconds_since(start);
    return result;
}

}  // namespace abcsmc
