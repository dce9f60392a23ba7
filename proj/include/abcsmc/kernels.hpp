#pragma once

#include <chrono>
#include <limits>
#include <string>

#include "abcsmc/model.hpp"
#include "abcsmc/proposal.hpp"

namespace abcsmc {

// Wall-clock cutoff polled before every model simulation so the unbounded
// kernel loops cannot stall termination.
class Deadline {
public:
    static Deadline never() { return Deadline{}; }
    static Deadline after(double seconds) {
        Deadline d;
        d.unlimited_ = false;
        d.tp_ = std::chrono::steady_clock::now() +
                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(seconds));
        return d;
    }

    bool expired() const {
        return !unlimited_ && std::chrono::steady_clock::now() >= tp_;
    }

private:
    bool unlimited_ = true;
    std::chrono::steady_clock::time_point tp_{};
};

enum class KernelFamily {
    abc_mh,
    one_hit,
    r_hit_single,
    r_hit_multi,
    ind_one_hit,
};

KernelFamily kernel_family_from_string(const std::string& s);
std::string to_string(KernelFamily f);

struct KernelConfig {
    KernelFamily family = KernelFamily::one_hit;
    int r = 2;  // r-hit families only
};

struct StepOutcome {
    Particle particle;
    bool accepted = false;
    long n_sims = 0;       // every model.simulate call inside the step
    long n_proposals = 0;  // theta draws from q
    bool aborted = false;  // deadline fired; driver discards the iteration
};

StepOutcome abc_mh_step(const Particle& p, const ObservedTarget& target,
                        const ProposalKernel& q, double eps,
                        const Deadline& deadline, RandomStream& rng);

StepOutcome one_hit_step(const Particle& p, const ObservedTarget& target,
                         const ProposalKernel& q, double eps,
                         const Deadline& deadline, RandomStream& rng);

StepOutcome r_hit_single_step(const Particle& p, const ObservedTarget& target,
                              const ProposalKernel& q, double eps, int r,
                              const Deadline& deadline, RandomStream& rng);

StepOutcome r_hit_multi_step(const Particle& p, const ObservedTarget& target,
                             const ProposalKernel& q, double eps, int r,
                             const Deadline& deadline, RandomStream& rng);

StepOutcome ind_one_hit_step(const Particle& p, const ObservedTarget& target,
                             const ProposalKernel& q, double eps,
                             const Deadline& deadline, RandomStream& rng);

StepOutcome kernel_step(const KernelConfig& cfg, const Particle& p,
                        const ObservedTarget& target, const ProposalKernel& q,
                        double eps, const Deadline& deadline, RandomStream& rng);

}  // namespace abcsmc
