#include "abcsmc/kernels.hpp"

#include <cassert>
#include <cmath>

#include "abcsmc/error.hpp"

namespace abcsmc {

KernelFamily kernel_family_from_string(const std::string& s) {
    if (s == "abc_mh") return KernelFamily::abc_mh;
    if (s == "one_hit") return KernelFamily::one_hit;
    if (s == "r_hit_single") return KernelFamily::r_hit_single;
    if (s == "r_hit_multi") return KernelFamily::r_hit_multi;
    if (s == "ind_one_hit") return KernelFamily::ind_one_hit;
    throw Error("config-invalid", "unknown kernel family '" + s + "'");
}

std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::abc_mh: return "abc_mh";
        case KernelFamily::one_hit: return "one_hit";
        case KernelFamily::r_hit_single: return "r_hit_single";
        case KernelFamily::r_hit_multi: return "r_hit_multi";
        case KernelFamily::ind_one_hit: return "ind_one_hit";
    }
    return "?";
}

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// One uniform draw per probabilistic decision; certain decisions (log_p >= 0
// or log_p = -inf) consume no draw, so replay order stays well defined.
bool decide(double log_p, RandomStream& rng) {
    if (log_p >= 0.0) return true;
    if (log_p == neg_inf) return false;
    return std::log(1.0 - rng.uniform01()) < log_p;
}

// log of the MH proposal/prior ratio pi(to) q(from|to) / (pi(from) q(to|from)).
// The current particle is always inside the prior support.
double log_mh_ratio(const ObservedTarget& t, const ProposalKernel& q,
                    const Vector& from, double from_prior_lp, const Vector& to) {
    const double to_prior_lp = t.model->prior_logpdf(to);
    if (to_prior_lp == neg_inf) return neg_inf;
    return to_prior_lp + q.logpdf(from, to) - from_prior_lp - q.logpdf(to, from);
}

struct Sim {
    Vector summary;
    double dist;
};

Sim simulate_once(const ObservedTarget& t, const Vector& theta,
                  RandomStream& rng) {
    Sim s;
    s.summary = t.model->summarize(t.model->simulate(theta, rng));
    s.dist = t.model->distance(s.summary, t.y0_summary);
    return s;
}

StepOutcome rejected(const Particle& p, long n_sims, long n_proposals) {
    return StepOutcome{p, false, n_sims, n_proposals, false};
}

StepOutcome abort_marker(const Particle& p, long n_sims, long n_proposals) {
    return StepOutcome{p, false, n_sims, n_proposals, true};
}

}  // namespace

StepOutcome abc_mh_step(const Particle& p, const ObservedTarget& t,
                        const ProposalKernel& q, double eps,
                        const Deadline& deadline, RandomStream& rng) {
    const double cur_lp = t.model->prior_logpdf(p.theta);
    assert(std::isfinite(cur_lp));
    const Vector prop = q.propose(p.theta, rng);
    const double log_alpha = log_mh_ratio(t, q, p.theta, cur_lp, prop);
    if (!decide(log_alpha, rng)) return rejected(p, 0, 1);  // early rejection
    if (deadline.expired()) return abort_marker(p, 0, 1);
    const Sim s = simulate_once(t, prop, rng);
    if (s.dist <= eps)
        return StepOutcome{Particle{prop, s.summary, s.dist}, true, 1, 1, false};
    return rejected(p, 1, 1);
}

StepOutcome one_hit_step(const Particle& p, const ObservedTarget& t,
                         const ProposalKernel& q, double eps,
                         const Deadline& deadline, RandomStream& rng) {
    const double cur_lp = t.model->prior_logpdf(p.theta);
    assert(std::isfinite(cur_lp));
    const Vector prop = q.propose(p.theta, rng);
    const double log_alpha = log_mh_ratio(t, q, p.theta, cur_lp, prop);
    if (!decide(log_alpha, rng)) return rejected(p, 0, 1);
    long n_sims = 0;
    while (true) {
        if (deadline.expired()) return abort_marker(p, n_sims, 1);
        const Sim sp = simulate_once(t, prop, rng);
        ++n_sims;
        if (sp.dist <= eps)
            return StepOutcome{Particle{prop, sp.summary, sp.dist}, true, n_sims,
                               1, false};
        if (deadline.expired()) return abort_marker(p, n_sims, 1);
        const Sim sc = simulate_once(t, p.theta, rng);
        ++n_sims;
        if (sc.dist <= eps) return rejected(p, n_sims, 1);
    }
}

StepOutcome r_hit_single_step(const Particle& p, const ObservedTarget& t,
                              const ProposalKernel& q, double eps, int r,
                              const Deadline& deadline, RandomStream& rng) {
    const double cur_lp = t.model->prior_logpdf(p.theta);
    assert(std::isfinite(cur_lp));
    const Vector prop = q.propose(p.theta, rng);
    const double prop_lp = t.model->prior_logpdf(prop);
    // Outside the prior support the final ratio is zero whatever the hit
    // counts come out as, so the loops are skipped entirely.
    if (prop_lp == neg_inf) return rejected(p, 0, 1);

    long n_sims = 0;
    std::vector<Sim> hits;
    long n_first = 0;
    while (static_cast<int>(hits.size()) < r) {
        if (deadline.expired()) return abort_marker(p, n_sims, 1);
        ++n_first;
        const Sim s = simulate_once(t, prop, rng);
        ++n_sims;
        if (s.dist <= eps) hits.push_back(s);
    }
    const Sim chosen = hits[rng.uniform_index(hits.size())];

    long n_second = 0;
    int m = 0;
    while (m < r - 1) {
        if (deadline.expired()) return abort_marker(p, n_sims, 1);
        ++n_second;
        const Sim s = simulate_once(t, p.theta, rng);
        ++n_sims;
        if (s.dist <= eps) ++m;
    }

    const double log_alpha =
        prop_lp + q.logpdf(p.theta, prop) - cur_lp - q.logpdf(prop, p.theta) +
        std::log(static_cast<double>(n_second)) -
        std::log(static_cast<double>(n_first - 1));
    if (decide(log_alpha, rng))
        return StepOutcome{Particle{prop, chosen.summary, chosen.dist}, true,
                           n_sims, 1, false};
    return rejected(p, n_sims, 1);
}

StepOutcome r_hit_multi_step(const Particle& p, const ObservedTarget& t,
                             const ProposalKernel& q, double eps, int r,
                             const Deadline& deadline, RandomStream& rng) {
    const double cur_lp = t.model->prior_logpdf(p.theta);
    assert(std::isfinite(cur_lp));

    struct Pair {
        Vector theta;
        Sim sim;
    };
    std::vector<Pair> pool;
    long n_first = 0, n_sims = 0, n_proposals = 0;
    while (static_cast<int>(pool.size()) < r) {
        if (deadline.expired()) return abort_marker(p, n_sims, n_proposals);
        ++n_first;
        Vector cand = q.propose(p.theta, rng);
        ++n_proposals;
        // Out-of-support proposals can never be hits of the target; counted
        // as misses without touching the simulator.
        if (t.model->prior_logpdf(cand) == neg_inf) continue;
        const Sim s = simulate_once(t, cand, rng);
        ++n_sims;
        if (s.dist <= eps) pool.push_back(Pair{std::move(cand), s});
    }
    const Pair& star = pool[rng.uniform_index(pool.size())];

    long n_second = 0;
    int m = 0;
    while (m < r - 1) {
        if (deadline.expired()) return abort_marker(p, n_sims, n_proposals);
        ++n_second;
        Vector cand = q.propose(star.theta, rng);
        ++n_proposals;
        if (t.model->prior_logpdf(cand) == neg_inf) continue;
        const Sim s = simulate_once(t, cand, rng);
        ++n_sims;
        if (s.dist <= eps) ++m;
    }

    const double star_lp = t.model->prior_logpdf(star.theta);
    const double log_alpha =
        star_lp + q.logpdf(p.theta, star.theta) - cur_lp -
        q.logpdf(star.theta, p.theta) +
        std::log(static_cast<double>(n_second)) -
        std::log(static_cast<double>(n_first - 1));
    if (decide(log_alpha, rng))
        return StepOutcome{Particle{star.theta, star.sim.summary, star.sim.dist},
                           true, n_sims, n_proposals, false};
    return rejected(p, n_sims, n_proposals);
}

StepOutcome ind_one_hit_step(const Particle& p, const ObservedTarget& t,
                             const ProposalKernel& q, double eps,
                             const Deadline& deadline, RandomStream& rng) {
    if (!q.is_independence())
        throw Error("invalid-proposal",
                    "ind_one_hit requires an independence proposal");
    const double cur_lp = t.model->prior_logpdf(p.theta);
    assert(std::isfinite(cur_lp));

    long n_sims = 0, n_proposals = 0;
    Vector prop;
    Sim s;
    while (true) {
        if (deadline.expired()) return abort_marker(p, n_sims, n_proposals);
        prop = q.propose(p.theta, rng);
        ++n_proposals;
        if (t.model->prior_logpdf(prop) == neg_inf) continue;
        s = simulate_once(t, prop, rng);
        ++n_sims;
        if (s.dist <= eps) break;
    }
    const double log_alpha = t.model->prior_logpdf(prop) +
                             q.logpdf(p.theta, prop) - cur_lp -
                             q.logpdf(prop, p.theta);
    if (decide(log_alpha, rng))
        return StepOutcome{Particle{prop, s.summary, s.dist}, true, n_sims,
                           n_proposals, false};
    return rejected(p, n_sims, n_proposals);
}

StepOutcome kernel_step(const KernelConfig& cfg, const Particle& p,
                        const ObservedTarget& t, const ProposalKernel& q,
                        double eps, const Deadline& deadline,
                        RandomStream& rng) {
    switch (cfg.family) {
        case KernelFamily::abc_mh:
            return abc_mh_step(p, t, q, eps, deadline, rng);
        case KernelFamily::one_hit:
            return one_hit_step(p, t, q, eps, deadline, rng);
        case KernelFamily::r_hit_single:
            return r_hit_single_step(p, t, q, eps, cfg.r, deadline, rng);
        case KernelFamily::r_hit_multi:
            return r_hit_multi_step(p, t, q, eps, cfg.r, deadline, rng);
        case KernelFamily::ind_one_hit:
            return ind_one_hit_step(p, t, q, eps, deadline, rng);
    }
    throw Error("config-invalid", "unreachable kernel family");
}

}  // namespace abcsmc
