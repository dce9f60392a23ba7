#include <doctest.h>

#include <array>
#include <cmath>

#include "abcsmc/error.hpp"
#include "abcsmc/kernels.hpp"
#include "abcsmc/proposal.hpp"
#include "abcsmc/wasserstein.hpp"

using namespace abcsmc;

namespace {

// Three parameter atoms {0,1,2} with per-atom hit probabilities; y is 1 on a
// hit and 0 otherwise, the observed summary is 1, and eps = 0.5 makes
// "dist <= eps" equivalent to a hit. Densities are w.r.t. counting measure.
class ToyModel : public Model {
public:
    explicit ToyModel(std::array<double, 3> hit) : hit_(hit) {}
    std::string name() const override { return "toy"; }
    int dim_theta() const override { return 1; }
    int dim_summary() const override { return 1; }
    Vector prior_sample(RandomStream& rng) const override {
        return {static_cast<double>(rng.uniform_index(3))};
    }
    double prior_logpdf(const Vector& t) const override {
        if (t[0] == 0.0 || t[0] == 1.0 || t[0] == 2.0)
            return -std::log(3.0);
        return -std::numeric_limits<double>::infinity();
    }
    Vector simulate(const Vector& t, RandomStream& rng) const override {
        const auto atom = static_cast<std::size_t>(t[0]);
        return {rng.uniform01() < hit_[atom] ? 1.0 : 0.0};
    }
    Vector summarize(const Vector& raw) const override { return raw; }

    double hit(std::size_t atom) const { return hit_[atom]; }

private:
    std::array<double, 3> hit_;
};

class ToyProposal : public ProposalKernel {
public:
    explicit ToyProposal(std::array<double, 3> pmf) : pmf_(pmf) {}
    Vector propose(const Vector&, RandomStream& rng) const override {
        const double u = rng.uniform01();
        if (u < pmf_[0]) return {0.0};
        if (u < pmf_[0] + pmf_[1]) return {1.0};
        return {2.0};
    }
    double logpdf(const Vector& proposed, const Vector&) const override {
        const auto atom = static_cast<std::size_t>(proposed[0]);
        return std::log(pmf_[atom]);
    }
    bool is_independence() const override { return true; }

private:
    std::array<double, 3> pmf_;
};

// Deterministic swap on two atoms; symmetric, so the MH gate is always open.
class SwapProposal : public ProposalKernel {
public:
    Vector propose(const Vector& cur, RandomStream&) const override {
        return {1.0 - cur[0]};
    }
    double logpdf(const Vector& proposed, const Vector& cur) const override {
        return proposed[0] == 1.0 - cur[0]
                   ? 0.0
                   : -std::numeric_limits<double>::infinity();
    }
    bool is_independence() const override { return false; }

private:
};

struct ToyFixture {
    std::shared_ptr<ToyModel> model;
    ObservedTarget target;
    ToyProposal proposal{{0.2, 0.3, 0.5}};
    double eps = 0.5;

    explicit ToyFixture(std::array<double, 3> hit = {0.9, 0.5, 0.1}) {
        model = std::make_shared<ToyModel>(hit);
        target.model = model;
        target.y0_raw = {1.0};
        target.y0_summary = {1.0};
    }

    Particle at(std::size_t atom) const {
        return Particle{{static_cast<double>(atom)}, {1.0}, 0.0};
    }

    // Eq. (1) target restricted to hit states: proportional to prior * hit.
    std::array<double, 3> enumerated_target() const {
        std::array<double, 3> pi{};
        double total = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            pi[i] = model->hit(i) / 3.0;
            total += pi[i];
        }
        for (auto& v : pi) v /= total;
        return pi;
    }
};

double chi2_pvalue_2dof(double x) { return std::exp(-x / 2.0); }

// Long-run occupancy test against the enumerated target, thinned to damp
// autocorrelation before the chi-square.
template <typename Step>
double occupancy_pvalue(const ToyFixture& fx, Step step, long n_steps,
                        long thin, std::uint64_t seed) {
    RandomStream rng(seed);
    Particle cur = fx.at(0);
    std::array<long, 3> counts{};
    long kept = 0;
    for (long s = 0; s < n_steps; ++s) {
        const StepOutcome out = step(cur, rng);
        REQUIRE(!out.aborted);
        cur = out.particle;
        if (s % thin == 0) {
            ++counts[static_cast<std::size_t>(cur.theta[0])];
            ++kept;
        }
    }
    const auto pi = fx.enumerated_target();
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double expect = pi[i] * static_cast<double>(kept);
        chi2 += (counts[i] - expect) * (counts[i] - expect) / expect;
    }
    return chi2_pvalue_2dof(chi2);
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("enumerated stationarity of abc_mh and ind_one_hit on the toy") {
    const ToyFixture fx;
    const auto pi = fx.enumerated_target();
    const std::array<double, 3> q = {0.2, 0.3, 0.5};

    // abc_mh decision tree: propose j ~ q, pass the early gate with
    // min(1, q_i/q_j) (uniform prior), then accept on a hit at j.
    std::array<std::array<double, 3>, 3> mh{};
    for (std::size_t i = 0; i < 3; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j) continue;
            mh[i][j] = q[j] * std::min(1.0, q[i] / q[j]) * fx.model->hit(j);
            off += mh[i][j];
        }
        mh[i][i] = 1.0 - off;
    }
    // ind_one_hit: the repeat loop draws (theta', hit) from q_j p_j / C,
    // then accepts with min(1, q_i/q_j).
    std::array<std::array<double, 3>, 3> ind{};
    double c = 0.0;
    for (std::size_t j = 0; j < 3; ++j) c += q[j] * fx.model->hit(j);
    for (std::size_t i = 0; i < 3; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j) continue;
            ind[i][j] = q[j] * fx.model->hit(j) / c * std::min(1.0, q[i] / q[j]);
            off += ind[i][j];
        }
        ind[i][i] = 1.0 - off;
    }
    for (const auto& p_matrix : {mh, ind}) {
        double worst = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            double v = 0.0;
            for (std::size_t i = 0; i < 3; ++i) v += pi[i] * p_matrix[i][j];
            worst = std::max(worst, std::abs(v - pi[j]));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("implementation long-run law matches the enumerated target") {
    const ToyFixture fx;
    const Deadline never = Deadline::never();
    SUBCASE("abc_mh") {
        const double p = occupancy_pvalue(
            fx,
            [&](const Particle& cur, RandomStream& rng) {
                return abc_mh_step(cur, fx.target, fx.proposal, fx.eps, never, rng);
            },
            200000, 10, 101);
        CHECK(p > 0.001);
    }
    SUBCASE("ind_one_hit") {
        const double p = occupancy_pvalue(
            fx,
            [&](const Particle& cur, RandomStream& rng) {
                return ind_one_hit_step(cur, fx.target, fx.proposal, fx.eps, never,
                                        rng);
            },
            200000, 10, 103);
        CHECK(p > 0.001);
    }
    SUBCASE("one_hit") {
        const double p = occupancy_pvalue(
            fx,
            [&](const Particle& cur, RandomStream& rng) {
                return one_hit_step(cur, fx.target, fx.proposal, fx.eps, never, rng);
            },
            200000, 10, 107);
        CHECK(p > 0.001);
    }
    SUBCASE("r_hit_single") {
        const double p = occupancy_pvalue(
            fx,
            [&](const Particle& cur, RandomStream& rng) {
                return r_hit_single_step(cur, fx.target, fx.proposal, fx.eps, 2,
                                         never, rng);
            },
            100000, 10, 109);
        CHECK(p > 0.001);
    }
    SUBCASE("r_hit_multi") {
        const double p = occupancy_pvalue(
            fx,
            [&](const Particle& cur, RandomStream& rng) {
                return r_hit_multi_step(cur, fx.target, fx.proposal, fx.eps, 2,
                                        never, rng);
            },
            100000, 10, 113);
        CHECK(p > 0.001);
    }
}

TEST_CASE("one_hit acceptance law at p = p' = 1/2") {
    ToyFixture fx({0.5, 0.5, 0.5});
    const SwapProposal swap;  // alpha = 1, gate always open
    const Deadline never = Deadline::never();
    RandomStream rng(211);
    Particle cur = fx.at(0);
    const long trials = 100000;
    long accepted = 0;
    for (long s = 0; s < trials; ++s) {
        const StepOutcome out = one_hit_step(cur, fx.target, swap, fx.eps, never, rng);
        if (out.accepted) ++accepted;
        cur = out.particle;
    }
    const double expect = 2.0 / 3.0;
    const double se = std::sqrt(expect * (1.0 - expect) / trials);
    CHECK(std::abs(static_cast<double>(accepted) / trials - expect) < 3.0 * se);
}

TEST_CASE("one_hit deterministic n_sims cases") {
    const Deadline never = Deadline::never();
    SUBCASE("proposed atom always hits") {
        ToyFixture fx({1.0, 1.0, 1.0});
        const SwapProposal swap;
        RandomStream rng(223);
        const StepOutcome out =
            one_hit_step(fx.at(0), fx.target, swap, fx.eps, never, rng);
        CHECK(out.accepted);
        CHECK(out.n_sims == 1);
    }
    SUBCASE("proposed never hits, current always hits") {
        ToyFixture fx({1.0, 0.0, 0.0});  // current atom 0, propose atom 1
        const SwapProposal swap;
        RandomStream rng(227);
        const StepOutcome out =
            one_hit_step(fx.at(0), fx.target, swap, fx.eps, never, rng);
        CHECK(!out.accepted);
        CHECK(out.n_sims == 2);
        CHECK(out.particle.theta == fx.at(0).theta);
    }
}

TEST_CASE("r-hit simulation count laws") {
    const Deadline never = Deadline::never();
    SUBCASE("all hits: n_sims = 2r - 1 exactly") {
        ToyFixture fx({1.0, 1.0, 1.0});
        RandomStream rng(229);
        for (int r : {2, 3, 5}) {
            const StepOutcome single = r_hit_single_step(
                fx.at(0), fx.target, fx.proposal, fx.eps, r, never, rng);
            CHECK(single.n_sims == 2 * r - 1);
            const StepOutcome multi = r_hit_multi_step(
                fx.at(0), fx.target, fx.proposal, fx.eps, r, never, rng);
            CHECK(multi.n_sims == 2 * r - 1);
        }
    }
    SUBCASE("negative binomial means through n_sims") {
        // first loop: N' ~ NegBin(2, 1/2) with mean 4 while the second loop
        // is deterministic (current atom hits surely), so E[n_sims] = 5
        ToyFixture fa({1.0, 0.5, 0.5});
        const SwapProposal swap;
        RandomStream rng(233);
        const long trials = 100000;
        double total = 0.0, total_sq = 0.0;
        for (long s = 0; s < trials; ++s) {
            const StepOutcome out = r_hit_single_step(fa.at(0), fa.target, swap,
                                                      fa.eps, 2, never, rng);
            total += static_cast<double>(out.n_sims);
            total_sq += static_cast<double>(out.n_sims) * out.n_sims;
        }
        double mean = total / trials;
        double se = std::sqrt((total_sq / trials - mean * mean) / trials);
        CHECK(std::abs(mean - 5.0) < 3.0 * se);

        // mirrored: N' = 2 exactly, N'' ~ Geometric(1/2) with mean 2
        ToyFixture fb({0.5, 1.0, 1.0});
        total = total_sq = 0.0;
        for (long s = 0; s < trials; ++s) {
            const StepOutcome out = r_hit_single_step(fb.at(0), fb.target, swap,
                                                      fb.eps, 2, never, rng);
            total += static_cast<double>(out.n_sims);
            total_sq += static_cast<double>(out.n_sims) * out.n_sims;
        }
        mean = total / trials;
        se = std::sqrt((total_sq / trials - mean * mean) / trials);
        CHECK(std::abs(mean - 4.0) < 3.0 * se);
    }
}

TEST_CASE("early rejection and rejection identity") {
    const ToyFixture fx;
    const Deadline never = Deadline::never();
    RandomStream rng(239);

    // proposing outside the prior support rejects without simulating
    class Outside : public ProposalKernel {
    public:
        Vector propose(const Vector&, RandomStream&) const override {
            return {7.0};
        }
        double logpdf(const Vector&, const Vector&) const override { return 0.0; }
        bool is_independence() const override { return true; }
    } outside;
    for (int rep = 0; rep < 10; ++rep) {
        const StepOutcome out =
            abc_mh_step(fx.at(2), fx.target, outside, fx.eps, never, rng);
        CHECK(!out.accepted);
        CHECK(out.n_sims == 0);
        const StepOutcome one =
            one_hit_step(fx.at(2), fx.target, outside, fx.eps, never, rng);
        CHECK(one.n_sims == 0);
        const StepOutcome rs = r_hit_single_step(fx.at(2), fx.target, outside,
                                                 fx.eps, 2, never, rng);
        CHECK(rs.n_sims == 0);
        CHECK(!rs.accepted);
    }

    // gate rejections cost no simulations; rejected particles are bitwise inputs
    long gate_rejections = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        const Particle start = fx.at(0);  // q favours atom 2, alpha = 0.4 there
        const StepOutcome out =
            abc_mh_step(start, fx.target, fx.proposal, fx.eps, never, rng);
        if (!out.accepted) {
            CHECK(out.particle.theta == start.theta);
            CHECK(out.particle.summary == start.summary);
            if (out.n_sims == 0) ++gate_rejections;
        }
        CHECK(out.particle.dist <= fx.eps);
    }
    CHECK(gate_rejections > 0);
}

TEST_CASE("ind_one_hit only simulates under proposed parameters") {
    // track every simulate() call; the proposal never proposes atom 0
    class Recording : public ToyModel {
    public:
        using ToyModel::ToyModel;
        Vector simulate(const Vector& t, RandomStream& rng) const override {
            thetas_seen.push_back(t[0]);
            return ToyModel::simulate(t, rng);
        }
        mutable std::vector<double> thetas_seen;
    };
    auto model = std::make_shared<Recording>(std::array<double, 3>{0.9, 0.5, 0.1});
    ObservedTarget target;
    target.model = model;
    target.y0_raw = {1.0};
    target.y0_summary = {1.0};
    const ToyProposal avoid_zero({0.0, 0.5, 0.5});
    const Deadline never = Deadline::never();
    RandomStream rng(241);
    Particle cur{{0.0}, {1.0}, 0.0};
    for (int rep = 0; rep < 200; ++rep) {
        const StepOutcome out =
            ind_one_hit_step(cur, target, avoid_zero, 0.5, never, rng);
        CHECK(out.n_proposals >= 1);
    }
    for (double t : model->thetas_seen) CHECK(t != 0.0);

    // a random-walk proposal is rejected outright
    const SwapProposal swap;
    CHECK_THROWS_WITH_AS(ind_one_hit_step(cur, target, swap, 0.5, never, rng),
                         doctest::Contains("invalid-proposal"), Error);
}

TEST_CASE("deadline aborts leave the particle untouched") {
    ToyFixture fx({0.0, 0.0, 0.0});  // nothing ever hits
    const Deadline expired = Deadline::after(0.0);
    RandomStream rng(251);
    const Particle start = fx.at(0);
    const SwapProposal swap;  // alpha = 1, so the gate cannot pre-empt the loop
    const StepOutcome one =
        one_hit_step(start, fx.target, swap, fx.eps, expired, rng);
    CHECK(one.aborted);
    CHECK(one.particle.theta == start.theta);
    const StepOutcome multi = r_hit_multi_step(start, fx.target, fx.proposal,
                                               fx.eps, 2, expired, rng);
    CHECK(multi.aborted);
    const StepOutcome ind =
        ind_one_hit_step(start, fx.target, fx.proposal, fx.eps, expired, rng);
    CHECK(ind.aborted);
}

TEST_CASE("abc_mh long-run marginal matches a rejection-ABC oracle on gm") {
    ObservedTarget target;
    target.model = make_model("gm");
    target.y0_raw = {0.0};
    target.y0_summary = {0.0};
    const auto prior_q = make_prior_proposal(target.model);
    const double eps = 0.5;
    const Deadline never = Deadline::never();
    RandomStream rng(257);

    Particle cur;
    do {
        cur = target.make_particle(target.model->prior_sample(rng), rng);
    } while (cur.dist > eps);

    const long steps = 100000;
    Matrix chain(steps, 1);
    for (long s = 0; s < steps; ++s) {
        cur = abc_mh_step(cur, target, *prior_q, eps, never, rng).particle;
        chain(static_cast<std::size_t>(s), 0) = cur.theta[0];
    }

    RandomStream rng2(263);
    Matrix oracle(steps, 1);
    long got = 0;
    while (got < steps) {
        const Particle p =
            target.make_particle(target.model->prior_sample(rng2), rng2);
        if (p.dist <= eps) oracle(static_cast<std::size_t>(got++), 0) = p.theta[0];
    }
    CHECK(wasserstein(chain, oracle) < 0.05);
}


TEST_CASE("symmetric proposals reduce the gate to the pure prior ratio") {
    // uniform prior + symmetric swap: alpha = 1, so the early gate can never
    // reject; every abc_mh rejection must have cost one simulation
    ToyFixture fx({0.3, 0.3, 0.3});
    const SwapProposal swap;
    const Deadline never = Deadline::never();
    RandomStream rng(269);
    Particle cur = fx.at(0);
    for (int rep = 0; rep < 2000; ++rep) {
        const StepOutcome out =
            abc_mh_step(cur, fx.target, swap, fx.eps, never, rng);
        if (!out.accepted) CHECK(out.n_sims == 1);
        cur = out.particle;
    }
}

}  // TEST_SUITE
