#pragma once

#include <memory>
#include <optional>
#include <string>

#include "abcsmc/linalg.hpp"
#include "abcsmc/rng.hpp"

namespace abcsmc {

// Simulator contract shared by all benchmark models. Models are immutable
// after construction; simulate/prior calls are safe to run concurrently as
// long as each call owns its RandomStream.
class Model {
public:
    virtual ~Model() = default;

    virtual std::string name() const = 0;
    virtual int dim_theta() const = 0;
    virtual int dim_summary() const = 0;

    virtual Vector prior_sample(RandomStream& rng) const = 0;
    // Finite exactly on the prior support, -inf outside.
    virtual double prior_logpdf(const Vector& theta) const = 0;

    virtual Vector simulate(const Vector& theta, RandomStream& rng) const = 0;
    virtual Vector summarize(const Vector& raw) const = 0;

    // Euclidean throughout.
    double distance(const Vector& s, const Vector& s0) const;

    // Exact log likelihood of raw observed data, where tractable.
    virtual bool has_exact_loglik() const { return false; }
    virtual double exact_loglik(const Vector& /*theta*/,
                                const Vector& /*y0_raw*/) const;

    // Images of theta under prior- and likelihood-preserving involutions
    // (identity excluded). Used as extra MH moves so reference chains cross
    // symmetric posterior modes.
    virtual std::vector<Vector> exact_symmetries(const Vector& /*theta*/) const {
        return {};
    }
};

// One (theta, y) pair as carried by the SMC population; dist caches
// distance(summary, y0_summary).
struct Particle {
    Vector theta;
    Vector summary;
    double dist = 0.0;
};

struct ObservedTarget {
    std::shared_ptr<const Model> model;
    Vector y0_raw;
    Vector y0_summary;
    std::optional<Matrix> reference_sample;  // rows are theta draws

    Particle make_particle(const Vector& theta, RandomStream& rng) const {
        Particle p;
        p.theta = theta;
        p.summary = model->summarize(model->simulate(theta, rng));
        p.dist = model->distance(p.summary, y0_summary);
        return p;
    }
};

// y ~ N(theta1 - theta2^2, 1e-4), standard normal priors, y0 = 0.
class QuadraticModel : public Model {
public:
    std::string name() const override { return "quadratic"; }
    int dim_theta() const override { return 2; }
    int dim_summary() const override { return 1; }
    Vector prior_sample(RandomStream& rng) const override;
    double prior_logpdf(const Vector& theta) const override;
    Vector simulate(const Vector& theta, RandomStream& rng) const override;
    Vector summarize(const Vector& raw) const override { return raw; }
    bool has_exact_loglik() const override { return true; }
    double exact_loglik(const Vector& theta, const Vector& y0) const override;
    std::vector<Vector> exact_symmetries(const Vector& t) const override {
        return {{t[0], -t[1]}};
    }

    static double observation(const Vector& theta, double z) {
        return theta[0] - theta[1] * theta[1] + noise_sd * z;
    }
    static constexpr double noise_sd = 0.01;
};

// y ~ 0.5 N(theta, 1) + 0.5 N(theta, 0.01), prior U(-10, 10), y0 = 0.
class GmModel : public Model {
public:
    std::string name() const override { return "gm"; }
    int dim_theta() const override { return 1; }
    int dim_summary() const override { return 1; }
    Vector prior_sample(RandomStream& rng) const override;
    double prior_logpdf(const Vector& theta) const override;
    Vector simulate(const Vector& theta, RandomStream& rng) const override;
    Vector summarize(const Vector& raw) const override { return raw; }
    bool has_exact_loglik() const override { return true; }
    double exact_loglik(const Vector& theta, const Vector& y0) const override;

    static double likelihood(double theta, double y);
    static constexpr double lo = -10.0, hi = 10.0;
};

// M/G/1 queue: Exp(theta1) arrivals, U(theta2, theta3) services, 20 observed
// inter-departure times, summary = 0/25/50/75/100 percentiles.
class Mg1Model : public Model {
public:
    std::string name() const override { return "mg1"; }
    int dim_theta() const override { return 3; }
    int dim_summary() const override { return 5; }
    Vector prior_sample(RandomStream& rng) const override;
    double prior_logpdf(const Vector& theta) const override;
    Vector simulate(const Vector& theta, RandomStream& rng) const override;
    Vector summarize(const Vector& raw) const override;

    // Deterministic queue recursion given the random inputs.
    static Vector inter_departures(const Vector& arrival_gaps,
                                   const Vector& services);
    static constexpr int n_customers = 20;
};

// Discrete-time stochastic SEIR with Poisson-observed new infectious counts.
// theta = (log alpha, log beta, log gamma).
class SeirModel : public Model {
public:
    explicit SeirModel(int horizon) : horizon_(horizon) {}
    std::string name() const override { return "seir"; }
    int dim_theta() const override { return 3; }
    int dim_summary() const override { return horizon_ + 1; }
    Vector prior_sample(RandomStream& rng) const override;
    double prior_logpdf(const Vector& theta) const override;
    Vector simulate(const Vector& theta, RandomStream& rng) const override;
    Vector summarize(const Vector& raw) const override { return raw; }

    struct Trajectory {
        std::vector<long> s, e, i, r;  // compartment counts, t = 0..T
        std::vector<long> new_infectious;
        Vector y;
    };
    Trajectory simulate_trajectory(const Vector& theta, RandomStream& rng) const;

    int horizon() const { return horizon_; }

    static constexpr int s0 = 990, e0 = 10, i0 = 0, population = 1000;
    static constexpr double lambda0 = 0.1, lambda = 0.5;
    static constexpr double prior_sd = 2.0;
    static constexpr double theta_true[3] = {-0.5, -1.0, -3.0};

private:
    int horizon_;
};

// "Simple likelihood complex posterior": 4 bivariate normal draws with mean
// (theta1, theta2) and covariance from s1 = theta3^2, s2 = theta4^2,
// rho = tanh(theta5); Sigma = [[s1^2, rho s1 s2], [rho s1 s2, s2^2]].
class SlcpModel : public Model {
public:
    std::string name() const override { return "slcp"; }
    int dim_theta() const override { return 5; }
    int dim_summary() const override { return 8; }
    Vector prior_sample(RandomStream& rng) const override;
    double prior_logpdf(const Vector& theta) const override;
    Vector simulate(const Vector& theta, RandomStream& rng) const override;
    Vector summarize(const Vector& raw) const override { return raw; }
    bool has_exact_loglik() const override { return true; }
    double exact_loglik(const Vector& theta, const Vector& y0) const override;
    std::vector<Vector> exact_symmetries(const Vector& t) const override {
        return {{t[0], t[1], -t[2], t[3], t[4]},
                {t[0], t[1], t[2], -t[3], t[4]},
                {t[0], t[1], -t[2], -t[3], t[4]}};
    }

    static Matrix covariance(const Vector& theta);
    static constexpr double jitter = 1e-10;
};

std::shared_ptr<const Model> make_model(const std::string& name,
                                        int seir_horizon = 30);

}  // namespace abcsmc
