#include "abcsmc/model.hpp"

#include <algorithm>
#include <cmath>

#include "abcsmc/error.hpp"

namespace abcsmc {

double Model::distance(const Vector& s, const Vector& s0) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s[i] - s0[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double Model::exact_loglik(const Vector&, const Vector&) const {
    throw Error("non-tractable-likelihood",
                name() + " has no tractable likelihood; supply a reference file");
}

// ---- quadratic ----

Vector QuadraticModel::prior_sample(RandomStream& rng) const {
    return {rng.normal(), rng.normal()};
}

double QuadraticModel::prior_logpdf(const Vector& t) const {
    return normal_logpdf(t[0], 0.0, 1.0) + normal_logpdf(t[1], 0.0, 1.0);
}

Vector QuadraticModel::simulate(const Vector& t, RandomStream& rng) const {
    return {observation(t, rng.normal())};
}

double QuadraticModel::exact_loglik(const Vector& t, const Vector& y0) const {
    return normal_logpdf(y0[0], t[0] - t[1] * t[1], noise_sd);
}

// ---- gm ----

Vector GmModel::prior_sample(RandomStream& rng) const {
    return {rng.uniform(lo, hi)};
}

double GmModel::prior_logpdf(const Vector& t) const {
    if (t[0] < lo || t[0] > hi) return -std::numeric_limits<double>::infinity();
    return -std::log(hi - lo);
}

Vector GmModel::simulate(const Vector& t, RandomStream& rng) const {
    const double sd = rng.uniform01() < 0.5 ? 1.0 : 0.1;
    return {t[0] + sd * rng.normal()};
}

double GmModel::likelihood(double theta, double y) {
    return 0.5 * std::exp(normal_logpdf(y, theta, 1.0)) +
           0.5 * std::exp(normal_logpdf(y, theta, 0.1));
}

double GmModel::exact_loglik(const Vector& t, const Vector& y0) const {
    return std::log(likelihood(t[0], y0[0]));
}

// ---- mg1 ----

Vector Mg1Model::prior_sample(RandomStream& rng) const {
    const double t1 = rng.uniform(0.0, 1.0 / 3.0);
    const double t2 = rng.uniform(0.0, 10.0);
    const double t3 = t2 + rng.uniform(0.0, 10.0);
    return {t1, t2, t3};
}

double Mg1Model::prior_logpdf(const Vector& t) const {
    const bool ok = t[0] > 0.0 && t[0] < 1.0 / 3.0 && t[1] >= 0.0 &&
                    t[1] <= 10.0 && t[2] >= t[1] && t[2] - t[1] <= 10.0;
    if (!ok) return -std::numeric_limits<double>::infinity();
    return std::log(3.0) - std::log(10.0) - std::log(10.0);
}

Vector Mg1Model::inter_departures(const Vector& gaps, const Vector& services) {
    Vector out(gaps.size());
    double arrival = 0.0, departure = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        arrival += gaps[i];
        const double next = std::max(departure, arrival) + services[i];
        out[i] = next - departure;
        departure = next;
    }
    return out;
}

Vector Mg1Model::simulate(const Vector& t, RandomStream& rng) const {
    if (!(t[0] > 0.0) || t[1] > t[2])
        throw Error("invalid-parameter",
                    "mg1 requires theta1 > 0 and theta2 <= theta3");
    Vector gaps(n_customers), services(n_customers);
    for (int i = 0; i < n_customers; ++i) gaps[i] = rng.exponential(t[0]);
    for (int i = 0; i < n_customers; ++i) services[i] = rng.uniform(t[1], t[2]);
    return inter_departures(gaps, services);
}

Vector Mg1Model::summarize(const Vector& raw) const {
    Vector s(5);
    const double ps[5] = {0.0, 25.0, 50.0, 75.0, 100.0};
    for (int i = 0; i < 5; ++i) s[i] = percentile(raw, ps[i]);
    return s;
}

// ---- seir ----

Vector SeirModel::prior_sample(RandomStream& rng) const {
    Vector t(3);
    for (int i = 0; i < 3; ++i) t[i] = rng.normal(theta_true[i], prior_sd);
    return t;
}

double SeirModel::prior_logpdf(const Vector& t) const {
    double lp = 0.0;
    for (int i = 0; i < 3; ++i) lp += normal_logpdf(t[i], theta_true[i], prior_sd);
    return lp;
}

SeirModel::Trajectory SeirModel::simulate_trajectory(const Vector& t,
                                                     RandomStream& rng) const {
    const double alpha = std::exp(t[0]);
    const double beta = std::exp(t[1]);
    const double gamma = std::exp(t[2]);
    const double p_ei = 1.0 - std::exp(-alpha);
    const double p_ir = 1.0 - std::exp(-gamma);

    Trajectory tr;
    long s = s0, e = e0, infectious = i0, r = 0;
    tr.s.push_back(s);
    tr.e.push_back(e);
    tr.i.push_back(infectious);
    tr.r.push_back(r);
    tr.new_infectious.push_back(0);
    tr.y.push_back(static_cast<double>(rng.poisson(lambda0)));
    for (int step = 1; step <= horizon_; ++step) {
        const double p_se =
            1.0 - std::exp(-beta * static_cast<double>(infectious) / population);
        const long new_e = rng.binomial(s, p_se);
        const long new_i = rng.binomial(e, p_ei);
        const long new_r = rng.binomial(infectious, p_ir);
        s -= new_e;
        e += new_e - new_i;
        infectious += new_i - new_r;
        r += new_r;
        tr.s.push_back(s);
        tr.e.push_back(e);
        tr.i.push_back(infectious);
        tr.r.push_back(r);
        tr.new_infectious.push_back(new_i);
        tr.y.push_back(static_cast<double>(
            rng.poisson(lambda0 + lambda * static_cast<double>(new_i))));
    }
    return tr;
}

Vector SeirModel::simulate(const Vector& t, RandomStream& rng) const {
    return simulate_trajectory(t, rng).y;
}

// ---- slcp ----

Vector SlcpModel::prior_sample(RandomStream& rng) const {
    Vector t(5);
    for (int i = 0; i < 5; ++i) t[i] = rng.uniform(-3.0, 3.0);
    return t;
}

double SlcpModel::prior_logpdf(const Vector& t) const {
    for (int i = 0; i < 5; ++i)
        if (t[i] < -3.0 || t[i] > 3.0)
            return -std::numeric_limits<double>::infinity();
    return -5.0 * std::log(6.0);
}

Matrix SlcpModel::covariance(const Vector& t) {
    const double s1 = t[2] * t[2];
    const double s2 = t[3] * t[3];
    const double rho = std::tanh(t[4]);
    Matrix sigma(2, 2);
    sigma(0, 0) = s1 * s1 + jitter;
    sigma(1, 1) = s2 * s2 + jitter;
    sigma(0, 1) = sigma(1, 0) = rho * s1 * s2;
    return sigma;
}

Vector SlcpModel::simulate(const Vector& t, RandomStream& rng) const {
    const Matrix l = cholesky(covariance(t));
    Vector y(8);
    for (int k = 0; k < 4; ++k) {
        const Vector z = {rng.normal(), rng.normal()};
        const Vector v = lower_times(l, z);
        y[2 * k] = t[0] + v[0];
        y[2 * k + 1] = t[1] + v[1];
    }
    return y;
}

double SlcpModel::exact_loglik(const Vector& t, const Vector& y0) const {
    const Matrix l = cholesky(covariance(t));
    const Vector mean = {t[0], t[1]};
    double ll = 0.0;
    for (int k = 0; k < 4; ++k)
        ll += mvn_logpdf({y0[2 * k], y0[2 * k + 1]}, mean, l);
    return ll;
}

std::shared_ptr<const Model> make_model(const std::string& name,
                                        int seir_horizon) {
    if (name == "quadratic") return std::make_shared<QuadraticModel>();
    if (name == "gm") return std::make_shared<GmModel>();
    if (name == "mg1") return std::make_shared<Mg1Model>();
    if (name == "seir") return std::make_shared<SeirModel>(seir_horizon);
    if (name == "slcp") return std::make_shared<SlcpModel>();
    throw Error("unsupported-model", "unknown model '" + name + "'");
}

}  // namespace abcsmc
