#include "abcsmc/reference.hpp"

#include <algorithm>
#include <cmath>

#include "abcsmc/error.hpp"

namespace abcsmc {

GmExactPosterior::GmExactPosterior(double y0, std::size_t n) {
    grid_.resize(n);
    cdf_.resize(n);
    double acc = 0.0;
    const double step = (GmModel::hi - GmModel::lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        grid_[i] = GmModel::lo + step * static_cast<double>(i);
        acc += GmModel::likelihood(grid_[i], y0);
        cdf_[i] = acc;
    }
    for (double& c : cdf_) c /= acc;
}

double GmExactPosterior::quantile(double p) const {
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
    const auto j = static_cast<std::size_t>(it - cdf_.begin());
    if (j == 0) return grid_[0];
    const double c0 = cdf_[j - 1], c1 = cdf_[j];
    const double w = c1 > c0 ? (p - c0) / (c1 - c0) : 0.0;
    return grid_[j - 1] + w * (grid_[j] - grid_[j - 1]);
}

double GmExactPosterior::sample(RandomStream& rng) const {
    return quantile(rng.uniform01());
}

Matrix GmExactPosterior::sample_matrix(std::size_t n, RandomStream& rng) const {
    Matrix m(n, 1);
    for (std::size_t i = 0; i < n; ++i) m(i, 0) = sample(rng);
    return m;
}

namespace {

double posterior_logpdf(const ObservedTarget& t, const Vector& theta) {
    const double lp = t.model->prior_logpdf(theta);
    if (!std::isfinite(lp)) return lp;
    return lp + t.model->exact_loglik(theta, t.y0_raw);
}

}  // namespace

ReferenceMhResult reference_mh_sampler(const ObservedTarget& target,
                                       std::size_t n, RandomStream& rng,
                                       std::size_t thin, std::size_t burn_in) {
    const Model& model = *target.model;
    if (!model.has_exact_loglik())
        throw Error("non-tractable-likelihood",
                    model.name() + ": reference sample must be supplied as a file");
    const auto d = static_cast<std::size_t>(model.dim_theta());

    Vector cur = model.prior_sample(rng);
    double cur_lp = posterior_logpdf(target, cur);
    for (int tries = 0; !std::isfinite(cur_lp) && tries < 1000; ++tries) {
        cur = model.prior_sample(rng);
        cur_lp = posterior_logpdf(target, cur);
    }
    if (!std::isfinite(cur_lp))
        throw Error("degenerate-covariance", "could not initialise MH chain");

    // Phase 1: isotropic proposal, global scale adapted towards 0.234.
    double log_scale = std::log(0.1);
    Matrix chol_prop(d, d, 0.0);
    for (std::size_t i = 0; i < d; ++i) chol_prop(i, i) = 1.0;
    bool use_cov = false;

    Matrix history(burn_in / 2, d);
    std::size_t hist_next = 0;

    long accepted_recent = 0, window = 0;
    auto one_step = [&](bool adapt) {
        Vector prop(d);
        Vector z(d);
        for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
        const Vector step =
            use_cov ? lower_times(chol_prop, z) : z;
        const double s = std::exp(log_scale);
        for (std::size_t i = 0; i < d; ++i) prop[i] = cur[i] + s * step[i];
        const double prop_lp = posterior_logpdf(target, prop);
        bool acc = false;
        if (std::isfinite(prop_lp)) {
            const double log_alpha = prop_lp - cur_lp;
            if (log_alpha >= 0.0 || std::log(1.0 - rng.uniform01()) < log_alpha) {
                cur = prop;
                cur_lp = prop_lp;
                acc = true;
            }
        }
        if (acc) ++accepted_recent;
        ++window;
        if (adapt && window == 50) {
            const double rate = static_cast<double>(accepted_recent) / 50.0;
            log_scale += 0.5 * (rate - 0.234);
            accepted_recent = 0;
            window = 0;
        }
        // involution move across exact posterior symmetries, so chains cover
        // sign-symmetric modes (quadratic theta2, slcp theta3/theta4)
        const auto images = model.exact_symmetries(cur);
        if (!images.empty()) {
            const Vector& mirror = images[rng.uniform_index(images.size())];
            const double mirror_lp = posterior_logpdf(target, mirror);
            const double log_alpha = mirror_lp - cur_lp;
            if (std::isfinite(mirror_lp) &&
                (log_alpha >= 0.0 ||
                 std::log(1.0 - rng.uniform01()) < log_alpha)) {
                cur = mirror;
                cur_lp = mirror_lp;
            }
        }
        return acc;
    };

    for (std::size_t it = 0; it < burn_in / 2; ++it) one_step(true);
    // Phase 2: switch to the empirical covariance of the chain so elongated
    // posteriors (quadratic parabola) mix along their ridge.
    for (std::size_t it = 0; it < burn_in / 2; ++it) {
        one_step(true);
        history.set_row(hist_next++, cur);
    }
    {
        const Vector mean = column_mean(history);
        Matrix cov = sample_covariance(history, mean);
        double tr = 0.0;
        for (std::size_t i = 0; i < d; ++i) tr += cov(i, i);
        const double delta = std::max(1e-8 * tr / static_cast<double>(d), 1e-12);
        for (std::size_t i = 0; i < d; ++i) cov(i, i) += delta;
        chol_prop = cholesky(cov);
        use_cov = true;
        log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
        // Re-adapt the global scale for the new proposal shape.
        accepted_recent = 0;
        window = 0;
        for (std::size_t it = 0; it < burn_in / 2; ++it) one_step(true);
    }

    ReferenceMhResult result;
    result.sample = Matrix(n, d);
    long accepted_total = 0;
    const std::size_t steps = n * thin;
    for (std::size_t it = 0; it < steps; ++it) {
        if (one_step(false)) ++accepted_total;
        if ((it + 1) % thin == 0) result.sample.set_row((it + 1) / thin - 1, cur);
    }
    result.acceptance_rate =
        static_cast<double>(accepted_total) / static_cast<double>(steps);
    return result;
}

}  // namespace abcsmc
