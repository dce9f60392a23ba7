#pragma once

#include "abcsmc/model.hpp"

namespace abcsmc {

// Grid inverse-CDF sampler for the GM exact posterior
// p(theta | y0) ∝ 1[-10,10](theta) * 0.5 (phi(y0; theta, 1) + phi(y0; theta, 0.1)).
class GmExactPosterior {
public:
    explicit GmExactPosterior(double y0, std::size_t grid_points = 200000);
    double sample(RandomStream& rng) const;
    Matrix sample_matrix(std::size_t n, RandomStream& rng) const;
    double quantile(double p) const;  // p in (0,1)

private:
    Vector grid_;
    Vector cdf_;
};

// Random-walk Metropolis on the exact posterior: adaptive scale during
// burn-in, then thinned draws. Requires a tractable likelihood
// (quadratic, slcp); GM uses GmExactPosterior instead.
struct ReferenceMhResult {
    Matrix sample;
    double acceptance_rate = 0.0;  // post-adaptation
};

ReferenceMhResult reference_mh_sampler(const ObservedTarget& target,
                                       std::size_t n, RandomStream& rng,
                                       std::size_t thin = 50,
                                       std::size_t burn_in = 20000);

}  // namespace abcsmc
