#pragma once

#include <memory>

#include "abcsmc/linalg.hpp"
#include "abcsmc/model.hpp"
#include "abcsmc/rng.hpp"

namespace abcsmc {

// Fitted conditional density q(theta' | theta). For independence proposals
// logpdf ignores its second argument; kernel families rely on that to
// evaluate q(theta | theta') as q(theta).
class ProposalKernel {
public:
    virtual ~ProposalKernel() = default;
    virtual Vector propose(const Vector& current, RandomStream& rng) const = 0;
    virtual double logpdf(const Vector& proposed, const Vector& current) const = 0;
    virtual bool is_independence() const = 0;

    double fit_time_s = 0.0;
};

// Theta rows used for proposal fitting. Mode B_t keeps only the previous
// iteration's thetas whose particles satisfy dist <= eps_t; A_t keeps all.
enum class TrainingMode { a_t, b_t };

struct TrainingSet {
    Matrix thetas;
    TrainingMode mode = TrainingMode::b_t;
};

// Gaussian random walk N(theta, 2 (Sigma_hat + delta I)).
std::unique_ptr<ProposalKernel> fit_classic_rw(const TrainingSet& d);

// Equal-weight mixture of Gaussians centred at the training points with the
// shared covariance 2 (Sigma_hat + delta I).
std::unique_ptr<ProposalKernel> fit_classic_independence(const TrainingSet& d);

// Independence proposal equal to the model prior.
std::unique_ptr<ProposalKernel> make_prior_proposal(
    std::shared_ptr<const Model> model);

// eta * prior + (1 - eta) * q_star; bounds prior/proposal ratio by 1/eta.
std::unique_ptr<ProposalKernel> defensive_wrap(
    std::shared_ptr<const ProposalKernel> q_star,
    std::shared_ptr<const Model> model, double eta = 0.1);

// Returns whichever proposal has the larger sum of log densities over the
// test thetas (smaller negative cross-entropy); ties go to the candidate.
const ProposalKernel& select_fallback(const ProposalKernel& candidate,
                                      const ProposalKernel& classic,
                                      const TrainingSet& d_test);

double training_set_log_score(const ProposalKernel& q, const TrainingSet& d);

// Shared covariance regularisation: delta = 1e-8 tr(Sigma)/dim, floored.
double covariance_jitter(const Matrix& sigma);

}  // namespace abcsmc
