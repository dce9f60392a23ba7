#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "abcsmc/proposal.hpp"

namespace abcsmc {

enum class CovarianceStructure { full, diagonal, spherical, tied_full };

std::string to_string(CovarianceStructure s);

struct MixtureComponent {
    double weight = 0.0;
    Vector mean;
    Matrix cov;
    Matrix chol;
};

// Gaussian mixture density fitted by EM; weights sum to 1 and every
// covariance is kept factorisable by a floor on its diagonal.
struct MixtureDensity {
    std::vector<MixtureComponent> components;
    CovarianceStructure structure = CovarianceStructure::full;
    double log_score = 0.0;  // sum of log density over the training set
    double bic = 0.0;
    int em_iterations = 0;
    std::vector<double> score_trace;  // per EM iteration, for ascent checks

    double logpdf(const Vector& x) const;
    Vector sample(RandomStream& rng) const;
    long n_free_parameters(std::size_t dim) const;

    // weights, means and covariance rows, e.g. for illustration plots
    std::string to_json_string() const;
    static MixtureDensity from_json_string(const std::string& text);
};

struct MixtureFitOptions {
    CovarianceStructure structure = CovarianceStructure::full;
    int max_iterations = 300;
    double tol_per_point = 1e-6;
};

// EM to a local maximum of the training log density; k-means++ start,
// one reseed on component collapse, then "em-degenerate".
MixtureDensity fit_gaussian_mixture(const TrainingSet& d, int k,
                                    RandomStream& rng,
                                    const MixtureFitOptions& opts = {});

struct AutoFitCandidate {
    int k = 0;
    CovarianceStructure structure = CovarianceStructure::full;
    double bic = 0.0;
};

// BIC search over k in [3,10] x all covariance structures; sub-fits that
// error are skipped. `evaluated` (when given) receives every surviving
// candidate's BIC.
MixtureDensity fit_gaussian_mixture_auto(
    const TrainingSet& d, RandomStream& rng,
    std::vector<AutoFitCandidate>* evaluated = nullptr);

std::unique_ptr<ProposalKernel> make_mixture_proposal(MixtureDensity mixture);

}  // namespace abcsmc
