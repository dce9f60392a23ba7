#include "abcsmc/proposal.hpp"

#include <cmath>

#include "abcsmc/error.hpp"

namespace abcsmc {

double covariance_jitter(const Matrix& sigma) {
    double tr = 0.0;
    for (std::size_t i = 0; i < sigma.rows; ++i) tr += sigma(i, i);
    return std::max(1e-8 * tr / static_cast<double>(sigma.rows), 1e-12);
}

namespace {

struct FittedMoments {
    Vector mean;
    Matrix doubled_cov;  // 2 (Sigma_hat + delta I)
    Matrix chol;
};

FittedMoments fit_moments(const TrainingSet& d) {
    const Matrix& x = d.thetas;
    if (x.rows < 2)
        throw Error("degenerate-training-set", "need at least 2 training points");
    FittedMoments f;
    f.mean = column_mean(x);
    Matrix cov = sample_covariance(x, f.mean);
    double tr = 0.0;
    for (std::size_t i = 0; i < cov.cols; ++i) tr += cov(i, i);
    if (tr <= 0.0)
        throw Error("degenerate-training-set", "all training points identical");
    const double delta = covariance_jitter(cov);
    f.doubled_cov = Matrix(cov.rows, cov.cols);
    for (std::size_t i = 0; i < cov.rows; ++i)
        for (std::size_t j = 0; j < cov.cols; ++j)
            f.doubled_cov(i, j) = 2.0 * (cov(i, j) + (i == j ? delta : 0.0));
    f.chol = cholesky(f.doubled_cov);
    return f;
}

class ClassicRwProposal : public ProposalKernel {
public:
    explicit ClassicRwProposal(FittedMoments f) : f_(std::move(f)) {}

    Vector propose(const Vector& cur, RandomStream& rng) const override {
        Vector z(cur.size());
        for (double& v : z) v = rng.normal();
        Vector step = lower_times(f_.chol, z);
        Vector out(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] + step[i];
        return out;
    }

    double logpdf(const Vector& proposed, const Vector& cur) const override {
        return mvn_logpdf(proposed, cur, f_.chol);
    }

    bool is_independence() const override { return false; }

private:
    FittedMoments f_;
};

class ClassicIndependenceProposal : public ProposalKernel {
public:
    ClassicIndependenceProposal(Matrix centers, Matrix chol)
        : centers_(std::move(centers)), chol_(std::move(chol)) {}

    Vector propose(const Vector&, RandomStream& rng) const override {
        const std::size_t j = rng.uniform_index(centers_.rows);
        Vector z(centers_.cols);
        for (double& v : z) v = rng.normal();
        Vector step = lower_times(chol_, z);
        Vector out(centers_.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = centers_(j, i) + step[i];
        return out;
    }

    double logpdf(const Vector& proposed, const Vector&) const override {
        Vector terms(centers_.rows);
        for (std::size_t j = 0; j < centers_.rows; ++j)
            terms[j] = mvn_logpdf(proposed, centers_.row(j), chol_);
        return log_sum_exp(terms) - std::log(static_cast<double>(centers_.rows));
    }

    bool is_independence() const override { return true; }

private:
    Matrix centers_;
    Matrix chol_;
};

class PriorProposal : public ProposalKernel {
public:
    explicit PriorProposal(std::shared_ptr<const Model> m) : model_(std::move(m)) {}

    Vector propose(const Vector&, RandomStream& rng) const override {
        return model_->prior_sample(rng);
    }
    double logpdf(const Vector& proposed, const Vector&) const override {
        return model_->prior_logpdf(proposed);
    }
    bool is_independence() const override { return true; }

private:
    std::shared_ptr<const Model> model_;
};

class DefensiveProposal : public ProposalKernel {
public:
    DefensiveProposal(std::shared_ptr<const ProposalKernel> inner,
                      std::shared_ptr<const Model> model, double eta)
        : inner_(std::move(inner)), model_(std::move(model)), eta_(eta) {}

    Vector propose(const Vector& cur, RandomStream& rng) const override {
        if (rng.uniform01() < eta_) return model_->prior_sample(rng);
        return inner_->propose(cur, rng);
    }

    double logpdf(const Vector& proposed, const Vector& cur) const override {
        const double a = std::log(eta_) + model_->prior_logpdf(proposed);
        const double b = std::log1p(-eta_) + inner_->logpdf(proposed, cur);
        return log_sum_exp({a, b});
    }

    bool is_independence() const override { return true; }

private:
    std::shared_ptr<const ProposalKernel> inner_;
    std::shared_ptr<const Model> model_;
    double eta_;
};

}  // namespace

std::unique_ptr<ProposalKernel> fit_classic_rw(const TrainingSet& d) {
    return std::make_unique<ClassicRwProposal>(fit_moments(d));
}

std::unique_ptr<ProposalKernel> fit_classic_independence(const TrainingSet& d) {
    FittedMoments f = fit_moments(d);
    return std::make_unique<ClassicIndependenceProposal>(d.thetas,
                                                         std::move(f.chol));
}

std::unique_ptr<ProposalKernel> make_prior_proposal(
    std::shared_ptr<const Model> model) {
    return std::make_unique<PriorProposal>(std::move(model));
}

std::unique_ptr<ProposalKernel> defensive_wrap(
    std::shared_ptr<const ProposalKernel> q_star,
    std::shared_ptr<const Model> model, double eta) {
    if (!q_star->is_independence())
        throw Error("invalid-proposal", "defensive wrap needs an independence proposal");
    return std::make_unique<DefensiveProposal>(std::move(q_star),
                                               std::move(model), eta);
}

double training_set_log_score(const ProposalKernel& q, const TrainingSet& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.thetas.rows; ++i) {
        s += q.logpdf(d.thetas.row(i), d.thetas.row(i));
        if (s == -std::numeric_limits<double>::infinity()) break;
    }
    return s;
}

const ProposalKernel& select_fallback(const ProposalKernel& candidate,
                                      const ProposalKernel& classic,
                                      const TrainingSet& d_test) {
    if (!candidate.is_independence() || !classic.is_independence())
        throw Error("invalid-proposal", "fallback compares independence proposals");
    if (d_test.thetas.rows == 0)
        throw Error("insufficient-data", "empty fallback test set");
    const double cand = training_set_log_score(candidate, d_test);
    const double cls = training_set_log_score(classic, d_test);
    return cand >= cls ? candidate : classic;
}

}  // namespace abcsmc
