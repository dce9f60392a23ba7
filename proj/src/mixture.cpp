#include "abcsmc/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "abcsmc/error.hpp"

namespace abcsmc {

std::string to_string(CovarianceStructure s) {
    switch (s) {
        case CovarianceStructure::full: return "full";
        case CovarianceStructure::diagonal: return "diagonal";
        case CovarianceStructure::spherical: return "spherical";
        case CovarianceStructure::tied_full: return "tied-full";
    }
    return "?";
}

double MixtureDensity::logpdf(const Vector& x) const {
    Vector terms(components.size());
    for (std::size_t j = 0; j < components.size(); ++j)
        terms[j] = std::log(components[j].weight) +
                   mvn_logpdf(x, components[j].mean, components[j].chol);
    return log_sum_exp(terms);
}

Vector MixtureDensity::sample(RandomStream& rng) const {
    // Inverse CDF on weights, then a factorised-covariance Gaussian draw.
    const double u = rng.uniform01();
    double acc = 0.0;
    std::size_t j = components.size() - 1;
    for (std::size_t i = 0; i < components.size(); ++i) {
        acc += components[i].weight;
        if (u < acc) {
            j = i;
            break;
        }
    }
    const auto& c = components[j];
    Vector z(c.mean.size());
    for (double& v : z) v = rng.normal();
    Vector step = lower_times(c.chol, z);
    Vector out(c.mean.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.mean[i] + step[i];
    return out;
}

std::string MixtureDensity::to_json_string() const {
    nlohmann::json j;
    j["structure"] = to_string(structure);
    j["log_score"] = log_score;
    j["bic"] = bic;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components) {
        nlohmann::json jc;
        jc["weight"] = c.weight;
        jc["mean"] = c.mean;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < c.cov.rows; ++i) rows.push_back(c.cov.row(i));
        jc["covariance"] = rows;
        comps.push_back(jc);
    }
    j["components"] = comps;
    return j.dump();
}

MixtureDensity MixtureDensity::from_json_string(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MixtureDensity mix;
    const std::string s = j.at("structure").get<std::string>();
    if (s == "full") mix.structure = CovarianceStructure::full;
    else if (s == "diagonal") mix.structure = CovarianceStructure::diagonal;
    else if (s == "spherical") mix.structure = CovarianceStructure::spherical;
    else if (s == "tied-full") mix.structure = CovarianceStructure::tied_full;
    else throw Error("config-invalid", "unknown covariance structure '" + s + "'");
    mix.log_score = j.at("log_score").get<double>();
    mix.bic = j.at("bic").get<double>();
    for (const auto& jc : j.at("components")) {
        MixtureComponent c;
        c.weight = jc.at("weight").get<double>();
        c.mean = jc.at("mean").get<Vector>();
        const auto rows = jc.at("covariance");
        c.cov = Matrix(rows.size(), c.mean.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            c.cov.set_row(i, rows[i].get<Vector>());
        c.chol = cholesky(c.cov);
        mix.components.push_back(std::move(c));
    }
    return mix;
}

long MixtureDensity::n_free_parameters(std::size_t dim) const {
    const long k = static_cast<long>(components.size());
    const long d = static_cast<long>(dim);
    long cov = 0;
    switch (structure) {
        case CovarianceStructure::full: cov = k * d * (d + 1) / 2; break;
        case CovarianceStructure::diagonal: cov = k * d; break;
        case CovarianceStructure::spherical: cov = k; break;
        case CovarianceStructure::tied_full: cov = d * (d + 1) / 2; break;
    }
    return (k - 1) + k * d + cov;
}

namespace {

void regularise(Matrix& cov) {
    const double delta = covariance_jitter(cov);
    for (std::size_t i = 0; i < cov.rows; ++i) cov(i, i) += delta;
}

std::vector<Vector> kmeans_pp(const Matrix& x, int k, RandomStream& rng) {
    const std::size_t n = x.rows;
    std::vector<Vector> centers;
    centers.push_back(x.row(rng.uniform_index(n)));
    Vector d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) {
                const Vector diff = sub(x.row(i), c);
                best = std::min(best, dot(diff, diff));
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(x.row(rng.uniform_index(n)));
            continue;
        }
        double u = rng.uniform01() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            u -= d2[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(x.row(pick));
    }
    // A few Lloyd sweeps to settle the seeds.
    std::vector<std::size_t> assign(n, 0);
    for (int sweep = 0; sweep < 20; ++sweep) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t j = 0; j < centers.size(); ++j) {
                const Vector diff = sub(x.row(i), centers[j]);
                const double v = dot(diff, diff);
                if (v < best) {
                    best = v;
                    arg = j;
                }
            }
            if (assign[i] != arg) changed = true;
            assign[i] = arg;
        }
        for (std::size_t j = 0; j < centers.size(); ++j) {
            Vector m(x.cols, 0.0);
            long cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == j) {
                    for (std::size_t c = 0; c < x.cols; ++c) m[c] += x(i, c);
                    ++cnt;
                }
            if (cnt > 0) {
                for (double& v : m) v /= static_cast<double>(cnt);
                centers[j] = m;
            }
        }
        if (!changed) break;
    }
    return centers;
}

Matrix global_covariance(const Matrix& x) {
    Matrix cov = sample_covariance(x, column_mean(x));
    regularise(cov);
    return cov;
}

void m_step_covariances(const Matrix& x, const Matrix& resp,
                        MixtureDensity& mix, const Vector& nj) {
    const std::size_t n = x.rows, d = x.cols, k = mix.components.size();
    if (mix.structure == CovarianceStructure::tied_full) {
        Matrix tied(d, d, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            const auto& mu = mix.components[j].mean;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp(i, j);
                if (r == 0.0) continue;
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b <= a; ++b)
                        tied(a, b) += r * (x(i, a) - mu[a]) * (x(i, b) - mu[b]);
            }
        }
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) {
                tied(a, b) /= static_cast<double>(n);
                tied(b, a) = tied(a, b);
            }
        regularise(tied);
        const Matrix chol = cholesky(tied);
        for (auto& c : mix.components) {
            c.cov = tied;
            c.chol = chol;
        }
        return;
    }
    for (std::size_t j = 0; j < k; ++j) {
        auto& c = mix.components[j];
        Matrix cov(d, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp(i, j);
            if (r == 0.0) continue;
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b <= a; ++b)
                    cov(a, b) += r * (x(i, a) - c.mean[a]) * (x(i, b) - c.mean[b]);
        }
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) {
                cov(a, b) /= nj[j];
                cov(b, a) = cov(a, b);
            }
        if (mix.structure == CovarianceStructure::diagonal) {
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b)
                    if (a != b) cov(a, b) = 0.0;
        } else if (mix.structure == CovarianceStructure::spherical) {
            double mean_var = 0.0;
            for (std::size_t a = 0; a < d; ++a) mean_var += cov(a, a);
            mean_var /= static_cast<double>(d);
            cov = Matrix(d, d, 0.0);
            for (std::size_t a = 0; a < d; ++a) cov(a, a) = mean_var;
        }
        regularise(cov);
        c.cov = cov;
        c.chol = cholesky(cov);
    }
}

}  // namespace

MixtureDensity fit_gaussian_mixture(const TrainingSet& d, int k,
                                    RandomStream& rng,
                                    const MixtureFitOptions& opts) {
    const Matrix& x = d.thetas;
    const std::size_t n = x.rows;
    const std::size_t dim = x.cols;
    if (static_cast<long>(n) < static_cast<long>(k) * (static_cast<long>(dim) + 1))
        throw Error("insufficient-data",
                    "need at least k*(dim+1) training points for EM");

    MixtureDensity mix;
    mix.structure = opts.structure;
    mix.components.resize(static_cast<std::size_t>(k));
    const Matrix fallback_cov = global_covariance(x);
    {
        auto centers = kmeans_pp(x, k, rng);
        for (int j = 0; j < k; ++j) {
            auto& c = mix.components[static_cast<std::size_t>(j)];
            c.weight = 1.0 / static_cast<double>(k);
            c.mean = centers[static_cast<std::size_t>(j)];
            c.cov = fallback_cov;
            c.chol = cholesky(c.cov);
        }
    }

    Matrix resp(n, static_cast<std::size_t>(k));
    double prev_score = -std::numeric_limits<double>::infinity();
    bool reseeded = false;
    const double mass_floor = 1e-8 * static_cast<double>(n);

    for (int it = 0; it < opts.max_iterations; ++it) {
        // E step
        double score = 0.0;
        Vector terms(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < n; ++i) {
            const Vector xi = x.row(i);
            for (int j = 0; j < k; ++j) {
                const auto& c = mix.components[static_cast<std::size_t>(j)];
                terms[static_cast<std::size_t>(j)] =
                    std::log(c.weight) + mvn_logpdf(xi, c.mean, c.chol);
            }
            const double lse = log_sum_exp(terms);
            score += lse;
            for (int j = 0; j < k; ++j)
                resp(i, static_cast<std::size_t>(j)) =
                    std::exp(terms[static_cast<std::size_t>(j)] - lse);
        }
        mix.score_trace.push_back(score);
        mix.em_iterations = it + 1;

        Vector nj(static_cast<std::size_t>(k), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j)
                nj[static_cast<std::size_t>(j)] += resp(i, static_cast<std::size_t>(j));

        // Collapse handling: reseed once, then give up.
        int dead = -1;
        for (int j = 0; j < k; ++j)
            if (nj[static_cast<std::size_t>(j)] < mass_floor) dead = j;
        if (dead >= 0) {
            if (reseeded)
                throw Error("em-degenerate",
                            "mixture component lost all responsibility mass");
            reseeded = true;
            auto& c = mix.components[static_cast<std::size_t>(dead)];
            c.mean = x.row(rng.uniform_index(n));
            c.cov = fallback_cov;
            c.chol = cholesky(c.cov);
            c.weight = 1.0 / static_cast<double>(k);
            double total = 0.0;
            for (const auto& comp : mix.components) total += comp.weight;
            for (auto& comp : mix.components) comp.weight /= total;
            prev_score = -std::numeric_limits<double>::infinity();
            continue;
        }

        // M step
        for (int j = 0; j < k; ++j) {
            auto& c = mix.components[static_cast<std::size_t>(j)];
            c.weight = nj[static_cast<std::size_t>(j)] / static_cast<double>(n);
            Vector mu(dim, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp(i, static_cast<std::size_t>(j));
                for (std::size_t a = 0; a < dim; ++a) mu[a] += r * x(i, a);
            }
            for (double& v : mu) v /= nj[static_cast<std::size_t>(j)];
            c.mean = mu;
        }
        m_step_covariances(x, resp, mix, nj);

        if (std::isfinite(prev_score) &&
            std::abs(score - prev_score) < opts.tol_per_point * static_cast<double>(n))
            break;
        prev_score = score;
    }

    // Final score under the last M step so log_score matches the returned fit.
    double final_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) final_score += mix.logpdf(x.row(i));
    mix.log_score = final_score;
    mix.score_trace.push_back(final_score);
    mix.bic = -2.0 * final_score +
              static_cast<double>(mix.n_free_parameters(dim)) *
                  std::log(static_cast<double>(n));
    return mix;
}

MixtureDensity fit_gaussian_mixture_auto(
    const TrainingSet& d, RandomStream& rng,
    std::vector<AutoFitCandidate>* evaluated) {
    std::optional<MixtureDensity> best;
    const CovarianceStructure structures[] = {
        CovarianceStructure::full, CovarianceStructure::diagonal,
        CovarianceStructure::spherical, CovarianceStructure::tied_full};
    for (int k = 3; k <= 10; ++k)
        for (auto s : structures) {
            MixtureFitOptions opts;
            opts.structure = s;
            try {
                MixtureDensity fit = fit_gaussian_mixture(d, k, rng, opts);
                if (evaluated)
                    evaluated->push_back(AutoFitCandidate{k, s, fit.bic});
                if (!best || fit.bic < best->bic) best = std::move(fit);
            } catch (const Error&) {
                // A failed sub-fit is skipped rather than crashing the run.
            }
        }
    if (!best)
        throw Error("insufficient-data", "every BIC sub-fit failed");
    return *best;
}

namespace {

class MixtureProposal : public ProposalKernel {
public:
    explicit MixtureProposal(MixtureDensity m) : mix_(std::move(m)) {}
    Vector propose(const Vector&, RandomStream& rng) const override {
        return mix_.sample(rng);
    }
    double logpdf(const Vector& proposed, const Vector&) const override {
        return mix_.logpdf(proposed);
    }
    bool is_independence() const override { return true; }

private:
    MixtureDensity mix_;
};

}  // namespace

std::unique_ptr<ProposalKernel> make_mixture_proposal(MixtureDensity mixture) {
    return std::make_unique<MixtureProposal>(std::move(mixture));
}

}  // namespace abcsmc
