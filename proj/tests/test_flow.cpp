#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "abcsmc/error.hpp"
#include "abcsmc/flow.hpp"

using namespace abcsmc;

namespace {

FlowArchitecture small_arch(int dim) {
    FlowArchitecture a;
    a.dim = dim;
    a.bins = 6;
    a.tail_bound = 10.0;
    a.hidden = 6;
    a.blocks = 2;
    return a;
}

SplineFlow random_flow(const FlowArchitecture& arch, std::uint64_t seed,
                       double spread = 0.5) {
    RandomStream rng(seed);
    SplineFlow flow(arch, rng);
    for (double& p : flow.parameters()) p += spread * rng.normal();
    return flow;
}

double fd_logdet(const SplineFlow& flow, const Vector& z, double h = 1e-6) {
    const auto d = z.size();
    Matrix jac(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        Vector zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        const Vector tp = flow.forward(zp).first;
        const Vector tm = flow.forward(zm).first;
        for (std::size_t i = 0; i < d; ++i) jac(i, j) = (tp[i] - tm[i]) / (2.0 * h);
    }
    // Gaussian elimination determinant (d <= 3 here)
    double det = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < d; ++i)
            if (std::abs(jac(i, k)) > std::abs(jac(piv, k))) piv = i;
        if (piv != k) {
            for (std::size_t c = 0; c < d; ++c) std::swap(jac(k, c), jac(piv, c));
            det = -det;
        }
        det *= jac(k, k);
        for (std::size_t i = k + 1; i < d; ++i) {
            const double f = jac(i, k) / jac(k, k);
            for (std::size_t c = k; c < d; ++c) jac(i, c) -= f * jac(k, c);
        }
    }
    return std::log(std::abs(det));
}

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("near-identity initialisation") {
    RandomStream rng(1);
    SplineFlow flow(small_arch(2), rng);
    RandomStream zs(2);
    for (int rep = 0; rep < 200; ++rep) {
        const Vector z = {zs.uniform(-9.9, 9.9), zs.uniform(-9.9, 9.9)};
        const auto [theta, log_det] = flow.forward(z);
        for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(theta[j] - z[j]) < 1e-3);
        CHECK(std::abs(log_det) < 1e-3);
    }
    // at init the density is the standard normal
    for (double t : {-2.5, -1.0, 0.0, 0.7, 2.9}) {
        const double expect = -0.5 * std::log(2.0 * M_PI) - 0.5 * t * t;
        CHECK(std::abs(flow.logpdf({t, 0.0}) -
                       (expect - 0.5 * std::log(2.0 * M_PI))) < 1e-2);
    }
}

TEST_CASE("linear tails act as the identity") {
    const SplineFlow flow = random_flow(small_arch(2), 3);
    RandomStream rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        const Vector z = {rng.uniform(10.0, 25.0) * (rep % 2 ? 1.0 : -1.0),
                          rng.uniform(10.5, 30.0)};
        const auto [theta, log_det] = flow.forward(z);
        CHECK(theta[0] == z[0]);
        CHECK(theta[1] == z[1]);
        CHECK(log_det == 0.0);
        const auto [back, inv_log_det] = flow.inverse(theta);
        CHECK(back == z);
        CHECK(inv_log_det == 0.0);
    }
}

TEST_CASE("round trip and inverse log determinant") {
    for (int dim : {1, 2, 3}) {
        const SplineFlow flow = random_flow(small_arch(dim), 100 + dim);
        RandomStream rng(5 + dim);
        for (int rep = 0; rep < 350; ++rep) {
            Vector z(dim);
            for (auto& v : z) v = rng.uniform(-12.0, 12.0);
            const auto [theta, log_det] = flow.forward(z);
            const auto [back, inv_log_det] = flow.inverse(theta);
            for (int j = 0; j < dim; ++j) CHECK(std::abs(back[j] - z[j]) < 1e-8);
            CHECK(std::abs(log_det + inv_log_det) < 1e-8);
            // change of variables identity
            double base = 0.0;
            for (double v : z) base += -0.5 * std::log(2.0 * M_PI) - 0.5 * v * v;
            CHECK(std::abs(flow.logpdf(theta) - (base - log_det)) < 1e-8);
        }
    }
}

TEST_CASE("log determinant matches a finite-difference jacobian") {
    RandomStream pick(7);
    int checked = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int dim = 1 + static_cast<int>(pick.uniform_index(3));
        const SplineFlow flow = random_flow(small_arch(dim), 500 + rep);
        Vector z(dim);
        for (auto& v : z) v = pick.uniform(-9.0, 9.0);
        const double log_det = flow.forward(z).second;
        const double fd = fd_logdet(flow, z);
        CHECK(std::abs(log_det - fd) / (std::abs(fd) + 1.0) < 1e-4);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("whitened flow keeps exact round trips") {
    SplineFlow flow = random_flow(small_arch(2), 11);
    flow.set_whitening({3.0, -1.0}, {0.2, 5.0});
    RandomStream rng(12);
    for (int rep = 0; rep < 200; ++rep) {
        const Vector z = {rng.normal(), rng.normal()};
        const auto [theta, log_det] = flow.forward(z);
        const auto [back, inv_log_det] = flow.inverse(theta);
        CHECK(std::abs(back[0] - z[0]) < 1e-8);
        CHECK(std::abs(back[1] - z[1]) < 1e-8);
        CHECK(std::abs(log_det + inv_log_det) < 1e-8);
    }
}

TEST_CASE("sample mass sits far above the tails") {
    FlowArchitecture arch = small_arch(2);
    const SplineFlow flow = random_flow(arch, 15, 0.6);
    RandomStream rng(16);
    double mean_lp = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean_lp += flow.logpdf(flow.sample(rng));
    mean_lp /= n;
    const double far = flow.logpdf({5.0 * arch.tail_bound, 5.0 * arch.tail_bound});
    CHECK(mean_lp >= far);
}

TEST_CASE("1-d density integrates to one") {
    FlowArchitecture arch = small_arch(1);
    arch.bins = 12;
    const SplineFlow flow = random_flow(arch, 13, 0.8);
    const int n = 200001;
    const double lo = -30.0, hi = 30.0, dx = (hi - lo) / (n - 1);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        total += w * std::exp(flow.logpdf({lo + dx * i})) * dx;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("analytic gradient matches central finite differences") {
    RandomStream pick(17);
    for (int rep = 0; rep < 10; ++rep) {
        const int dim = 1 + static_cast<int>(pick.uniform_index(3));
        SplineFlow flow = random_flow(small_arch(dim), 900 + rep, 0.4);
        Matrix batch(10, dim);
        for (std::size_t i = 0; i < 10; ++i)
            for (int j = 0; j < dim; ++j)
                batch(i, static_cast<std::size_t>(j)) = pick.uniform(-6.0, 6.0);

        Vector grad;
        const double obj = flow.objective_and_gradient(batch, grad);

        // the batch objective is the sum of per-row log densities
        double direct = 0.0;
        for (std::size_t i = 0; i < batch.rows; ++i)
            direct += flow.logpdf(batch.row(i));
        CHECK(obj == doctest::Approx(direct).epsilon(1e-9));

        Vector& phi = flow.parameters();
        for (std::size_t p = 0; p < phi.size(); ++p) {
            const double keep = phi[p];
            auto batch_obj = [&]() {
                double o = 0.0;
                for (std::size_t i = 0; i < batch.rows; ++i)
                    o += flow.logpdf(batch.row(i));
                return o;
            };
            // two FD steps: the larger rides out rounding noise, the smaller
            // rides out truncation where the curvature is strong
            double rel = std::numeric_limits<double>::infinity();
            for (const double h : {1e-5, 1e-6}) {
                phi[p] = keep + h;
                const double up = batch_obj();
                phi[p] = keep - h;
                const double down = batch_obj();
                phi[p] = keep;
                const double fd = (up - down) / (2.0 * h);
                rel = std::min(rel, std::abs(grad[p] - fd) /
                                        (std::max(std::abs(grad[p]),
                                                  std::abs(fd)) +
                                         1e-6));
            }
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("training returns the best test snapshot") {
    RandomStream data_rng(19);
    Matrix train(400, 1), test(120, 1);
    for (std::size_t i = 0; i < train.rows; ++i) train(i, 0) = data_rng.normal();
    for (std::size_t i = 0; i < test.rows; ++i) test(i, 0) = data_rng.normal();

    RandomStream init_rng(20);
    SplineFlow start(small_arch(1), init_rng);
    FlowTrainConfig cfg;
    cfg.max_epochs = 40;
    RandomStream train_rng(21);
    const FlowTrainResult result = train_flow(start, train, test, cfg, train_rng);

    REQUIRE(!result.test_objective_trace.empty());
    CHECK(result.test_objective_trace.back() <= result.best_test_objective + 1e-12);
    for (double obj : result.test_objective_trace)
        CHECK(result.best_test_objective >= obj - 1e-12);
    CHECK(result.best_test_objective >= result.test_objective_trace.front());

    // training is deterministic given the same seed
    RandomStream train_rng2(21);
    const FlowTrainResult again = train_flow(start, train, test, cfg, train_rng2);
    CHECK(again.flow.parameters() == result.flow.parameters());
}

TEST_CASE("banana-shaped training beats the gaussian mle baseline") {
    RandomStream rng(23);
    const auto banana = [&rng](std::size_t n) {
        Matrix m(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double t2 = rng.normal();
            m.set_row(i, {t2 * t2 + 0.1 * rng.normal(), t2});
        }
        return m;
    };
    const Matrix train = banana(1200);
    const Matrix test = banana(400);
    const Matrix held = banana(400);

    FlowArchitecture arch;
    arch.dim = 2;  // paper-sized spline, smaller net for test speed
    arch.bins = 16;
    arch.hidden = 12;
    arch.blocks = 2;
    RandomStream init_rng(24);
    SplineFlow start(arch, init_rng);
    FlowTrainConfig cfg;
    cfg.max_epochs = 150;
    RandomStream train_rng(25);
    const FlowTrainResult fit = train_flow(start, train, test, cfg, train_rng);

    double flow_held = 0.0;
    for (std::size_t i = 0; i < held.rows; ++i)
        flow_held += fit.flow.logpdf(held.row(i));
    flow_held /= static_cast<double>(held.rows);

    // closed-form gaussian MLE baseline on the training rows
    const Vector mean = column_mean(train);
    Matrix cov = sample_covariance(train, mean);
    const double scale =
        static_cast<double>(train.rows - 1) / static_cast<double>(train.rows);
    for (auto& v : cov.data) v *= scale;
    const Matrix chol = cholesky(cov);
    double gauss_held = 0.0;
    for (std::size_t i = 0; i < held.rows; ++i)
        gauss_held += mvn_logpdf(held.row(i), mean, chol);
    gauss_held /= static_cast<double>(held.rows);

    CHECK(flow_held > gauss_held);
}

TEST_CASE("json serialisation round trip") {
    SplineFlow flow = random_flow(small_arch(2), 29);
    flow.set_whitening({0.5, -0.5}, {2.0, 0.7});
    const SplineFlow back = SplineFlow::from_json_string(flow.to_json_string());
    CHECK(back.parameters() == flow.parameters());
    CHECK(back.whitening_mean() == flow.whitening_mean());
    RandomStream rng(30);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector t = {rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
        CHECK(back.logpdf(t) == flow.logpdf(t));
    }
}

TEST_CASE("insufficient training data is rejected") {
    RandomStream rng(31);
    SplineFlow start(small_arch(1), rng);
    const Matrix empty(0, 1);
    Matrix some(5, 1);
    for (std::size_t i = 0; i < 5; ++i) some(i, 0) = rng.normal();
    FlowTrainConfig cfg;
    CHECK_THROWS_WITH_AS(train_flow(start, empty, some, cfg, rng),
                         doctest::Contains("insufficient-data"), Error);
    CHECK_THROWS_AS(train_flow(start, some, empty, cfg, rng), Error);
}


TEST_CASE("untrained flow loses the fallback comparison on a banana") {
    RandomStream rng(33);
    auto banana = [&rng](std::size_t n) {
        Matrix m(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double t2 = rng.normal();
            m.set_row(i, {t2 * t2 + 0.1 * rng.normal(), t2});
        }
        return m;
    };
    TrainingSet train, test;
    train.thetas = banana(400);
    test.thetas = banana(200);

    RandomStream init_rng(34);
    const SplineFlow flow(small_arch(2), init_rng);  // zero training steps
    const FlowProposalKernel flow_q(flow);
    std::shared_ptr<const ProposalKernel> classic(
        fit_classic_independence(train).release());
    CHECK(training_set_log_score(*classic, test) >
          training_set_log_score(flow_q, test));
    const ProposalKernel& chosen = select_fallback(flow_q, *classic, test);
    CHECK(&chosen == classic.get());
}

}  // TEST_SUITE
