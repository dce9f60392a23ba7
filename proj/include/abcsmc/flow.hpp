#pragma once

#include <string>
#include <utility>

#include "abcsmc/linalg.hpp"
#include "abcsmc/proposal.hpp"
#include "abcsmc/rng.hpp"

namespace abcsmc {

struct FlowArchitecture {
    int dim = 1;
    int bins = 50;
    double tail_bound = 10.0;
    int hidden = 20;
    int blocks = 2;

    // widths + heights + interior derivatives per coordinate
    int params_per_coord() const { return 3 * bins - 1; }
};

// Rational-quadratic spline flow with linear tails and a standard normal
// base. Coordinate j's spline is parameterised by a masked autoregressive
// conditioner on coordinates < j (natural order); coordinate 0 has free
// parameters. Training data is whitened per fit; the flow models whitened
// coordinates and logpdf carries the Jacobian constant.
class SplineFlow {
public:
    SplineFlow(FlowArchitecture arch, RandomStream& rng);

    const FlowArchitecture& architecture() const { return arch_; }
    Vector& parameters() { return phi_; }
    const Vector& parameters() const { return phi_; }

    void set_whitening(Vector mean, Vector scale);
    const Vector& whitening_mean() const { return white_mean_; }
    const Vector& whitening_scale() const { return white_scale_; }

    // Sampling direction: z from the base distribution to theta.
    // log_det = log |d theta / d z|.
    std::pair<Vector, double> forward(const Vector& z) const;

    // Exact analytic inverse; log_det_inverse = -forward log_det.
    std::pair<Vector, double> inverse(const Vector& theta) const;

    double logpdf(const Vector& theta) const;
    Vector sample(RandomStream& rng) const;

    // Sum over rows of logpdf(theta_i) and its gradient with respect to the
    // flat parameter vector (same length as parameters()).
    double objective_and_gradient(const Matrix& thetas, Vector& grad) const;

    std::string to_json_string() const;
    static SplineFlow from_json_string(const std::string& text);

private:
    friend struct FlowAccess;
    SplineFlow() = default;

    FlowArchitecture arch_;
    Vector phi_;
    Vector white_mean_;
    Vector white_scale_;
};

struct FlowTrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int max_batch = 128;
    int max_epochs = 400;
    int patience = 20;
    bool rewhiten = true;  // recompute whitening from d_train before fitting
};

struct FlowTrainResult {
    SplineFlow flow;
    double best_test_objective = 0.0;
    Vector test_objective_trace;  // per epoch, entry 0 is pre-training
    int epochs_run = 0;
};

// Adam ascent on the training log density with per-epoch test tracking;
// returns the parameter snapshot with the best test objective (which may be
// the warm start itself). Throws "training-diverged" on non-finite loss.
FlowTrainResult train_flow(const SplineFlow& start, const Matrix& d_train,
                           const Matrix& d_test, const FlowTrainConfig& cfg,
                           RandomStream& rng);

class FlowProposalKernel : public ProposalKernel {
public:
    explicit FlowProposalKernel(SplineFlow flow) : flow_(std::move(flow)) {}
    Vector propose(const Vector&, RandomStream& rng) const override {
        return flow_.sample(rng);
    }
    double logpdf(const Vector& proposed, const Vector&) const override {
        return flow_.logpdf(proposed);
    }
    bool is_independence() const override { return true; }
    const SplineFlow& flow() const { return flow_; }

private:
    SplineFlow flow_;
};

}  // namespace abcsmc
