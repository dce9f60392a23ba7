#include "abcsmc/flow.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "abcsmc/error.hpp"

namespace abcsmc {

namespace {

// The bin-fraction floor bounds the worst-case segment slope from below,
// which keeps the analytic inverse well conditioned for any parameters.
constexpr double kMinFrac = 1e-3;
constexpr double kDerivFloor = 1e-3;  // floor on knot derivatives

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Chosen so a zero raw parameter maps to a unit knot derivative.
double deriv_shift() {
    static const double s = std::log(std::expm1(1.0 - kDerivFloor));
    return s;
}

struct Knots {
    Vector xs, ys, ds;  // sizes K+1; ds[0] = ds[K] = 1 (linear tails)
};

// raw layout per coordinate: K width raws, K height raws, K-1 derivative raws
Knots make_knots(const double* raw, const FlowArchitecture& arch) {
    const int k = arch.bins;
    const double b = arch.tail_bound;
    Knots kn;
    kn.xs.resize(k + 1);
    kn.ys.resize(k + 1);
    kn.ds.assign(k + 1, 1.0);
    for (int pass = 0; pass < 2; ++pass) {
        const double* r = raw + pass * k;
        Vector& knots = pass == 0 ? kn.xs : kn.ys;
        double m = r[0];
        for (int i = 1; i < k; ++i) m = std::max(m, r[i]);
        Vector e(k);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            e[i] = std::exp(r[i] - m);
            total += e[i];
        }
        knots[0] = -b;
        for (int i = 0; i < k; ++i) {
            const double frac = e[i] / total;
            const double width =
                (kMinFrac + (1.0 - k * kMinFrac) * frac) * 2.0 * b;
            knots[i + 1] = knots[i] + width;
        }
    }
    for (int i = 1; i < k; ++i)
        kn.ds[i] = kDerivFloor + softplus(raw[2 * k + (i - 1)] + deriv_shift());
    return kn;
}

int locate_bin(const Vector& knots, double v) {
    const auto it = std::upper_bound(knots.begin(), knots.end(), v);
    long idx = (it - knots.begin()) - 1;
    idx = std::clamp<long>(idx, 0, static_cast<long>(knots.size()) - 2);
    return static_cast<int>(idx);
}

// Monotone rational-quadratic segment, sampling direction. Returns the value
// and log derivative.
std::pair<double, double> rqs_forward(double x, const Knots& kn) {
    const int k = locate_bin(kn.xs, x);
    const double wx = kn.xs[k + 1] - kn.xs[k];
    const double wy = kn.ys[k + 1] - kn.ys[k];
    const double s = wy / wx;
    const double d0 = kn.ds[k], d1 = kn.ds[k + 1];
    const double xi = (x - kn.xs[k]) / wx;
    const double om = 1.0 - xi;
    const double dd = d1 + d0 - 2.0 * s;
    const double denom = s + dd * xi * om;
    const double y = kn.ys[k] + wy * (s * xi * xi + d0 * xi * om) / denom;
    const double deriv =
        s * s * (d1 * xi * xi + 2.0 * s * xi * om + d0 * om * om) /
        (denom * denom);
    return {y, std::log(deriv)};
}

// Exact inverse via the quadratic formula on the monotone branch. Returns
// the pre-image and the log derivative of the forward map there.
std::pair<double, double> rqs_inverse(double y, const Knots& kn) {
    const int k = locate_bin(kn.ys, y);
    const double wx = kn.xs[k + 1] - kn.xs[k];
    const double wy = kn.ys[k + 1] - kn.ys[k];
    const double s = wy / wx;
    const double d0 = kn.ds[k], d1 = kn.ds[k + 1];
    const double delta = y - kn.ys[k];
    const double dd = d1 + d0 - 2.0 * s;
    const double a = wy * (s - d0) + delta * dd;
    const double b = wy * d0 - delta * dd;
    const double c = -s * delta;
    const double disc = b * b - 4.0 * a * c;
    double xi = 2.0 * c / (-b - std::sqrt(std::max(disc, 0.0)));
    // the discriminant can cancel half the digits; two Newton steps on the
    // quadratic restore full precision at the same root
    for (int it = 0; it < 2; ++it) {
        const double g = (a * xi + b) * xi + c;
        const double gp = 2.0 * a * xi + b;
        if (gp != 0.0) xi -= g / gp;
    }
    const double om = 1.0 - xi;
    const double x = kn.xs[k] + xi * wx;
    const double denom = s + dd * xi * om;
    const double deriv =
        s * s * (d1 * xi * xi + 2.0 * s * xi * om + d0 * om * om) /
        (denom * denom);
    return {x, std::log(deriv)};
}

// ---- masked autoregressive conditioner ----

// Natural-order MADE masks: input i has degree i+1, hidden unit h degree
// 1 + (h % (dim-1)), output slice for coordinate j connects to degrees <= j.
struct NetLayout {
    int dim = 0, hidden = 0, blocks = 0, out = 0, pcoord = 0;
    std::size_t head = 0;  // parameter offsets
    std::size_t w_in = 0, b_in = 0;
    std::vector<std::size_t> v, c, u, e;  // per block
    std::size_t w_out = 0, b_out = 0;
    std::size_t total = 0;

    explicit NetLayout(const FlowArchitecture& a) {
        dim = a.dim;
        hidden = a.hidden;
        blocks = a.blocks;
        pcoord = a.params_per_coord();
        out = (dim - 1) * pcoord;
        std::size_t off = 0;
        head = off;
        off += static_cast<std::size_t>(pcoord);
        if (dim >= 2) {
            w_in = off;
            off += static_cast<std::size_t>(hidden * dim);
            b_in = off;
            off += static_cast<std::size_t>(hidden);
            for (int blk = 0; blk < blocks; ++blk) {
                v.push_back(off);
                off += static_cast<std::size_t>(hidden * hidden);
                c.push_back(off);
                off += static_cast<std::size_t>(hidden);
                u.push_back(off);
                off += static_cast<std::size_t>(hidden * hidden);
                e.push_back(off);
                off += static_cast<std::size_t>(hidden);
            }
            w_out = off;
            off += static_cast<std::size_t>(out * hidden);
            b_out = off;
            off += static_cast<std::size_t>(out);
        }
        total = off;
    }

    int degree(int h) const { return 1 + (h % (dim - 1)); }
    bool mask_in(int h, int i) const { return degree(h) >= i + 1; }
    bool mask_hh(int h2, int h1) const { return degree(h2) >= degree(h1); }
    bool mask_out(int o, int h) const {
        const int coord = 1 + o / pcoord;
        return degree(h) <= coord;
    }
};

struct NetBuffers {
    Vector h_in;                    // post input layer (tanh applied)
    std::vector<Vector> block_in;   // input to each block
    std::vector<Vector> block_t;    // tanh(V h + c) per block
    Vector h_final;
    Vector out;
};

void net_forward(const NetLayout& lo, const Vector& phi, const Vector& u,
                 NetBuffers& buf) {
    const int h = lo.hidden;
    buf.h_in.assign(h, 0.0);
    for (int a = 0; a < h; ++a) {
        double acc = phi[lo.b_in + a];
        for (int i = 0; i < lo.dim; ++i)
            if (lo.mask_in(a, i)) acc += phi[lo.w_in + a * lo.dim + i] * u[i];
        buf.h_in[a] = std::tanh(acc);
    }
    buf.block_in.assign(lo.blocks, Vector());
    buf.block_t.assign(lo.blocks, Vector());
    Vector cur = buf.h_in;
    for (int blk = 0; blk < lo.blocks; ++blk) {
        buf.block_in[blk] = cur;
        Vector t(h, 0.0);
        for (int a = 0; a < h; ++a) {
            double acc = phi[lo.c[blk] + a];
            for (int b = 0; b < h; ++b)
                if (lo.mask_hh(a, b)) acc += phi[lo.v[blk] + a * h + b] * cur[b];
            t[a] = std::tanh(acc);
        }
        buf.block_t[blk] = t;
        Vector next = cur;
        for (int a = 0; a < h; ++a) {
            double acc = phi[lo.e[blk] + a];
            for (int b = 0; b < h; ++b)
                if (lo.mask_hh(a, b)) acc += phi[lo.u[blk] + a * h + b] * t[b];
            next[a] += acc;
        }
        cur = next;
    }
    buf.h_final = cur;
    buf.out.assign(lo.out, 0.0);
    for (int o = 0; o < lo.out; ++o) {
        double acc = phi[lo.b_out + o];
        for (int a = 0; a < h; ++a)
            if (lo.mask_out(o, a)) acc += phi[lo.w_out + o * lo.hidden + a] * cur[a];
        buf.out[o] = acc;
    }
}

// Accumulates parameter gradients for one sample given d objective / d out.
void net_backward(const NetLayout& lo, const Vector& phi, const Vector& u,
                  const NetBuffers& buf, const Vector& dout, Vector& grad) {
    const int h = lo.hidden;
    Vector dh(h, 0.0);
    for (int o = 0; o < lo.out; ++o) {
        grad[lo.b_out + o] += dout[o];
        for (int a = 0; a < h; ++a)
            if (lo.mask_out(o, a)) {
                grad[lo.w_out + o * h + a] += dout[o] * buf.h_final[a];
                dh[a] += phi[lo.w_out + o * h + a] * dout[o];
            }
    }
    for (int blk = lo.blocks - 1; blk >= 0; --blk) {
        const Vector& t = buf.block_t[blk];
        const Vector& hin = buf.block_in[blk];
        Vector dt(h, 0.0);
        for (int a = 0; a < h; ++a) {
            grad[lo.e[blk] + a] += dh[a];
            for (int b = 0; b < h; ++b)
                if (lo.mask_hh(a, b)) {
                    grad[lo.u[blk] + a * h + b] += dh[a] * t[b];
                    dt[b] += phi[lo.u[blk] + a * h + b] * dh[a];
                }
        }
        for (int a = 0; a < h; ++a) {
            const double dp = dt[a] * (1.0 - t[a] * t[a]);
            grad[lo.c[blk] + a] += dp;
            for (int b = 0; b < h; ++b)
                if (lo.mask_hh(a, b)) {
                    grad[lo.v[blk] + a * h + b] += dp * hin[b];
                    dh[b] += phi[lo.v[blk] + a * h + b] * dp;
                }
        }
    }
    for (int a = 0; a < h; ++a) {
        const double da = dh[a] * (1.0 - buf.h_in[a] * buf.h_in[a]);
        grad[lo.b_in + a] += da;
        for (int i = 0; i < lo.dim; ++i)
            if (lo.mask_in(a, i)) grad[lo.w_in + a * lo.dim + i] += da * u[i];
    }
}

// ---- micro reverse-mode tape for the spline segment ----

class Tape {
public:
    int input(double v) { return push(v, -1, -1, 0, 0); }
    int constant(double v) { return push(v, -1, -1, 0, 0); }
    int add(int a, int b) { return push(v(a) + v(b), a, b, 1, 1); }
    int sub(int a, int b) { return push(v(a) - v(b), a, b, 1, -1); }
    int mul(int a, int b) { return push(v(a) * v(b), a, b, v(b), v(a)); }
    int div(int a, int b) {
        const double q = v(a) / v(b);
        return push(q, a, b, 1.0 / v(b), -q / v(b));
    }
    int affine(int a, double k, double c) { return push(k * v(a) + c, a, -1, k, 0); }
    int exp_(int a) {
        const double e = std::exp(v(a));
        return push(e, a, -1, e, 0);
    }
    int log_(int a) { return push(std::log(v(a)), a, -1, 1.0 / v(a), 0); }
    int sqrt_(int a) {
        const double s = std::sqrt(std::max(v(a), 0.0));
        return push(s, a, -1, s > 0 ? 0.5 / s : 0.0, 0);
    }
    int softplus_(int a) {
        const double x = v(a);
        return push(softplus(x), a, -1, 1.0 / (1.0 + std::exp(-x)), 0);
    }

    double v(int i) const { return nodes_[static_cast<std::size_t>(i)].val; }
    double grad(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }

    void backward(int out) {
        for (auto& n : nodes_) n.grad = 0.0;
        nodes_[static_cast<std::size_t>(out)].grad = 1.0;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.grad == 0.0) continue;
            if (n.a >= 0) nodes_[static_cast<std::size_t>(n.a)].grad += n.da * n.grad;
            if (n.b >= 0) nodes_[static_cast<std::size_t>(n.b)].grad += n.db * n.grad;
        }
    }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        double val, grad;
        int a, b;
        double da, db;
    };
    int push(double val, int a, int b, double da, double db) {
        nodes_.push_back(Node{val, 0.0, a, b, da, db});
        return static_cast<int>(nodes_.size()) - 1;
    }
    std::vector<Node> nodes_;
};

// Mirrors make_knots + rqs_inverse + the base log density on the tape.
// Returns the log-likelihood node; raw_ids receive the P input node ids.
int tape_coordinate_ll(Tape& tp, const double* raw, double u,
                       const FlowArchitecture& arch, std::vector<int>& raw_ids) {
    const int k = arch.bins;
    const double b = arch.tail_bound;
    raw_ids.resize(static_cast<std::size_t>(arch.params_per_coord()));
    for (int i = 0; i < arch.params_per_coord(); ++i)
        raw_ids[static_cast<std::size_t>(i)] = tp.input(raw[i]);

    std::vector<int> xs(static_cast<std::size_t>(k + 1)),
        ys(static_cast<std::size_t>(k + 1)), ds(static_cast<std::size_t>(k + 1));
    for (int pass = 0; pass < 2; ++pass) {
        const int base_id = pass * k;
        double m = raw[base_id];
        for (int i = 1; i < k; ++i) m = std::max(m, raw[base_id + i]);
        // max detached: softmax(x - m) has the same value and gradient
        std::vector<int> e(static_cast<std::size_t>(k));
        int total = -1;
        for (int i = 0; i < k; ++i) {
            e[static_cast<std::size_t>(i)] =
                tp.exp_(tp.affine(raw_ids[static_cast<std::size_t>(base_id + i)], 1.0, -m));
            total = i == 0 ? e[0] : tp.add(total, e[static_cast<std::size_t>(i)]);
        }
        auto& knots = pass == 0 ? xs : ys;
        knots[0] = tp.constant(-b);
        for (int i = 0; i < k; ++i) {
            const int frac = tp.div(e[static_cast<std::size_t>(i)], total);
            const int width = tp.affine(frac, (1.0 - k * kMinFrac) * 2.0 * b,
                                        kMinFrac * 2.0 * b);
            knots[static_cast<std::size_t>(i + 1)] =
                tp.add(knots[static_cast<std::size_t>(i)], width);
        }
    }
    ds[0] = tp.constant(1.0);
    ds[static_cast<std::size_t>(k)] = tp.constant(1.0);
    for (int i = 1; i < k; ++i)
        ds[static_cast<std::size_t>(i)] = tp.affine(
            tp.softplus_(tp.affine(raw_ids[static_cast<std::size_t>(2 * k + i - 1)],
                                   1.0, deriv_shift())),
            1.0, kDerivFloor);

    int bin = 0;  // same boundary convention as locate_bin
    for (int i = 0; i < k; ++i)
        if (tp.v(ys[static_cast<std::size_t>(i + 1)]) <= u) bin = std::min(i + 1, k - 1);

    const int x0 = xs[static_cast<std::size_t>(bin)];
    const int x1 = xs[static_cast<std::size_t>(bin + 1)];
    const int y0 = ys[static_cast<std::size_t>(bin)];
    const int y1 = ys[static_cast<std::size_t>(bin + 1)];
    const int d0 = ds[static_cast<std::size_t>(bin)];
    const int d1 = ds[static_cast<std::size_t>(bin + 1)];

    const int wx = tp.sub(x1, x0);
    const int wy = tp.sub(y1, y0);
    const int s = tp.div(wy, wx);
    const int un = tp.constant(u);
    const int delta = tp.sub(un, y0);
    const int dd = tp.sub(tp.add(d1, d0), tp.affine(s, 2.0, 0.0));
    const int a = tp.add(tp.mul(wy, tp.sub(s, d0)), tp.mul(delta, dd));
    const int bq = tp.sub(tp.mul(wy, d0), tp.mul(delta, dd));
    const int cq = tp.affine(tp.mul(s, delta), -1.0, 0.0);
    const int disc = tp.sub(tp.mul(bq, bq), tp.affine(tp.mul(a, cq), 4.0, 0.0));
    int xi = tp.div(tp.affine(cq, 2.0, 0.0),
                    tp.sub(tp.affine(bq, -1.0, 0.0), tp.sqrt_(disc)));
    for (int it = 0; it < 2; ++it) {  // Newton polish, mirrors rqs_inverse
        const int g = tp.add(tp.mul(tp.add(tp.mul(a, xi), bq), xi), cq);
        const int gp = tp.add(tp.affine(tp.mul(a, xi), 2.0, 0.0), bq);
        xi = tp.sub(xi, tp.div(g, gp));
    }
    const int om = tp.affine(xi, -1.0, 1.0);
    const int x = tp.add(x0, tp.mul(xi, wx));
    const int xiom = tp.mul(xi, om);
    const int denom = tp.add(s, tp.mul(dd, xiom));
    const int num = tp.mul(
        tp.mul(s, s),
        tp.add(tp.add(tp.mul(d1, tp.mul(xi, xi)), tp.affine(tp.mul(s, xiom), 2.0, 0.0)),
               tp.mul(d0, tp.mul(om, om))));
    const int deriv = tp.div(num, tp.mul(denom, denom));
    // base logpdf(x) - log deriv
    const int half_x2 = tp.affine(tp.mul(x, x), 0.5, 0.0);
    const int ll = tp.affine(tp.add(tp.log_(deriv), half_x2), -1.0,
                             -0.5 * std::log(2.0 * M_PI));
    return ll;
}

}  // namespace

SplineFlow::SplineFlow(FlowArchitecture arch, RandomStream& rng) : arch_(arch) {
    if (arch_.dim < 1 || arch_.bins < 2)
        throw Error("config-invalid", "flow needs dim >= 1 and bins >= 2");
    const NetLayout lo(arch_);
    phi_.assign(lo.total, 0.0);
    white_mean_.assign(static_cast<std::size_t>(arch_.dim), 0.0);
    white_scale_.assign(static_cast<std::size_t>(arch_.dim), 1.0);
    if (arch_.dim >= 2) {
        // Hidden layers get small random weights to break symmetry; the final
        // layer is zeroed so the flow starts at the identity.
        const double s_in = 1.0 / std::sqrt(static_cast<double>(arch_.dim));
        for (int a = 0; a < lo.hidden; ++a)
            for (int i = 0; i < lo.dim; ++i)
                if (lo.mask_in(a, i))
                    phi_[lo.w_in + static_cast<std::size_t>(a * lo.dim + i)] =
                        s_in * rng.normal();
        const double s_h = 1.0 / std::sqrt(static_cast<double>(arch_.hidden));
        for (int blk = 0; blk < lo.blocks; ++blk)
            for (int a = 0; a < lo.hidden; ++a)
                for (int b = 0; b < lo.hidden; ++b)
                    if (lo.mask_hh(a, b)) {
                        phi_[lo.v[blk] + static_cast<std::size_t>(a * lo.hidden + b)] =
                            s_h * rng.normal();
                        phi_[lo.u[blk] + static_cast<std::size_t>(a * lo.hidden + b)] =
                            s_h * rng.normal();
                    }
    }
}

void SplineFlow::set_whitening(Vector mean, Vector scale) {
    white_mean_ = std::move(mean);
    white_scale_ = std::move(scale);
}

std::pair<Vector, double> SplineFlow::forward(const Vector& z) const {
    const NetLayout lo(arch_);
    const auto d = static_cast<std::size_t>(arch_.dim);
    Vector u(d, 0.0);
    double log_det = 0.0;
    NetBuffers buf;
    for (std::size_t j = 0; j < d; ++j) {
        const double* raw = nullptr;
        if (j == 0) {
            raw = phi_.data() + lo.head;
        } else {
            // masking guarantees the slice for coordinate j only reads u_{<j}
            net_forward(lo, phi_, u, buf);
            raw = buf.out.data() + (j - 1) * static_cast<std::size_t>(lo.pcoord);
        }
        if (std::abs(z[j]) >= arch_.tail_bound) {
            u[j] = z[j];
        } else {
            const Knots kn = make_knots(raw, arch_);
            const auto [y, ld] = rqs_forward(z[j], kn);
            u[j] = y;
            log_det += ld;
        }
        log_det += std::log(white_scale_[j]);
    }
    Vector theta(d);
    for (std::size_t j = 0; j < d; ++j)
        theta[j] = white_mean_[j] + white_scale_[j] * u[j];
    return {theta, log_det};
}

std::pair<Vector, double> SplineFlow::inverse(const Vector& theta) const {
    const NetLayout lo(arch_);
    const auto d = static_cast<std::size_t>(arch_.dim);
    Vector u(d);
    for (std::size_t j = 0; j < d; ++j)
        u[j] = (theta[j] - white_mean_[j]) / white_scale_[j];
    NetBuffers buf;
    if (arch_.dim >= 2) net_forward(lo, phi_, u, buf);
    Vector z(d);
    double log_det_inv = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double* raw = j == 0
                                ? phi_.data() + lo.head
                                : buf.out.data() + (j - 1) * static_cast<std::size_t>(lo.pcoord);
        if (std::abs(u[j]) >= arch_.tail_bound) {
            z[j] = u[j];
        } else {
            const Knots kn = make_knots(raw, arch_);
            const auto [x, ld] = rqs_inverse(u[j], kn);
            z[j] = x;
            log_det_inv -= ld;
        }
        log_det_inv -= std::log(white_scale_[j]);
    }
    return {z, log_det_inv};
}

double SplineFlow::logpdf(const Vector& theta) const {
    const auto [z, log_det_inv] = inverse(theta);
    double base = 0.0;
    for (double v : z) base += -0.5 * std::log(2.0 * M_PI) - 0.5 * v * v;
    return base + log_det_inv;
}

Vector SplineFlow::sample(RandomStream& rng) const {
    Vector z(static_cast<std::size_t>(arch_.dim));
    for (double& v : z) v = rng.normal();
    return forward(z).first;
}

double SplineFlow::objective_and_gradient(const Matrix& thetas,
                                          Vector& grad) const {
    const NetLayout lo(arch_);
    const auto d = static_cast<std::size_t>(arch_.dim);
    grad.assign(phi_.size(), 0.0);
    double objective = 0.0;
    double white_const = 0.0;
    for (std::size_t j = 0; j < d; ++j) white_const -= std::log(white_scale_[j]);

    Tape tp;
    std::vector<int> raw_ids;
    NetBuffers buf;
    Vector dout(static_cast<std::size_t>(std::max(lo.out, 1)));
    for (std::size_t i = 0; i < thetas.rows; ++i) {
        Vector u(d);
        for (std::size_t j = 0; j < d; ++j)
            u[j] = (thetas(i, j) - white_mean_[j]) / white_scale_[j];
        if (arch_.dim >= 2) {
            net_forward(lo, phi_, u, buf);
            std::fill(dout.begin(), dout.end(), 0.0);
        }
        bool net_touched = false;
        for (std::size_t j = 0; j < d; ++j) {
            const double* raw =
                j == 0 ? phi_.data() + lo.head
                       : buf.out.data() + (j - 1) * static_cast<std::size_t>(lo.pcoord);
            if (std::abs(u[j]) >= arch_.tail_bound) {
                objective += -0.5 * std::log(2.0 * M_PI) - 0.5 * u[j] * u[j];
                continue;
            }
            tp.clear();
            const int ll = tape_coordinate_ll(tp, raw, u[j], arch_, raw_ids);
            objective += tp.v(ll);
            tp.backward(ll);
            if (j == 0) {
                for (int p = 0; p < lo.pcoord; ++p)
                    grad[lo.head + static_cast<std::size_t>(p)] +=
                        tp.grad(raw_ids[static_cast<std::size_t>(p)]);
            } else {
                net_touched = true;
                const std::size_t off = (j - 1) * static_cast<std::size_t>(lo.pcoord);
                for (int p = 0; p < lo.pcoord; ++p)
                    dout[off + static_cast<std::size_t>(p)] +=
                        tp.grad(raw_ids[static_cast<std::size_t>(p)]);
            }
        }
        if (net_touched) net_backward(lo, phi_, u, buf, dout, grad);
        objective += white_const;
    }
    return objective;
}

std::string SplineFlow::to_json_string() const {
    nlohmann::json j;
    j["dim"] = arch_.dim;
    j["bins"] = arch_.bins;
    j["tail_bound"] = arch_.tail_bound;
    j["hidden"] = arch_.hidden;
    j["blocks"] = arch_.blocks;
    j["white_mean"] = white_mean_;
    j["white_scale"] = white_scale_;
    j["phi"] = phi_;
    return j.dump();
}

struct FlowAccess {
    static SplineFlow build(FlowArchitecture arch, Vector phi, Vector mean,
                            Vector scale) {
        SplineFlow f;
        f.arch_ = arch;
        f.phi_ = std::move(phi);
        f.white_mean_ = std::move(mean);
        f.white_scale_ = std::move(scale);
        return f;
    }
};

SplineFlow SplineFlow::from_json_string(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    FlowArchitecture arch;
    arch.dim = j.at("dim").get<int>();
    arch.bins = j.at("bins").get<int>();
    arch.tail_bound = j.at("tail_bound").get<double>();
    arch.hidden = j.at("hidden").get<int>();
    arch.blocks = j.at("blocks").get<int>();
    auto phi = j.at("phi").get<Vector>();
    const NetLayout lo(arch);
    if (phi.size() != lo.total)
        throw Error("config-invalid", "flow parameter vector has wrong length");
    return FlowAccess::build(arch, std::move(phi),
                             j.at("white_mean").get<Vector>(),
                             j.at("white_scale").get<Vector>());
}

FlowTrainResult train_flow(const SplineFlow& start, const Matrix& d_train,
                           const Matrix& d_test, const FlowTrainConfig& cfg,
                           RandomStream& rng) {
    if (d_train.rows == 0 || d_test.rows == 0)
        throw Error("insufficient-data", "flow training needs train and test rows");
    SplineFlow flow = start;
    const std::size_t n = d_train.rows;
    if (cfg.rewhiten) {
        Vector mean = column_mean(d_train);
        Matrix cov = sample_covariance(d_train, mean);
        Vector scale(d_train.cols);
        for (std::size_t j = 0; j < d_train.cols; ++j) {
            const double sd = std::sqrt(std::max(cov(j, j), 0.0));
            scale[j] = sd > 1e-12 ? sd : 1.0;
        }
        flow.set_whitening(std::move(mean), std::move(scale));
    }

    auto test_objective = [&](const SplineFlow& f) {
        double s = 0.0;
        for (std::size_t i = 0; i < d_test.rows; ++i) s += f.logpdf(d_test.row(i));
        return s;
    };

    FlowTrainResult result{flow, 0.0, {}, 0};
    result.best_test_objective = test_objective(flow);
    result.test_objective_trace.push_back(result.best_test_objective);

    const std::size_t batch =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.max_batch), n);
    Vector m(flow.parameters().size(), 0.0), v(flow.parameters().size(), 0.0);
    long step = 0;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Vector grad;
    Matrix batch_data(batch, d_train.cols);
    int patience = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
        for (std::size_t begin = 0; begin + batch <= n; begin += batch) {
            for (std::size_t b = 0; b < batch; ++b)
                batch_data.set_row(b, d_train.row(perm[begin + b]));
            const double obj = flow.objective_and_gradient(batch_data, grad);
            if (!std::isfinite(obj))
                throw Error("training-diverged", "non-finite flow training loss");
            ++step;
            Vector& phi = flow.parameters();
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < phi.size(); ++p) {
                const double g = grad[p] / static_cast<double>(batch);
                m[p] = cfg.beta1 * m[p] + (1.0 - cfg.beta1) * g;
                v[p] = cfg.beta2 * v[p] + (1.0 - cfg.beta2) * g * g;
                phi[p] += cfg.learning_rate * (m[p] / bc1) /
                          (std::sqrt(v[p] / bc2) + cfg.adam_eps);
            }
        }
        result.epochs_run = epoch + 1;
        const double t_obj = test_objective(flow);
        if (!std::isfinite(t_obj))
            throw Error("training-diverged", "non-finite flow test objective");
        result.test_objective_trace.push_back(t_obj);
        if (t_obj > result.best_test_objective) {
            result.best_test_objective = t_obj;
            result.flow = flow;
            patience = 0;
        } else if (++patience >= cfg.patience) {
            break;
        }
    }
    return result;
}

}  // namespace abcsmc
