#include "abcsmc/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "abcsmc/error.hpp"

namespace abcsmc {

namespace {

double ground_distance(const Matrix& a, std::size_t i, const Matrix& b,
                       std::size_t j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
        const double d = a(i, k) - b(j, k);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double sorted_1d(const Matrix& a, const Matrix& b, int order) {
    Vector xa(a.rows), xb(b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) xa[i] = a(i, 0);
    for (std::size_t i = 0; i < b.rows; ++i) xb[i] = b(i, 0);
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    double total = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i)
        total += std::pow(std::abs(xa[i] - xb[i]), order);
    total /= static_cast<double>(xa.size());
    return std::pow(total, 1.0 / order);
}

// Dense transport network simplex. Sources 0..n-1 (supply 1/n), sinks
// n..n+m-1 (demand 1/m). Supplies carry tiny distinct perturbations so
// pivots stay nondegenerate; the final cost is re-evaluated with exact
// supplies on the optimal basis tree.
class TransportSimplex {
public:
    TransportSimplex(const Matrix& a, const Matrix& b, int order)
        : a_(a), b_(b), order_(order), n_(a.rows), m_(b.rows) {}

    double solve() {
        maybe_cache_costs();
        build_initial_basis();
        const std::size_t total_arcs = n_ * m_;
        const std::size_t block =
            std::max<std::size_t>(256, static_cast<std::size_t>(
                                           std::sqrt(static_cast<double>(total_arcs))));
        double max_cost = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < m_; ++j)
                max_cost = std::max(max_cost, cost(i, j));
        const double tol = 1e-12 * (1.0 + max_cost);

        const long pivot_limit = 10000 + 50 * static_cast<long>(n_ + m_);
        long pivots = 0;
        std::size_t cursor = 0;
        while (true) {
            rebuild_tree();
            // block pricing: scan blocks until one contains a negative
            // reduced cost, take the most negative in that block
            std::size_t scanned = 0;
            double best_r = -tol;
            long best_arc = -1;
            while (scanned < total_arcs) {
                const std::size_t stop = std::min(block, total_arcs - scanned);
                for (std::size_t s = 0; s < stop; ++s) {
                    const std::size_t arc = (cursor + scanned + s) % total_arcs;
                    const std::size_t i = arc / m_, j = arc % m_;
                    const double r = cost(i, j) - pi_[i] - pi_[n_ + j];
                    if (r < best_r) {
                        best_r = r;
                        best_arc = static_cast<long>(arc);
                    }
                }
                scanned += stop;
                if (best_arc >= 0) break;
            }
            cursor = (cursor + scanned) % total_arcs;
            if (best_arc < 0) break;  // optimal
            if (++pivots > pivot_limit)
                throw Error("solver-nonconvergence",
                            "network simplex exceeded its pivot budget");
            pivot(static_cast<std::size_t>(best_arc) / m_,
                  static_cast<std::size_t>(best_arc) % m_);
        }
        return exact_cost();
    }

private:
    struct Arc {
        std::size_t src, snk;  // src in [0,n), snk in [0,m)
        double flow = 0.0;
    };

    double cost(std::size_t i, std::size_t j) const {
        if (!cost_cache_.empty()) return cost_cache_[i * m_ + j];
        const double d = ground_distance(a_, i, b_, j);
        return order_ == 1 ? d : std::pow(d, order_);
    }

    void maybe_cache_costs() {
        if (n_ * m_ > 4'000'000) return;
        cost_cache_.resize(n_ * m_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < m_; ++j) {
                const double d = ground_distance(a_, i, b_, j);
                cost_cache_[i * m_ + j] = order_ == 1 ? d : std::pow(d, order_);
            }
    }

    void build_initial_basis() {
        const double delta = 1e-12 / static_cast<double>(n_);
        const double src_pert_total =
            delta * static_cast<double>(n_) * static_cast<double>(n_ + 1) / 2.0;
        const double dprime =
            2.0 * src_pert_total /
            (static_cast<double>(m_) * static_cast<double>(m_ + 1));
        supply_.resize(n_);
        demand_.resize(m_);
        for (std::size_t i = 0; i < n_; ++i)
            supply_[i] = 1.0 / static_cast<double>(n_) +
                         delta * static_cast<double>(i + 1);
        for (std::size_t j = 0; j < m_; ++j)
            demand_[j] = 1.0 / static_cast<double>(m_) +
                         dprime * static_cast<double>(j + 1);

        // northwest corner
        basic_.clear();
        Vector s = supply_, d = demand_;
        std::size_t i = 0, j = 0;
        while (i < n_ && j < m_) {
            const double f = std::min(s[i], d[j]);
            basic_.push_back(Arc{i, j, f});
            s[i] -= f;
            d[j] -= f;
            if (s[i] <= d[j])
                ++i;
            else
                ++j;
        }
        while (basic_.size() < n_ + m_ - 1)
            basic_.push_back(Arc{n_ - 1, m_ - 1, 0.0});
    }

    // parent pointers, per-node basic arc, and potentials from the root
    void rebuild_tree() {
        const std::size_t nn = n_ + m_;
        adj_.assign(nn, {});
        for (std::size_t k = 0; k < basic_.size(); ++k) {
            adj_[basic_[k].src].push_back(k);
            adj_[n_ + basic_[k].snk].push_back(k);
        }
        parent_.assign(nn, -1);
        parent_arc_.assign(nn, -1);
        pi_.assign(nn, 0.0);
        order_stack_.clear();
        order_stack_.push_back(0);
        std::vector<bool> seen(nn, false);
        seen[0] = true;
        for (std::size_t head = 0; head < order_stack_.size(); ++head) {
            const std::size_t x = order_stack_[head];
            for (const std::size_t k : adj_[x]) {
                const Arc& arc = basic_[k];
                const std::size_t other = x < n_ ? n_ + arc.snk : arc.src;
                if (seen[other]) continue;
                seen[other] = true;
                parent_[other] = static_cast<long>(x);
                parent_arc_[other] = static_cast<long>(k);
                pi_[other] = cost(arc.src, arc.snk) - pi_[x];
                order_stack_.push_back(other);
            }
        }
    }

    void pivot(std::size_t ei, std::size_t ej) {
        // collect tree paths from both endpoints to their LCA
        const std::size_t nn = n_ + m_;
        std::vector<char> mark(nn, 0);
        for (long x = static_cast<long>(ei); x >= 0; x = parent_[static_cast<std::size_t>(x)])
            mark[static_cast<std::size_t>(x)] = 1;
        long lca = static_cast<long>(n_ + ej);
        while (!mark[static_cast<std::size_t>(lca)]) lca = parent_[static_cast<std::size_t>(lca)];

        // Pushing theta along i -> j: on the j-side path (traversed child to
        // parent, i.e. away from j) an arc is forward when the child is its
        // source; on the i-side (traversed parent to child) when the parent is.
        struct CycleArc {
            std::size_t k;
            bool forward;
        };
        std::vector<CycleArc> cycle;
        for (long x = static_cast<long>(n_ + ej); x != lca; x = parent_[static_cast<std::size_t>(x)]) {
            const auto k = static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(x)]);
            const bool child_is_src = static_cast<std::size_t>(x) < n_;
            cycle.push_back(CycleArc{k, child_is_src});
        }
        for (long x = static_cast<long>(ei); x != lca; x = parent_[static_cast<std::size_t>(x)]) {
            const auto k = static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(x)]);
            const bool child_is_src = static_cast<std::size_t>(x) < n_;
            cycle.push_back(CycleArc{k, !child_is_src});
        }

        double theta = std::numeric_limits<double>::infinity();
        long leaving = -1;
        for (const auto& ca : cycle)
            if (!ca.forward && basic_[ca.k].flow < theta) {
                theta = basic_[ca.k].flow;
                leaving = static_cast<long>(ca.k);
            }
        if (leaving < 0)
            throw Error("solver-nonconvergence", "unbounded pivot cycle");
        for (const auto& ca : cycle)
            basic_[ca.k].flow += ca.forward ? theta : -theta;
        basic_[static_cast<std::size_t>(leaving)] = Arc{ei, ej, theta};
    }

    double exact_cost() {
        // re-solve the tree flows with unperturbed supplies, then price out
        const std::size_t nn = n_ + m_;
        rebuild_tree();
        Vector excess(nn);
        for (std::size_t i = 0; i < n_; ++i)
            excess[i] = 1.0 / static_cast<double>(n_);
        for (std::size_t j = 0; j < m_; ++j)
            excess[n_ + j] = -1.0 / static_cast<double>(m_);
        Vector flow(basic_.size(), 0.0);
        for (std::size_t idx = order_stack_.size(); idx-- > 1;) {
            const std::size_t x = order_stack_[idx];
            const auto k = static_cast<std::size_t>(parent_arc_[x]);
            // positive flow runs source -> sink
            const double f = x < n_ ? excess[x] : -excess[x];
            flow[k] = f;
            excess[static_cast<std::size_t>(parent_[x])] += excess[x];
            excess[x] = 0.0;
        }
        double total = 0.0;
        for (std::size_t k = 0; k < basic_.size(); ++k)
            total += std::max(flow[k], 0.0) * cost(basic_[k].src, basic_[k].snk);
        return total;
    }

    const Matrix& a_;
    const Matrix& b_;
    int order_;
    std::size_t n_, m_;
    Vector cost_cache_;
    Vector supply_, demand_;
    std::vector<Arc> basic_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<long> parent_;
    std::vector<long> parent_arc_;
    Vector pi_;
    std::vector<std::size_t> order_stack_;
};

}  // namespace

double wasserstein(const Matrix& a, const Matrix& b, int order) {
    if (a.cols != b.cols)
        throw Error("dimension-mismatch", "samples have different dimensions");
    if (a.rows == 0 || b.rows == 0)
        throw Error("dimension-mismatch", "samples must be non-empty");
    if (a.cols == 1 && a.rows == b.rows) return sorted_1d(a, b, order);
    TransportSimplex solver(a, b, order);
    const double total = solver.solve();
    return order == 1 ? total : std::pow(total, 1.0 / order);
}

}  // namespace abcsmc
