#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "appraisal/features.hpp"
#include "appraisal/linear.hpp"
#include "appraisal/rng.hpp"

namespace testing {

using namespace appraisal;

using Dense = std::vector<std::vector<double>>;

struct Problem {
    std::string name;
    Dense X;
    std::vector<bool> y;
    double C = 1.0;

    std::vector<SparseVector> sparse() const {
        std::vector<SparseVector> out;
        for (const auto& row : X) {
            std::vector<SparseVector::Entry> e;
            for (std::size_t j = 0; j < row.size(); ++j) e.push_back({static_cast<std::uint32_t>(j), row[j]});
            out.emplace_back(row.size(), e);
        }
        return out;
    }
};

inline double sgn(bool label) { return label ? 1.0 : -1.0; }

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double primal(const Problem& p, const std::vector<double>& w, double b, LossKind loss) {
    double s = 0;
    for (std::size_t i = 0; i < p.X.size(); ++i) {
        const double m = sgn(p.y[i]) * (dot(w, p.X[i]) + b);
        s += loss == LossKind::Hinge ? std::max(0.0, 1.0 - m) : log1pexp(-m);
    }
    return 0.5 * dot(w, w) + p.C * s;
}

/// Hinge oracle: accelerated projected gradient on the dual with the bias
/// constraint, then an exact bias line search. Returns the best primal value;
/// `certified_gap` receives the relative duality gap that bounds its error.
inline double hinge_reference(const Problem& p, double* certified_gap = nullptr) {
    const std::size_t n = p.X.size();
    Dense Q(n, std::vector<double>(n));
    double trace = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) Q[i][j] = sgn(p.y[i]) * sgn(p.y[j]) * dot(p.X[i], p.X[j]);
        trace += Q[i][i];
    }
    const double step = 1.0 / std::max(trace, 1e-12);
    auto project = [&](std::vector<double> z) {
        double hi = p.C, lo = -p.C;
        for (double v : z) hi = std::max(hi, std::abs(v) + p.C), lo = -hi;
        auto at = [&](double lam) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += sgn(p.y[i]) * std::clamp(z[i] - lam * sgn(p.y[i]), 0.0, p.C);
            return s;
        };
        for (int it = 0; it < 200 && hi - lo > 0; ++it) {
            const double mid = 0.5 * (lo + hi);
            (at(mid) > 0 ? lo : hi) = mid;
        }
        const double lam = 0.5 * (lo + hi);
        for (std::size_t i = 0; i < n; ++i) z[i] = std::clamp(z[i] - lam * sgn(p.y[i]), 0.0, p.C);
        return z;
    };
    auto dual = [&](const std::vector<double>& a) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) s += 0.5 * a[i] * Q[i][j] * a[j];
            s -= a[i];
        }
        return s;
    };
    auto primal_of = [&](const std::vector<double>& a) {
        std::vector<double> w(p.X[0].size(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w.size(); ++j) w[j] += a[i] * sgn(p.y[i]) * p.X[i][j];
        double best = INFINITY;
        for (std::size_t i = 0; i < n; ++i) best = std::min(best, primal(p, w, sgn(p.y[i]) - dot(w, p.X[i]), LossKind::Hinge));
        return best;
    };

    std::vector<double> a = project(std::vector<double>(n, 0.0)), prev = a, z = a;
    double t = 1, best_primal = INFINITY, gap = INFINITY;
    for (int it = 0; it < 400000; ++it) {
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = dot(Q[i], z) - 1.0;
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = z[i] - step * g[i];
        next = project(next);
        if (dual(next) > dual(a)) t = 1;  // adaptive restart
        const double t_next = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
        for (std::size_t i = 0; i < n; ++i) z[i] = next[i] + (t - 1) / t_next * (next[i] - a[i]);
        prev = a;
        a = next;
        t = t_next;
        if (it % 500 == 0) {
            best_primal = std::min(best_primal, primal_of(a));
            gap = best_primal + dual(a);
            if (gap <= 1e-11 * std::max(1.0, best_primal)) break;
        }
    }
    if (certified_gap) *certified_gap = gap / std::max(1.0, best_primal);
    return best_primal;
}

/// Logistic oracle: damped Newton on (w, b) with a dense solve.
inline double logistic_reference(const Problem& p) {
    const std::size_t d = p.X[0].size(), m = d + 1;
    std::vector<double> theta(m, 0.0);
    auto split = [&](const std::vector<double>& th) {
        return std::pair{std::vector<double>(th.begin(), th.begin() + static_cast<long>(d)), th[d]};
    };
    auto f = [&](const std::vector<double>& th) {
        auto [w, b] = split(th);
        return primal(p, w, b, LossKind::Logistic);
    };
    for (int it = 0; it < 200; ++it) {
        auto [w, b] = split(theta);
        std::vector<double> g(m, 0.0);
        Dense H(m, std::vector<double>(m, 0.0));
        for (std::size_t j = 0; j < d; ++j) g[j] = w[j], H[j][j] = 1.0;
        for (std::size_t i = 0; i < p.X.size(); ++i) {
            std::vector<double> xt = p.X[i];
            xt.push_back(1.0);
            const double y = sgn(p.y[i]);
            const double s = 1.0 / (1.0 + std::exp(y * (dot(w, p.X[i]) + b)));
            for (std::size_t j = 0; j < m; ++j) {
                g[j] -= p.C * y * s * xt[j];
                for (std::size_t k = 0; k < m; ++k) H[j][k] += p.C * s * (1 - s) * xt[j] * xt[k];
            }
        }
        // Gaussian elimination with partial pivoting.
        std::vector<double> step = g;
        for (std::size_t c = 0; c < m; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < m; ++r)
                if (std::abs(H[r][c]) > std::abs(H[piv][c])) piv = r;
            std::swap(H[c], H[piv]);
            std::swap(step[c], step[piv]);
            for (std::size_t r = c + 1; r < m; ++r) {
                const double k = H[r][c] / H[c][c];
                for (std::size_t q = c; q < m; ++q) H[r][q] -= k * H[c][q];
                step[r] -= k * step[c];
            }
        }
        for (std::size_t c = m; c-- > 0;) {
            for (std::size_t q = c + 1; q < m; ++q) step[c] -= H[c][q] * step[q];
            step[c] /= H[c][c];
        }
        double eta = 1.0;
        const double f0 = f(theta);
        std::vector<double> cand(m);
        for (;;) {
            for (std::size_t j = 0; j < m; ++j) cand[j] = theta[j] - eta * step[j];
            if (f(cand) <= f0 || eta < 1e-12) break;
            eta *= 0.5;
        }
        theta = cand;
    }
    return f(theta);
}

inline double gauss(Rng& rng, double mean, double sd) {
    const double u = 1.0 - rng.uniform(), v = rng.uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

inline std::vector<Problem> reference_problems() {
    std::vector<Problem> out;
    Rng rng(2024);
    {
        Problem p{"random 3-d, 20 points"};
        for (int i = 0; i < 20; ++i) {
            std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            p.y.push_back(x[0] + 0.5 * x[1] - 0.2 + gauss(rng, 0, 0.4) > 0);
            p.X.push_back(x);
        }
        out.push_back(p);
    }
    out.push_back(Problem{"separable 1-d", {{1.0}, {-1.0}}, {true, false}});
    {
        Problem p{"sparse 3-d separable, 12 points"};
        for (int i = 0; i < 12; ++i) {
            std::vector<double> x(3, 0.0);
            for (auto& v : x)
                if (rng.uniform() < 0.4) v = std::floor(rng.uniform(1, 4));
            const bool label = i % 2 == 0;
            x[label ? 0 : 1] += 1.0;
            p.X.push_back(x);
            p.y.push_back(label);
        }
        out.push_back(p);
    }
    {
        Problem p{"2-d overlapping classes, C=10"};
        p.C = 10.0;
        for (int i = 0; i < 20; ++i) {
            const bool label = i % 3 != 0;
            p.X.push_back({gauss(rng, label ? 0.5 : -0.5, 1.0), gauss(rng, 0, 1.0)});
            p.y.push_back(label);
        }
        out.push_back(p);
    }
    {
        Problem p{"3-d with conflicting duplicates, C=0.1"};
        p.C = 0.1;
        for (int i = 0; i < 15; ++i) {
            std::vector<double> x{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
            p.X.push_back(x);
            p.y.push_back(rng.uniform() < 0.6);
            if (i % 5 == 0) {
                p.X.push_back(x);
                p.y.push_back(!p.y.back());
            }
        }
        out.push_back(p);
    }
    return out;
}

/// Pairwise AUC by enumeration, ties counted as half.
inline double brute_auc(const std::vector<double>& s, const std::vector<bool>& g) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!g[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (g[j]) continue;
            pairs += 1;
            wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return wins / pairs;
}

}  // namespace testing
