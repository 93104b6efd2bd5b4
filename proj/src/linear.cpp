#include "appraisal/linear.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "appraisal/errors.hpp"

namespace appraisal {

namespace {

void check_inputs(std::span<const SparseVector> X, const std::vector<bool>& y) {
    if (X.empty()) throw TrainingError("empty training set");
    if (X.size() != y.size()) {
        throw ShapeError("feature rows (" + std::to_string(X.size()) + ") and labels (" + std::to_string(y.size()) +
                         ") differ in length");
    }
    const auto dim = X[0].dim();
    std::size_t positives = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].dim() != dim) throw ShapeError("feature rows have inconsistent dimensions");
        for (const auto& [idx, v] : X[i]) {
            if (!std::isfinite(v)) throw DataError("non-finite feature value in row " + std::to_string(i));
        }
        positives += y[i] ? 1 : 0;
    }
    if (positives == 0 || positives == X.size()) throw TrainingError("training labels contain a single class");
}

void check_dim(std::size_t expected, const SparseVector& x) {
    if (x.dim() != expected) {
        throw ShapeError("feature dimension " + std::to_string(x.dim()) + " does not match model dimension " +
                         std::to_string(expected));
    }
}

double dot(const std::vector<double>& w, const SparseVector& x) {
    double s = 0;
    for (const auto& [i, v] : x) s += w[i] * v;
    return s;
}

double sq_norm(const std::vector<double>& w) {
    double s = 0;
    for (double v : w) s += v * v;
    return s;
}

/// log(1 + exp(-m)) without overflow.
double log_loss(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

/// sigma(-m) = 1 / (1 + exp(m)).
double sigmoid_neg(double m) {
    if (m >= 0) {
        const double e = std::exp(-m);
        return e / (1 + e);
    }
    return 1 / (1 + std::exp(m));
}

struct BiasFit {
    double bias = 0;
    double hinge_sum = 0;
};

/// Exact minimizer of sum_i max(0, 1 - y_i (s_i + b)) over b. Breakpoints sit at
/// y_i - s_i; the slope is -n_pos after none and rises by one at each, so the
/// optimum is the interval between the n_pos-th and (n_pos+1)-th breakpoints.
BiasFit best_hinge_bias(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<double> br(s.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        br[i] = y[i] - s[i];
        n_pos += y[i] > 0 ? 1 : 0;
    }
    std::sort(br.begin(), br.end());
    const double lo = br[n_pos - 1];
    const double hi = n_pos < br.size() ? br[n_pos] : lo;
    BiasFit fit;
    fit.bias = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < s.size(); ++i) fit.hinge_sum += std::max(0.0, 1.0 - y[i] * (s[i] + fit.bias));
    return fit;
}

class KernelColumns {
public:
    KernelColumns(std::span<const SparseVector> X) : X_(X) {
        const auto dim = X.empty() ? 0 : X[0].dim();
        postings_.resize(dim);
        for (std::size_t t = 0; t < X.size(); ++t) {
            for (const auto& [f, v] : X[t]) postings_[f].emplace_back(static_cast<std::uint32_t>(t), v);
        }
        const std::size_t budget_doubles = 1u << 25;  // 256 MiB
        max_cached_ = std::max<std::size_t>(2, budget_doubles / std::max<std::size_t>(1, X.size()));
    }

    const std::vector<double>& column(std::size_t i) {
        if (auto it = cache_.find(i); it != cache_.end()) return it->second;
        std::vector<double> col(X_.size(), 0.0);
        for (const auto& [f, v] : X_[i]) {
            for (const auto& [t, u] : postings_[f]) col[t] += v * u;
        }
        if (cache_.size() < max_cached_) return cache_.emplace(i, std::move(col)).first->second;
        scratch_[i % 2] = std::move(col);
        return scratch_[i % 2];
    }

private:
    std::span<const SparseVector> X_;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> postings_;
    std::unordered_map<std::size_t, std::vector<double>> cache_;
    std::size_t max_cached_ = 0;
    std::vector<double> scratch_[2];
};

LinearModel train_hinge(std::span<const SparseVector> X, const std::vector<bool>& labels,
                        const LinearTrainOptions& opt, LinearTrainReport& report) {
    const std::size_t n = X.size();
    const std::size_t dim = X[0].dim();
    const double C = opt.C;
    constexpr double kTau = 1e-12;
    constexpr double kViolationEps = 1e-12;

    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] ? 1 : -1;
    std::vector<double> qd(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (const auto& [f, v] : X[i]) s += v * v;
        qd[i] = s;
    }

    KernelColumns kernel(X);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    std::vector<double> w(dim, 0.0);

    LinearModel best{std::vector<double>(dim, 0.0), 0.0, LossKind::Hinge, C};
    double best_primal = std::numeric_limits<double>::infinity();

    auto is_upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto is_lower = [&](std::size_t t) { return alpha[t] <= 0; };

    // Returns the relative duality gap after refreshing w, the gradient and the incumbent.
    auto checkpoint = [&]() {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] == 0) continue;
            for (const auto& [f, v] : X[t]) w[f] += alpha[t] * y[t] * v;
        }
        std::vector<double> s(n);
        for (std::size_t t = 0; t < n; ++t) {
            s[t] = dot(w, X[t]);
            grad[t] = y[t] * s[t] - 1.0;
        }
        const double half_w2 = 0.5 * sq_norm(w);
        const auto fit = best_hinge_bias(s, y);
        const double primal = half_w2 + C * fit.hinge_sum;
        const double dual = std::accumulate(alpha.begin(), alpha.end(), 0.0) - half_w2;
        if (primal < best_primal) {
            best_primal = primal;
            best.weights = w;
            best.bias = fit.bias;
        }
        report.objective_trace.push_back(best_primal);
        return std::max(0.0, best_primal - dual) / std::max(std::abs(best_primal), 1e-300);
    };

    bool optimal = false;
    for (report.epochs = 0; report.epochs < opt.max_epochs && !optimal; ++report.epochs) {
        for (std::size_t iter = 0; iter < n; ++iter) {
            double gmax = -std::numeric_limits<double>::infinity();
            double gmax2 = -std::numeric_limits<double>::infinity();
            std::ptrdiff_t i = -1;
            for (std::size_t t = 0; t < n; ++t) {
                if (y[t] == 1) {
                    if (!is_upper(t) && -grad[t] >= gmax) gmax = -grad[t], i = static_cast<std::ptrdiff_t>(t);
                } else {
                    if (!is_lower(t) && grad[t] >= gmax) gmax = grad[t], i = static_cast<std::ptrdiff_t>(t);
                }
            }
            if (i < 0) {
                optimal = true;
                break;
            }
            const auto& ki = kernel.column(static_cast<std::size_t>(i));
            std::ptrdiff_t j = -1;
            double obj_min = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < n; ++t) {
                const double qit = y[i] * y[t] * ki[t];
                if (y[t] == 1) {
                    if (is_lower(t)) continue;
                    const double diff = gmax + grad[t];
                    gmax2 = std::max(gmax2, grad[t]);
                    if (diff > 0) {
                        const double quad = qd[i] + qd[t] - 2.0 * y[i] * qit;
                        const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
                        if (obj <= obj_min) obj_min = obj, j = static_cast<std::ptrdiff_t>(t);
                    }
                } else {
                    if (is_upper(t)) continue;
                    const double diff = gmax - grad[t];
                    gmax2 = std::max(gmax2, -grad[t]);
                    if (diff > 0) {
                        const double quad = qd[i] + qd[t] + 2.0 * y[i] * qit;
                        const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
                        if (obj <= obj_min) obj_min = obj, j = static_cast<std::ptrdiff_t>(t);
                    }
                }
            }
            if (gmax + gmax2 < kViolationEps || j < 0) {
                optimal = true;
                break;
            }

            const auto& kj_ref = kernel.column(static_cast<std::size_t>(j));
            const std::vector<double> kj = kj_ref;  // cache may recycle scratch slots
            const auto& ki2 = kernel.column(static_cast<std::size_t>(i));
            const auto ui = static_cast<std::size_t>(i);
            const auto uj = static_cast<std::size_t>(j);
            const double qij = y[ui] * y[uj] * ki2[uj];
            const double old_i = alpha[ui];
            const double old_j = alpha[uj];
            if (y[ui] != y[uj]) {
                double quad = qd[ui] + qd[uj] + 2 * qij;
                if (quad <= 0) quad = kTau;
                const double delta = (-grad[ui] - grad[uj]) / quad;
                const double diff = alpha[ui] - alpha[uj];
                alpha[ui] += delta;
                alpha[uj] += delta;
                if (diff > 0) {
                    if (alpha[uj] < 0) alpha[uj] = 0, alpha[ui] = diff;
                } else {
                    if (alpha[ui] < 0) alpha[ui] = 0, alpha[uj] = -diff;
                }
                if (diff > 0) {
                    if (alpha[ui] > C) alpha[ui] = C, alpha[uj] = C - diff;
                } else {
                    if (alpha[uj] > C) alpha[uj] = C, alpha[ui] = C + diff;
                }
            } else {
                double quad = qd[ui] + qd[uj] - 2 * qij;
                if (quad <= 0) quad = kTau;
                const double delta = (grad[ui] - grad[uj]) / quad;
                const double sum = alpha[ui] + alpha[uj];
                alpha[ui] -= delta;
                alpha[uj] += delta;
                if (sum > C) {
                    if (alpha[ui] > C) alpha[ui] = C, alpha[uj] = sum - C;
                } else {
                    if (alpha[uj] < 0) alpha[uj] = 0, alpha[ui] = sum;
                }
                if (sum > C) {
                    if (alpha[uj] > C) alpha[uj] = C, alpha[ui] = sum - C;
                } else {
                    if (alpha[ui] < 0) alpha[ui] = 0, alpha[uj] = sum;
                }
            }
            const double di = alpha[ui] - old_i;
            const double dj = alpha[uj] - old_j;
            for (std::size_t t = 0; t < n; ++t) {
                grad[t] += y[t] * (y[ui] * ki2[t] * di + y[uj] * kj[t] * dj);
            }
        }
        report.gap = checkpoint();
        if (report.gap <= opt.tolerance) optimal = true;
    }
    report.converged = optimal || report.gap <= opt.tolerance;
    return best;
}

LinearModel train_logistic(std::span<const SparseVector> X, const std::vector<bool>& labels,
                           const LinearTrainOptions& opt, LinearTrainReport& report) {
    const std::size_t n = X.size();
    const std::size_t dim = X[0].dim();
    const double C = opt.C;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] ? 1.0 : -1.0;

    std::vector<double> w(dim, 0.0);
    double b = 0;
    std::vector<double> z(n);

    auto margins = [&](const std::vector<double>& ww, double bb, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = dot(ww, X[i]) + bb;
    };
    auto objective = [&](const std::vector<double>& ww, const std::vector<double>& zz) {
        double loss = 0;
        for (std::size_t i = 0; i < n; ++i) loss += log_loss(y[i] * zz[i]);
        return 0.5 * sq_norm(ww) + C * loss;
    };

    margins(w, b, z);
    double f = objective(w, z);
    std::vector<double> gw(dim), d(n), coef(n);
    std::vector<double> pw(dim), rw(dim), dw(dim), hw(dim), trial_w(dim);
    std::vector<double> trial_z(n), u(n);

    auto hess_vec = [&](const std::vector<double>& vw, double vb, std::vector<double>& out_w, double& out_b) {
        for (std::size_t i = 0; i < n; ++i) u[i] = d[i] * (dot(vw, X[i]) + vb);
        out_w = vw;
        out_b = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (u[i] == 0) continue;
            for (const auto& [k, v] : X[i]) out_w[k] += C * u[i] * v;
            out_b += C * u[i];
        }
    };

    bool converged = false;
    for (report.epochs = 0; report.epochs < opt.max_epochs; ++report.epochs) {
        // gradient and curvature
        gw = w;
        double gb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = y[i] * z[i];
            const double s = sigmoid_neg(m);
            coef[i] = -C * s * y[i];
            d[i] = s * (1 - s);
            for (const auto& [k, v] : X[i]) gw[k] += coef[i] * v;
            gb += coef[i];
        }
        const double gnorm = std::sqrt(sq_norm(gw) + gb * gb);
        if (gnorm == 0) {
            converged = true;
            report.gap = 0;
            break;
        }

        // conjugate gradient on H p = -g
        std::fill(pw.begin(), pw.end(), 0.0);
        double pb = 0;
        for (std::size_t k = 0; k < dim; ++k) rw[k] = -gw[k];
        double rb = -gb;
        dw = rw;
        double db = rb;
        double rr = sq_norm(rw) + rb * rb;
        const double cg_tol = std::min(0.1, std::sqrt(gnorm)) * gnorm;
        for (int cg = 0; cg < 1000 && std::sqrt(rr) > cg_tol; ++cg) {
            double hb = 0;
            hess_vec(dw, db, hw, hb);
            double dhd = hb * db;
            for (std::size_t k = 0; k < dim; ++k) dhd += dw[k] * hw[k];
            if (dhd <= 0) break;
            const double a = rr / dhd;
            for (std::size_t k = 0; k < dim; ++k) {
                pw[k] += a * dw[k];
                rw[k] -= a * hw[k];
            }
            pb += a * db;
            rb -= a * hb;
            const double rr_new = sq_norm(rw) + rb * rb;
            const double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t k = 0; k < dim; ++k) dw[k] = rw[k] + beta * dw[k];
            db = rb + beta * db;
        }
        double gp = gb * pb;
        for (std::size_t k = 0; k < dim; ++k) gp += gw[k] * pw[k];
        if (gp >= 0) {  // CG made no progress; fall back to steepest descent
            for (std::size_t k = 0; k < dim; ++k) pw[k] = -gw[k];
            pb = -gb;
            gp = -(gnorm * gnorm);
        }
        // Newton decrement estimate of f - f*
        report.gap = 0.5 * -gp / std::max(std::abs(f), 1e-300);
        if (report.gap <= opt.tolerance) {
            converged = true;
            break;
        }

        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t k = 0; k < dim; ++k) trial_w[k] = w[k] + step * pw[k];
            const double trial_b = b + step * pb;
            margins(trial_w, trial_b, trial_z);
            const double trial_f = objective(trial_w, trial_z);
            if (trial_f <= f + 1e-4 * step * gp) {
                if (trial_f <= f) {
                    w.swap(trial_w);
                    b = trial_b;
                    z.swap(trial_z);
                    f = trial_f;
                }
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        report.objective_trace.push_back(f);
        if (!accepted) {
            // no representable decrease left
            converged = report.gap <= 1e-9;
            ++report.epochs;
            break;
        }
    }
    report.converged = converged;
    return LinearModel{std::move(w), b, LossKind::Logistic, C};
}

}  // namespace

Prediction NaiveBayesModel::predict(const SparseVector& x) const {
    check_dim(dim(), x);
    double yes = log_prior[1];
    double no = log_prior[0];
    for (const auto& [i, v] : x) {
        yes += v * log_likelihood[1][i];
        no += v * log_likelihood[0][i];
    }
    const double score = yes - no;
    return {score > 0, score};
}

NaiveBayesModel train_naive_bayes(std::span<const SparseVector> X, const std::vector<bool>& y, double alpha) {
    check_inputs(X, y);
    if (!(alpha > 0) || !std::isfinite(alpha)) throw ConfigError("naive Bayes smoothing must be positive");
    const std::size_t dim = X[0].dim();
    std::array<std::vector<double>, 2> counts{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    std::array<std::size_t, 2> docs{0, 0};
    for (std::size_t i = 0; i < X.size(); ++i) {
        const int c = y[i] ? 1 : 0;
        ++docs[c];
        for (const auto& [f, v] : X[i]) {
            if (v < 0) throw DataError("naive Bayes requires non-negative features (row " + std::to_string(i) + ")");
            counts[c][f] += v;
        }
    }
    NaiveBayesModel model;
    model.alpha = alpha;
    const double n = static_cast<double>(X.size());
    for (int c = 0; c < 2; ++c) {
        model.log_prior[c] = std::log(static_cast<double>(docs[c]) / n);
        const double total = std::accumulate(counts[c].begin(), counts[c].end(), 0.0);
        const double log_denominator = std::log(total + alpha * static_cast<double>(dim));
        auto& row = model.log_likelihood[c];
        row.resize(dim);
        for (std::size_t f = 0; f < dim; ++f) row[f] = std::log(counts[c][f] + alpha) - log_denominator;
    }
    return model;
}

std::string to_string(LossKind loss) { return loss == LossKind::Hinge ? "hinge" : "logistic"; }

double LinearModel::margin(const SparseVector& x) const {
    check_dim(dim(), x);
    return dot(weights, x) + bias;
}

Prediction LinearModel::predict(const SparseVector& x) const {
    const double s = margin(x);
    return {s > 0, s};
}

double linear_objective(const LinearModel& model, std::span<const SparseVector> X, const std::vector<bool>& y) {
    double loss = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double m = (y[i] ? 1.0 : -1.0) * model.margin(X[i]);
        loss += model.loss == LossKind::Hinge ? std::max(0.0, 1.0 - m) : log_loss(m);
    }
    return 0.5 * sq_norm(model.weights) + model.C * loss;
}

LinearModel train_linear(std::span<const SparseVector> X, const std::vector<bool>& y, LossKind loss,
                         const LinearTrainOptions& options, LinearTrainReport* report) {
    check_inputs(X, y);
    if (!(options.C > 0) || !std::isfinite(options.C)) throw ConfigError("C must be positive");
    LinearTrainReport local;
    LinearTrainReport& r = report ? *report : local;
    r = LinearTrainReport{};
    auto model = loss == LossKind::Hinge ? train_hinge(X, y, options, r) : train_logistic(X, y, options, r);
    if (!r.converged) {
        std::cerr << "warning: convergence: " << to_string(loss) << " trainer stopped after " << r.epochs
                  << " epochs with relative gap " << r.gap << " (tolerance " << options.tolerance << ")\n";
    }
    return model;
}

bool majority_vote(const std::vector<bool>& votes) {
    if (votes.empty()) throw UsageError("majority vote over zero predictions");
    const auto yes = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), true));
    const auto no = votes.size() - yes;
    if (yes != no) return yes > no;
    return votes.front();
}

Prediction predict(const Classifier& model, const SparseVector& x) {
    return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

Prediction EnsembleModel::predict(const SparseVector& x) const {
    if (members.empty()) throw UsageError("ensemble has no members");
    std::vector<bool> votes;
    votes.reserve(members.size());
    for (const auto& m : members) votes.push_back(appraisal::predict(m, x).label);
    const auto yes = static_cast<double>(std::count(votes.begin(), votes.end(), true));
    return {majority_vote(votes), yes / static_cast<double>(votes.size())};
}

}  // namespace appraisal
