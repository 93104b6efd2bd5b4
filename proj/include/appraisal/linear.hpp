#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "appraisal/features.hpp"

namespace appraisal {

struct Prediction {
    bool label = false;
    /// Ranking score: posterior log-odds (NB), margin (linear), vote share
    /// (ensemble), constant prior (majority).
    double score = 0;
};

/// Multinomial NB. Index 0 is the "no" class, 1 is "yes".
struct NaiveBayesModel {
    double alpha = 1.0;
    std::array<double, 2> log_prior{};
    std::array<std::vector<double>, 2> log_likelihood;

    std::size_t dim() const { return log_likelihood[0].size(); }
    Prediction predict(const SparseVector& x) const;
};

/// Accepts fractional (e.g. tf-idf) "counts".
NaiveBayesModel train_naive_bayes(std::span<const SparseVector> X, const std::vector<bool>& y, double alpha = 1.0);

enum class LossKind { Hinge, Logistic };
std::string to_string(LossKind loss);

struct LinearModel {
    std::vector<double> weights;
    double bias = 0;
    LossKind loss = LossKind::Hinge;
    double C = 1.0;

    std::size_t dim() const { return weights.size(); }
    double margin(const SparseVector& x) const;
    Prediction predict(const SparseVector& x) const;
};

struct LinearTrainOptions {
    double C = 1.0;
    /// Relative optimality gap at which training stops (duality gap for
    /// hinge, gradient-norm bound for logistic).
    double tolerance = 1e-10;
    int max_epochs = 2000;
};

struct LinearTrainReport {
    /// Regularized primal objective of the held model after each epoch.
    std::vector<double> objective_trace;
    /// Last certified relative gap.
    double gap = 0;
    int epochs = 0;
    bool converged = false;
};

/// 0.5*||w||^2 + C * sum_i loss(y_i, w.x_i + b); the bias is not regularized.
double linear_objective(const LinearModel& model, std::span<const SparseVector> X, const std::vector<bool>& y);

/// Hinge: SMO on the dual with an exact primal bias search.
/// Logistic: truncated-Newton with Armijo backtracking.
/// Emits a convergence warning on stderr when max_epochs runs out.
LinearModel train_linear(std::span<const SparseVector> X, const std::vector<bool>& y, LossKind loss,
                         const LinearTrainOptions& options = {}, LinearTrainReport* report = nullptr);

/// Most frequent training label; ties go to "yes".
struct MajorityModel {
    bool label = true;
    double prior = 0.5;
    Prediction predict(const SparseVector&) const { return {label, prior}; }
};

/// Most frequent label; on an exact tie the first voter's label wins.
bool majority_vote(const std::vector<bool>& votes);

using Classifier = std::variant<NaiveBayesModel, LinearModel, MajorityModel>;

/// Ordered members voting by majority_vote.
struct EnsembleModel {
    std::vector<Classifier> members;
    Prediction predict(const SparseVector& x) const;
};

Prediction predict(const Classifier& model, const SparseVector& x);

}  // namespace appraisal
