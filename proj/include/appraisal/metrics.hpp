#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace appraisal {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const std::vector<bool>& pred, const std::vector<bool>& gold);

double accuracy(const std::vector<bool>& pred, const std::vector<bool>& gold);
/// F1 of the "yes" class; 0 when tp = 0.
double f1_positive(const std::vector<bool>& pred, const std::vector<bool>& gold);
/// Mann-Whitney form: (#pos>neg pairs + 0.5 #ties) / (n_pos n_neg), counted in
/// integers and divided once. Throws UsageError unless both classes appear.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& gold);

struct EvalResult {
    double accuracy = 0;
    /// Absent when gold holds a single class.
    std::optional<double> auc;
    double f1_positive = 0;
    Confusion counts;
};

EvalResult evaluate(const std::vector<bool>& pred, const std::vector<double>& scores, const std::vector<bool>& gold);

struct EvalRow {
    std::string model;
    std::string task;
    EvalResult result;
};

/// `model,task,accuracy,auc,f1` with four decimals; a missing AUC prints as NA.
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

}  // namespace appraisal
