#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "appraisal/corpus.hpp"
#include "appraisal/features.hpp"
#include "appraisal/linear.hpp"

namespace appraisal {

/// Classical models as selected on the command line.
enum class LinearKind { NaiveBayes, Svm, LogReg, Ensemble, Majority };

std::string to_string(LinearKind kind);
/// nb | svm | logreg | ensemble | majority
LinearKind parse_linear_kind(const std::string& name);

struct LinearPipelineOptions {
    FeatureKind features = FeatureKind::Bow;
    NgramConfig ngrams;
    LinearTrainOptions train;
    double nb_alpha = 1.0;
};

/// Fitted featurizer plus classifier(s). The ensemble holds NB, SVM and
/// logistic regression in that order; other kinds hold one member.
struct LinearPipeline {
    LinearKind kind = LinearKind::NaiveBayes;
    Task task = Task::Agency;
    Featurizer featurizer;
    std::vector<Classifier> members;

    Prediction predict(std::string_view text) const;
    std::vector<Prediction> predict(const Dataset& data) const;
};

LinearPipeline train_linear_pipeline(const Dataset& train, Task task, LinearKind kind,
                                     const LinearPipelineOptions& options = {});

/// Checkpoint holding kind, hyperparameters, vocabulary and its fingerprint,
/// idf and all parameters. Scores round-trip bit for bit.
void save_linear(const std::filesystem::path& path, const LinearPipeline& pipeline);
LinearPipeline load_linear(const std::filesystem::path& path);

/// "neural" or "linear", read from a checkpoint's metadata.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace appraisal
