#include "appraisal/pipeline.hpp"

#include <cstdio>

#include "appraisal/checkpoint.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

std::string to_string(LinearKind kind) {
    switch (kind) {
        case LinearKind::NaiveBayes: return "nb";
        case LinearKind::Svm: return "svm";
        case LinearKind::LogReg: return "logreg";
        case LinearKind::Ensemble: return "ensemble";
        case LinearKind::Majority: return "majority";
    }
    return "?";
}

LinearKind parse_linear_kind(const std::string& name) {
    const auto n = ascii_lower(name);
    if (n == "nb") return LinearKind::NaiveBayes;
    if (n == "svm") return LinearKind::Svm;
    if (n == "logreg") return LinearKind::LogReg;
    if (n == "ensemble") return LinearKind::Ensemble;
    if (n == "majority") return LinearKind::Majority;
    throw ConfigError("unknown linear model '" + name + "' (expected nb, svm, logreg, ensemble or majority)");
}

Prediction LinearPipeline::predict(std::string_view text) const {
    if (members.empty()) throw UsageError("linear pipeline has no fitted model");
    if (kind == LinearKind::Majority) return appraisal::predict(members[0], SparseVector());
    const auto x = featurizer(text);
    if (kind == LinearKind::Ensemble) return EnsembleModel{members}.predict(x);
    return appraisal::predict(members[0], x);
}

std::vector<Prediction> LinearPipeline::predict(const Dataset& data) const {
    std::vector<Prediction> out;
    out.reserve(data.size());
    for (const auto& m : data) out.push_back(predict(m.text));
    return out;
}

LinearPipeline train_linear_pipeline(const Dataset& train, Task task, LinearKind kind,
                                     const LinearPipelineOptions& options) {
    if (train.empty()) throw UsageError("training split is empty");
    const auto y = train.labels(task);
    LinearPipeline p;
    p.kind = kind;
    p.task = task;
    if (kind == LinearKind::Majority) {
        const auto prior = class_prior(train, task);
        const bool label = 2 * prior.positives >= prior.total;
        p.members.push_back(MajorityModel{label, prior.value()});
        return p;
    }
    p.featurizer = Featurizer::fit(train, options.ngrams, options.features);
    const auto X = p.featurizer.transform(train);
    auto nb = [&] { return Classifier(train_naive_bayes(X, y, options.nb_alpha)); };
    auto lin = [&](LossKind loss) { return Classifier(train_linear(X, y, loss, options.train)); };
    switch (kind) {
        case LinearKind::NaiveBayes: p.members.push_back(nb()); break;
        case LinearKind::Svm: p.members.push_back(lin(LossKind::Hinge)); break;
        case LinearKind::LogReg: p.members.push_back(lin(LossKind::Logistic)); break;
        case LinearKind::Ensemble:
            p.members.push_back(nb());
            p.members.push_back(lin(LossKind::Hinge));
            p.members.push_back(lin(LossKind::Logistic));
            break;
        case LinearKind::Majority: break;
    }
    return p;
}

// ------------------------------------------------------------------ persistence

namespace {

using nlohmann::json;
using tensor::Tensor;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

Tensor vec(const std::vector<double>& v) { return Tensor({v.size()}, v); }

}  // namespace

void save_linear(const std::filesystem::path& path, const LinearPipeline& pipeline) {
    Checkpoint cp;
    json members = json::array();
    for (std::size_t k = 0; k < pipeline.members.size(); ++k) {
        const std::string prefix = "member" + std::to_string(k) + ".";
        const auto& m = pipeline.members[k];
        if (const auto* nb = std::get_if<NaiveBayesModel>(&m)) {
            members.push_back({{"type", "nb"}, {"alpha", nb->alpha}});
            cp.add(prefix + "log_prior", vec({nb->log_prior[0], nb->log_prior[1]}));
            std::vector<double> ll(nb->log_likelihood[0]);
            ll.insert(ll.end(), nb->log_likelihood[1].begin(), nb->log_likelihood[1].end());
            cp.add(prefix + "log_likelihood", Tensor({2, nb->dim()}, std::move(ll)));
        } else if (const auto* lin = std::get_if<LinearModel>(&m)) {
            members.push_back({{"type", "linear"}, {"loss", to_string(lin->loss)}, {"C", lin->C}});
            cp.add(prefix + "weights", vec(lin->weights));
            cp.add(prefix + "bias", vec({lin->bias}));
        } else {
            const auto& maj = std::get<MajorityModel>(m);
            members.push_back({{"type", "majority"}, {"label", maj.label}});
            cp.add(prefix + "prior", vec({maj.prior}));
        }
    }
    json vocab = nullptr;
    if (pipeline.kind != LinearKind::Majority) {
        const auto& v = pipeline.featurizer.vocab;
        const auto& c = v.config();
        vocab = {
            {"n_min", c.n_min},
            {"n_max", c.n_max},
            {"lowercase", c.lowercase},
            {"min_document_frequency", c.min_document_frequency},
            {"document_count", v.document_count()},
            {"fingerprint", hex64(v.fingerprint())},
            {"grams", v.grams()},
            {"df", v.document_frequency()},
        };
        if (pipeline.featurizer.kind == FeatureKind::BowTfidf) {
            cp.add("idf", vec(pipeline.featurizer.tfidf.idf()));
            vocab["tfidf_document_count"] = pipeline.featurizer.tfidf.document_count();
        }
    }
    cp.meta = {
        {"kind", "linear"},
        {"version", kLibraryVersion},
        {"model", to_string(pipeline.kind)},
        {"task", to_string(pipeline.task)},
        {"features", to_string(pipeline.featurizer.kind)},
        {"members", members},
        {"vocabulary", vocab},
    };
    save_checkpoint(path, cp);
}

LinearPipeline load_linear(const std::filesystem::path& path) {
    const auto cp = load_checkpoint(path);
    if (cp.meta.value("kind", "") != "linear") throw LoadError("'" + path.string() + "' is not a linear model checkpoint");
    try {
        const auto& meta = cp.meta;
        LinearPipeline p;
        p.kind = parse_linear_kind(meta.at("model").get<std::string>());
        p.task = parse_task(meta.at("task").get<std::string>());
        p.featurizer.kind = parse_feature_kind(meta.at("features").get<std::string>());
        const auto& vj = meta.at("vocabulary");
        if (!vj.is_null()) {
            NgramConfig c;
            c.n_min = vj.at("n_min").get<int>();
            c.n_max = vj.at("n_max").get<int>();
            c.lowercase = vj.at("lowercase").get<bool>();
            c.min_document_frequency = vj.at("min_document_frequency").get<int>();
            p.featurizer.vocab = Vocabulary(c, vj.at("grams").get<std::vector<std::string>>(),
                                            vj.at("df").get<std::vector<std::uint32_t>>(),
                                            vj.at("document_count").get<std::size_t>());
            if (hex64(p.featurizer.vocab.fingerprint()) != vj.at("fingerprint").get<std::string>()) {
                throw LoadError("vocabulary fingerprint mismatch in '" + path.string() + "'");
            }
            if (p.featurizer.kind == FeatureKind::BowTfidf) {
                p.featurizer.tfidf =
                    TfidfModel(cp.array("idf").values(), vj.at("tfidf_document_count").get<std::size_t>());
            }
        }
        const auto& members = meta.at("members");
        for (std::size_t k = 0; k < members.size(); ++k) {
            const std::string prefix = "member" + std::to_string(k) + ".";
            const auto& mj = members[k];
            const auto type = mj.at("type").get<std::string>();
            if (type == "nb") {
                NaiveBayesModel nb;
                nb.alpha = mj.at("alpha").get<double>();
                const auto& lp = cp.array(prefix + "log_prior");
                const auto& ll = cp.array(prefix + "log_likelihood");
                if (lp.size() != 2 || ll.rows() != 2) throw LoadError("malformed naive Bayes arrays");
                nb.log_prior = {lp[0], lp[1]};
                const std::size_t V = ll.cols();
                nb.log_likelihood[0].assign(ll.values().begin(), ll.values().begin() + static_cast<std::ptrdiff_t>(V));
                nb.log_likelihood[1].assign(ll.values().begin() + static_cast<std::ptrdiff_t>(V), ll.values().end());
                p.members.emplace_back(std::move(nb));
            } else if (type == "linear") {
                LinearModel lin;
                const auto loss = mj.at("loss").get<std::string>();
                if (loss == to_string(LossKind::Hinge)) {
                    lin.loss = LossKind::Hinge;
                } else if (loss == to_string(LossKind::Logistic)) {
                    lin.loss = LossKind::Logistic;
                } else {
                    throw LoadError("unknown loss '" + loss + "'");
                }
                lin.C = mj.at("C").get<double>();
                lin.weights = cp.array(prefix + "weights").values();
                lin.bias = cp.array(prefix + "bias").values().at(0);
                p.members.emplace_back(std::move(lin));
            } else if (type == "majority") {
                MajorityModel maj;
                maj.label = mj.at("label").get<bool>();
                maj.prior = cp.array(prefix + "prior").values().at(0);
                p.members.emplace_back(maj);
            } else {
                throw LoadError("unknown member type '" + type + "'");
            }
        }
        if (p.members.empty()) throw LoadError("checkpoint holds no model");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed linear checkpoint metadata in '" + path.string() + "': " + e.what());
    }
}

std::string checkpoint_kind(const std::filesystem::path& path) {
    return load_checkpoint(path).meta.value("kind", "");
}

}  // namespace appraisal
