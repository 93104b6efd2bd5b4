// appraisal-lab: command-line front end for the appraisal toolkit.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <unordered_set>

#include "CLI11.hpp"

#include "appraisal/checkpoint.hpp"
#include "appraisal/config.hpp"
#include "appraisal/corpus.hpp"
#include "appraisal/csv.hpp"
#include "appraisal/embeddings.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/features.hpp"
#include "appraisal/metrics.hpp"
#include "appraisal/neural.hpp"
#include "appraisal/pipeline.hpp"
#include "appraisal/report.hpp"
#include "appraisal/text.hpp"

namespace fs = std::filesystem;
using namespace appraisal;

namespace {

struct Flags {
    std::string config, task, model, features, embeddings, contextual, layers, hidden, seed, out;
    std::string data, input, model_file, ids, k, cls, rank_by, epochs, threads;
    std::vector<std::string> sets;
};

void add_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "config file ([section] key = value)");
    cmd->add_option("--task", f.task, "agency | social");
    cmd->add_option("--model", f.model, "nb|svm|logreg|ensemble|majority|lstm|bilstm|lstm-a|bilstm-a");
    cmd->add_option("--features", f.features, "bow | bow-tfidf");
    cmd->add_option("--embeddings", f.embeddings, "static word-vector text file");
    cmd->add_option("--contextual", f.contextual, "per-sentence contextual vector file");
    cmd->add_option("--layers", f.layers, "LSTM layers (grid: comma list)");
    cmd->add_option("--hidden", f.hidden, "hidden units (grid: comma list)");
    cmd->add_option("--seed", f.seed, "global seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--data", f.data, "labeled CSV to split into train/dev");
    cmd->add_option("--input", f.input, "CSV to evaluate, predict or report on instead of the dev split");
    cmd->add_option("--model-file", f.model_file, "trained model checkpoint");
    cmd->add_option("--ids", f.ids, "comma-separated moment ids (visualize)");
    cmd->add_option("--k", f.k, "number of ranked words");
    cmd->add_option("--class", f.cls, "positive | negative (rank-words)");
    cmd->add_option("--rank-by", f.rank_by, "gold | predicted (rank-words)");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--threads", f.threads, "grid worker threads");
    cmd->add_option("--set", f.sets, "override any key: section.key=value");
}

bool is_linear_name(const std::string& m) {
    static const std::set<std::string> names{"nb", "svm", "logreg", "ensemble", "majority"};
    return names.count(ascii_lower(m)) != 0;
}

RunConfig resolve(const std::string& command, const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig() : RunConfig::load(f.config);
    auto put = [&](const std::string& key, const std::string& v) {
        if (!v.empty()) cfg.set(key, v);
    };
    put("run.task", f.task);
    put("run.seed", f.seed);
    put("run.out", f.out);
    put("run.threads", f.threads);
    put("data.path", f.data);
    put("linear.features", f.features);
    put("neural.embeddings", f.embeddings);
    put("neural.contextual", f.contextual);
    put("neural.epochs", f.epochs);
    put("report.ids", f.ids);
    put("report.k", f.k);
    put("report.class", f.cls);
    put("report.rank_by", f.rank_by);
    if (command == "grid") {
        put("grid.layers", f.layers);
        put("grid.hidden", f.hidden);
        if (!f.model.empty()) {
            if (is_linear_name(f.model)) throw UsageError("grid takes a neural architecture, got '" + f.model + "'");
            put("grid.architectures", f.model);
        }
    } else {
        put("neural.layers", f.layers);
        put("neural.hidden", f.hidden);
        if (!f.model.empty()) put(is_linear_name(f.model) ? "linear.model" : "neural.model", f.model);
    }
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + kv + "'");
        cfg.set(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
    }
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
    fs::path out = cfg.get("run.out");
    fs::create_directories(out);
    cfg.write(out / "resolved_config.ini");
    std::ofstream(out / "VERSION") << "appraisal-lab " << kLibraryVersion << '\n';
    return out;
}

Task task_of(const RunConfig& cfg) { return parse_task(cfg.get("run.task")); }
std::uint64_t seed_of(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.get_int("run.seed")); }

ColumnMap columns_of(const RunConfig& cfg) {
    ColumnMap c;
    c.text = cfg.get("data.text_column");
    c.id = cfg.get_optional("data.id_column");
    c.agency = cfg.get_optional("data.agency_column");
    c.social = cfg.get_optional("data.social_column");
    return c;
}

SplitSpec split_spec(const RunConfig& cfg) {
    SplitSpec s;
    s.train_fraction = Fraction::parse(cfg.get("split.fraction"));
    s.seed = cfg.is_set("split.seed") ? static_cast<std::uint64_t>(cfg.get_int("split.seed")) : seed_of(cfg);
    if (auto st = cfg.get_optional("split.stratify")) s.stratify_by = parse_task(*st);
    return s;
}

bool has_split_source(const RunConfig& cfg) {
    return cfg.is_set("data.path") || (cfg.is_set("data.train") && cfg.is_set("data.dev"));
}

Split load_splits(const RunConfig& cfg) {
    const auto cols = columns_of(cfg);
    if (cfg.is_set("data.train") && cfg.is_set("data.dev")) {
        return {load_csv(cfg.get("data.train"), cols), load_csv(cfg.get("data.dev"), cols)};
    }
    if (!cfg.is_set("data.path")) throw ConfigError("no data: pass --data or set data.path (or data.train and data.dev)");
    return split(load_csv(cfg.get("data.path"), cols), split_spec(cfg));
}

/// --input when given, else the dev split.
Dataset target_set(const RunConfig& cfg, const Flags& f) {
    if (!f.input.empty()) return load_csv(f.input, columns_of(cfg));
    return load_splits(cfg).dev;
}

// ------------------------------------------------------------------ neural inputs

struct NeuralInputs {
    std::unique_ptr<EmbeddingTable> table;
    std::unique_ptr<ContextualSequenceFile> contextual;
    std::unique_ptr<neural::InputEncoder> encoder;
};

NeuralInputs make_inputs(const RunConfig& cfg, const std::vector<const Dataset*>& data) {
    NeuralInputs in;
    const bool lower = cfg.get_bool("neural.lowercase");
    const auto max_tokens = static_cast<std::size_t>(cfg.get_int("neural.max_tokens"));
    if (auto ctx = cfg.get_optional("neural.contextual")) {
        in.contextual = std::make_unique<ContextualSequenceFile>(load_contextual(*ctx));
        in.encoder = std::make_unique<neural::ContextualInput>(*in.contextual, fs::path(*ctx).filename().string(), lower,
                                                                max_tokens);
    } else if (auto emb = cfg.get_optional("neural.embeddings")) {
        std::unordered_set<std::string> keep;
        for (const auto* d : data) {
            for (const auto& m : *d) {
                // Both casings, so a model trained with either setting finds its rows.
                for (auto& t : tokenize(m.text, false)) keep.insert(std::move(t));
                for (auto& t : tokenize(m.text, true)) keep.insert(std::move(t));
            }
        }
        in.table = std::make_unique<EmbeddingTable>(load_embedding_text(*emb, &keep));
        in.encoder =
            std::make_unique<neural::StaticEmbeddingInput>(*in.table, fs::path(*emb).filename().string(), lower, max_tokens);
    } else {
        throw ConfigError("neural commands need --embeddings or --contextual");
    }
    return in;
}

neural::TrainConfig train_config(const RunConfig& cfg) {
    auto tc = neural::preset_train_config(neural::parse_preset(cfg.get("neural.preset")));
    if (cfg.is_set("neural.epochs")) tc.epochs = static_cast<int>(cfg.get_int("neural.epochs"));
    if (cfg.is_set("neural.dropout")) tc.dropout_p = cfg.get_double("neural.dropout");
    tc.batch_size = static_cast<int>(cfg.get_int("neural.batch_size"));
    tc.learning_rate = cfg.get_double("neural.learning_rate");
    tc.seed = seed_of(cfg);
    tc.validate();
    return tc;
}

// ------------------------------------------------------------------ outputs

void write_predictions(const fs::path& path, const Dataset& data, const std::vector<bool>& labels,
                       const std::vector<double>& scores) {
    std::ofstream out(path);
    if (!out) throw ReportError("cannot write '" + path.string() + "'");
    out << "id,label,score\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        csv::write_row(out, {data[i].id, labels[i] ? "yes" : "no", format_double(scores[i])});
    }
}

void write_metrics(const fs::path& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ReportError("cannot write '" + path.string() + "'");
    write_eval_csv(out, rows);
    write_eval_csv(std::cout, rows);
}

struct Scored {
    std::vector<bool> labels;
    std::vector<double> scores;
};

Scored score_linear(const LinearPipeline& p, const Dataset& data) {
    Scored s;
    for (const auto& pr : p.predict(data)) {
        s.labels.push_back(pr.label);
        s.scores.push_back(pr.score);
    }
    return s;
}

Scored score_neural(const neural::NeuralModel& m, const neural::InputEncoder& enc, const Dataset& data) {
    Scored s;
    for (const auto& pr : neural::predict(m, enc, data)) {
        s.labels.push_back(pr.label);
        s.scores.push_back(pr.probability);
    }
    return s;
}

std::string linear_name(const LinearPipeline& p) {
    if (p.kind == LinearKind::Majority) return "majority";
    return to_string(p.kind) + "/" + to_string(p.featurizer.kind);
}

LinearPipelineOptions linear_options(const RunConfig& cfg) {
    LinearPipelineOptions o;
    o.features = parse_feature_kind(cfg.get("linear.features"));
    o.ngrams.n_min = static_cast<int>(cfg.get_int("linear.ngram_min"));
    o.ngrams.n_max = static_cast<int>(cfg.get_int("linear.ngram_max"));
    o.ngrams.min_document_frequency = static_cast<int>(cfg.get_int("linear.min_df"));
    o.ngrams.validate();
    o.train.C = cfg.get_double("linear.C");
    o.train.tolerance = cfg.get_double("linear.tolerance");
    o.train.max_epochs = static_cast<int>(cfg.get_int("linear.max_epochs"));
    o.nb_alpha = cfg.get_double("linear.nb_alpha");
    return o;
}

neural::NeuralModel load_attention_model(const Flags& f) {
    if (f.model_file.empty()) throw UsageError("--model-file is required");
    auto m = neural::load_model(f.model_file);
    if (!m.attention) throw UsageError("model '" + f.model_file + "' has no attention layer");
    return m;
}

void check_source(const neural::NeuralModel& m, const neural::InputEncoder& enc) {
    if (m.preprocessing.source_id != enc.source_id()) {
        std::cerr << "warning: model was trained on '" << m.preprocessing.source_id << "' but inputs come from '"
                  << enc.source_id() << "'\n";
    }
}

std::unique_ptr<neural::InputEncoder> rebind(const neural::NeuralModel& m, NeuralInputs& in) {
    // Inference follows the model's own preprocessing settings.
    if (in.table) {
        return std::make_unique<neural::StaticEmbeddingInput>(*in.table, in.encoder->source_id(),
                                                               m.preprocessing.lowercase, m.preprocessing.max_tokens);
    }
    return std::make_unique<neural::ContextualInput>(*in.contextual, in.encoder->source_id(), m.preprocessing.lowercase,
                                                     m.preprocessing.max_tokens);
}

// ------------------------------------------------------------------ commands

int cmd_split(const RunConfig& cfg) {
    const auto out = prepare_out(cfg);
    const auto spec = split_spec(cfg);
    if (!cfg.is_set("data.path")) throw ConfigError("split needs --data or data.path");
    const auto all = load_csv(cfg.get("data.path"), columns_of(cfg));
    const auto s = split(all, spec);
    write_csv(out / "train.csv", s.train);
    write_csv(out / "dev.csv", s.dev);
    std::set<std::string> train_ids;
    for (const auto& m : s.train) train_ids.insert(m.id);
    std::ofstream manifest(out / "split_manifest.csv");
    manifest << "id,partition\n";
    for (const auto& m : all) csv::write_row(manifest, {m.id, train_ids.count(m.id) ? "train" : "dev"});
    std::cout << "train " << s.train.size() << ", dev " << s.dev.size() << " (fraction " << spec.train_fraction.str()
              << ", seed " << spec.seed << ")\n";
    return 0;
}

int cmd_train_linear(const RunConfig& cfg) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto s = load_splits(cfg);
    const auto kind = parse_linear_kind(cfg.get("linear.model"));
    const auto p = train_linear_pipeline(s.train, task, kind, linear_options(cfg));
    save_linear(out / "model.ckpt", p);
    const auto sc = score_linear(p, s.dev);
    write_predictions(out / "dev_predictions.csv", s.dev, sc.labels, sc.scores);
    write_metrics(out / "metrics.csv", {{linear_name(p), to_string(task), evaluate(sc.labels, sc.scores, s.dev.labels(task))}});
    return 0;
}

int cmd_train_neural(const RunConfig& cfg) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto s = load_splits(cfg);
    auto inputs = make_inputs(cfg, {&s.train, &s.dev});
    const auto arch = neural::parse_architecture(cfg.get("neural.model"));
    const auto mc = neural::ModelConfig::from(arch, static_cast<int>(cfg.get_int("neural.layers")),
                                              static_cast<int>(cfg.get_int("neural.hidden")), inputs.encoder->dim(),
                                              inputs.encoder->source());
    const auto res = neural::train(s.train, s.dev, task, mc, train_config(cfg), *inputs.encoder);
    neural::save_model(out / "model.ckpt", res.model);
    {
        std::ofstream ep(out / "epochs.csv");
        neural::write_epoch_csv(ep, res.epochs);
    }
    const auto sc = score_neural(res.model, *inputs.encoder, s.dev);
    write_predictions(out / "dev_predictions.csv", s.dev, sc.labels, sc.scores);
    write_metrics(out / "metrics.csv", {{to_string(arch), to_string(task), evaluate(sc.labels, sc.scores, s.dev.labels(task))}});
    std::cerr << "best epoch " << res.best_epoch << "\n";
    return 0;
}

std::vector<int> int_list(const RunConfig& cfg, const std::string& key) {
    std::vector<int> out;
    for (const auto& part : split_on(cfg.get(key), ',')) {
        const auto t = trim(part);
        if (t.empty()) continue;
        try {
            out.push_back(static_cast<int>(parse_int(t)));
        } catch (const ParseError&) {
            throw ConfigError(key + " must be a comma list of integers");
        }
    }
    if (out.empty()) throw ConfigError(key + " is empty");
    return out;
}

int cmd_grid(const RunConfig& cfg) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto s = load_splits(cfg);
    auto inputs = make_inputs(cfg, {&s.train, &s.dev});
    neural::GridSpec spec;
    spec.architectures.clear();
    for (const auto& a : split_on(cfg.get("grid.architectures"), ',')) {
        if (!trim(a).empty()) spec.architectures.push_back(neural::parse_architecture(std::string(trim(a))));
    }
    spec.layers = int_list(cfg, "grid.layers");
    spec.hidden = int_list(cfg, "grid.hidden");
    spec.threads = static_cast<unsigned>(cfg.get_int("run.threads"));
    const fs::path model_dir = cfg.get_bool("grid.save_models") ? out / "models" : fs::path();
    const auto cells = neural::grid_search(s.train, s.dev, task, train_config(cfg), spec, *inputs.encoder, model_dir);
    {
        std::ofstream g(out / "grid.csv");
        neural::write_grid_csv(g, cells);
    }
    neural::write_grid_csv(std::cout, cells);
    std::ofstream b(out / "best.csv");
    b << "architecture,layers,hidden,dev_accuracy,best_epoch\n";
    for (const auto& c : neural::best_cells(cells)) {
        b << to_string(c.architecture) << ',' << c.layers << ',' << c.hidden << ',' << format_fixed(c.dev_accuracy, 4)
          << ',' << c.best_epoch << '\n';
    }
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const Flags& f) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto data = target_set(cfg, f);
    const auto gold = data.labels(task);
    EvalRow row;
    row.task = to_string(task);
    Scored sc;
    if (!f.model_file.empty()) {
        if (checkpoint_kind(f.model_file) == "neural") {
            const auto m = neural::load_model(f.model_file);
            auto inputs = make_inputs(cfg, {&data});
            check_source(m, *inputs.encoder);
            auto enc = rebind(m, inputs);
            sc = score_neural(m, *enc, data);
            row.model = to_string(m.config.architecture());
        } else {
            const auto p = load_linear(f.model_file);
            sc = score_linear(p, data);
            row.model = linear_name(p);
        }
    } else if (parse_linear_kind(cfg.get("linear.model")) == LinearKind::Majority) {
        // Dummy baseline: fitted on the train split when one is configured,
        // otherwise on the evaluated set itself.
        const Dataset fit_on = has_split_source(cfg) ? load_splits(cfg).train : data;
        const auto p = train_linear_pipeline(fit_on, task, LinearKind::Majority);
        sc = score_linear(p, data);
        row.model = "majority";
    } else {
        throw UsageError("evaluate needs --model-file, or --model majority");
    }
    row.result = evaluate(sc.labels, sc.scores, gold);
    write_metrics(out / "metrics.csv", {row});
    return 0;
}

int cmd_predict(const RunConfig& cfg, const Flags& f) {
    if (f.model_file.empty()) throw UsageError("predict needs --model-file");
    const auto out = prepare_out(cfg);
    const auto data = target_set(cfg, f);
    Scored sc;
    if (checkpoint_kind(f.model_file) == "neural") {
        const auto m = neural::load_model(f.model_file);
        auto inputs = make_inputs(cfg, {&data});
        check_source(m, *inputs.encoder);
        auto enc = rebind(m, inputs);
        sc = score_neural(m, *enc, data);
    } else {
        sc = score_linear(load_linear(f.model_file), data);
    }
    write_predictions(out / "predictions.csv", data, sc.labels, sc.scores);
    std::cout << "wrote " << data.size() << " predictions to " << (out / "predictions.csv").string() << "\n";
    return 0;
}

int cmd_visualize(const RunConfig& cfg, const Flags& f) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto model = load_attention_model(f);
    const auto data = target_set(cfg, f);
    auto inputs = make_inputs(cfg, {&data});
    check_source(model, *inputs.encoder);
    auto enc = rebind(model, inputs);
    std::vector<std::size_t> picked;
    std::string title;
    if (auto ids = cfg.get_optional("report.ids")) {
        std::vector<std::string> list;
        for (const auto& id : split_on(*ids, ',')) {
            if (!trim(id).empty()) list.emplace_back(trim(id));
        }
        picked = report::select_by_id(data, list);
        title = "Hand-picked " + to_string(task) + " examples";
    } else {
        picked = report::sample_per_class(data, task, static_cast<std::size_t>(cfg.get_int("report.per_class")),
                                          seed_of(cfg));
        title = "Random " + to_string(task) + " examples";
    }
    const auto docs = report::heatmaps(model, *enc, data, picked, task);
    std::ofstream html(out / "heatmaps.html");
    html << report::render_heatmap_page(docs, title);
    std::cout << "wrote " << docs.size() << " heatmaps to " << (out / "heatmaps.html").string() << "\n";
    return 0;
}

int cmd_rank_words(const RunConfig& cfg, const Flags& f) {
    const auto out = prepare_out(cfg);
    const auto task = task_of(cfg);
    const auto model = load_attention_model(f);
    const auto data = target_set(cfg, f);
    auto inputs = make_inputs(cfg, {&data});
    check_source(model, *inputs.encoder);
    auto enc = rebind(model, inputs);
    report::RankOptions opt;
    const auto cls = ascii_lower(cfg.get("report.class"));
    if (cls != "positive" && cls != "negative") throw ConfigError("report.class must be positive or negative");
    opt.positive_class = cls == "positive";
    const auto by = ascii_lower(cfg.get("report.rank_by"));
    if (by != "gold" && by != "predicted") throw ConfigError("report.rank_by must be gold or predicted");
    opt.use_gold = by == "gold";
    opt.k = static_cast<std::size_t>(cfg.get_int("report.k"));
    opt.min_count = static_cast<std::size_t>(cfg.get_int("report.min_count"));
    const auto ranking = report::rank_words(model, *enc, data, task, opt);
    std::ofstream csv(out / "ranking.csv");
    report::write_ranking_csv(csv, ranking);
    report::write_ranking_csv(std::cout, ranking);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"appraisal-lab: agency and sociality classifiers for happy moments"};
    app.require_subcommand(1);
    Flags flags;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"split", "write a seeded train/dev split and its manifest"},
        {"train-linear", "train nb, svm, logreg, ensemble or majority on n-gram features"},
        {"train-neural", "train an LSTM-family model on word vectors"},
        {"grid", "grid search over layers x hidden for the neural architectures"},
        {"evaluate", "accuracy, AUC and F1 of a model on the dev split or --input"},
        {"predict", "write id,label,score predictions"},
        {"visualize", "attention heatmaps as HTML"},
        {"rank-words", "top attended words per class"},
    };
    for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const auto cfg = resolve(command, flags);
        if (command == "split") return cmd_split(cfg);
        if (command == "train-linear") return cmd_train_linear(cfg);
        if (command == "train-neural") return cmd_train_neural(cfg);
        if (command == "grid") return cmd_grid(cfg);
        if (command == "evaluate") return cmd_evaluate(cfg, flags);
        if (command == "predict") return cmd_predict(cfg, flags);
        if (command == "visualize") return cmd_visualize(cfg, flags);
        if (command == "rank-words") return cmd_rank_words(cfg, flags);
        throw UsageError("unknown command '" + command + "'");
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return e.category() == "usage" ? 2 : 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
