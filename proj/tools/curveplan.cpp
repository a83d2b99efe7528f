// curveplan: annotation-budget planning for binary text classification.
// Runs repeated-subsample learning-curve experiments and vocabulary-quality
// diagnostics on labeled corpora (real or synthetic).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curveplan/pipeline.hpp"
#include "curveplan/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string version_string() {
    std::ostringstream out;
    out << "curveplan " << curveplan::kToolVersion << " (formats: corpus v"
        << curveplan::kCorpusFormatVersion << ", embedding v" << curveplan::kEmbeddingFormatVersion
        << ", model v" << curveplan::kModelFormatVersion << ", curve v"
        << curveplan::kCurveFormatVersion << ", report v" << curveplan::kReportFormatVersion << ")";
    return out.str();
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    if (out.empty()) throw curveplan::UsageError("expected a comma-separated integer list");
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void apply_lambda_flag(curveplan::RunConfig& cfg, const std::string& lambda_flag) {
    if (lambda_flag.empty()) return;  // keep the relative default
    if (lambda_flag == "cv") {
        cfg.lambda_mode = "cv";
        return;
    }
    try {
        cfg.lambda_value = std::stod(lambda_flag);
        cfg.lambda_mode = "fixed";
    } catch (const std::exception&) {
        throw curveplan::UsageError("--lambda expects a number or 'cv'");
    }
}

json read_json_file(const fs::path& path) {
    try {
        return json::parse(curveplan::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw curveplan::InputError(path.string() + ": " + e.what());
    }
}

curveplan::SteepnessResponse response_from_string(const std::string& s) {
    if (s == "metric_at_max") return curveplan::SteepnessResponse::metric_at_max;
    if (s == "steepness") return curveplan::SteepnessResponse::steepness;
    throw curveplan::UsageError("--response must be metric_at_max or steepness");
}

void print_curve_summary(const curveplan::LearningCurve& curve) {
    std::cout << "task " << curve.task_id << " (" << curve.metric << ")\n";
    for (const auto& p : curve.points) {
        std::cout << "  n=" << p.n << " mean=" << curveplan::format_double(p.mean)
                  << " std=" << curveplan::format_double(p.std_dev) << "\n";
    }
    if (curve.fit) {
        std::cout << "  fit: a=" << curveplan::format_double(curve.fit->a)
                  << " b=" << curveplan::format_double(curve.fit->b)
                  << " c=" << curveplan::format_double(curve.fit->c)
                  << " rmse=" << curveplan::format_double(curve.fit->rmse) << "\n";
    }
    if (curve.n_star) {
        std::cout << "  n_star(" << curve.sufficiency_fraction << ") = " << *curve.n_star << "\n";
    } else {
        std::cout << "  n_star: not reached within the grid\n";
    }
}

struct CommonCorpusFlags {
    std::string path;
    std::string format = "jsonl";

    curveplan::Corpus load() const {
        return curveplan::load_corpus(path, curveplan::corpus_format_from_string(format));
    }
};

int run_app(int argc, char** argv) {
    CLI::App app{"learning-curve experiments and vocabulary diagnostics for annotation planning"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    curveplan::EventLog log(&std::cerr);

    // --- ingest ---
    auto* ingest = app.add_subcommand("ingest", "validate a corpus file and write canonical JSONL");
    CommonCorpusFlags ingest_corpus;
    bool ingest_balance = false;
    uint64_t ingest_seed = 0;
    std::string ingest_out;
    ingest->add_option("--input", ingest_corpus.path, "corpus file")->required();
    ingest->add_option("--format", ingest_corpus.format, "jsonl or csv");
    ingest->add_flag("--balance-negatives", ingest_balance,
                     "downsample negatives to a 1:1 ratio (stratified, seeded)");
    ingest->add_option("--seed", ingest_seed, "seed for the balancing draw");
    ingest->add_option("--out", ingest_out, "output JSONL path")->required();
    ingest->callback([&] {
        curveplan::Corpus corpus = ingest_corpus.load();
        if (ingest_balance) corpus = curveplan::balance_negatives(corpus, ingest_seed);
        curveplan::save_corpus_jsonl(corpus, ingest_out);
        std::cout << "wrote " << corpus.size() << " documents (" << corpus.positive_count()
                  << " positive, " << corpus.negative_count() << " negative) to " << ingest_out
                  << "\n";
    });

    // --- embed ---
    auto* embed = app.add_subcommand("embed", "build document feature vectors");
    CommonCorpusFlags embed_corpus;
    std::string embed_mode = "count";
    std::string embed_external;
    int embed_min_df = 2;
    int embed_max_features = 20000;
    std::string embed_out;
    embed->add_option("--corpus", embed_corpus.path, "corpus file")->required();
    embed->add_option("--format", embed_corpus.format, "jsonl or csv");
    embed->add_option("--mode", embed_mode, "count|binary|tfidf|external");
    embed->add_option("--external", embed_external, "external embedding CSV (mode external)");
    embed->add_option("--min-df", embed_min_df, "min document frequency");
    embed->add_option("--max-features", embed_max_features, "vocabulary cap");
    embed->add_option("--out", embed_out, "output embedding CSV")->required();
    embed->callback([&] {
        const curveplan::Corpus corpus = embed_corpus.load();
        curveplan::EmbeddingMatrix matrix;
        if (embed_mode == "external") {
            if (embed_external.empty()) {
                throw curveplan::UsageError("--mode external requires --external");
            }
            matrix = curveplan::align(curveplan::load_external_embeddings(embed_external), corpus);
        } else {
            const auto vocab =
                curveplan::build_vocabulary(corpus, embed_min_df, embed_max_features);
            matrix = curveplan::embed_bow(corpus, vocab,
                                          curveplan::bow_mode_from_string(embed_mode));
        }
        curveplan::save_embeddings(matrix, embed_out, matrix.provenance);
        std::cout << "wrote " << matrix.n_rows() << " x " << matrix.dim << " embeddings ("
                  << matrix.provenance << ") to " << embed_out << "\n";
    });

    // --- train ---
    auto* train = app.add_subcommand("train", "fit a forest on embeddings and save the model");
    std::string train_embeddings;
    CommonCorpusFlags train_labels;
    std::string train_params;
    uint64_t train_seed = 0;
    std::string train_out;
    train->add_option("--embeddings", train_embeddings, "embedding CSV")->required();
    train->add_option("--labels", train_labels.path, "corpus file providing labels")->required();
    train->add_option("--labels-format", train_labels.format, "jsonl or csv");
    train->add_option("--params", train_params, "forest params JSON file");
    train->add_option("--seed", train_seed, "forest seed");
    train->add_option("--out", train_out, "model JSON path")->required();
    train->callback([&] {
        const curveplan::Corpus corpus = train_labels.load();
        const auto matrix =
            curveplan::align(curveplan::load_external_embeddings(train_embeddings), corpus);
        curveplan::ForestParams params;
        params.seed = train_seed;
        if (!train_params.empty()) {
            const json j = read_json_file(train_params);
            params.n_trees = j.value("n_trees", params.n_trees);
            params.max_depth = j.value("max_depth", params.max_depth);
            params.min_leaf = j.value("min_leaf", params.min_leaf);
            params.max_features = j.value("max_features", params.max_features);
            params.seed = j.value("seed", params.seed);
        }
        const auto model = curveplan::fit_forest(matrix, corpus.labels(), params);
        curveplan::save_forest(model, train_out);
        std::cout << "wrote forest (" << model.trees.size() << " trees, dim " << model.dim
                  << ") to " << train_out << "\n";
    });

    // --- curve ---
    auto* curve_cmd = app.add_subcommand("curve", "run the learning-curve grid for one task");
    CommonCorpusFlags curve_corpus;
    std::string curve_embeddings;
    std::string curve_sizes = "100,200,300,600,1000,2000,5000,10000";
    std::string curve_task = "task";
    curveplan::RunConfig curve_cfg;
    curve_cmd->add_option("--corpus", curve_corpus.path, "corpus file")->required();
    curve_cmd->add_option("--format", curve_corpus.format, "jsonl or csv");
    curve_cmd->add_option("--embeddings", curve_embeddings, "external embedding CSV (optional)");
    curve_cmd->add_option("--sizes", curve_sizes, "comma-separated training sizes");
    curve_cmd->add_option("--repeats", curve_cfg.repeats, "draws per size");
    curve_cmd->add_option("--holdout", curve_cfg.holdout_size, "hold-out size");
    curve_cmd->add_option("--metric", curve_cfg.metric, "accuracy|f1|auroc");
    curve_cmd->add_option("--fraction", curve_cfg.fraction, "sufficiency fraction");
    curve_cmd->add_option("--seed", curve_cfg.master_seed, "master seed");
    curve_cmd->add_option("--task-id", curve_task, "task identifier");
    curve_cmd->add_option("--n-trees", curve_cfg.n_trees, "forest size");
    curve_cmd->add_option("--parallelism", curve_cfg.parallelism, "worker threads (0 = cores)");
    std::string curve_out_dir = ".";
    curve_cmd->add_option("--out-dir", curve_out_dir, "output directory");
    curve_cmd->callback([&] {
        curve_cfg.task_id = curve_task;
        curve_cfg.corpus_path = curve_corpus.path;
        curve_cfg.corpus_format = curve_corpus.format;
        curve_cfg.out_dir = curve_out_dir;
        curve_cfg.sizes = parse_int_list(curve_sizes);
        if (!curve_embeddings.empty()) {
            curve_cfg.embeddings_path = curve_embeddings;
            curve_cfg.embed_mode = "external";
        }
        curveplan::run_task(curve_cfg, log);
        const auto curve_json = read_json_file(fs::path(curve_out_dir) /
                                               (curve_cfg.task_id + "_curve.json"));
        print_curve_summary(curveplan::curve_from_json(curve_json));
    });

    // --- vocab ---
    auto* vocab_cmd = app.add_subcommand("vocab", "L1-logistic vocabulary diagnostics");
    CommonCorpusFlags vocab_corpus;
    std::string vocab_lambda;
    double vocab_threshold = 0.1;
    int vocab_top_k = 30;
    int vocab_min_df = 2;
    int vocab_max_features = 20000;
    int vocab_fit_size = 5000;
    uint64_t vocab_seed = 0;
    std::string vocab_task = "task";
    std::string vocab_out;
    vocab_cmd->add_option("--corpus", vocab_corpus.path, "corpus file")->required();
    vocab_cmd->add_option("--format", vocab_corpus.format, "jsonl or csv");
    vocab_cmd->add_option("--lambda", vocab_lambda, "L1 strength (number) or 'cv'");
    vocab_cmd->add_option("--threshold", vocab_threshold, "strong-predictor threshold");
    vocab_cmd->add_option("--top-k", vocab_top_k, "top words to report");
    vocab_cmd->add_option("--min-df", vocab_min_df, "min document frequency");
    vocab_cmd->add_option("--max-features", vocab_max_features, "vocabulary cap");
    vocab_cmd->add_option("--fit-size", vocab_fit_size, "lasso training subsample size");
    vocab_cmd->add_option("--seed", vocab_seed, "subsample seed");
    vocab_cmd->add_option("--task-id", vocab_task, "task identifier");
    vocab_cmd->add_option("--out", vocab_out, "diagnostics JSON path")->required();
    vocab_cmd->callback([&] {
        const curveplan::Corpus corpus = vocab_corpus.load();
        curveplan::RunConfig lambda_cfg;
        apply_lambda_flag(lambda_cfg, vocab_lambda);
        const auto vocab = curveplan::build_vocabulary(corpus, vocab_min_df, vocab_max_features);
        const auto diag = curveplan::vocab_diagnostics(
            corpus, vocab, vocab_fit_size, lambda_cfg.lambda_mode, lambda_cfg.lambda_value,
            vocab_threshold, vocab_top_k, vocab_seed);
        curveplan::write_text_file(vocab_out,
                                   curveplan::vocab_diagnostics_json(vocab_task, diag).dump(2) + "\n");
        std::cout << "lambda=" << curveplan::format_double(diag.lambda_used)
                  << " strong=" << diag.partition.strong.size()
                  << " noisy=" << diag.partition.noisy.size()
                  << " inactive=" << diag.partition.inactive.size() << " -> " << vocab_out << "\n";
    });

    // --- synth ---
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with planted words");
    std::string synth_spec_path;
    std::optional<uint64_t> synth_seed;
    std::string synth_out;
    synth_cmd->add_option("--spec", synth_spec_path, "SynthSpec JSON file")->required();
    synth_cmd->add_option("--seed", synth_seed, "override the spec seed");
    synth_cmd->add_option("--out", synth_out, "output corpus JSONL path")->required();
    synth_cmd->callback([&] {
        curveplan::SynthSpec spec = curveplan::synth_spec_from_json(read_json_file(synth_spec_path));
        if (synth_seed) spec.seed = *synth_seed;
        const auto bundle = curveplan::generate(spec);
        curveplan::save_corpus_jsonl(bundle.corpus, synth_out);
        curveplan::write_text_file(synth_out + ".plant.json",
                                   curveplan::plant_manifest_json(bundle, spec).dump(2) + "\n");
        std::cout << "wrote " << bundle.corpus.size() << " documents ("
                  << bundle.corpus.positive_count() << " positive) to " << synth_out;
        if (bundle.bayes_rate_estimate) {
            std::cout << "; bayes rate ~ "
                      << curveplan::format_double(bundle.bayes_rate_estimate->accuracy);
        }
        std::cout << "\n";
    });

    // --- sweep ---
    auto* sweep_cmd = app.add_subcommand("sweep", "vary planted vocabulary and rerun the pipeline");
    std::string sweep_spec_path;
    std::string sweep_vary = "n_noisy";
    std::string sweep_values = "0,200,400";
    std::string sweep_pipeline_path;
    std::string sweep_out_dir = ".";
    int sweep_parallelism = 0;
    sweep_cmd->add_option("--spec", sweep_spec_path, "base SynthSpec JSON file")->required();
    sweep_cmd->add_option("--vary", sweep_vary, "n_strong or n_noisy");
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values");
    sweep_cmd->add_option("--pipeline", sweep_pipeline_path, "pipeline config JSON (RunConfig fields)");
    sweep_cmd->add_option("--parallelism", sweep_parallelism, "worker threads (0 = cores)");
    sweep_cmd->add_option("--out-dir", sweep_out_dir, "output directory")->required();
    sweep_cmd->callback([&] {
        const auto base = curveplan::synth_spec_from_json(read_json_file(sweep_spec_path));
        curveplan::RunConfig pipeline;
        pipeline.corpus_path = "(in-memory)";
        if (!sweep_pipeline_path.empty()) {
            pipeline = curveplan::run_config_from_json(read_json_file(sweep_pipeline_path));
        }
        pipeline.parallelism = sweep_parallelism;
        const auto entries = curveplan::sweep(base, sweep_vary, parse_int_list(sweep_values),
                                              pipeline, log);
        fs::create_directories(sweep_out_dir);
        json summary = json::array();
        for (const auto& entry : entries) {
            const std::string task_id = entry.analysis.curve.task_id;
            curveplan::write_text_file(
                fs::path(sweep_out_dir) / (task_id + "_results.csv"),
                curveplan::results_csv(task_id, entry.analysis.cells));
            curveplan::write_text_file(fs::path(sweep_out_dir) / (task_id + "_curve.json"),
                                       curveplan::curve_to_json(entry.analysis.curve).dump(2) + "\n");
            json diag = curveplan::task_diagnostics_to_json(entry.analysis.diagnostics);
            curveplan::write_text_file(fs::path(sweep_out_dir) / (task_id + "_diagnostics.json"),
                                       diag.dump(2) + "\n");
            json row{{"value", entry.value},
                     {"task_id", task_id},
                     {"n_star", entry.analysis.curve.n_star
                                    ? json(*entry.analysis.curve.n_star)
                                    : json(nullptr)},
                     {"diagnostics", std::move(diag)}};
            if (entry.bayes) row["bayes_rate"] = entry.bayes->accuracy;
            summary.push_back(std::move(row));
        }
        const fs::path summary_path = fs::path(sweep_out_dir) / "sweep_summary.json";
        curveplan::write_text_file(summary_path, summary.dump(2) + "\n");
        std::cout << "swept " << sweep_vary << " over " << sweep_values << " -> "
                  << summary_path.string() << "\n";
    });

    // --- report ---
    auto* report_cmd = app.add_subcommand("report", "cross-task steepness regression and advice");
    std::string report_tasks_dir;
    std::string report_exclude;
    std::string report_response = "metric_at_max";
    std::string report_out;
    report_cmd->add_option("--tasks", report_tasks_dir, "directory of *_diagnostics.json files")
        ->required();
    report_cmd->add_option("--exclude", report_exclude, "comma-separated task ids to exclude");
    report_cmd->add_option("--response", report_response, "metric_at_max or steepness");
    report_cmd->add_option("--out", report_out, "report JSON path")->required();
    report_cmd->callback([&] {
        std::vector<curveplan::TaskDiagnostics> tasks;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(report_tasks_dir)) {
            if (entry.path().filename().string().ends_with("_diagnostics.json")) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            tasks.push_back(curveplan::task_diagnostics_from_json(read_json_file(file)));
        }
        if (tasks.empty()) {
            throw curveplan::InputError("no *_diagnostics.json files under " + report_tasks_dir);
        }
        const auto exclude = parse_string_list(report_exclude);
        const auto result = curveplan::build_report(std::move(tasks), exclude,
                                                    response_from_string(report_response));
        curveplan::write_text_file(report_out,
                                   curveplan::suite_report_json(result, exclude).dump(2) + "\n");
        fs::path csv_path = report_out;
        csv_path.replace_extension();
        csv_path += "_figure3.csv";
        curveplan::write_text_file(csv_path, curveplan::figure3_csv(result.tasks, exclude));
        std::cout << "report over " << result.tasks.size() << " tasks (used "
                  << result.model->n_tasks_used << ") -> " << report_out << ", "
                  << csv_path.string() << "\n";
    });

    // --- run ---
    auto* run_cmd = app.add_subcommand("run", "full pipeline from a config file");
    std::string run_config_path;
    std::string run_corpus_override;
    std::string run_out_override;
    std::string run_task_override;
    std::optional<uint64_t> run_seed_override;
    std::optional<int> run_parallelism_override;
    run_cmd->add_option("--config", run_config_path, "RunConfig JSON file")->required();
    run_cmd->add_option("--corpus", run_corpus_override, "override corpus_path");
    run_cmd->add_option("--out-dir", run_out_override, "override out_dir");
    run_cmd->add_option("--task-id", run_task_override, "override task_id");
    run_cmd->add_option("--seed", run_seed_override, "override master_seed");
    run_cmd->add_option("--parallelism", run_parallelism_override, "override parallelism");
    run_cmd->callback([&] {
        curveplan::RunConfig cfg = curveplan::run_config_from_json(read_json_file(run_config_path));
        if (!run_corpus_override.empty()) cfg.corpus_path = run_corpus_override;
        if (!run_out_override.empty()) cfg.out_dir = run_out_override;
        if (!run_task_override.empty()) cfg.task_id = run_task_override;
        if (run_seed_override) cfg.master_seed = *run_seed_override;
        if (run_parallelism_override) cfg.parallelism = *run_parallelism_override;
        const auto manifest = curveplan::run_task(cfg, log);
        const auto curve_json =
            read_json_file(fs::path(cfg.out_dir) / (cfg.task_id + "_curve.json"));
        print_curve_summary(curveplan::curve_from_json(curve_json));
        std::cout << "outputs:\n";
        for (const auto& o : manifest.outputs) std::cout << "  " << o << "\n";
    });

    // --- suite ---
    auto* suite_cmd = app.add_subcommand("suite", "run several task configs plus the cross-task report");
    std::vector<std::string> suite_configs;
    std::string suite_exclude;
    std::string suite_response = "metric_at_max";
    std::string suite_out_dir = ".";
    suite_cmd->add_option("--configs", suite_configs, "RunConfig JSON files")->required();
    suite_cmd->add_option("--exclude", suite_exclude, "comma-separated task ids to exclude");
    suite_cmd->add_option("--response", suite_response, "metric_at_max or steepness");
    suite_cmd->add_option("--out-dir", suite_out_dir, "report output directory");
    suite_cmd->callback([&] {
        std::vector<curveplan::RunConfig> configs;
        for (const auto& path : suite_configs) {
            configs.push_back(curveplan::run_config_from_json(read_json_file(path)));
        }
        const auto exclude = parse_string_list(suite_exclude);
        const auto result =
            curveplan::run_suite(configs, exclude, response_from_string(suite_response), log);
        fs::create_directories(suite_out_dir);
        curveplan::write_text_file(fs::path(suite_out_dir) / "suite_report.json",
                                   curveplan::suite_report_json(result, exclude).dump(2) + "\n");
        curveplan::write_text_file(fs::path(suite_out_dir) / "figure3.csv",
                                   curveplan::figure3_csv(result.tasks, exclude));
        std::cout << "suite: " << result.tasks.size() << " tasks";
        if (!result.failures.empty()) {
            std::cout << ", WARNING " << result.failures.size() << " failed:";
            for (const auto& [task_id, error] : result.failures) {
                std::cout << "\n  " << task_id << ": " << error;
            }
        }
        std::cout << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // flatten CLI11's parse-error codes onto the usage code
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const curveplan::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const curveplan::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
