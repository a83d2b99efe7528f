#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <optional>
#include <tuple>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "curveplan/corpus.hpp"
#include "curveplan/curves.hpp"
#include "curveplan/diagnostics.hpp"
#include "curveplan/embed.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/forest.hpp"
#include "curveplan/io.hpp"
#include "curveplan/linear.hpp"
#include "curveplan/synth.hpp"
#include "curveplan/version.hpp"

namespace curveplan {

// Line-delimited JSON progress events (stderr in the CLI); disabled when
// constructed without a sink. Event order under parallel execution is
// unspecified; output files are the deterministic surface.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(std::ostream* out) : out_(out) {}

    void emit(const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
        if (out_ == nullptr) return;
        fields["event"] = event;
        std::lock_guard lock(mutex_);
        (*out_) << fields.dump() << '\n';
    }

private:
    std::ostream* out_ = nullptr;
    std::mutex mutex_;
};

inline std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Everything a reproducible task run depends on. Serializes to a canonical
// JSON form (sorted keys, shortest numbers); the config hash is the sha256 of
// that form.
struct RunConfig {
    std::string task_id = "task";
    std::string corpus_path;
    std::string corpus_format = "jsonl";  // jsonl | csv
    std::string embeddings_path;          // empty: native bag-of-words
    std::string out_dir = ".";
    bool balance_negatives = false;

    std::string embed_mode = "count";  // count | binary | tfidf | external
    int min_doc_freq = 2;
    int max_features = 20000;

    int holdout_size = 5000;
    bool stratified_holdout = true;

    std::vector<int> sizes = {100, 200, 300, 600, 1000, 2000, 5000, 10000};
    int repeats = 10;
    std::string metric = "accuracy";

    int n_trees = 200;
    int max_depth = -1;
    int min_leaf = 1;
    int forest_max_features = 0;  // 0: ceil(sqrt(dim))

    std::string lambda_mode = "relative";  // relative | fixed | cv
    double lambda_value = 0.01;
    double threshold = 0.1;
    int top_k = 30;
    int vocab_fit_size = 5000;

    double fraction = 0.95;
    std::string n_star_reference = "empirical_max_n";  // empirical_max_n | fitted_asymptote
    bool chance_adjusted = false;

    int steepness_low = 300;
    int steepness_high = 10000;
    int cosine_cap = 500;

    uint64_t master_seed = 0;
    int parallelism = 0;  // 0: all cores

    void validate() const {
        if (task_id.empty()) throw UsageError("config: task_id must be nonempty");
        if (corpus_path.empty()) throw UsageError("config: corpus_path must be set");
        corpus_format_from_string(corpus_format);
        if (embed_mode != "external") bow_mode_from_string(embed_mode);
        else if (embeddings_path.empty()) {
            throw UsageError("config: embed_mode external requires embeddings_path");
        }
        GridSpec g{sizes, repeats, master_seed, metric};
        g.validate();
        if (holdout_size <= 0) throw UsageError("config: holdout_size must be positive");
        if (lambda_mode != "relative" && lambda_mode != "fixed" && lambda_mode != "cv") {
            throw UsageError("config: lambda_mode must be relative, fixed, or cv");
        }
        if (lambda_mode != "cv" && lambda_value < 0.0) {
            throw UsageError("config: lambda_value must be nonnegative");
        }
        if (threshold <= 0.0) throw UsageError("config: threshold must be positive");
        if (top_k <= 0) throw UsageError("config: top_k must be positive");
        if (vocab_fit_size <= 0) throw UsageError("config: vocab_fit_size must be positive");
        if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("config: fraction in (0,1]");
        if (n_star_reference != "empirical_max_n" && n_star_reference != "fitted_asymptote") {
            throw UsageError("config: unknown n_star_reference");
        }
    }

    ForestParams forest_params() const {
        ForestParams p;
        p.n_trees = n_trees;
        p.max_depth = max_depth;
        p.min_leaf = min_leaf;
        p.max_features = forest_max_features;
        return p;
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return nlohmann::json{{"task_id", c.task_id},
                          {"corpus_path", c.corpus_path},
                          {"corpus_format", c.corpus_format},
                          {"embeddings_path", c.embeddings_path},
                          {"out_dir", c.out_dir},
                          {"balance_negatives", c.balance_negatives},
                          {"embed_mode", c.embed_mode},
                          {"min_doc_freq", c.min_doc_freq},
                          {"max_features", c.max_features},
                          {"holdout_size", c.holdout_size},
                          {"stratified_holdout", c.stratified_holdout},
                          {"sizes", c.sizes},
                          {"repeats", c.repeats},
                          {"metric", c.metric},
                          {"n_trees", c.n_trees},
                          {"max_depth", c.max_depth},
                          {"min_leaf", c.min_leaf},
                          {"forest_max_features", c.forest_max_features},
                          {"lambda_mode", c.lambda_mode},
                          {"lambda_value", c.lambda_value},
                          {"threshold", c.threshold},
                          {"top_k", c.top_k},
                          {"vocab_fit_size", c.vocab_fit_size},
                          {"fraction", c.fraction},
                          {"n_star_reference", c.n_star_reference},
                          {"chance_adjusted", c.chance_adjusted},
                          {"steepness_low", c.steepness_low},
                          {"steepness_high", c.steepness_high},
                          {"cosine_cap", c.cosine_cap},
                          {"master_seed", c.master_seed},
                          {"parallelism", c.parallelism}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.task_id = j.value("task_id", c.task_id);
    c.corpus_path = j.value("corpus_path", c.corpus_path);
    c.corpus_format = j.value("corpus_format", c.corpus_format);
    c.embeddings_path = j.value("embeddings_path", c.embeddings_path);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.balance_negatives = j.value("balance_negatives", c.balance_negatives);
    c.embed_mode = j.value("embed_mode", c.embed_mode);
    c.min_doc_freq = j.value("min_doc_freq", c.min_doc_freq);
    c.max_features = j.value("max_features", c.max_features);
    c.holdout_size = j.value("holdout_size", c.holdout_size);
    c.stratified_holdout = j.value("stratified_holdout", c.stratified_holdout);
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<int>>();
    c.repeats = j.value("repeats", c.repeats);
    c.metric = j.value("metric", c.metric);
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_leaf = j.value("min_leaf", c.min_leaf);
    c.forest_max_features = j.value("forest_max_features", c.forest_max_features);
    c.lambda_mode = j.value("lambda_mode", c.lambda_mode);
    c.lambda_value = j.value("lambda_value", c.lambda_value);
    c.threshold = j.value("threshold", c.threshold);
    c.top_k = j.value("top_k", c.top_k);
    c.vocab_fit_size = j.value("vocab_fit_size", c.vocab_fit_size);
    c.fraction = j.value("fraction", c.fraction);
    c.n_star_reference = j.value("n_star_reference", c.n_star_reference);
    c.chance_adjusted = j.value("chance_adjusted", c.chance_adjusted);
    c.steepness_low = j.value("steepness_low", c.steepness_low);
    c.steepness_high = j.value("steepness_high", c.steepness_high);
    c.cosine_cap = j.value("cosine_cap", c.cosine_cap);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    return c;
}

inline std::string config_hash(const RunConfig& c) {
    return sha256_hex(run_config_to_json(c).dump());
}

// --- vocabulary diagnostics (lasso + SHAP over a seeded pool subsample) ---

struct VocabDiagnostics {
    SparseLinearModel model;
    VocabPartition partition;
    double lambda_used = 0.0;
    std::vector<std::pair<int, double>> ranked_features;  // (feature, mean |phi|)
    std::vector<std::string> ranked_tokens;
    nlohmann::json top_words;  // [{token, weight, mean_abs_shap}]
};

// Fits the L1 logistic diagnostic on a stratified subsample of `pool` of size
// min(fit_size, pool size), using the supplied vocabulary. SHAP attributions
// use the training subsample as the reference set.
inline VocabDiagnostics vocab_diagnostics(const Corpus& pool, const Vocabulary& vocab,
                                          int fit_size, const std::string& lambda_mode,
                                          double lambda_value, double threshold, int top_k,
                                          uint64_t seed) {
    const int n_fit = std::min<int>(fit_size, static_cast<int>(pool.size()));
    const Corpus sample = n_fit == static_cast<int>(pool.size())
                              ? pool
                              : stratified_sample(pool, n_fit, derive_seed(seed, "vocab_fit"));
    const EmbeddingMatrix bow = embed_bow(sample, vocab, BowMode::count);
    const std::vector<int> y = sample.labels();

    VocabDiagnostics out;
    if (lambda_mode == "fixed") {
        out.lambda_used = lambda_value;
    } else if (lambda_mode == "relative") {
        out.lambda_used = lambda_value * lasso_lambda_max(bow, y);
    } else if (lambda_mode == "cv") {
        out.lambda_used = cv_select_lambda(bow, y, derive_seed(seed, "cv"));
    } else {
        throw UsageError("unknown lambda mode \"" + lambda_mode + "\"");
    }

    out.model = fit_lasso_logistic(bow, y, out.lambda_used);
    out.partition = partition_vocabulary(out.model, threshold);

    const std::vector<ShapAttribution> attrs = shap_linear_all(out.model, bow, bow);
    out.ranked_features = top_features(attrs, top_k);
    out.top_words = nlohmann::json::array();
    for (const auto& [j, mean_abs_shap] : out.ranked_features) {
        const std::string& token = vocab.tokens[static_cast<size_t>(j)];
        out.ranked_tokens.push_back(token);
        out.top_words.push_back({{"token", token},
                                 {"weight", out.model.weights[static_cast<size_t>(j)]},
                                 {"mean_abs_shap", mean_abs_shap}});
    }
    return out;
}

inline nlohmann::json vocab_diagnostics_json(const std::string& task_id,
                                             const VocabDiagnostics& v) {
    return nlohmann::json{{"task_id", task_id},
                          {"lambda", v.lambda_used},
                          {"threshold", v.partition.threshold},
                          {"n_strong", v.partition.strong.size()},
                          {"n_noisy", v.partition.noisy.size()},
                          {"n_inactive", v.partition.inactive.size()},
                          {"n_excluded_zero_variance", v.model.excluded_features.size()},
                          {"converged", v.model.converged},
                          {"kkt_violation", v.model.kkt_violation},
                          {"top_words", v.top_words}};
}

// --- single-task analysis used by run_task and sweep ---

struct TaskAnalysis {
    LearningCurve curve;
    std::vector<CellResult> cells;
    TaskDiagnostics diagnostics;
    VocabDiagnostics vocab_diag;
    Vocabulary vocab;
};

// Full per-task pipeline on an in-memory corpus: embed, split off the
// hold-out, run the grid, fit the curve, detect N*, and run the vocabulary
// diagnostics on the training pool.
inline TaskAnalysis analyze_corpus(const std::string& task_id, const Corpus& corpus,
                                   const std::optional<EmbeddingMatrix>& external,
                                   const RunConfig& cfg, EventLog& log) {
    TaskAnalysis result;

    // Bag-of-words features back both the native classifier path and the
    // vocabulary diagnostics; an external matrix replaces only the former.
    try {
        result.vocab = build_vocabulary(corpus, cfg.min_doc_freq, cfg.max_features);
    } catch (...) {
        rethrow_with_stage("embed");
    }

    EmbeddingMatrix features;
    try {
        if (external) {
            features = align(*external, corpus);
        } else {
            features = embed_bow(corpus, result.vocab, bow_mode_from_string(cfg.embed_mode));
        }
    } catch (...) {
        rethrow_with_stage("embed");
    }
    log.emit("embedded", {{"task_id", task_id},
                          {"dim", features.dim},
                          {"provenance", features.provenance}});

    Corpus pool, holdout;
    try {
        SplitSpec split;
        split.holdout_size = std::min<int>(cfg.holdout_size, static_cast<int>(corpus.size()) - 1);
        split.seed = derive_seed(cfg.master_seed, "split");
        split.stratified = cfg.stratified_holdout;
        std::tie(pool, holdout) = holdout_split(corpus, split);
    } catch (...) {
        rethrow_with_stage("split");
    }
    log.emit("split", {{"task_id", task_id}, {"pool", pool.size()}, {"holdout", holdout.size()}});

    try {
        GridSpec grid{cfg.sizes, cfg.repeats, derive_seed(cfg.master_seed, "grid"), cfg.metric};
        result.cells = run_grid_cells(pool, holdout, features, grid, cfg.forest_params(),
                                      cfg.parallelism, [&](const CellResult& cell) {
                                          log.emit("cell_done",
                                                   {{"task_id", task_id},
                                                    {"stage", "curve"},
                                                    {"n", cell.n},
                                                    {"repeat", cell.repeat},
                                                    {"metric", metric_value(cell.metrics, cfg.metric)}});
                                      });
        result.curve.task_id = task_id;
        result.curve.metric = cfg.metric;
        result.curve.points = aggregate_cells(result.cells, grid);
        result.curve.sufficiency_fraction = cfg.fraction;
    } catch (...) {
        rethrow_with_stage("curve");
    }

    try {
        // the parametric fit needs 3 distinct sizes; smaller grids still get N*
        if (result.curve.points.size() >= 3) {
            result.curve.fit = fit_power_law(result.curve.points);
        }
        const auto reference = cfg.n_star_reference == "fitted_asymptote"
                                   ? SufficiencyReference::fitted_asymptote
                                   : SufficiencyReference::empirical_max_n;
        result.curve.n_star =
            detect_n_star(result.curve, cfg.fraction, reference, cfg.chance_adjusted);
    } catch (...) {
        rethrow_with_stage("fit");
    }
    nlohmann::json fit_event{{"task_id", task_id},
                             {"n_star", result.curve.n_star ? nlohmann::json(*result.curve.n_star)
                                                            : nlohmann::json(nullptr)}};
    if (result.curve.fit) {
        fit_event["a"] = result.curve.fit->a;
        fit_event["b"] = result.curve.fit->b;
        fit_event["c"] = result.curve.fit->c;
    }
    log.emit("curve_fitted", fit_event);

    try {
        result.vocab_diag =
            vocab_diagnostics(pool, result.vocab, cfg.vocab_fit_size, cfg.lambda_mode,
                              cfg.lambda_value, cfg.threshold, cfg.top_k,
                              derive_seed(cfg.master_seed, "vocab"));
    } catch (...) {
        rethrow_with_stage("vocab");
    }
    if (!result.vocab_diag.model.excluded_features.empty()) {
        log.emit("warning", {{"task_id", task_id},
                             {"message", "zero-variance features excluded from the lasso"},
                             {"count", result.vocab_diag.model.excluded_features.size()}});
    }

    try {
        result.diagnostics = collect_diagnostics(
            result.curve, result.vocab_diag.partition, result.vocab, features, corpus,
            cfg.steepness_low, cfg.steepness_high, cfg.cosine_cap,
            derive_seed(cfg.master_seed, "diag"));
    } catch (...) {
        rethrow_with_stage("diagnostics");
    }
    return result;
}

// --- task run with files and manifest ---

struct RunManifest {
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
    std::vector<std::pair<std::string, std::string>> inputs;  // (path, sha256)
    std::vector<std::string> outputs;
};

inline nlohmann::json run_manifest_to_json(const RunManifest& m) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [path, digest] : m.inputs) {
        inputs.push_back({{"path", path}, {"sha256", digest}});
    }
    return nlohmann::json{{"config_hash", m.config_hash},
                          {"tool_version", m.tool_version},
                          {"started_at", m.started_at},
                          {"finished_at", m.finished_at},
                          {"inputs", std::move(inputs)},
                          {"outputs", m.outputs}};
}

inline nlohmann::json task_report_json(const TaskAnalysis& analysis, const RunConfig& cfg) {
    nlohmann::json j = task_diagnostics_to_json(analysis.diagnostics);
    const nlohmann::json vocab_json = vocab_diagnostics_json(cfg.task_id, analysis.vocab_diag);
    for (auto it = vocab_json.begin(); it != vocab_json.end(); ++it) j[it.key()] = it.value();
    return j;
}

// Executes the whole pipeline for one config and writes every external
// interface file. Outputs are byte-identical across reruns and parallelism
// degrees; only the manifest timestamps move.
inline RunManifest run_task(const RunConfig& cfg, EventLog& log) {
    cfg.validate();
    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    manifest.started_at = iso8601_utc_now();

    Corpus corpus;
    try {
        corpus = load_corpus(cfg.corpus_path, corpus_format_from_string(cfg.corpus_format));
        if (cfg.balance_negatives) {
            corpus = balance_negatives(corpus, derive_seed(cfg.master_seed, "balance"));
        }
    } catch (...) {
        rethrow_with_stage("ingest");
    }
    manifest.inputs.emplace_back(cfg.corpus_path, sha256_file(cfg.corpus_path));
    log.emit("ingested", {{"task_id", cfg.task_id},
                          {"documents", corpus.size()},
                          {"positives", corpus.positive_count()}});

    std::optional<EmbeddingMatrix> external;
    if (cfg.embed_mode == "external" || !cfg.embeddings_path.empty()) {
        try {
            if (cfg.embeddings_path.empty()) {
                throw InputError("embeddings path not set");
            }
            external = load_external_embeddings(cfg.embeddings_path);
        } catch (...) {
            rethrow_with_stage("embed");
        }
        manifest.inputs.emplace_back(cfg.embeddings_path, sha256_file(cfg.embeddings_path));
    }

    const TaskAnalysis analysis = analyze_corpus(cfg.task_id, corpus, external, cfg, log);

    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);
    auto write_output = [&](const std::string& name, const std::string& content) {
        const std::filesystem::path path = out_dir / name;
        write_text_file(path, content);
        manifest.outputs.push_back(path.string());
    };

    write_output(cfg.task_id + "_results.csv", results_csv(cfg.task_id, analysis.cells));
    write_output(cfg.task_id + "_curve.json", curve_to_json(analysis.curve).dump(2) + "\n");
    write_output(cfg.task_id + "_diagnostics.json",
                 task_report_json(analysis, cfg).dump(2) + "\n");

    manifest.finished_at = iso8601_utc_now();
    const std::filesystem::path manifest_path = out_dir / (cfg.task_id + "_manifest.json");
    manifest.outputs.push_back(manifest_path.string());
    write_text_file(manifest_path, run_manifest_to_json(manifest).dump(2) + "\n");
    log.emit("task_done", {{"task_id", cfg.task_id}, {"outputs", manifest.outputs}});
    return manifest;
}

// --- synthetic sweep (vocabulary-quality experiment) ---

struct SweepEntry {
    int value = 0;
    SynthSpec spec;
    std::optional<BayesEstimate> bayes;
    TaskAnalysis analysis;
};

inline SynthSpec sweep_value_spec(const SynthSpec& base, const std::string& vary, int value) {
    SynthSpec spec = base;
    if (vary == "n_strong") spec.n_strong = value;
    else if (vary == "n_noisy") spec.n_noisy = value;
    else throw UsageError("sweep: vary must be n_strong or n_noisy");
    spec.seed = derive_seed(base.seed, "sweep_value", static_cast<uint64_t>(value));
    return spec;
}

// Generates one corpus per value and runs the full pipeline on it. Seeds are
// derived per value from the base spec seed.
inline std::vector<SweepEntry> sweep(const SynthSpec& base, const std::string& vary,
                                     const std::vector<int>& values, const RunConfig& pipeline,
                                     EventLog& log) {
    if (values.empty()) throw UsageError("sweep: values must be nonempty");
    std::vector<SweepEntry> entries;
    for (int value : values) {
        try {
            SweepEntry entry;
            entry.value = value;
            entry.spec = sweep_value_spec(base, vary, value);
            SynthCorpusBundle bundle = generate(entry.spec);
            entry.bayes = bundle.bayes_rate_estimate;

            RunConfig cfg = pipeline;
            cfg.task_id = pipeline.task_id + "_" + vary + "_" + std::to_string(value);
            cfg.master_seed = derive_seed(entry.spec.seed, "pipeline");
            entry.analysis = analyze_corpus(cfg.task_id, bundle.corpus, std::nullopt, cfg, log);
            entries.push_back(std::move(entry));
        } catch (...) {
            rethrow_with_stage("sweep value " + std::to_string(value));
        }
    }
    return entries;
}

// --- cross-task suite ---

struct SuiteResult {
    std::vector<TaskDiagnostics> tasks;
    std::optional<SteepnessModel> model;
    std::vector<AnnotationAdvice> advice;
    std::vector<std::pair<std::string, std::string>> failures;  // (task_id, error)
};

inline nlohmann::json suite_report_json(const SuiteResult& r,
                                        const std::vector<std::string>& exclude) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : r.tasks) tasks.push_back(task_diagnostics_to_json(t));
    nlohmann::json advice = nlohmann::json::array();
    for (const auto& a : r.advice) {
        advice.push_back({{"task_id", a.task_id},
                          {"predicted_response_from_noisy", a.predicted_response_from_noisy},
                          {"predicted_response_from_strong", a.predicted_response_from_strong},
                          {"predicted_steepness", a.predicted_steepness},
                          {"bucket", a.bucket},
                          {"floor_documents", a.floor_documents}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& [task_id, error] : r.failures) {
        failures.push_back({{"task_id", task_id}, {"error", error}});
    }
    return nlohmann::json{{"format_version", kReportFormatVersion},
                          {"tasks", std::move(tasks)},
                          {"model", r.model ? steepness_model_to_json(*r.model)
                                            : nlohmann::json(nullptr)},
                          {"advice", std::move(advice)},
                          {"excluded", exclude},
                          {"failures", std::move(failures)}};
}

// Cross-task report over already-collected diagnostics: regression fit plus
// per-task advice. Tasks in `exclude` contribute nothing to the fit.
inline SuiteResult build_report(std::vector<TaskDiagnostics> tasks,
                                const std::vector<std::string>& exclude,
                                SteepnessResponse response) {
    SuiteResult result;
    for (auto& t : tasks) {
        for (const auto& e : exclude) {
            if (t.task_id == e) t.outlier = true;
        }
    }
    result.tasks = std::move(tasks);
    result.model = fit_steepness_model(result.tasks, response, exclude);
    for (const auto& t : result.tasks) {
        result.advice.push_back(annotation_advice(t, *result.model));
    }
    return result;
}

// Runs every config, then the cross-task analysis over the survivors.
// Per-task failures are recorded and do not abort the suite.
inline SuiteResult run_suite(const std::vector<RunConfig>& configs,
                             const std::vector<std::string>& exclude,
                             SteepnessResponse response, EventLog& log) {
    if (configs.empty()) throw UsageError("suite: need at least 1 config");
    std::vector<TaskDiagnostics> tasks;
    std::vector<std::pair<std::string, std::string>> failures;
    for (const RunConfig& cfg : configs) {
        try {
            run_task(cfg, log);
            const nlohmann::json diag = nlohmann::json::parse(read_text_file(
                std::filesystem::path(cfg.out_dir) / (cfg.task_id + "_diagnostics.json")));
            tasks.push_back(task_diagnostics_from_json(diag));
        } catch (const std::exception& e) {
            failures.emplace_back(cfg.task_id, e.what());
            log.emit("task_failed", {{"task_id", cfg.task_id}, {"error", e.what()}});
        }
    }
    SuiteResult result = build_report(std::move(tasks), exclude, response);
    result.failures = std::move(failures);
    return result;
}

}  // namespace curveplan
