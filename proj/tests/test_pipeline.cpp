#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <string>

#include "curveplan/pipeline.hpp"

using namespace curveplan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "curveplan_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_synth_corpus(const fs::path& dir, uint64_t seed) {
    SynthSpec spec;
    spec.n_docs = 700;
    spec.n_strong = 12;
    spec.n_noisy = 6;
    spec.n_background = 120;
    spec.doc_length_min = 10;
    spec.doc_length_max = 25;
    spec.seed = seed;
    const auto bundle = generate(spec, 0);
    const fs::path path = dir / "corpus.jsonl";
    save_corpus_jsonl(bundle.corpus, path);
    return path;
}

RunConfig small_config(const fs::path& corpus, const fs::path& out_dir) {
    RunConfig cfg;
    cfg.task_id = "small";
    cfg.corpus_path = corpus.string();
    cfg.out_dir = out_dir.string();
    cfg.sizes = {60, 150, 300};
    cfg.repeats = 2;
    cfg.holdout_size = 200;
    cfg.n_trees = 12;
    cfg.vocab_fit_size = 300;
    cfg.steepness_low = 60;
    cfg.steepness_high = 300;
    cfg.master_seed = 99;
    cfg.parallelism = 1;
    return cfg;
}

}  // namespace

TEST_CASE("run config round-trips through canonical json") {
    RunConfig cfg;
    cfg.task_id = "rt";
    cfg.corpus_path = "x.jsonl";
    cfg.sizes = {10, 20, 40};
    cfg.repeats = 3;
    cfg.lambda_mode = "fixed";
    cfg.lambda_value = 0.02;
    cfg.master_seed = 1234567890123ULL;
    const RunConfig rt = run_config_from_json(run_config_to_json(cfg));
    CHECK(run_config_to_json(rt) == run_config_to_json(cfg));
    CHECK(config_hash(rt) == config_hash(cfg));

    RunConfig other = cfg;
    other.repeats = 4;
    CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("run_task writes every declared output and nothing else") {
    const fs::path dir = fresh_dir("run_task");
    const fs::path corpus = write_synth_corpus(dir, 5);
    const fs::path out_dir = dir / "out";
    const RunConfig cfg = small_config(corpus, out_dir);

    EventLog quiet;
    const RunManifest manifest = run_task(cfg, quiet);

    CHECK(manifest.config_hash == config_hash(cfg));
    CHECK(manifest.inputs.size() == 1);
    CHECK(manifest.inputs[0].first == corpus.string());
    REQUIRE(manifest.outputs.size() == 4);

    std::set<std::string> listed(manifest.outputs.begin(), manifest.outputs.end());
    std::set<std::string> on_disk;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        on_disk.insert(entry.path().string());
    }
    CHECK(listed == on_disk);

    // outputs parse and carry the configured shapes
    const auto curve = curve_from_json(
        nlohmann::json::parse(read_text_file(out_dir / "small_curve.json")));
    CHECK(curve.points.size() == 3);
    CHECK(curve.points[0].per_repeat.size() == 2);

    const auto diag = nlohmann::json::parse(read_text_file(out_dir / "small_diagnostics.json"));
    CHECK(diag.at("task_id") == "small");
    CHECK(diag.contains("kkt_violation"));
    CHECK(diag.contains("top_words"));
    CHECK(!diag.at("steepness").is_null());
}

TEST_CASE("run_task is idempotent except for manifest timestamps") {
    const fs::path dir = fresh_dir("idempotent");
    const fs::path corpus = write_synth_corpus(dir, 6);

    RunConfig cfg1 = small_config(corpus, dir / "out1");
    RunConfig cfg2 = small_config(corpus, dir / "out2");

    EventLog quiet;
    run_task(cfg1, quiet);
    run_task(cfg2, quiet);

    for (const std::string name : {"small_results.csv", "small_curve.json"}) {
        const std::string a = read_text_file(dir / "out1" / name);
        const std::string b = read_text_file(dir / "out2" / name);
        CHECK(sha256_hex(a) == sha256_hex(b));
    }
    const std::string d1 = read_text_file(dir / "out1" / "small_diagnostics.json");
    const std::string d2 = read_text_file(dir / "out2" / "small_diagnostics.json");
    CHECK(d1 == d2);
}

TEST_CASE("missing embeddings fail in the embed stage with exit-worthy error") {
    const fs::path dir = fresh_dir("missing_emb");
    const fs::path corpus = write_synth_corpus(dir, 7);
    RunConfig cfg = small_config(corpus, dir / "out");
    cfg.embed_mode = "external";
    cfg.embeddings_path = (dir / "nope.csv").string();

    EventLog quiet;
    CHECK_THROWS_WITH(run_task(cfg, quiet), Catch::Matchers::ContainsSubstring("[embed]"));
}

TEST_CASE("analyze_corpus consumes external embeddings through align") {
    const fs::path dir = fresh_dir("external_emb");
    const fs::path corpus_path = write_synth_corpus(dir, 8);
    const Corpus corpus = load_corpus(corpus_path, CorpusFormat::jsonl);

    // build an external matrix from the bow embedding, saved and reloaded
    const Vocabulary vocab = build_vocabulary(corpus, 2, 300);
    const EmbeddingMatrix bow = embed_bow(corpus, vocab, BowMode::count);
    const fs::path emb_path = dir / "emb.csv";
    save_embeddings(bow, emb_path, "test-model");

    RunConfig cfg = small_config(corpus_path, dir / "out");
    cfg.embed_mode = "external";
    cfg.embeddings_path = emb_path.string();

    EventLog quiet;
    const RunManifest manifest = run_task(cfg, quiet);
    CHECK(manifest.inputs.size() == 2);
}

TEST_CASE("run_suite survives per-task failures and reports them") {
    const fs::path dir = fresh_dir("suite");
    const fs::path corpus = write_synth_corpus(dir, 9);

    std::vector<RunConfig> configs;
    for (int i = 0; i < 3; ++i) {
        RunConfig cfg = small_config(corpus, dir / ("out" + std::to_string(i)));
        cfg.task_id = "task" + std::to_string(i);
        cfg.master_seed = 100 + static_cast<uint64_t>(i);
        configs.push_back(cfg);
    }
    RunConfig broken = small_config(dir / "does_not_exist.jsonl", dir / "out_broken");
    broken.task_id = "broken";
    configs.push_back(broken);

    EventLog quiet;
    const SuiteResult result = run_suite(configs, {}, SteepnessResponse::metric_at_max, quiet);
    CHECK(result.tasks.size() == 3);
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].first == "broken");
    REQUIRE(result.model.has_value());
    CHECK(result.model->n_tasks_used == 3);
    CHECK(result.advice.size() == 3);

    const nlohmann::json report = suite_report_json(result, {});
    CHECK(report.at("tasks").size() == 3);
    CHECK(report.at("failures").size() == 1);
}

TEST_CASE("config validation rejects contradictions") {
    RunConfig cfg;
    cfg.corpus_path = "x";
    cfg.sizes = {100, 100};
    CHECK_THROWS_AS(cfg.validate(), UsageError);

    RunConfig cfg2;
    cfg2.corpus_path = "x";
    cfg2.embed_mode = "external";
    CHECK_THROWS_AS(cfg2.validate(), UsageError);

    RunConfig ok;
    ok.corpus_path = "x";
    CHECK_NOTHROW(ok.validate());
}
