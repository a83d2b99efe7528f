// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curveplan/pipeline.hpp"
#include "oracles.hpp"

using namespace curveplan;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %d: %s (%.1fs) %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                seconds, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
    const double m = mean_of(v);
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return sq / static_cast<double>(v.size() - 1);
}

double pooled_std(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    return std::sqrt(((na - 1.0) * sample_var(a) + (nb - 1.0) * sample_var(b)) / (na + nb - 2.0));
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "curveplan_acceptance";
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// criterion 1: sufficiency rule returns 600 on the reference means
// ---------------------------------------------------------------------------
void criterion_1() {
    Timer timer;
    LearningCurve curve;
    curve.task_id = "fixture";
    for (const auto& [n, mean] : std::map<int, double>{
             {100, 0.80}, {300, 0.84}, {600, 0.856}, {10000, 0.90}}) {
        CurvePoint p;
        p.n = n;
        p.mean = mean;
        curve.points.push_back(p);
    }
    const auto n_star = detect_n_star(curve, 0.95);
    const bool pass = n_star.has_value() && *n_star == 600;
    report(1, "sufficiency rule fidelity", pass,
           n_star ? "n_star=" + std::to_string(*n_star) : "n_star absent", timer.seconds());
}

// ---------------------------------------------------------------------------
// criterion 2: steepness regression slopes -0.02 / +0.04 per 100 words
// ---------------------------------------------------------------------------
void criterion_2() {
    Timer timer;
    auto fixture = [](const std::string& id, int n_strong, int n_noisy, double response) {
        TaskDiagnostics t;
        t.task_id = id;
        t.n_strong = n_strong;
        t.n_noisy = n_noisy;
        t.vocab_size = 1000;
        t.steepness_available = true;
        t.metric_at_max = response;
        t.metric_at_low = response - 0.05;
        t.steepness = 0.05;
        return t;
    };

    std::vector<TaskDiagnostics> noisy{fixture("a", 50, 0, 0.90), fixture("b", 50, 100, 0.88),
                                       fixture("c", 50, 200, 0.86)};
    const SteepnessModel m_noisy = fit_steepness_model(noisy, SteepnessResponse::metric_at_max);
    const double slope_noisy_100 = m_noisy.slope_noisy * 100.0;

    std::vector<TaskDiagnostics> strong{fixture("a", 0, 30, 0.80), fixture("b", 100, 30, 0.84),
                                        fixture("c", 200, 30, 0.88)};
    const SteepnessModel m_strong = fit_steepness_model(strong, SteepnessResponse::metric_at_max);
    const double slope_strong_100 = m_strong.slope_strong * 100.0;

    const bool pass = std::abs(slope_noisy_100 - (-0.02)) <= 1e-12 &&
                      std::abs(slope_strong_100 - 0.04) <= 1e-12;
    std::ostringstream detail;
    detail << "slope_noisy/100=" << slope_noisy_100 << " slope_strong/100=" << slope_strong_100;
    report(2, "steepness-regression slope fidelity", pass, detail.str(), timer.seconds());
}

// ---------------------------------------------------------------------------
// criterion 3: lasso KKT certificates + 1-D grid-search oracle agreement
// ---------------------------------------------------------------------------
void criterion_3() {
    Timer timer;
    Rng rng(20260810);
    int kkt_bad = 0;
    int not_converged = 0;
    double worst_kkt = 0.0;

    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20 + static_cast<int>(rng.next_below(181));  // up to 200
        const int d = 2 + static_cast<int>(rng.next_below(49));    // up to 50
        EmbeddingMatrix X;
        X.dim = d;
        X.provenance = "synthetic";
        std::vector<int> y(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            X.doc_ids.push_back("r" + std::to_string(i));
            double signal = 0.0;
            for (int j = 0; j < d; ++j) {
                const double v = rng.next_gaussian();
                X.data.push_back(v);
                if (j < 3) signal += v;
            }
            y[static_cast<size_t>(i)] = signal + rng.next_gaussian() > 0.0 ? 1 : 0;
        }
        y[0] = 0;
        y[1] = 1;
        const double lmax = lasso_lambda_max(X, y);
        const double lambda = lmax * (0.02 + 0.5 * rng.next_double());
        const SparseLinearModel model = fit_lasso_logistic(X, y, lambda);
        worst_kkt = std::max(worst_kkt, model.kkt_violation);
        if (!model.converged) ++not_converged;
        if (model.converged && model.kkt_violation >= 1e-4) ++kkt_bad;
    }

    // 1-D instances against the dense grid-search oracle
    double worst_gap = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const int half = 30 + static_cast<int>(rng.next_below(40));
        std::vector<std::vector<double>> rows;
        std::vector<int> y;
        for (int i = 0; i < half; ++i) {
            rows.push_back({-1.0});
            y.push_back(rng.next_double() < 0.15 ? 1 : 0);
            rows.push_back({+1.0});
            y.push_back(rng.next_double() < 0.85 ? 1 : 0);
        }
        y[0] = 0;
        y[1] = 1;
        EmbeddingMatrix X;
        X.dim = 1;
        for (size_t i = 0; i < rows.size(); ++i) {
            X.doc_ids.push_back("r" + std::to_string(i));
            X.data.push_back(rows[i][0]);
        }
        const double lambda = 0.05 + 0.1 * rng.next_double();
        const SparseLinearModel model = fit_lasso_logistic(X, y, lambda);

        // standardize the single column the way the fit does
        double mean = 0.0;
        for (double v : X.data) mean += v;
        mean /= static_cast<double>(X.data.size());
        double var = 0.0;
        for (double v : X.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(X.data.size());
        std::vector<double> z;
        for (double v : X.data) z.push_back((v - mean) / std::sqrt(var));

        const auto oracle = oracles::lasso_1d_grid_search(z, y, lambda);
        worst_gap = std::max(worst_gap, std::abs(model.weights[0] - oracle.w));
    }

    const double elapsed = timer.seconds();
    const bool pass =
        kkt_bad == 0 && not_converged == 0 && worst_gap < 2e-3 && elapsed < 30.0;
    std::ostringstream detail;
    detail << "worst_kkt=" << worst_kkt << " worst_1d_gap=" << worst_gap
           << " non_converged=" << not_converged;
    report(3, "lasso optimality", pass, detail.str(), elapsed);
}

// ---------------------------------------------------------------------------
// criterion 4: SHAP local accuracy on 1000 random models
// ---------------------------------------------------------------------------
void criterion_4() {
    Timer timer;
    Rng rng(11235);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_below(30));
        SparseLinearModel m;
        m.weights.resize(static_cast<size_t>(d));
        m.feature_means.resize(static_cast<size_t>(d));
        m.feature_stds.resize(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) {
            m.weights[static_cast<size_t>(j)] = 3.0 * rng.next_gaussian();
            m.feature_means[static_cast<size_t>(j)] = 2.0 * rng.next_gaussian();
            m.feature_stds[static_cast<size_t>(j)] = 0.25 + 2.0 * rng.next_double();
        }
        m.intercept = rng.next_gaussian();

        EmbeddingMatrix ref;
        ref.dim = d;
        const int n_ref = 1 + static_cast<int>(rng.next_below(5));
        for (int i = 0; i < n_ref; ++i) {
            ref.doc_ids.push_back("r" + std::to_string(i));
            for (int j = 0; j < d; ++j) ref.data.push_back(3.0 * rng.next_gaussian());
        }
        std::vector<double> x(static_cast<size_t>(d));
        for (double& v : x) v = 3.0 * rng.next_gaussian();

        const ShapAttribution a = shap_linear(m, ref, x, "doc");
        double total = a.base_value;
        for (double phi : a.phi) total += phi;
        worst = std::max(worst, std::abs(total - m.margin(x)));
    }
    const double elapsed = timer.seconds();
    const bool pass = worst < 1e-10 && elapsed < 5.0;
    report(4, "shap local accuracy", pass, "worst_gap=" + std::to_string(worst), elapsed);
}

// ---------------------------------------------------------------------------
// criterion 5: power-law recovery, noiseless and noisy
// ---------------------------------------------------------------------------
void criterion_5() {
    Timer timer;
    const std::vector<int> sizes{100,  150,  200,  300,  400,  600,  800,  1000,
                                 1500, 2000, 3000, 4000, 5000, 7000, 10000};

    auto points_from = [&](double a, double b, double c) {
        std::vector<CurvePoint> pts;
        for (int n : sizes) {
            CurvePoint p;
            p.n = n;
            p.mean = a - b * std::pow(static_cast<double>(n), -c);
            pts.push_back(p);
        }
        return pts;
    };

    Rng rng(5150);
    double worst_rmse = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const double a = 0.55 + 0.5 * rng.next_double();
        const double b = 0.2 + 2.8 * rng.next_double();
        const double c = 0.05 + 1.95 * rng.next_double();
        const PowerLawFit fit = fit_power_law(points_from(a, b, c));
        worst_rmse = std::max(worst_rmse, fit.rmse);
    }

    int a_hits = 0;
    const double true_a = 0.9, true_b = 2.0, true_c = 0.5;
    for (int seed = 0; seed < 20; ++seed) {
        Rng noise(derive_seed(777, "curvefit", static_cast<uint64_t>(seed)));
        auto pts = points_from(true_a, true_b, true_c);
        for (auto& p : pts) p.mean += 0.005 * noise.next_gaussian();
        const PowerLawFit fit = fit_power_law(pts);
        if (std::abs(fit.a - true_a) <= 0.01) ++a_hits;
    }

    const double elapsed = timer.seconds();
    const bool pass = worst_rmse < 1e-6 && a_hits >= 18 && elapsed < 60.0;
    std::ostringstream detail;
    detail << "worst_noiseless_rmse=" << worst_rmse << " a_within_0.01=" << a_hits << "/20";
    report(5, "curve-fit recovery", pass, detail.str(), elapsed);
}

// ---------------------------------------------------------------------------
// criteria 6/7/10 share the synthetic sweep harness
// ---------------------------------------------------------------------------
struct SweepRun {
    std::vector<int> values;
    std::vector<std::vector<double>> metric_max;  // [value][seed]
    std::vector<std::vector<double>> metric_low;  // [value][seed], at n=300
    bool bayes_ok = true;
    std::string bayes_detail;
};

SynthSpec acceptance_base(uint64_t seed) {
    SynthSpec s;
    s.n_docs = 6000;
    s.positive_fraction = 0.5;
    s.n_background = 400;
    s.doc_length_min = 20;
    s.doc_length_max = 50;
    s.p_strong = {0.5, 0.15};
    s.p_noisy = {0.35, 0.30};
    s.strong_decay = 0.93;
    s.seed = seed;
    return s;
}

RunConfig acceptance_pipeline() {
    RunConfig cfg;
    cfg.task_id = "acc";
    cfg.corpus_path = "(in-memory)";
    cfg.sizes = {100, 300, 600, 1000, 2000};
    cfg.repeats = 3;
    cfg.holdout_size = 2000;
    cfg.n_trees = 50;
    cfg.max_features = 1500;
    cfg.vocab_fit_size = 2000;
    cfg.steepness_low = 300;
    cfg.steepness_high = 2000;
    cfg.parallelism = 0;  // all cores; results are schedule-free
    return cfg;
}

SweepRun run_sweep(const std::string& vary, const std::vector<int>& values, int base_strong,
                   int base_noisy, int n_seeds, EventLog& log) {
    SweepRun out;
    out.values = values;
    out.metric_max.assign(values.size(), {});
    out.metric_low.assign(values.size(), {});
    std::ostringstream bayes_log;

    for (int s = 0; s < n_seeds; ++s) {
        SynthSpec base = acceptance_base(derive_seed(2026, "acceptance6", static_cast<uint64_t>(s)));
        base.n_strong = base_strong;
        base.n_noisy = base_noisy;
        const auto entries = sweep(base, vary, values, acceptance_pipeline(), log);
        for (size_t v = 0; v < entries.size(); ++v) {
            const auto& analysis = entries[v].analysis;
            if (!analysis.diagnostics.steepness_available) {
                throw InternalError("acceptance sweep: steepness endpoints missing");
            }
            out.metric_max[v].push_back(analysis.diagnostics.metric_at_max);
            out.metric_low[v].push_back(analysis.diagnostics.metric_at_low);

            // criterion 7: bayes ceiling at every grid size
            const BayesEstimate bayes = *entries[v].bayes;
            for (const CurvePoint& p : analysis.curve.points) {
                const double se_binomial =
                    std::sqrt(std::max(1e-12, p.mean * (1.0 - p.mean)) / 2000.0);
                const double se_repeat = p.std_dev / std::sqrt(3.0);
                const double combined = std::sqrt(bayes.std_error * bayes.std_error +
                                                  se_binomial * se_binomial +
                                                  se_repeat * se_repeat);
                if (p.mean > bayes.accuracy + 3.0 * combined) {
                    out.bayes_ok = false;
                    bayes_log << " [" << vary << "=" << entries[v].value << " seed " << s << " n="
                              << p.n << ": " << p.mean << " > " << bayes.accuracy << "+3*"
                              << combined << "]";
                }
            }
        }
    }
    out.bayes_detail = bayes_log.str();
    return out;
}

bool monotone_within(const std::vector<std::vector<double>>& per_value, bool non_decreasing,
                     std::string& detail) {
    bool ok = true;
    std::ostringstream log;
    for (size_t v = 0; v + 1 < per_value.size(); ++v) {
        const double m0 = mean_of(per_value[v]);
        const double m1 = mean_of(per_value[v + 1]);
        const double tol = 2.0 * pooled_std(per_value[v], per_value[v + 1]) + 1e-12;
        const bool step_ok = non_decreasing ? m1 >= m0 - tol : m1 <= m0 + tol;
        log << (v == 0 ? "" : " ") << m0 << "->" << m1 << " (tol " << tol << ")";
        ok = ok && step_ok;
    }
    detail = log.str();
    return ok;
}

struct SweepArtifacts {
    SweepRun strong;
    SweepRun noisy;
};

SweepArtifacts run_criterion6_sweeps() {
    EventLog quiet;
    SweepArtifacts a;
    a.strong = run_sweep("n_strong", {10, 50, 200}, /*base_strong=*/10, /*base_noisy=*/100, 5, quiet);
    a.noisy = run_sweep("n_noisy", {0, 200, 400}, /*base_strong=*/10, /*base_noisy=*/0, 5, quiet);
    return a;
}

void criterion_6(const SweepArtifacts& artifacts, double elapsed) {
    std::string strong_detail, noisy_detail;
    const bool strong_ok = monotone_within(artifacts.strong.metric_max, true, strong_detail);
    const bool noisy_ok = monotone_within(artifacts.noisy.metric_low, false, noisy_detail);
    report(6, "vocabulary-steepness direction", strong_ok && noisy_ok,
           "metric_at_max over n_strong: " + strong_detail +
               "; accuracy@300 over n_noisy: " + noisy_detail,
           elapsed);
}

void criterion_7(const SweepArtifacts& artifacts) {
    Timer timer;
    const bool pass = artifacts.strong.bayes_ok && artifacts.noisy.bayes_ok;
    report(7, "bayes ceiling", pass,
           pass ? "holdout accuracy within bayes + 3 combined se at every grid size"
                : "violations:" + artifacts.strong.bayes_detail + artifacts.noisy.bayes_detail,
           timer.seconds());
}

// ---------------------------------------------------------------------------
// criterion 8: run with parallelism 1 and 8 produces identical outputs
// ---------------------------------------------------------------------------
void criterion_8() {
    Timer timer;
    const fs::path dir = work_dir() / "parallel";
    fs::remove_all(dir);
    fs::create_directories(dir);

    SynthSpec spec;
    spec.n_docs = 1500;
    spec.n_strong = 15;
    spec.n_noisy = 10;
    spec.n_background = 150;
    spec.doc_length_min = 15;
    spec.doc_length_max = 35;
    spec.seed = 8;
    const auto bundle = generate(spec, 0);
    const fs::path corpus_path = dir / "corpus.jsonl";
    save_corpus_jsonl(bundle.corpus, corpus_path);

    RunConfig cfg;
    cfg.task_id = "par";
    cfg.corpus_path = corpus_path.string();
    cfg.sizes = {80, 200, 400};
    cfg.repeats = 2;
    cfg.holdout_size = 400;
    cfg.n_trees = 15;
    cfg.vocab_fit_size = 400;
    cfg.steepness_low = 80;
    cfg.steepness_high = 400;
    cfg.master_seed = 314;

    EventLog quiet;
    cfg.parallelism = 1;
    cfg.out_dir = (dir / "p1").string();
    run_task(cfg, quiet);
    cfg.parallelism = 8;
    cfg.out_dir = (dir / "p8").string();
    run_task(cfg, quiet);

    const std::string csv1 = read_text_file(dir / "p1" / "par_results.csv");
    const std::string csv8 = read_text_file(dir / "p8" / "par_results.csv");
    const std::string curve1 = read_text_file(dir / "p1" / "par_curve.json");
    const std::string curve8 = read_text_file(dir / "p8" / "par_curve.json");
    const bool pass = csv1 == csv8 && curve1 == curve8;
    report(8, "determinism under parallelism", pass,
           pass ? "results CSV and curve JSON byte-identical" : "outputs differ", timer.seconds());
}

// ---------------------------------------------------------------------------
// criterion 9: stratification matches largest-remainder apportionment
// ---------------------------------------------------------------------------
void criterion_9() {
    Timer timer;
    Rng rng(90210);
    int checked = 0;
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n_pos = 1 + static_cast<int>(rng.next_below(300));
        const int n_neg = 1 + static_cast<int>(rng.next_below(300));
        std::vector<Document> docs;
        for (int i = 0; i < n_pos; ++i) docs.push_back({"p" + std::to_string(i), "", 1});
        for (int i = 0; i < n_neg; ++i) docs.push_back({"n" + std::to_string(i), "", 0});
        const Corpus corpus = Corpus::from_documents(std::move(docs));

        const int total = n_pos + n_neg;
        const int n = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(total)));
        const auto expected = oracles::apportion({n_pos, n_neg}, n);
        const uint64_t seed = rng.next_u64();

        if (n >= 2 && (expected[0] == 0 || expected[1] == 0)) {
            try {
                stratified_sample(corpus, n, seed);
                ++mismatches;  // the zero-class guard should have fired
            } catch (const InputError&) {
            }
            continue;
        }
        const Corpus sample = stratified_sample(corpus, n, seed);
        ++checked;
        if (static_cast<int>(sample.positive_count()) != expected[0] ||
            static_cast<int>(sample.negative_count()) != expected[1] ||
            static_cast<int>(sample.size()) != n) {
            ++mismatches;
        }
    }
    const bool pass = mismatches == 0;
    report(9, "stratification exactness", pass,
           std::to_string(checked) + " sampled triples, " + std::to_string(mismatches) +
               " mismatches",
           timer.seconds());
}

// ---------------------------------------------------------------------------
// criterion 10: SHAP stability on the strong-rich task
// ---------------------------------------------------------------------------
void criterion_10() {
    Timer timer;

    // the criterion-6 strong-rich task: first master seed, n_strong=200
    SynthSpec base = acceptance_base(derive_seed(2026, "acceptance6", 0));
    base.n_strong = 10;
    base.n_noisy = 100;
    const SynthSpec spec = sweep_value_spec(base, "n_strong", 200);
    const auto bundle = generate(spec, 0);

    const RunConfig cfg = acceptance_pipeline();
    const uint64_t master = derive_seed(spec.seed, "pipeline");
    SplitSpec split;
    split.holdout_size = cfg.holdout_size;
    split.seed = derive_seed(master, "split");
    auto [pool, holdout] = holdout_split(bundle.corpus, split);

    const Vocabulary vocab = build_vocabulary(bundle.corpus, cfg.min_doc_freq, cfg.max_features);
    const EmbeddingMatrix pool_bow = embed_bow(pool, vocab, BowMode::count);

    // Two models, one at each training size; both rankings attribute over the
    // shared pool so the comparison varies only the model. The fit is sparser
    // than the pipeline default so the tail vocabulary zeroes out.
    auto ranked_at = [&](int n_fit) {
        const Corpus sample = stratified_sample(
            pool, n_fit, derive_seed(master, "stability", static_cast<uint64_t>(n_fit)));
        const EmbeddingMatrix train_bow = embed_bow(sample, vocab, BowMode::count);
        const std::vector<int> y = sample.labels();
        const double lambda = 0.05 * lasso_lambda_max(train_bow, y);
        const SparseLinearModel model = fit_lasso_logistic(train_bow, y, lambda);
        const auto attrs = shap_linear_all(model, train_bow, pool_bow);
        return top_features(attrs, 10);
    };
    const auto small = ranked_at(600);
    const auto large = ranked_at(2000);

    const StabilityReport stability = shap_stability(small, large, 10);

    const std::set<std::string> planted(bundle.planted_strong.begin(),
                                        bundle.planted_strong.end());
    int planted_in_top = 0;
    for (const auto& [feature, shap] : large) {
        if (planted.count(vocab.tokens[static_cast<size_t>(feature)])) ++planted_in_top;
    }

    const bool pass = stability.overlap_at_k >= 0.6 && planted_in_top >= 8;
    std::ostringstream detail;
    detail << "overlap@10=" << stability.overlap_at_k << " rank_corr=" << stability.rank_correlation
           << " planted_in_top10@2000=" << planted_in_top << "/10";
    report(10, "shap stability report sanity", pass, detail.str(), timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
    // optional arguments: criterion numbers to run (default: all)
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

    std::printf("curveplan acceptance suite\n");
    if (wanted(1)) criterion_1();
    if (wanted(2)) criterion_2();
    if (wanted(3)) criterion_3();
    if (wanted(4)) criterion_4();
    if (wanted(5)) criterion_5();

    if (wanted(6) || wanted(7)) {
        Timer sweep_timer;
        const SweepArtifacts artifacts = run_criterion6_sweeps();
        if (wanted(6)) criterion_6(artifacts, sweep_timer.seconds());
        if (wanted(7)) criterion_7(artifacts);
    }

    if (wanted(8)) criterion_8();
    if (wanted(9)) criterion_9();
    if (wanted(10)) criterion_10();

    std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "OK" : "FAILED", g_failures);
    return g_failures;
}
