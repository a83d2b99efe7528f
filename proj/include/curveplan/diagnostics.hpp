#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "curveplan/corpus.hpp"
#include "curveplan/curves.hpp"
#include "curveplan/embed.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/linear.hpp"
#include "curveplan/rng.hpp"

namespace curveplan {

struct TaskDiagnostics {
    std::string task_id;
    int n_strong = 0;
    int n_noisy = 0;
    int vocab_size = 0;
    // steepness endpoints; absent when the curve lacks the requested sizes
    bool steepness_available = false;
    double metric_at_low = 0.0;
    double metric_at_max = 0.0;
    double steepness = 0.0;
    int n_low = 300;
    int n_high = 10000;
    double mean_cosine_pos = 0.0;
    double mean_cosine_neg = 0.0;
    bool outlier = false;
};

namespace detail {

// Mean pairwise cosine similarity over a seeded subsample of at most cap
// rows. Zero-norm rows are skipped; fewer than two usable rows yields 0.
inline double mean_pairwise_cosine(const EmbeddingMatrix& emb, std::span<const int> rows,
                                   int cap, uint64_t seed) {
    std::vector<int> chosen(rows.begin(), rows.end());
    if (static_cast<int>(chosen.size()) > cap) {
        Rng rng(seed);
        std::vector<int> picks = rng.sample_indices(static_cast<int>(chosen.size()), cap);
        std::vector<int> subset;
        subset.reserve(static_cast<size_t>(cap));
        for (int p : picks) subset.push_back(chosen[static_cast<size_t>(p)]);
        chosen.swap(subset);
    }

    std::vector<std::vector<double>> unit;
    for (int r : chosen) {
        auto row = emb.row(static_cast<size_t>(r));
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        std::vector<double> u(row.begin(), row.end());
        for (double& v : u) v /= norm;
        unit.push_back(std::move(u));
    }
    if (unit.size() < 2) return 0.0;

    double total = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < unit.size(); ++i) {
        for (size_t j = i + 1; j < unit.size(); ++j) {
            double dot = 0.0;
            for (size_t k = 0; k < unit[i].size(); ++k) dot += unit[i][k] * unit[j][k];
            total += dot;
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

}  // namespace detail

// Assembles the per-task record consumed by the cross-task regression:
// vocabulary partition sizes, curve steepness between n_low and n_high, and
// within-class embedding homogeneity.
inline TaskDiagnostics collect_diagnostics(const LearningCurve& curve,
                                           const VocabPartition& partition,
                                           const Vocabulary& vocab,
                                           const EmbeddingMatrix& embeddings,
                                           const Corpus& corpus, int n_low = 300,
                                           int n_high = 10000, int cosine_cap = 500,
                                           uint64_t seed = 0) {
    TaskDiagnostics d;
    d.task_id = curve.task_id;
    d.n_strong = static_cast<int>(partition.strong.size());
    d.n_noisy = static_cast<int>(partition.noisy.size());
    d.vocab_size = vocab.dim();
    d.n_low = n_low;
    d.n_high = n_high;

    const CurvePoint* low = curve.point_at(n_low);
    const CurvePoint* high = curve.point_at(n_high);
    if (low != nullptr && high != nullptr) {
        d.steepness_available = true;
        d.metric_at_low = low->mean;
        d.metric_at_max = high->mean;
        d.steepness = high->mean - low->mean;
    }

    if (embeddings.n_rows() != corpus.size()) {
        throw InputError("collect_diagnostics: embeddings not aligned with corpus");
    }
    std::vector<int> pos_rows, neg_rows;
    for (size_t i = 0; i < corpus.size(); ++i) {
        (corpus.at(i).label == 1 ? pos_rows : neg_rows).push_back(static_cast<int>(i));
    }
    d.mean_cosine_pos =
        detail::mean_pairwise_cosine(embeddings, pos_rows, cosine_cap, derive_seed(seed, "cosine", 1));
    d.mean_cosine_neg =
        detail::mean_pairwise_cosine(embeddings, neg_rows, cosine_cap, derive_seed(seed, "cosine", 0));
    return d;
}

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline OlsFit ols_univariate(std::span<const double> x, std::span<const double> y) {
    const size_t n = x.size();
    if (n < 2 || y.size() != n) throw InputError("ols: need >= 2 paired observations");
    double sx = 0.0, sy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw InputError("ols: zero variance in regressor");
    OlsFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

enum class SteepnessResponse { metric_at_max, steepness };

inline std::string to_string(SteepnessResponse r) {
    return r == SteepnessResponse::metric_at_max ? "metric_at_max" : "steepness";
}

// Cross-task model: two univariate OLS regressions of the chosen response on
// n_noisy and on n_strong. A parallel fit on the steepness response plus its
// predicted tertiles is retained for annotation advice.
struct SteepnessModel {
    std::string response = "metric_at_max";
    // Either univariate regression degrades to a flat fit (slope 0 through the
    // mean response) when its regressor has zero variance across tasks; the
    // *_fit_ok flags record which slopes are meaningful.
    double slope_noisy = 0.0;  // response units per noisy word
    double intercept_noisy = 0.0;
    bool noisy_fit_ok = false;
    double slope_strong = 0.0;  // response units per strong word
    double intercept_strong = 0.0;
    bool strong_fit_ok = false;
    std::vector<std::string> excluded_tasks;
    int n_tasks_used = 0;

    double adv_slope_noisy = 0.0;
    double adv_intercept_noisy = 0.0;
    double adv_slope_strong = 0.0;
    double adv_intercept_strong = 0.0;
    std::array<double, 2> steepness_tertiles{0.0, 0.0};

    double predict_response_from_noisy(double n_noisy) const {
        return intercept_noisy + slope_noisy * n_noisy;
    }
    double predict_response_from_strong(double n_strong) const {
        return intercept_strong + slope_strong * n_strong;
    }
    double predict_steepness(double n_noisy, double n_strong) const {
        const double from_noisy = adv_intercept_noisy + adv_slope_noisy * n_noisy;
        const double from_strong = adv_intercept_strong + adv_slope_strong * n_strong;
        if (noisy_fit_ok && strong_fit_ok) return 0.5 * (from_noisy + from_strong);
        return noisy_fit_ok ? from_noisy : from_strong;
    }
};

namespace detail {

inline double quantile_linear(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(h);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace detail

inline SteepnessModel fit_steepness_model(std::span<const TaskDiagnostics> tasks,
                                          SteepnessResponse response,
                                          const std::vector<std::string>& exclude = {}) {
    std::unordered_set<std::string> excluded(exclude.begin(), exclude.end());
    std::vector<const TaskDiagnostics*> used;
    for (const auto& t : tasks) {
        if (excluded.count(t.task_id)) continue;
        if (!t.steepness_available) continue;
        used.push_back(&t);
    }
    if (used.size() < 3) {
        throw InputError("fit_steepness_model: need at least 3 tasks after exclusion, have " +
                         std::to_string(used.size()));
    }

    std::vector<double> xs_noisy, xs_strong, ys, ys_steep;
    for (const auto* t : used) {
        xs_noisy.push_back(static_cast<double>(t->n_noisy));
        xs_strong.push_back(static_cast<double>(t->n_strong));
        ys.push_back(response == SteepnessResponse::metric_at_max ? t->metric_at_max
                                                                  : t->steepness);
        ys_steep.push_back(t->steepness);
    }

    auto has_variance = [](const std::vector<double>& xs) {
        for (double x : xs) {
            if (x != xs.front()) return true;
        }
        return false;
    };
    const bool noisy_ok = has_variance(xs_noisy);
    const bool strong_ok = has_variance(xs_strong);
    if (!noisy_ok && !strong_ok) {
        throw InputError("fit_steepness_model: zero variance in both regressors");
    }
    auto fit_or_flat = [&](bool ok, const std::vector<double>& xs,
                           const std::vector<double>& resp) {
        if (ok) return ols_univariate(xs, resp);
        OlsFit flat;
        flat.slope = 0.0;
        flat.intercept = 0.0;
        for (double y : resp) flat.intercept += y;
        flat.intercept /= static_cast<double>(resp.size());
        return flat;
    };

    SteepnessModel model;
    model.response = to_string(response);
    model.noisy_fit_ok = noisy_ok;
    model.strong_fit_ok = strong_ok;
    const OlsFit noisy = fit_or_flat(noisy_ok, xs_noisy, ys);
    const OlsFit strong = fit_or_flat(strong_ok, xs_strong, ys);
    model.slope_noisy = noisy.slope;
    model.intercept_noisy = noisy.intercept;
    model.slope_strong = strong.slope;
    model.intercept_strong = strong.intercept;
    model.excluded_tasks = exclude;
    model.n_tasks_used = static_cast<int>(used.size());

    const OlsFit adv_noisy = fit_or_flat(noisy_ok, xs_noisy, ys_steep);
    const OlsFit adv_strong = fit_or_flat(strong_ok, xs_strong, ys_steep);
    model.adv_slope_noisy = adv_noisy.slope;
    model.adv_intercept_noisy = adv_noisy.intercept;
    model.adv_slope_strong = adv_strong.slope;
    model.adv_intercept_strong = adv_strong.intercept;

    std::vector<double> predicted;
    for (const auto* t : used) {
        predicted.push_back(model.predict_steepness(t->n_noisy, t->n_strong));
    }
    model.steepness_tertiles = {detail::quantile_linear(predicted, 1.0 / 3.0),
                                detail::quantile_linear(predicted, 2.0 / 3.0)};
    return model;
}

struct StabilityReport {
    double overlap_at_k = 0.0;
    double rank_correlation = 0.0;
};

// Compares two top-feature rankings (as produced by top_features): top-k set
// overlap plus Spearman correlation over the union of the two top-k sets,
// with features absent from a ranking placed at rank k+1.
inline StabilityReport shap_stability(std::span<const std::pair<int, double>> ranking_small,
                                      std::span<const std::pair<int, double>> ranking_large,
                                      int k) {
    if (k <= 0) throw UsageError("shap_stability: k must be positive");

    auto top_ranks = [&](std::span<const std::pair<int, double>> ranking) {
        std::unordered_map<int, int> rank;  // feature -> 1-based rank
        const int limit = std::min<int>(k, static_cast<int>(ranking.size()));
        for (int i = 0; i < limit; ++i) rank.emplace(ranking[static_cast<size_t>(i)].first, i + 1);
        return rank;
    };
    const auto rank_a = top_ranks(ranking_small);
    const auto rank_b = top_ranks(ranking_large);

    std::vector<int> union_features;
    size_t intersection = 0;
    for (const auto& [f, r] : rank_a) {
        union_features.push_back(f);
        if (rank_b.count(f)) ++intersection;
    }
    for (const auto& [f, r] : rank_b) {
        if (!rank_a.count(f)) union_features.push_back(f);
    }
    std::sort(union_features.begin(), union_features.end());

    StabilityReport rep;
    rep.overlap_at_k = static_cast<double>(intersection) / static_cast<double>(k);

    std::vector<double> ra, rb;
    for (int f : union_features) {
        auto ita = rank_a.find(f);
        auto itb = rank_b.find(f);
        ra.push_back(ita != rank_a.end() ? ita->second : k + 1);
        rb.push_back(itb != rank_b.end() ? itb->second : k + 1);
    }
    const size_t m = ra.size();
    if (m == 0) {
        rep.rank_correlation = 0.0;
        return rep;
    }
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < m; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(m);
    mb /= static_cast<double>(m);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < m; ++i) {
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
        sab += (ra[i] - ma) * (rb[i] - mb);
    }
    if (saa == 0.0 && sbb == 0.0) {
        rep.rank_correlation = 1.0;  // identical constant rankings
    } else if (saa == 0.0 || sbb == 0.0) {
        rep.rank_correlation = 0.0;
    } else {
        rep.rank_correlation = sab / std::sqrt(saa * sbb);
    }
    return rep;
}

struct AnnotationAdvice {
    std::string task_id;
    double predicted_response_from_noisy = 0.0;
    double predicted_response_from_strong = 0.0;
    double predicted_steepness = 0.0;
    std::string bucket;  // steep_learner | standard_600 | data_hungry
    int floor_documents = 600;
};

// Buckets a task by its predicted steepness against the model's fitted
// tertiles (boundaries lower-inclusive). Low residual steepness means the
// curve has flattened by n_low, so little is gained beyond a small sample;
// high residual steepness marks a data-hungry task.
inline AnnotationAdvice annotation_advice(const TaskDiagnostics& diag,
                                          const SteepnessModel& model) {
    AnnotationAdvice advice;
    advice.task_id = diag.task_id;
    advice.predicted_response_from_noisy = model.predict_response_from_noisy(diag.n_noisy);
    advice.predicted_response_from_strong = model.predict_response_from_strong(diag.n_strong);
    advice.predicted_steepness = model.predict_steepness(diag.n_noisy, diag.n_strong);

    if (advice.predicted_steepness <= model.steepness_tertiles[0]) {
        advice.bucket = "steep_learner";
    } else if (advice.predicted_steepness <= model.steepness_tertiles[1]) {
        advice.bucket = "standard_600";
    } else {
        advice.bucket = "data_hungry";
    }
    return advice;
}

// --- external interfaces ---

inline nlohmann::json task_diagnostics_to_json(const TaskDiagnostics& d) {
    nlohmann::json j{{"task_id", d.task_id},
                     {"n_strong", d.n_strong},
                     {"n_noisy", d.n_noisy},
                     {"vocab_size", d.vocab_size},
                     {"n_low", d.n_low},
                     {"n_high", d.n_high},
                     {"mean_cosine_pos", d.mean_cosine_pos},
                     {"mean_cosine_neg", d.mean_cosine_neg},
                     {"outlier", d.outlier}};
    if (d.steepness_available) {
        j["metric_at_low"] = d.metric_at_low;
        j["metric_at_max"] = d.metric_at_max;
        j["steepness"] = d.steepness;
    } else {
        j["metric_at_low"] = nullptr;
        j["metric_at_max"] = nullptr;
        j["steepness"] = nullptr;
    }
    return j;
}

inline TaskDiagnostics task_diagnostics_from_json(const nlohmann::json& j) {
    TaskDiagnostics d;
    d.task_id = j.at("task_id").get<std::string>();
    d.n_strong = j.at("n_strong").get<int>();
    d.n_noisy = j.at("n_noisy").get<int>();
    d.vocab_size = j.at("vocab_size").get<int>();
    d.n_low = j.at("n_low").get<int>();
    d.n_high = j.at("n_high").get<int>();
    d.mean_cosine_pos = j.at("mean_cosine_pos").get<double>();
    d.mean_cosine_neg = j.at("mean_cosine_neg").get<double>();
    d.outlier = j.at("outlier").get<bool>();
    if (!j.at("steepness").is_null()) {
        d.steepness_available = true;
        d.metric_at_low = j.at("metric_at_low").get<double>();
        d.metric_at_max = j.at("metric_at_max").get<double>();
        d.steepness = j.at("steepness").get<double>();
    }
    return d;
}

inline nlohmann::json steepness_model_to_json(const SteepnessModel& m) {
    return nlohmann::json{{"response", m.response},
                          {"slope_noisy", m.slope_noisy},
                          {"slope_noisy_per_100", m.slope_noisy * 100.0},
                          {"intercept_noisy", m.intercept_noisy},
                          {"noisy_fit_ok", m.noisy_fit_ok},
                          {"slope_strong", m.slope_strong},
                          {"slope_strong_per_100", m.slope_strong * 100.0},
                          {"intercept_strong", m.intercept_strong},
                          {"strong_fit_ok", m.strong_fit_ok},
                          {"excluded_tasks", m.excluded_tasks},
                          {"n_tasks_used", m.n_tasks_used},
                          {"steepness_tertiles", m.steepness_tertiles}};
}

// Figure-3-style plot data: one row per task.
inline std::string figure3_csv(std::span<const TaskDiagnostics> tasks,
                               const std::vector<std::string>& excluded) {
    std::unordered_set<std::string> excl(excluded.begin(), excluded.end());
    std::string out = "task_id,n_strong,n_noisy,steepness,metric_at_max,excluded\n";
    for (const auto& t : tasks) {
        out += csv_escape(t.task_id);
        out += ',' + std::to_string(t.n_strong);
        out += ',' + std::to_string(t.n_noisy);
        out += ',';
        out += t.steepness_available ? format_double(t.steepness) : "";
        out += ',';
        out += t.steepness_available ? format_double(t.metric_at_max) : "";
        out += ',';
        out += excl.count(t.task_id) ? "1" : "0";
        out += '\n';
    }
    return out;
}

}  // namespace curveplan
