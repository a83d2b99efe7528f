#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "curveplan/corpus.hpp"
#include "curveplan/embed.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/forest.hpp"
#include "curveplan/io.hpp"
#include "curveplan/parallel.hpp"
#include "curveplan/rng.hpp"
#include "curveplan/version.hpp"

namespace curveplan {

struct GridSpec {
    std::vector<int> sizes;  // strictly ascending training sizes
    int repeats = 10;
    uint64_t master_seed = 0;
    std::string metric = "accuracy";  // accuracy | f1 | auroc

    void validate() const {
        if (sizes.empty()) throw UsageError("grid sizes must be nonempty");
        for (size_t i = 0; i < sizes.size(); ++i) {
            if (sizes[i] <= 0) throw UsageError("grid sizes must be positive");
            if (i > 0 && sizes[i] <= sizes[i - 1]) {
                throw UsageError("grid sizes must be strictly ascending");
            }
        }
        if (repeats <= 0) throw UsageError("repeats must be positive");
        metric_value(EvalMetrics{}, metric);  // validates the metric name
    }
};

struct CurvePoint {
    int n = 0;
    std::vector<EvalMetrics> per_repeat;
    double mean = 0.0;
    double std_dev = 0.0;  // population standard deviation of the selected metric
};

struct PowerLawFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double rmse = 0.0;
};

struct LearningCurve {
    std::string task_id;
    std::string metric = "accuracy";
    std::vector<CurvePoint> points;
    std::optional<PowerLawFit> fit;
    std::optional<int> n_star;
    double sufficiency_fraction = 0.95;

    const CurvePoint* point_at(int n) const {
        for (const auto& p : points) {
            if (p.n == n) return &p;
        }
        return nullptr;
    }
};

struct CellResult {
    int n = 0;
    int repeat = 0;
    uint64_t seed = 0;
    EvalMetrics metrics;
};

using CellCallback = std::function<void(const CellResult&)>;

// Runs the (sizes x repeats) experiment grid: each cell draws a stratified
// training sample from the pool, fits a forest, and scores it on the fixed
// hold-out. Cell seeds depend only on (master_seed, n, r), so execution order
// and parallelism degree never change the results.
inline std::vector<CellResult> run_grid_cells(const Corpus& pool, const Corpus& holdout,
                                              const EmbeddingMatrix& embeddings,
                                              const GridSpec& spec,
                                              const ForestParams& forest_params,
                                              int parallelism = 1,
                                              const CellCallback& on_cell = {}) {
    spec.validate();
    if (spec.sizes.back() > static_cast<int>(pool.size())) {
        throw InputError("grid size " + std::to_string(spec.sizes.back()) +
                         " exceeds pool size " + std::to_string(pool.size()));
    }

    std::unordered_map<std::string, int> row_of;
    row_of.reserve(embeddings.n_rows());
    for (size_t i = 0; i < embeddings.n_rows(); ++i) {
        row_of.emplace(embeddings.doc_ids[i], static_cast<int>(i));
    }
    auto rows_for = [&](const Corpus& c) {
        std::vector<int> rows;
        rows.reserve(c.size());
        for (const Document& d : c.documents()) {
            auto it = row_of.find(d.id);
            if (it == row_of.end()) {
                throw InputError("embeddings missing document id \"" + d.id + "\"");
            }
            rows.push_back(it->second);
        }
        return rows;
    };

    const std::vector<int> holdout_rows = rows_for(holdout);
    const std::vector<int> holdout_y = holdout.labels();

    const size_t n_cells = spec.sizes.size() * static_cast<size_t>(spec.repeats);
    std::vector<CellResult> cells(n_cells);
    std::mutex cb_mutex;

    parallel_for(n_cells, parallelism, [&](size_t idx) {
        const int size_idx = static_cast<int>(idx) / spec.repeats;
        const int repeat = static_cast<int>(idx) % spec.repeats;
        const int n = spec.sizes[static_cast<size_t>(size_idx)];
        const uint64_t cell_seed =
            mix_seed(mix_seed(spec.master_seed, static_cast<uint64_t>(n)),
                     static_cast<uint64_t>(repeat));
        try {
            const Corpus sample = stratified_sample(pool, n, cell_seed);
            const std::vector<int> train_rows = rows_for(sample);
            const std::vector<int> train_y = sample.labels();

            ForestParams params = forest_params;
            params.seed = derive_seed(cell_seed, "forest");
            const ForestModel model = fit_forest_rows(embeddings, train_rows, train_y, params);
            const std::vector<double> scores = predict_proba_rows(model, embeddings, holdout_rows);

            CellResult cell;
            cell.n = n;
            cell.repeat = repeat;
            cell.seed = cell_seed;
            cell.metrics = evaluate(scores, holdout_y);
            cells[idx] = cell;
            if (on_cell) {
                std::lock_guard lock(cb_mutex);
                on_cell(cell);
            }
        } catch (...) {
            rethrow_with_stage("grid n=" + std::to_string(n) + " repeat=" + std::to_string(repeat));
        }
    });
    return cells;
}

inline std::vector<CurvePoint> aggregate_cells(std::span<const CellResult> cells,
                                               const GridSpec& spec) {
    std::vector<CurvePoint> points;
    for (int n : spec.sizes) {
        CurvePoint p;
        p.n = n;
        for (const CellResult& c : cells) {
            if (c.n == n) p.per_repeat.push_back(c.metrics);
        }
        std::vector<double> values;
        values.reserve(p.per_repeat.size());
        for (const auto& m : p.per_repeat) values.push_back(metric_value(m, spec.metric));
        double sum = 0.0;
        for (double v : values) sum += v;
        p.mean = sum / static_cast<double>(values.size());
        double sq = 0.0;
        for (double v : values) sq += (v - p.mean) * (v - p.mean);
        p.std_dev = std::sqrt(sq / static_cast<double>(values.size()));
        points.push_back(std::move(p));
    }
    return points;
}

inline LearningCurve run_grid(const Corpus& pool, const Corpus& holdout,
                              const EmbeddingMatrix& embeddings, const GridSpec& spec,
                              const ForestParams& forest_params, const std::string& task_id,
                              int parallelism = 1, const CellCallback& on_cell = {}) {
    LearningCurve curve;
    curve.task_id = task_id;
    curve.metric = spec.metric;
    const auto cells =
        run_grid_cells(pool, holdout, embeddings, spec, forest_params, parallelism, on_cell);
    curve.points = aggregate_cells(cells, spec);
    return curve;
}

namespace detail {

// Closed-form least squares for (a, b) in m(n) = a - b * n^(-c) at fixed c,
// projected into the fit box a in [0, 1.05], b >= 0.
inline PowerLawFit solve_at_c(std::span<const double> sizes, std::span<const double> means,
                              double c) {
    const size_t m = sizes.size();
    const double a_lo = 0.0, a_hi = 1.05;

    std::vector<double> u(m);
    for (size_t i = 0; i < m; ++i) u[i] = std::pow(sizes[i], -c);

    double su = 0.0, suu = 0.0, sy = 0.0, syu = 0.0;
    for (size_t i = 0; i < m; ++i) {
        su += u[i];
        suu += u[i] * u[i];
        sy += means[i];
        syu += means[i] * u[i];
    }
    const double dm = static_cast<double>(m);

    auto rmse_of = [&](double a, double b) {
        double sq = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double r = means[i] - (a - b * u[i]);
            sq += r * r;
        }
        return std::sqrt(sq / dm);
    };
    auto best_b_given_a = [&](double a) {
        // minimize sum (y - a + b u)^2 over b >= 0
        if (suu == 0.0) return 0.0;
        return std::max(0.0, (a * su - syu) / suu);
    };

    PowerLawFit best;
    best.c = c;
    best.rmse = std::numeric_limits<double>::infinity();
    auto consider = [&](double a, double b) {
        if (!(a >= a_lo && a <= a_hi && b >= 0.0)) return;
        const double r = rmse_of(a, b);
        if (r < best.rmse) {
            best.a = a;
            best.b = b;
            best.rmse = r;
        }
    };

    // unconstrained normal equations: [m, -su; -su, suu? ] careful with signs
    const double det = dm * suu - su * su;
    if (det > 1e-30) {
        const double a_hat = (sy * suu - syu * su) / det;
        const double b_hat = (a_hat * su - syu) / suu;
        consider(a_hat, b_hat);
    }
    // boundary candidates
    consider(std::clamp(sy / dm, a_lo, a_hi), 0.0);
    consider(a_lo, best_b_given_a(a_lo));
    consider(a_hi, best_b_given_a(a_hi));

    return best;
}

}  // namespace detail

// Fits m(n) = a - b * n^(-c) to the per-size means: coarse grid over
// c in [0.05, 2.0] (step 0.005) with closed-form (a, b) at each c, then a
// golden-section refinement of c around the best grid cell so exact inputs
// are recovered even when the true c is off-grid.
inline PowerLawFit fit_power_law(std::span<const CurvePoint> points) {
    if (points.size() < 3) throw InputError("fit_power_law: need at least 3 points");
    std::vector<double> sizes, means;
    for (const auto& p : points) {
        sizes.push_back(static_cast<double>(p.n));
        means.push_back(p.mean);
    }

    const bool all_equal =
        std::all_of(means.begin(), means.end(), [&](double v) { return v == means.front(); });
    if (all_equal) {
        PowerLawFit fit;
        fit.a = means.front();
        fit.b = 0.0;
        fit.c = 0.05;
        fit.rmse = 0.0;
        return fit;
    }

    const double c_lo = 0.05, c_hi = 2.0, step = 0.005;
    PowerLawFit best;
    best.rmse = std::numeric_limits<double>::infinity();
    for (double c = c_lo; c <= c_hi + 1e-12; c += step) {
        const PowerLawFit cand = detail::solve_at_c(sizes, means, std::min(c, c_hi));
        if (cand.rmse < best.rmse) best = cand;
    }

    // golden-section refinement on the profile rmse(c)
    double lo = std::max(c_lo, best.c - step);
    double hi = std::min(c_hi, best.c + step);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    PowerLawFit f1 = detail::solve_at_c(sizes, means, x1);
    PowerLawFit f2 = detail::solve_at_c(sizes, means, x2);
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        if (f1.rmse <= f2.rmse) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = detail::solve_at_c(sizes, means, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = detail::solve_at_c(sizes, means, x2);
        }
        if (f1.rmse < best.rmse) best = f1;
        if (f2.rmse < best.rmse) best = f2;
    }
    return best;
}

enum class SufficiencyReference { empirical_max_n, fitted_asymptote };

// Smallest grid size whose mean reaches fraction * reference performance.
// Reference defaults to the empirical mean at the largest grid size; the
// fitted asymptote covers truncated budgets. The chance-adjusted variant
// measures the fraction of the gain above 0.5 instead of the raw metric.
inline std::optional<int> detect_n_star(const LearningCurve& curve, double fraction = 0.95,
                                        SufficiencyReference reference =
                                            SufficiencyReference::empirical_max_n,
                                        bool chance_adjusted = false) {
    if (curve.points.empty()) throw InputError("detect_n_star: empty curve");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("fraction must be in (0,1]");

    double m_ref = 0.0;
    if (reference == SufficiencyReference::empirical_max_n) {
        m_ref = curve.points.back().mean;
    } else {
        if (!curve.fit) throw UsageError("detect_n_star: fitted_asymptote requires a fit");
        m_ref = curve.fit->a;
    }

    const double target =
        chance_adjusted ? 0.5 + fraction * (m_ref - 0.5) : fraction * m_ref;
    for (const CurvePoint& p : curve.points) {
        if (p.mean >= target) return p.n;
    }
    return std::nullopt;
}

// Performance difference between two grid sizes (defaults are the reference
// sizes used by the cross-task analysis).
inline double steepness(const LearningCurve& curve, int n_low = 300, int n_high = 10000) {
    const CurvePoint* low = curve.point_at(n_low);
    const CurvePoint* high = curve.point_at(n_high);
    if (low == nullptr) throw InputError("steepness: size " + std::to_string(n_low) + " not in grid");
    if (high == nullptr) throw InputError("steepness: size " + std::to_string(n_high) + " not in grid");
    return high->mean - low->mean;
}

// --- external interfaces ---

inline std::string results_csv(const std::string& task_id, std::span<const CellResult> cells) {
    std::string out = "task_id,n,repeat,seed,accuracy,f1,auroc\n";
    std::vector<const CellResult*> ordered;
    ordered.reserve(cells.size());
    for (const auto& c : cells) ordered.push_back(&c);
    std::sort(ordered.begin(), ordered.end(), [](const CellResult* a, const CellResult* b) {
        if (a->n != b->n) return a->n < b->n;
        return a->repeat < b->repeat;
    });
    for (const CellResult* c : ordered) {
        out += csv_escape(task_id);
        out += ',' + std::to_string(c->n);
        out += ',' + std::to_string(c->repeat);
        out += ',' + std::to_string(c->seed);
        out += ',' + format_double(c->metrics.accuracy);
        out += ',' + format_double(c->metrics.f1);
        out += ',' + format_double(c->metrics.auroc);
        out += '\n';
    }
    return out;
}

inline nlohmann::json curve_to_json(const LearningCurve& curve) {
    nlohmann::json points = nlohmann::json::array();
    for (const CurvePoint& p : curve.points) {
        nlohmann::json per_repeat = nlohmann::json::array();
        for (const EvalMetrics& m : p.per_repeat) per_repeat.push_back(metric_value(m, curve.metric));
        points.push_back({{"n", p.n},
                          {"mean", p.mean},
                          {"std", p.std_dev},
                          {"per_repeat", std::move(per_repeat)}});
    }
    nlohmann::json j{{"format_version", kCurveFormatVersion},
                     {"task_id", curve.task_id},
                     {"metric", curve.metric},
                     {"points", std::move(points)},
                     {"fraction", curve.sufficiency_fraction}};
    if (curve.fit) {
        j["fit"] = {{"a", curve.fit->a},
                    {"b", curve.fit->b},
                    {"c", curve.fit->c},
                    {"rmse", curve.fit->rmse}};
    } else {
        j["fit"] = nullptr;
    }
    if (curve.n_star) j["n_star"] = *curve.n_star;
    else j["n_star"] = nullptr;
    return j;
}

inline LearningCurve curve_from_json(const nlohmann::json& j) {
    LearningCurve curve;
    curve.task_id = j.at("task_id").get<std::string>();
    curve.metric = j.at("metric").get<std::string>();
    curve.sufficiency_fraction = j.at("fraction").get<double>();
    for (const auto& jp : j.at("points")) {
        CurvePoint p;
        p.n = jp.at("n").get<int>();
        p.mean = jp.at("mean").get<double>();
        p.std_dev = jp.at("std").get<double>();
        for (const auto& v : jp.at("per_repeat")) {
            EvalMetrics m;
            const double value = v.get<double>();
            m.accuracy = m.f1 = m.auroc = value;  // lossy: only the selected metric survives
            m.n_eval = 0;
            p.per_repeat.push_back(m);
        }
        curve.points.push_back(std::move(p));
    }
    if (j.contains("fit") && !j.at("fit").is_null()) {
        PowerLawFit f;
        f.a = j["fit"].at("a").get<double>();
        f.b = j["fit"].at("b").get<double>();
        f.c = j["fit"].at("c").get<double>();
        f.rmse = j["fit"].at("rmse").get<double>();
        curve.fit = f;
    }
    if (j.contains("n_star") && !j.at("n_star").is_null()) {
        curve.n_star = j["n_star"].get<int>();
    }
    return curve;
}

}  // namespace curveplan
