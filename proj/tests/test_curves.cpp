#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "curveplan/curves.hpp"
#include "curveplan/synth.hpp"

using namespace curveplan;

namespace {

std::vector<CurvePoint> points_from_model(double a, double b, double c,
                                          const std::vector<int>& sizes) {
    std::vector<CurvePoint> pts;
    for (int n : sizes) {
        CurvePoint p;
        p.n = n;
        p.mean = a - b * std::pow(static_cast<double>(n), -c);
        pts.push_back(p);
    }
    return pts;
}

LearningCurve curve_with_means(const std::map<int, double>& means) {
    LearningCurve curve;
    curve.task_id = "t";
    for (const auto& [n, mean] : means) {
        CurvePoint p;
        p.n = n;
        p.mean = mean;
        curve.points.push_back(p);
    }
    return curve;
}

}  // namespace

TEST_CASE("fit_power_law recovers an exact on-grid model") {
    const auto pts = points_from_model(0.9, 2.0, 0.5, {100, 400, 10000});
    CHECK(pts[0].mean == Catch::Approx(0.7));
    CHECK(pts[1].mean == Catch::Approx(0.8));
    CHECK(pts[2].mean == Catch::Approx(0.88));
    const PowerLawFit fit = fit_power_law(pts);
    CHECK(fit.rmse < 1e-6);
    CHECK(fit.a == Catch::Approx(0.9).margin(1e-4));
    CHECK(fit.b == Catch::Approx(2.0).margin(1e-3));
    CHECK(fit.c == Catch::Approx(0.5).margin(1e-4));
}

TEST_CASE("fit_power_law recovers off-grid exponents") {
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        const double a = 0.6 + 0.4 * rng.next_double();
        const double b = 0.5 + 2.5 * rng.next_double();
        const double c = 0.08 + 1.8 * rng.next_double();
        const auto pts =
            points_from_model(a, b, c, {100, 200, 300, 600, 1000, 2000, 5000, 10000});
        const PowerLawFit fit = fit_power_law(pts);
        INFO("a=" << a << " b=" << b << " c=" << c << " -> rmse " << fit.rmse);
        CHECK(fit.rmse < 1e-9);
    }
}

TEST_CASE("fit_power_law constant means short-circuit") {
    std::vector<CurvePoint> pts;
    for (int n : {100, 300, 1000}) {
        CurvePoint p;
        p.n = n;
        p.mean = 0.75;
        pts.push_back(p);
    }
    const PowerLawFit fit = fit_power_law(pts);
    CHECK(fit.a == 0.75);
    CHECK(fit.b == 0.0);
    CHECK(fit.c == 0.05);
    CHECK(fit.rmse == 0.0);
}

TEST_CASE("fit_power_law needs three points") {
    std::vector<CurvePoint> two(2);
    two[0].n = 100;
    two[1].n = 200;
    CHECK_THROWS_AS(fit_power_law(two), InputError);
}

TEST_CASE("fit_power_law respects the box under noise") {
    Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        auto pts = points_from_model(0.88, 1.5, 0.6, {100, 300, 600, 1000, 2000, 5000, 10000});
        for (auto& p : pts) p.mean += 0.005 * rng.next_gaussian();
        const PowerLawFit fit = fit_power_law(pts);
        CHECK(fit.a >= 0.0);
        CHECK(fit.a <= 1.05);
        CHECK(fit.b >= 0.0);
        CHECK(fit.c >= 0.05);
        CHECK(fit.c <= 2.0);
    }
}

TEST_CASE("detect_n_star mirrors the 95% sufficiency rule") {
    LearningCurve curve =
        curve_with_means({{100, 0.80}, {300, 0.84}, {600, 0.856}, {10000, 0.90}});
    const auto n_star = detect_n_star(curve, 0.95);
    REQUIRE(n_star.has_value());
    CHECK(*n_star == 600);
}

TEST_CASE("detect_n_star boundary and absence cases") {
    LearningCurve curve =
        curve_with_means({{100, 0.70}, {300, 0.80}, {1000, 0.85}, {10000, 0.90}});
    const auto full = detect_n_star(curve, 1.0);
    REQUIRE(full.has_value());
    CHECK(*full == 10000);  // strictly increasing means: only the last attains its own mean

    PowerLawFit fit;
    fit.a = 1.05;  // asymptote far above the data
    curve.fit = fit;
    const auto absent =
        detect_n_star(curve, 0.95, SufficiencyReference::fitted_asymptote);
    CHECK(!absent.has_value());
}

TEST_CASE("detect_n_star is monotone in the fraction") {
    LearningCurve curve =
        curve_with_means({{100, 0.70}, {300, 0.80}, {600, 0.85}, {2000, 0.88}, {10000, 0.90}});
    std::optional<int> prev;
    for (double fraction : {0.80, 0.85, 0.90, 0.95, 1.0}) {
        const auto n_star = detect_n_star(curve, fraction);
        if (prev && n_star) CHECK(*n_star >= *prev);
        if (n_star) prev = n_star;
    }
}

TEST_CASE("detect_n_star chance-adjusted variant is stricter") {
    LearningCurve curve =
        curve_with_means({{100, 0.70}, {300, 0.80}, {600, 0.85}, {10000, 0.90}});
    const auto raw = detect_n_star(curve, 0.95);
    const auto adjusted = detect_n_star(curve, 0.95, SufficiencyReference::empirical_max_n, true);
    REQUIRE(raw.has_value());
    REQUIRE(adjusted.has_value());
    CHECK(*adjusted >= *raw);
}

TEST_CASE("steepness is the difference at the reference sizes") {
    LearningCurve curve = curve_with_means({{300, 0.78}, {10000, 0.88}});
    CHECK(steepness(curve) == Catch::Approx(0.10));

    LearningCurve flat = curve_with_means({{300, 0.8}, {10000, 0.8}});
    CHECK(steepness(flat) == 0.0);

    LearningCurve decreasing = curve_with_means({{300, 0.9}, {10000, 0.85}});
    CHECK(steepness(decreasing) < 0.0);

    CHECK_THROWS_AS(steepness(curve, 200, 10000), InputError);
}

TEST_CASE("run_grid produces the full grid deterministically") {
    SynthSpec spec;
    spec.n_docs = 400;
    spec.n_strong = 5;
    spec.n_background = 50;
    spec.doc_length_min = 8;
    spec.doc_length_max = 16;
    spec.seed = 7;
    const auto bundle = generate(spec, 0);

    SplitSpec split;
    split.holdout_size = 100;
    split.seed = 5;
    auto [pool, holdout] = holdout_split(bundle.corpus, split);

    const Vocabulary vocab = build_vocabulary(bundle.corpus, 2);
    const EmbeddingMatrix emb = embed_bow(bundle.corpus, vocab, BowMode::count);

    GridSpec grid;
    grid.sizes = {40, 80};
    grid.repeats = 3;
    grid.master_seed = 99;
    ForestParams forest;
    forest.n_trees = 10;

    const auto cells1 = run_grid_cells(pool, holdout, emb, grid, forest, 1);
    REQUIRE(cells1.size() == 6);

    // parallel schedule cannot change any cell
    const auto cells4 = run_grid_cells(pool, holdout, emb, grid, forest, 4);
    REQUIRE(cells4.size() == cells1.size());
    for (size_t i = 0; i < cells1.size(); ++i) {
        CHECK(cells1[i].metrics.accuracy == cells4[i].metrics.accuracy);
        CHECK(cells1[i].seed == cells4[i].seed);
    }

    const auto points = aggregate_cells(cells1, grid);
    REQUIRE(points.size() == 2);
    for (const auto& p : points) {
        CHECK(p.per_repeat.size() == 3);
        double lo = 1.0, hi = 0.0;
        for (const auto& m : p.per_repeat) {
            lo = std::min(lo, m.accuracy);
            hi = std::max(hi, m.accuracy);
        }
        CHECK(p.mean >= lo);
        CHECK(p.mean <= hi);
    }

    // degenerate grid: one repeat over the whole pool
    GridSpec whole;
    whole.sizes = {static_cast<int>(pool.size())};
    whole.repeats = 1;
    whole.master_seed = 1;
    const auto cells_whole = run_grid_cells(pool, holdout, emb, whole, forest, 1);
    CHECK(cells_whole.size() == 1);

    GridSpec too_big;
    too_big.sizes = {static_cast<int>(pool.size()) + 1};
    too_big.repeats = 1;
    CHECK_THROWS_AS(run_grid_cells(pool, holdout, emb, too_big, forest, 1), InputError);
}

TEST_CASE("results_csv is sorted and stable") {
    std::vector<CellResult> cells(4);
    cells[0] = {200, 1, 11, {0.5, 0.5, 0.5, 10}};
    cells[1] = {100, 1, 12, {0.6, 0.6, 0.6, 10}};
    cells[2] = {200, 0, 13, {0.7, 0.7, 0.7, 10}};
    cells[3] = {100, 0, 14, {0.8, 0.8, 0.8, 10}};
    const std::string csv = results_csv("t", cells);
    const auto lines = split_lines(csv);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "task_id,n,repeat,seed,accuracy,f1,auroc");
    CHECK(lines[1].starts_with("t,100,0,14,0.8"));
    CHECK(lines[4].starts_with("t,200,1,11,0.5"));
}

TEST_CASE("curve json round-trips the fields the report needs") {
    LearningCurve curve = curve_with_means({{100, 0.7}, {300, 0.8}, {1000, 0.85}});
    curve.metric = "accuracy";
    curve.sufficiency_fraction = 0.95;
    PowerLawFit fit;
    fit.a = 0.9;
    fit.b = 1.0;
    fit.c = 0.4;
    fit.rmse = 0.001;
    curve.fit = fit;
    curve.n_star = 300;
    for (auto& p : curve.points) {
        EvalMetrics m;
        m.accuracy = m.f1 = m.auroc = p.mean;
        p.per_repeat = {m};
    }

    const LearningCurve rt = curve_from_json(curve_to_json(curve));
    CHECK(rt.task_id == curve.task_id);
    CHECK(rt.points.size() == curve.points.size());
    CHECK(rt.points[1].mean == curve.points[1].mean);
    REQUIRE(rt.fit.has_value());
    CHECK(rt.fit->a == fit.a);
    REQUIRE(rt.n_star.has_value());
    CHECK(*rt.n_star == 300);
}
