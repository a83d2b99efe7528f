#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curveplan/embed.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/rng.hpp"

namespace curveplan {

struct LassoConfig {
    double tol = 1e-6;   // stop when the max coefficient change falls below this
    int max_iter = 5000;
};

// L1-regularized logistic model on standardized features. Weights live on the
// standardized scale; feature_means/feature_stds map raw inputs into it.
struct SparseLinearModel {
    std::vector<double> weights;
    double intercept = 0.0;
    std::vector<double> feature_means;
    std::vector<double> feature_stds;       // 1.0 for excluded features
    std::vector<int> excluded_features;     // zero-variance columns, weight forced to 0
    double lambda = 0.0;
    bool converged = false;
    double kkt_violation = 0.0;

    int dim() const { return static_cast<int>(weights.size()); }

    double standardize(double x, int j) const {
        return (x - feature_means[static_cast<size_t>(j)]) / feature_stds[static_cast<size_t>(j)];
    }

    // Raw (pre-sigmoid) output for a raw feature row.
    double margin(std::span<const double> x) const {
        double u = intercept;
        for (int j = 0; j < dim(); ++j) {
            const double w = weights[static_cast<size_t>(j)];
            if (w != 0.0) u += w * standardize(x[static_cast<size_t>(j)], j);
        }
        return u;
    }
};

namespace detail {

inline double softplus(double t) {
    // log(1 + exp(t)) without overflow
    if (t > 30.0) return t;
    return std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Sparse view of selected embedding rows with implicit standardization.
// Margins and gradients over standardized features are computed from the raw
// sparse entries, which keeps bag-of-words fits cheap.
struct StandardizedProblem {
    int n = 0;
    int d = 0;
    std::vector<size_t> row_ptr;
    std::vector<int> col;
    std::vector<double> val;       // raw feature values
    std::vector<double> mean;      // raw column means over the fit rows
    std::vector<double> stddev;    // raw column stds (population); 1.0 where excluded
    std::vector<char> included;    // 0 for zero-variance columns
    std::vector<int> y;            // labels in {0,1}
    double pos_fraction = 0.0;

    static StandardizedProblem build(const EmbeddingMatrix& X, std::span<const int> rows,
                                     std::span<const int> labels) {
        if (rows.size() != labels.size()) {
            throw InternalError("lasso: rows/labels length mismatch");
        }
        if (rows.empty()) throw InputError("lasso: empty training set");

        StandardizedProblem p;
        p.n = static_cast<int>(rows.size());
        p.d = X.dim;
        p.y.assign(labels.begin(), labels.end());
        int n_pos = 0;
        for (int v : p.y) {
            if (v != 0 && v != 1) throw InputError("lasso: labels must be 0/1");
            n_pos += v;
        }
        if (n_pos == 0 || n_pos == p.n) throw InputError("lasso: labels contain a single class");
        p.pos_fraction = static_cast<double>(n_pos) / p.n;

        p.mean.assign(static_cast<size_t>(p.d), 0.0);
        std::vector<double> sq(static_cast<size_t>(p.d), 0.0);
        p.row_ptr.reserve(rows.size() + 1);
        p.row_ptr.push_back(0);
        for (int r : rows) {
            auto row = X.row(static_cast<size_t>(r));
            for (int j = 0; j < p.d; ++j) {
                const double x = row[static_cast<size_t>(j)];
                if (!std::isfinite(x)) {
                    throw InputError("lasso: non-finite feature value in row \"" +
                                     X.doc_ids[static_cast<size_t>(r)] + "\"");
                }
                if (x != 0.0) {
                    p.col.push_back(j);
                    p.val.push_back(x);
                }
                p.mean[static_cast<size_t>(j)] += x;
                sq[static_cast<size_t>(j)] += x * x;
            }
            p.row_ptr.push_back(p.col.size());
        }
        p.stddev.assign(static_cast<size_t>(p.d), 1.0);
        p.included.assign(static_cast<size_t>(p.d), 1);
        for (int j = 0; j < p.d; ++j) {
            const size_t sj = static_cast<size_t>(j);
            p.mean[sj] /= p.n;
            const double var = std::max(0.0, sq[sj] / p.n - p.mean[sj] * p.mean[sj]);
            if (var <= 1e-24) {
                p.included[sj] = 0;  // constant column: excluded, weight stays 0
            } else {
                p.stddev[sj] = std::sqrt(var);
            }
        }
        return p;
    }

    // margins u_i = sum_j w_j z_ij + b via the scaled-weight trick
    void margins(const std::vector<double>& w, double b, std::vector<double>& u) const {
        std::vector<double> ws(static_cast<size_t>(d), 0.0);
        double offset = 0.0;
        for (int j = 0; j < d; ++j) {
            const size_t sj = static_cast<size_t>(j);
            if (!included[sj] || w[sj] == 0.0) continue;
            ws[sj] = w[sj] / stddev[sj];
            offset += ws[sj] * mean[sj];
        }
        u.assign(static_cast<size_t>(n), b - offset);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (size_t k = row_ptr[static_cast<size_t>(i)]; k < row_ptr[static_cast<size_t>(i) + 1]; ++k) {
                dot += ws[static_cast<size_t>(col[k])] * val[k];
            }
            u[static_cast<size_t>(i)] += dot;
        }
    }

    // (1/n) sum log(1 + exp(-y~ u))
    double loss(const std::vector<double>& u) const {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double t = y[static_cast<size_t>(i)] == 1 ? -u[static_cast<size_t>(i)]
                                                            : u[static_cast<size_t>(i)];
            total += softplus(t);
        }
        return total / n;
    }

    // gradient of the smooth loss wrt standardized weights and intercept
    void gradient(const std::vector<double>& u, std::vector<double>& gw, double& gb) const {
        std::vector<double> resid(static_cast<size_t>(n));
        double resid_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r = sigmoid(u[static_cast<size_t>(i)]) - y[static_cast<size_t>(i)];
            resid[static_cast<size_t>(i)] = r;
            resid_sum += r;
        }
        std::vector<double> raw(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < n; ++i) {
            const double r = resid[static_cast<size_t>(i)];
            if (r == 0.0) continue;
            for (size_t k = row_ptr[static_cast<size_t>(i)]; k < row_ptr[static_cast<size_t>(i) + 1]; ++k) {
                raw[static_cast<size_t>(col[k])] += r * val[k];
            }
        }
        gw.assign(static_cast<size_t>(d), 0.0);
        for (int j = 0; j < d; ++j) {
            const size_t sj = static_cast<size_t>(j);
            if (!included[sj]) continue;
            gw[sj] = (raw[sj] / stddev[sj] - mean[sj] / stddev[sj] * resid_sum) / n;
        }
        gb = resid_sum / n;
    }

    double intercept_at_null() const {
        const double p = std::clamp(pos_fraction, 1e-12, 1.0 - 1e-12);
        return std::log(p / (1.0 - p));
    }

    double lambda_max() const {
        // gradient at w = 0 with the intercept at its optimum
        std::vector<double> gw;
        double gb = 0.0;
        std::vector<double> u(static_cast<size_t>(n), intercept_at_null());
        gradient(u, gw, gb);
        double m = 0.0;
        for (double g : gw) m = std::max(m, std::abs(g));
        return m;
    }
};

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

struct IstaResult {
    std::vector<double> w;
    double b = 0.0;
    bool converged = false;
    double kkt = 0.0;
};

inline IstaResult ista_fit(const StandardizedProblem& p, double lambda, const LassoConfig& cfg,
                           const std::vector<double>* warm_w = nullptr,
                           const double* warm_b = nullptr) {
    IstaResult r;
    r.w.assign(static_cast<size_t>(p.d), 0.0);
    r.b = p.intercept_at_null();
    if (warm_w != nullptr) r.w = *warm_w;
    if (warm_b != nullptr) r.b = *warm_b;

    std::vector<double> u, gw, u_new;
    std::vector<double> w_new(static_cast<size_t>(p.d));
    double gb = 0.0;
    double eta = 1.0;

    p.margins(r.w, r.b, u);
    double smooth = p.loss(u);

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        p.gradient(u, gw, gb);

        double b_new = 0.0;
        double loss_new = 0.0;
        for (int back = 0;; ++back) {
            double quad = 0.0;
            double lin = 0.0;
            for (int j = 0; j < p.d; ++j) {
                const size_t sj = static_cast<size_t>(j);
                if (!p.included[sj]) {
                    w_new[sj] = 0.0;
                    continue;
                }
                w_new[sj] = soft_threshold(r.w[sj] - eta * gw[sj], eta * lambda);
                const double dw = w_new[sj] - r.w[sj];
                lin += gw[sj] * dw;
                quad += dw * dw;
            }
            b_new = r.b - eta * gb;
            lin += gb * (b_new - r.b);
            quad += (b_new - r.b) * (b_new - r.b);

            p.margins(w_new, b_new, u_new);
            loss_new = p.loss(u_new);
            const double bound = smooth + lin + quad / (2.0 * eta);
            if (loss_new <= bound + 1e-12 * (1.0 + std::abs(bound))) break;
            if (back >= 60) break;  // step cannot shrink further in double precision
            eta *= 0.5;
        }

        double delta_max = std::abs(b_new - r.b);
        for (int j = 0; j < p.d; ++j) {
            delta_max = std::max(delta_max, std::abs(w_new[static_cast<size_t>(j)] -
                                                     r.w[static_cast<size_t>(j)]));
        }
        r.w.swap(w_new);
        r.b = b_new;
        u.swap(u_new);
        smooth = loss_new;

        if (delta_max < cfg.tol) {
            r.converged = true;
            break;
        }
        eta = std::min(eta * 1.25, 1e8);
    }

    // KKT residual of the L1 optimality conditions, the convergence certificate
    p.margins(r.w, r.b, u);
    p.gradient(u, gw, gb);
    double kkt = 0.0;
    for (int j = 0; j < p.d; ++j) {
        const size_t sj = static_cast<size_t>(j);
        if (!p.included[sj]) continue;
        if (r.w[sj] == 0.0) {
            kkt = std::max(kkt, std::max(0.0, std::abs(gw[sj]) - lambda));
        } else {
            kkt = std::max(kkt, std::abs(gw[sj] + lambda * (r.w[sj] > 0.0 ? 1.0 : -1.0)));
        }
    }
    r.kkt = kkt;
    return r;
}

}  // namespace detail

inline double lasso_lambda_max_rows(const EmbeddingMatrix& X, std::span<const int> rows,
                                    std::span<const int> labels) {
    return detail::StandardizedProblem::build(X, rows, labels).lambda_max();
}

inline double lasso_lambda_max(const EmbeddingMatrix& X, const std::vector<int>& y) {
    std::vector<int> rows(X.n_rows());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return lasso_lambda_max_rows(X, rows, y);
}

// Minimizes (1/n) sum log(1+exp(-y~ (w.x+b))) + lambda*|w|_1 by proximal
// gradient with backtracking line search. Features are standardized
// internally; reported weights are on the standardized scale.
inline SparseLinearModel fit_lasso_logistic_rows(const EmbeddingMatrix& X,
                                                 std::span<const int> rows,
                                                 std::span<const int> labels, double lambda,
                                                 const LassoConfig& cfg = {}) {
    if (lambda < 0.0) throw UsageError("lambda must be nonnegative");
    const auto problem = detail::StandardizedProblem::build(X, rows, labels);
    const auto fit = detail::ista_fit(problem, lambda, cfg);

    SparseLinearModel model;
    model.weights = fit.w;
    model.intercept = fit.b;
    model.feature_means = problem.mean;
    model.feature_stds = problem.stddev;
    for (int j = 0; j < problem.d; ++j) {
        if (!problem.included[static_cast<size_t>(j)]) model.excluded_features.push_back(j);
    }
    model.lambda = lambda;
    model.converged = fit.converged;
    model.kkt_violation = fit.kkt;
    return model;
}

inline SparseLinearModel fit_lasso_logistic(const EmbeddingMatrix& X, const std::vector<int>& y,
                                            double lambda, const LassoConfig& cfg = {}) {
    if (X.n_rows() != y.size()) throw InputError("lasso: label count mismatch");
    std::vector<int> rows(X.n_rows());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return fit_lasso_logistic_rows(X, rows, y, lambda, cfg);
}

// 5-fold cross-validated lambda over a log grid from lambda_max down to
// 1e-3 * lambda_max, warm-started along the path. Ties prefer the larger
// (sparser) lambda.
inline double cv_select_lambda(const EmbeddingMatrix& X, const std::vector<int>& y, uint64_t seed,
                               int n_folds = 5, int n_grid = 20, const LassoConfig& cfg = {}) {
    if (X.n_rows() != y.size()) throw InputError("cv_select_lambda: label count mismatch");
    const int n = static_cast<int>(X.n_rows());
    if (n < 2 * n_folds) throw InputError("cv_select_lambda: too few rows for CV");

    // stratified fold assignment
    std::vector<int> fold_of(static_cast<size_t>(n));
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i) {
            if (y[static_cast<size_t>(i)] == cls) idx.push_back(i);
        }
        Rng rng(derive_seed(seed, "cv_fold", static_cast<uint64_t>(cls)));
        rng.shuffle(idx);
        for (size_t k = 0; k < idx.size(); ++k) {
            fold_of[static_cast<size_t>(idx[k])] = static_cast<int>(k % static_cast<size_t>(n_folds));
        }
    }

    const double lmax = lasso_lambda_max(X, y);
    std::vector<double> grid(static_cast<size_t>(n_grid));
    for (int k = 0; k < n_grid; ++k) {
        grid[static_cast<size_t>(k)] = lmax * std::pow(10.0, -3.0 * k / (n_grid - 1));
    }

    std::vector<double> cv_loss(static_cast<size_t>(n_grid), 0.0);
    for (int f = 0; f < n_folds; ++f) {
        std::vector<int> train_rows, valid_rows;
        std::vector<int> train_y, valid_y;
        for (int i = 0; i < n; ++i) {
            if (fold_of[static_cast<size_t>(i)] == f) {
                valid_rows.push_back(i);
                valid_y.push_back(y[static_cast<size_t>(i)]);
            } else {
                train_rows.push_back(i);
                train_y.push_back(y[static_cast<size_t>(i)]);
            }
        }
        const auto problem = detail::StandardizedProblem::build(X, train_rows, train_y);
        std::vector<double> warm_w(static_cast<size_t>(X.dim), 0.0);
        double warm_b = problem.intercept_at_null();
        for (int k = 0; k < n_grid; ++k) {
            const auto fit = detail::ista_fit(problem, grid[static_cast<size_t>(k)], cfg, &warm_w, &warm_b);
            warm_w = fit.w;
            warm_b = fit.b;

            SparseLinearModel m;
            m.weights = fit.w;
            m.intercept = fit.b;
            m.feature_means = problem.mean;
            m.feature_stds = problem.stddev;
            double loss = 0.0;
            for (size_t v = 0; v < valid_rows.size(); ++v) {
                const double u = m.margin(X.row(static_cast<size_t>(valid_rows[v])));
                loss += detail::softplus(valid_y[v] == 1 ? -u : u);
            }
            cv_loss[static_cast<size_t>(k)] += loss / static_cast<double>(valid_rows.size());
        }
    }

    int best = 0;
    for (int k = 1; k < n_grid; ++k) {
        if (cv_loss[static_cast<size_t>(k)] < cv_loss[static_cast<size_t>(best)] - 1e-12) best = k;
    }
    return grid[static_cast<size_t>(best)];
}

struct VocabPartition {
    std::vector<int> strong;    // |w| strictly above threshold
    std::vector<int> noisy;     // 0 < |w| <= threshold
    std::vector<int> inactive;  // w exactly 0
    double threshold = 0.1;
};

inline VocabPartition partition_vocabulary(const SparseLinearModel& model, double threshold = 0.1) {
    if (threshold <= 0.0) throw UsageError("partition threshold must be positive");
    VocabPartition p;
    p.threshold = threshold;
    for (int j = 0; j < model.dim(); ++j) {
        const double w = std::abs(model.weights[static_cast<size_t>(j)]);
        if (w == 0.0) p.inactive.push_back(j);
        else if (w > threshold) p.strong.push_back(j);
        else p.noisy.push_back(j);
    }
    return p;
}

struct ShapAttribution {
    std::string doc_id;
    std::vector<double> phi;
    double base_value = 0.0;
};

namespace detail {

inline std::vector<double> standardized_reference_means(const SparseLinearModel& model,
                                                        const EmbeddingMatrix& X_ref) {
    if (X_ref.n_rows() == 0) throw InputError("shap_linear: empty reference set");
    if (X_ref.dim != model.dim()) throw InputError("shap_linear: reference dim mismatch");
    std::vector<double> zbar(static_cast<size_t>(model.dim()), 0.0);
    for (size_t i = 0; i < X_ref.n_rows(); ++i) {
        auto row = X_ref.row(i);
        for (int j = 0; j < model.dim(); ++j) {
            zbar[static_cast<size_t>(j)] += model.standardize(row[static_cast<size_t>(j)], j);
        }
    }
    for (double& v : zbar) v /= static_cast<double>(X_ref.n_rows());
    return zbar;
}

inline ShapAttribution shap_with_reference(const SparseLinearModel& model,
                                           const std::vector<double>& zbar_ref,
                                           std::span<const double> x, std::string doc_id) {
    if (static_cast<int>(x.size()) != model.dim()) {
        throw InputError("shap_linear: input dim mismatch");
    }
    ShapAttribution a;
    a.doc_id = std::move(doc_id);
    a.phi.resize(static_cast<size_t>(model.dim()));
    double base = model.intercept;
    for (int j = 0; j < model.dim(); ++j) {
        const size_t sj = static_cast<size_t>(j);
        const double z = model.standardize(x[sj], j);
        a.phi[sj] = model.weights[sj] * (z - zbar_ref[sj]);
        base += model.weights[sj] * zbar_ref[sj];
    }
    a.base_value = base;
    return a;
}

}  // namespace detail

// Exact Shapley attribution for a linear model under feature independence:
// phi_j = w_j (x_j - mean_ref_j) on the raw (pre-sigmoid) margin, so
// base_value + sum(phi) equals the model output on x.
inline ShapAttribution shap_linear(const SparseLinearModel& model, const EmbeddingMatrix& X_ref,
                                   std::span<const double> x, const std::string& doc_id) {
    const auto zbar = detail::standardized_reference_means(model, X_ref);
    return detail::shap_with_reference(model, zbar, x, doc_id);
}

// SHAP for every row of X_docs against a shared reference set.
inline std::vector<ShapAttribution> shap_linear_all(const SparseLinearModel& model,
                                                    const EmbeddingMatrix& X_ref,
                                                    const EmbeddingMatrix& X_docs) {
    const auto zbar = detail::standardized_reference_means(model, X_ref);
    std::vector<ShapAttribution> out;
    out.reserve(X_docs.n_rows());
    for (size_t i = 0; i < X_docs.n_rows(); ++i) {
        out.push_back(detail::shap_with_reference(model, zbar, X_docs.row(i), X_docs.doc_ids[i]));
    }
    return out;
}

// Features ranked by mean |phi| over a document set (descending, ties by
// index); at most k entries.
inline std::vector<std::pair<int, double>> top_features(std::span<const ShapAttribution> attrs,
                                                        int k) {
    if (k <= 0) throw UsageError("top_features: k must be positive");
    if (attrs.empty()) throw InputError("top_features: empty attribution set");
    const size_t dim = attrs.front().phi.size();
    for (const auto& a : attrs) {
        if (a.phi.size() != dim) throw InputError("top_features: inconsistent dims");
    }
    std::vector<std::pair<int, double>> ranked(dim);
    for (size_t j = 0; j < dim; ++j) ranked[j] = {static_cast<int>(j), 0.0};
    for (const auto& a : attrs) {
        for (size_t j = 0; j < dim; ++j) ranked[j].second += std::abs(a.phi[j]);
    }
    for (auto& [j, v] : ranked) v /= static_cast<double>(attrs.size());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<size_t>(k)) ranked.resize(static_cast<size_t>(k));
    return ranked;
}

}  // namespace curveplan
