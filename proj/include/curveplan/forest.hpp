#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "curveplan/embed.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/io.hpp"
#include "curveplan/parallel.hpp"
#include "curveplan/rng.hpp"
#include "curveplan/version.hpp"

namespace curveplan {

struct ForestParams {
    int n_trees = 200;
    int max_depth = -1;   // -1 = unlimited; 0 = root is a leaf
    int min_leaf = 1;
    int max_features = 0;  // 0 = ceil(sqrt(dim))
    uint64_t seed = 0;
};

// Nodes are stored in one array per tree; feature < 0 marks a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double positive_fraction = 0.0;
    int n_samples = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        int i = 0;
        while (!nodes[static_cast<size_t>(i)].is_leaf()) {
            const TreeNode& node = nodes[static_cast<size_t>(i)];
            i = x[static_cast<size_t>(node.feature)] < node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<size_t>(i)].positive_fraction;
    }
};

struct ForestModel {
    std::vector<Tree> trees;
    ForestParams params;
    int dim = 0;
};

namespace detail {

struct TreeBuilder {
    const EmbeddingMatrix& X;
    std::span<const int> rows;       // row indices into X available for training
    std::span<const int> labels;     // label per entry of rows
    const ForestParams& params;
    int features_per_split;
    Rng rng;
    Tree tree;
    std::vector<int> sample;                       // bootstrap positions into rows
    std::vector<std::pair<double, int>> scratch;   // (value, label) sort buffer

    TreeBuilder(const EmbeddingMatrix& x, std::span<const int> r, std::span<const int> y,
                const ForestParams& p, int mf, uint64_t tree_seed)
        : X(x), rows(r), labels(y), params(p), features_per_split(mf), rng(tree_seed) {}

    double value_at(int pos, int feature) const {
        return X.row(static_cast<size_t>(rows[static_cast<size_t>(pos)]))[static_cast<size_t>(feature)];
    }
    int label_at(int pos) const { return labels[static_cast<size_t>(pos)]; }

    void build() {
        const int m = static_cast<int>(rows.size());
        sample.resize(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) {
            sample[static_cast<size_t>(i)] =
                static_cast<int>(rng.next_below(static_cast<uint64_t>(m)));
        }
        grow(0, m, 0);
    }

    static double gini(int n_pos, int n) {
        if (n == 0) return 0.0;
        const double p = static_cast<double>(n_pos) / n;
        return 1.0 - p * p - (1.0 - p) * (1.0 - p);
    }

    int make_leaf(int begin, int end) {
        int n_pos = 0;
        for (int i = begin; i < end; ++i) n_pos += label_at(sample[static_cast<size_t>(i)]);
        TreeNode leaf;
        leaf.n_samples = end - begin;
        leaf.positive_fraction = static_cast<double>(n_pos) / (end - begin);
        tree.nodes.push_back(leaf);
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double decrease = 0.0;
    };

    Split find_split(int begin, int end, int n_pos) {
        const int m = end - begin;
        const double parent = gini(n_pos, m);
        Split best;

        // Candidate features drawn per node, evaluated in ascending index
        // order; ties on decrease keep the earlier feature / lower threshold.
        std::vector<int> feats =
            rng.sample_indices(X.dim, std::min(features_per_split, X.dim));
        std::sort(feats.begin(), feats.end());

        for (int f : feats) {
            scratch.clear();
            for (int i = begin; i < end; ++i) {
                const int pos = sample[static_cast<size_t>(i)];
                scratch.emplace_back(value_at(pos, f), label_at(pos));
            }
            std::sort(scratch.begin(), scratch.end());
            int left_pos = 0;
            for (int i = 0; i < m - 1; ++i) {
                left_pos += scratch[static_cast<size_t>(i)].second;
                const double lo = scratch[static_cast<size_t>(i)].first;
                const double hi = scratch[static_cast<size_t>(i) + 1].first;
                if (!(lo < hi)) continue;
                const int n_left = i + 1;
                const int n_right = m - n_left;
                if (n_left < params.min_leaf || n_right < params.min_leaf) continue;
                const double t = lo + (hi - lo) / 2.0;
                if (!(lo < t && t <= hi)) continue;  // midpoint degenerated by rounding
                const double decrease =
                    parent - (static_cast<double>(n_left) / m) * gini(left_pos, n_left) -
                    (static_cast<double>(n_right) / m) * gini(n_pos - left_pos, n_right);
                if (decrease > best.decrease && decrease > 1e-15) {
                    best.feature = f;
                    best.threshold = t;
                    best.decrease = decrease;
                }
            }
        }
        return best;
    }

    int grow(int begin, int end, int depth) {
        const int m = end - begin;
        int n_pos = 0;
        for (int i = begin; i < end; ++i) n_pos += label_at(sample[static_cast<size_t>(i)]);

        const bool depth_capped = params.max_depth >= 0 && depth >= params.max_depth;
        if (depth_capped || n_pos == 0 || n_pos == m || m < 2 * params.min_leaf) {
            return make_leaf(begin, end);
        }

        const Split split = find_split(begin, end, n_pos);
        if (split.feature < 0) return make_leaf(begin, end);

        const auto mid_it = std::stable_partition(
            sample.begin() + begin, sample.begin() + end,
            [&](int pos) { return value_at(pos, split.feature) < split.threshold; });
        const int mid = static_cast<int>(mid_it - sample.begin());

        TreeNode node;
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.n_samples = m;
        tree.nodes.push_back(node);
        const int self = static_cast<int>(tree.nodes.size()) - 1;
        tree.nodes[static_cast<size_t>(self)].left = grow(begin, mid, depth + 1);
        tree.nodes[static_cast<size_t>(self)].right = grow(mid, end, depth + 1);
        return self;
    }
};

}  // namespace detail

inline int resolve_max_features(const ForestParams& params, int dim) {
    if (params.max_features > 0) return std::min(params.max_features, dim);
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
}

// Fits a forest on the given rows of X. Per-tree seeds are derived from
// (params.seed, tree index), so tree order and thread schedule cannot change
// the model.
inline ForestModel fit_forest_rows(const EmbeddingMatrix& X, std::span<const int> rows,
                                   std::span<const int> labels, const ForestParams& params,
                                   int parallelism = 1) {
    if (params.n_trees < 1) throw UsageError("n_trees must be >= 1");
    if (rows.empty()) throw InputError("fit_forest: empty training set");
    if (rows.size() != labels.size()) throw InternalError("fit_forest: rows/labels mismatch");
    int n_pos = 0;
    for (int y : labels) n_pos += y;
    if (n_pos == 0 || static_cast<size_t>(n_pos) == labels.size()) {
        throw InputError("fit_forest: training labels contain a single class");
    }

    ForestModel model;
    model.params = params;
    model.dim = X.dim;
    model.trees.resize(static_cast<size_t>(params.n_trees));
    const int mf = resolve_max_features(params, X.dim);
    parallel_for(static_cast<size_t>(params.n_trees), parallelism, [&](size_t t) {
        detail::TreeBuilder builder(X, rows, labels, params, mf,
                                    derive_seed(params.seed, "tree", t));
        builder.build();
        model.trees[t] = std::move(builder.tree);
    });
    return model;
}

inline ForestModel fit_forest(const EmbeddingMatrix& X, const std::vector<int>& y,
                              const ForestParams& params, int parallelism = 1) {
    if (X.n_rows() == 0) throw InputError("fit_forest: empty matrix");
    if (X.n_rows() != y.size()) throw InputError("fit_forest: label count mismatch");
    std::vector<int> rows(X.n_rows());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return fit_forest_rows(X, rows, y, params, parallelism);
}

inline double predict_proba_one(const ForestModel& model, std::span<const double> x) {
    double sum = 0.0;
    for (const Tree& t : model.trees) sum += t.predict(x);
    return sum / static_cast<double>(model.trees.size());
}

inline std::vector<double> predict_proba_rows(const ForestModel& model, const EmbeddingMatrix& X,
                                              std::span<const int> rows) {
    if (X.dim != model.dim) {
        throw InputError("predict_proba: dim " + std::to_string(X.dim) + " does not match model dim " +
                         std::to_string(model.dim));
    }
    std::vector<double> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        out[i] = predict_proba_one(model, X.row(static_cast<size_t>(rows[i])));
    }
    return out;
}

inline std::vector<double> predict_proba(const ForestModel& model, const EmbeddingMatrix& X) {
    if (X.n_rows() == 0) return {};
    std::vector<int> rows(X.n_rows());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return predict_proba_rows(model, X, rows);
}

struct EvalMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    double auroc = 0.0;
    int n_eval = 0;
};

// Threshold metrics plus rank-statistic AUROC (ties get half credit).
// A single-class evaluation set yields the 0.5 AUROC convention.
inline EvalMetrics evaluate(std::span<const double> scores, std::span<const int> y,
                            double threshold = 0.5) {
    if (scores.empty()) throw InputError("evaluate: empty input");
    if (scores.size() != y.size()) throw InputError("evaluate: length mismatch");

    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && y[i] == 1) ++tp;
        else if (pred && y[i] == 0) ++fp;
        else if (!pred && y[i] == 0) ++tn;
        else ++fn;
    }

    EvalMetrics m;
    m.n_eval = static_cast<int>(scores.size());
    m.accuracy = static_cast<double>(tp + tn) / m.n_eval;
    m.f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);

    const int n_pos = tp + fn;
    const int n_neg = fp + tn;
    if (n_pos == 0 || n_neg == 0) {
        m.auroc = 0.5;
        return m;
    }

    std::vector<std::pair<double, int>> ranked(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) ranked[i] = {scores[i], y[i]};
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < ranked.size()) {
        size_t j = i;
        while (j < ranked.size() && ranked[j].first == ranked[i].first) ++j;
        const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k) {
            if (ranked[k].second == 1) rank_sum_pos += mid_rank;
        }
        i = j;
    }
    m.auroc = (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) /
              (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return m;
}

inline double metric_value(const EvalMetrics& m, const std::string& metric) {
    if (metric == "accuracy") return m.accuracy;
    if (metric == "f1") return m.f1;
    if (metric == "auroc") return m.auroc;
    throw UsageError("unknown metric \"" + metric + "\"");
}

// --- persistence: versioned JSON tree dump, reload reproduces predictions ---

inline nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"p", n.positive_fraction}, {"n", n.n_samples}});
            } else {
                nodes.push_back({{"f", n.feature},
                                 {"t", n.threshold},
                                 {"l", n.left},
                                 {"r", n.right},
                                 {"n", n.n_samples}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    return nlohmann::json{{"format_version", kModelFormatVersion},
                          {"kind", "forest"},
                          {"dim", model.dim},
                          {"n_trees", model.params.n_trees},
                          {"max_depth", model.params.max_depth},
                          {"min_leaf", model.params.min_leaf},
                          {"max_features", model.params.max_features},
                          {"seed", model.params.seed},
                          {"trees", std::move(trees)}};
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("kind", "") != "forest") {
        throw InputError("model JSON is not a forest dump");
    }
    if (j.value("format_version", -1) != kModelFormatVersion) {
        throw InputError("unsupported model format_version");
    }
    ForestModel model;
    model.dim = j.at("dim").get<int>();
    model.params.n_trees = j.at("n_trees").get<int>();
    model.params.max_depth = j.at("max_depth").get<int>();
    model.params.min_leaf = j.at("min_leaf").get<int>();
    model.params.max_features = j.at("max_features").get<int>();
    model.params.seed = j.at("seed").get<uint64_t>();
    for (const auto& jt : j.at("trees")) {
        Tree t;
        for (const auto& jn : jt) {
            TreeNode n;
            n.n_samples = jn.at("n").get<int>();
            if (jn.contains("f")) {
                n.feature = jn.at("f").get<int>();
                n.threshold = jn.at("t").get<double>();
                n.left = jn.at("l").get<int>();
                n.right = jn.at("r").get<int>();
            } else {
                n.positive_fraction = jn.at("p").get<double>();
            }
            t.nodes.push_back(n);
        }
        model.trees.push_back(std::move(t));
    }
    if (static_cast<int>(model.trees.size()) != model.params.n_trees) {
        throw InputError("model JSON: tree count does not match n_trees");
    }
    return model;
}

inline void save_forest(const ForestModel& model, const std::filesystem::path& path) {
    write_text_file(path, forest_to_json(model).dump(2) + "\n");
}

inline ForestModel load_forest(const std::filesystem::path& path) {
    try {
        return forest_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace curveplan
