#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "curveplan/errors.hpp"
#include "curveplan/io.hpp"
#include "curveplan/rng.hpp"

namespace curveplan {

struct Document {
    std::string id;
    std::string text;
    int label = 0;  // 0 or 1
};

// Immutable labeled document collection. Construction validates ids and
// labels and fixes the class counts; afterwards the value is safe to share
// across threads.
class Corpus {
public:
    Corpus() = default;

    static Corpus from_documents(std::vector<Document> docs) {
        std::unordered_set<std::string> seen;
        seen.reserve(docs.size());
        size_t positives = 0;
        for (size_t i = 0; i < docs.size(); ++i) {
            const Document& d = docs[i];
            if (d.id.empty()) {
                throw InputError("document at position " + std::to_string(i) + " has empty id");
            }
            if (!seen.insert(d.id).second) {
                throw InputError("duplicate document id \"" + d.id + "\"");
            }
            if (d.label != 0 && d.label != 1) {
                throw InputError("document \"" + d.id + "\" has label " +
                                 std::to_string(d.label) + " outside {0,1}");
            }
            if (d.label == 1) ++positives;
        }
        Corpus c;
        c.documents_ = std::move(docs);
        c.positive_count_ = positives;
        return c;
    }

    const std::vector<Document>& documents() const { return documents_; }
    const Document& at(size_t i) const { return documents_.at(i); }
    size_t size() const { return documents_.size(); }
    bool empty() const { return documents_.empty(); }
    size_t positive_count() const { return positive_count_; }
    size_t negative_count() const { return documents_.size() - positive_count_; }

    std::vector<int> labels() const {
        std::vector<int> y(documents_.size());
        for (size_t i = 0; i < documents_.size(); ++i) y[i] = documents_[i].label;
        return y;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out(documents_.size());
        for (size_t i = 0; i < documents_.size(); ++i) out[i] = documents_[i].id;
        return out;
    }

    Corpus select(const std::vector<int>& indices) const {
        std::vector<Document> docs;
        docs.reserve(indices.size());
        for (int i : indices) docs.push_back(documents_.at(static_cast<size_t>(i)));
        return from_documents(std::move(docs));
    }

private:
    std::vector<Document> documents_;
    size_t positive_count_ = 0;
};

struct SplitSpec {
    int holdout_size = 5000;
    uint64_t seed = 0;
    bool stratified = true;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat corpus_format_from_string(const std::string& s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "csv") return CorpusFormat::csv;
    throw UsageError("unknown corpus format \"" + s + "\" (expected jsonl or csv)");
}

namespace detail {

inline int parse_label_value(const nlohmann::json& v, size_t line_no) {
    if (v.is_number_integer()) return v.get<int>();
    throw InputError("line " + std::to_string(line_no) + ": label must be an integer 0/1");
}

}  // namespace detail

inline Corpus load_corpus_jsonl(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<Document> docs;
    size_t line_no = 0;
    for (const std::string& line : split_lines(text)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(path.string() + " line " + std::to_string(line_no) +
                             ": JSON parse error: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
            !rec.contains("label")) {
            throw InputError(path.string() + " line " + std::to_string(line_no) +
                             ": record needs id, text, label");
        }
        if (!rec["id"].is_string() || !rec["text"].is_string()) {
            throw InputError(path.string() + " line " + std::to_string(line_no) +
                             ": id and text must be strings");
        }
        Document d;
        d.id = rec["id"].get<std::string>();
        d.text = rec["text"].get<std::string>();
        d.label = detail::parse_label_value(rec["label"], line_no);
        docs.push_back(std::move(d));
    }
    if (docs.empty()) throw InputError(path.string() + ": no records");
    return Corpus::from_documents(std::move(docs));
}

inline Corpus load_corpus_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    auto records = parse_csv(text, path.string());
    if (records.empty()) throw InputError(path.string() + ": no records");
    const auto& header = records[0];
    if (header.size() != 3 || header[0] != "id" || header[1] != "text" || header[2] != "label") {
        throw InputError(path.string() + ": expected header id,text,label");
    }
    std::vector<Document> docs;
    for (size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::string row = "row " + std::to_string(r + 1);
        if (rec.size() != 3) {
            throw InputError(path.string() + " " + row + ": expected 3 fields, got " +
                             std::to_string(rec.size()));
        }
        Document d;
        d.id = rec[0];
        d.text = rec[1];
        int label = 0;
        auto [ptr, ec] = std::from_chars(rec[2].data(), rec[2].data() + rec[2].size(), label);
        if (ec != std::errc() || ptr != rec[2].data() + rec[2].size()) {
            throw InputError(path.string() + " " + row + ": label is not an integer");
        }
        d.label = label;
        docs.push_back(std::move(d));
    }
    if (docs.empty()) throw InputError(path.string() + ": no records");
    return Corpus::from_documents(std::move(docs));
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    switch (format) {
        case CorpusFormat::jsonl: return load_corpus_jsonl(path);
        case CorpusFormat::csv: return load_corpus_csv(path);
    }
    throw InternalError("unreachable corpus format");
}

inline void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::string out;
    for (const Document& d : corpus.documents()) {
        nlohmann::json rec{{"id", d.id}, {"text", d.text}, {"label", d.label}};
        out += rec.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

inline void save_corpus_csv(const Corpus& corpus, const std::filesystem::path& path) {
    std::string out = "id,text,label\n";
    for (const Document& d : corpus.documents()) {
        out += csv_escape(d.id);
        out += ',';
        out += csv_escape(d.text);
        out += ',';
        out += std::to_string(d.label);
        out += '\n';
    }
    write_text_file(path, out);
}

// Largest-remainder apportionment of n over class counts. Returns per-class
// sample sizes summing to n. Tie on fractional part goes to the earlier class.
inline std::vector<int> apportion_largest_remainder(const std::vector<size_t>& class_counts,
                                                    int n) {
    size_t total = 0;
    for (size_t c : class_counts) total += c;
    std::vector<int> result(class_counts.size(), 0);
    std::vector<std::pair<double, size_t>> remainders;  // (-frac, class) for stable sort
    int assigned = 0;
    for (size_t k = 0; k < class_counts.size(); ++k) {
        const double quota =
            static_cast<double>(n) * static_cast<double>(class_counts[k]) / static_cast<double>(total);
        const int fl = static_cast<int>(quota);
        result[k] = fl;
        assigned += fl;
        remainders.emplace_back(-(quota - fl), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (int i = 0; i < n - assigned; ++i) {
        result[remainders[static_cast<size_t>(i)].second] += 1;
    }
    return result;
}

// Stratified subsample of exactly n documents without replacement. Class
// counts follow largest-remainder apportionment of the corpus proportions;
// the selected documents keep their original corpus order.
inline Corpus stratified_sample(const Corpus& corpus, int n, uint64_t seed) {
    if (n <= 0) throw UsageError("sample size must be positive");
    if (static_cast<size_t>(n) > corpus.size()) {
        throw InputError("sample size " + std::to_string(n) + " exceeds corpus size " +
                         std::to_string(corpus.size()));
    }
    std::vector<int> pos_idx;
    std::vector<int> neg_idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        (corpus.at(i).label == 1 ? pos_idx : neg_idx).push_back(static_cast<int>(i));
    }

    const std::vector<size_t> counts{pos_idx.size(), neg_idx.size()};
    const std::vector<int> take = apportion_largest_remainder(counts, n);
    if (n >= 2 && ((pos_idx.empty() || neg_idx.empty()) || take[0] == 0 || take[1] == 0)) {
        throw InputError("stratified sample of " + std::to_string(n) +
                         " would leave a class with 0 documents");
    }

    std::vector<int> selected;
    selected.reserve(static_cast<size_t>(n));
    const std::vector<int>* strata[2] = {&pos_idx, &neg_idx};
    for (int k = 0; k < 2; ++k) {
        Rng rng(derive_seed(seed, "stratum", static_cast<uint64_t>(k)));
        const auto& stratum = *strata[k];
        std::vector<int> order = rng.sample_indices(static_cast<int>(stratum.size()), take[static_cast<size_t>(k)]);
        for (int o : order) selected.push_back(stratum[static_cast<size_t>(o)]);
    }
    std::sort(selected.begin(), selected.end());
    return corpus.select(selected);
}

// Splits off a fixed hold-out set; the remainder keeps the original order.
inline std::pair<Corpus, Corpus> holdout_split(const Corpus& corpus, const SplitSpec& spec) {
    if (spec.holdout_size <= 0) throw UsageError("holdout size must be positive");
    if (static_cast<size_t>(spec.holdout_size) >= corpus.size()) {
        throw InputError("holdout size " + std::to_string(spec.holdout_size) +
                         " must be smaller than corpus size " + std::to_string(corpus.size()));
    }

    Corpus holdout;
    if (spec.stratified) {
        holdout = stratified_sample(corpus, spec.holdout_size, derive_seed(spec.seed, "holdout"));
    } else {
        Rng rng(derive_seed(spec.seed, "holdout"));
        std::vector<int> chosen =
            rng.sample_indices(static_cast<int>(corpus.size()), spec.holdout_size);
        std::sort(chosen.begin(), chosen.end());
        holdout = corpus.select(chosen);
    }

    std::unordered_set<std::string> holdout_ids;
    for (const Document& d : holdout.documents()) holdout_ids.insert(d.id);
    std::vector<int> pool_idx;
    pool_idx.reserve(corpus.size() - holdout.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (!holdout_ids.count(corpus.at(i).id)) pool_idx.push_back(static_cast<int>(i));
    }
    return {corpus.select(pool_idx), std::move(holdout)};
}

// Downsamples the negative class to a 1:1 ratio with the positives, keeping
// original order. Intended for tasks whose label files carry an excess of
// stratified negative counterparts.
inline Corpus balance_negatives(const Corpus& corpus, uint64_t seed) {
    const size_t pos = corpus.positive_count();
    const size_t neg = corpus.negative_count();
    if (pos == 0) throw InputError("cannot balance: corpus has no positive documents");
    if (neg < pos) {
        throw InputError("cannot balance: negatives (" + std::to_string(neg) +
                         ") fewer than positives (" + std::to_string(pos) + ")");
    }
    if (neg == pos) return corpus;

    std::vector<int> neg_idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.at(i).label == 0) neg_idx.push_back(static_cast<int>(i));
    }
    Rng rng(derive_seed(seed, "balance"));
    std::vector<int> order = rng.sample_indices(static_cast<int>(neg_idx.size()), static_cast<int>(pos));
    std::vector<int> keep;
    keep.reserve(2 * pos);
    for (int o : order) keep.push_back(neg_idx[static_cast<size_t>(o)]);
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.at(i).label == 1) keep.push_back(static_cast<int>(i));
    }
    std::sort(keep.begin(), keep.end());
    return corpus.select(keep);
}

}  // namespace curveplan
