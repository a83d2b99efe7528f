#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "curveplan/corpus.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/io.hpp"

namespace curveplan {

struct TokenizerOptions {
    // Spec'd per-operation examples keep single-letter tokens, so the floor
    // defaults to 1; raise it to 2 to drop one-character noise.
    size_t min_token_length = 1;
    bool drop_pure_digit = true;
};

inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizerOptions& opts = {}) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (current.size() >= opts.min_token_length) {
            bool all_digit = true;
            for (char c : current) {
                if (!std::isdigit(static_cast<unsigned char>(c))) {
                    all_digit = false;
                    break;
                }
            }
            if (!(opts.drop_pure_digit && all_digit)) tokens.push_back(current);
        }
        current.clear();
    };
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

struct Vocabulary {
    std::vector<std::string> tokens;  // sorted lexicographically
    std::unordered_map<std::string, int> index;
    std::vector<int> doc_frequency;
    int n_docs = 0;  // corpus size the document frequencies were counted on

    int dim() const { return static_cast<int>(tokens.size()); }
};

// Unigram vocabulary over the corpus: lowercased alphanumeric tokens present
// in at least min_doc_freq documents, optionally capped to the max_features
// highest-document-frequency tokens (ties kept lexicographically first).
inline Vocabulary build_vocabulary(const Corpus& corpus, int min_doc_freq,
                                   std::optional<int> max_features = std::nullopt,
                                   const TokenizerOptions& opts = {}) {
    if (corpus.empty()) throw InputError("build_vocabulary: empty corpus");
    if (min_doc_freq < 1) throw UsageError("min_doc_freq must be >= 1");
    if (max_features && *max_features < 1) throw UsageError("max_features must be >= 1");

    // std::map keeps tokens sorted, which also makes the build independent of
    // document order.
    std::map<std::string, int> df;
    std::vector<std::string> doc_tokens;
    for (const Document& d : corpus.documents()) {
        doc_tokens = tokenize(d.text, opts);
        std::sort(doc_tokens.begin(), doc_tokens.end());
        doc_tokens.erase(std::unique(doc_tokens.begin(), doc_tokens.end()), doc_tokens.end());
        for (const std::string& t : doc_tokens) df[t] += 1;
    }

    std::vector<std::pair<std::string, int>> kept;
    for (const auto& [token, count] : df) {
        if (count >= min_doc_freq) kept.emplace_back(token, count);
    }
    if (kept.empty()) throw InputError("build_vocabulary: no token survives min_doc_freq");

    if (max_features && kept.size() > static_cast<size_t>(*max_features)) {
        std::stable_sort(kept.begin(), kept.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        kept.resize(static_cast<size_t>(*max_features));
        std::sort(kept.begin(), kept.end());
    }

    Vocabulary vocab;
    vocab.n_docs = static_cast<int>(corpus.size());
    vocab.tokens.reserve(kept.size());
    vocab.doc_frequency.reserve(kept.size());
    for (size_t i = 0; i < kept.size(); ++i) {
        vocab.tokens.push_back(kept[i].first);
        vocab.doc_frequency.push_back(kept[i].second);
        vocab.index.emplace(kept[i].first, static_cast<int>(i));
    }
    return vocab;
}

enum class BowMode { count, binary, tfidf };

inline BowMode bow_mode_from_string(const std::string& s) {
    if (s == "count") return BowMode::count;
    if (s == "binary") return BowMode::binary;
    if (s == "tfidf") return BowMode::tfidf;
    throw UsageError("unknown bag-of-words mode \"" + s + "\"");
}

// Dense per-document feature vectors, stored row-major.
struct EmbeddingMatrix {
    std::vector<std::string> doc_ids;
    int dim = 0;
    std::vector<double> data;  // doc_ids.size() x dim
    std::string provenance;    // bow_count | bow_binary | tfidf | external(<model>)

    size_t n_rows() const { return doc_ids.size(); }
    std::span<const double> row(size_t i) const {
        return {data.data() + i * static_cast<size_t>(dim), static_cast<size_t>(dim)};
    }
    std::span<double> row(size_t i) {
        return {data.data() + i * static_cast<size_t>(dim), static_cast<size_t>(dim)};
    }
};

inline EmbeddingMatrix embed_bow(const Corpus& corpus, const Vocabulary& vocab, BowMode mode,
                                 const TokenizerOptions& opts = {}) {
    EmbeddingMatrix m;
    m.dim = vocab.dim();
    m.doc_ids = corpus.ids();
    m.data.assign(corpus.size() * static_cast<size_t>(m.dim), 0.0);
    switch (mode) {
        case BowMode::count: m.provenance = "bow_count"; break;
        case BowMode::binary: m.provenance = "bow_binary"; break;
        case BowMode::tfidf: m.provenance = "tfidf"; break;
    }

    std::vector<double> idf;
    if (mode == BowMode::tfidf) {
        idf.resize(static_cast<size_t>(m.dim));
        for (int j = 0; j < m.dim; ++j) {
            idf[static_cast<size_t>(j)] =
                std::log((1.0 + vocab.n_docs) / (1.0 + vocab.doc_frequency[static_cast<size_t>(j)])) + 1.0;
        }
    }

    for (size_t i = 0; i < corpus.size(); ++i) {
        auto row = m.row(i);
        for (const std::string& t : tokenize(corpus.at(i).text, opts)) {
            auto it = vocab.index.find(t);
            if (it == vocab.index.end()) continue;
            row[static_cast<size_t>(it->second)] += 1.0;
        }
        if (mode == BowMode::binary) {
            for (double& v : row) v = v > 0.0 ? 1.0 : 0.0;
        } else if (mode == BowMode::tfidf) {
            for (int j = 0; j < m.dim; ++j) row[static_cast<size_t>(j)] *= idf[static_cast<size_t>(j)];
        }
    }
    return m;
}

// Embedding file format: CSV `id,v0,...,v{d-1}` plus sidecar
// `<path>.meta.json` carrying {"dim": d, "model_name": "..."}.
inline EmbeddingMatrix load_external_embeddings(const std::filesystem::path& path) {
    const std::filesystem::path meta_path = path.string() + ".meta.json";
    if (!std::filesystem::exists(meta_path)) {
        throw InputError("missing sidecar metadata: " + meta_path.string());
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(meta_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(meta_path.string() + ": " + e.what());
    }
    if (!meta.contains("dim") || !meta.contains("model_name")) {
        throw InputError(meta_path.string() + ": sidecar needs dim and model_name");
    }
    const int dim = meta["dim"].get<int>();
    if (dim <= 0) throw InputError(meta_path.string() + ": dim must be positive");
    const std::string model_name = meta["model_name"].get<std::string>();

    const std::string text = read_text_file(path);
    auto records = parse_csv(text, path.string());
    if (records.size() < 2) throw InputError(path.string() + ": no embedding rows");
    const auto& header = records[0];
    if (header.size() != static_cast<size_t>(dim) + 1 || header[0] != "id") {
        throw InputError(path.string() + ": expected header id,v0,...,v" + std::to_string(dim - 1));
    }

    EmbeddingMatrix m;
    m.dim = dim;
    m.provenance = "external(" + model_name + ")";
    std::unordered_map<std::string, bool> seen;
    for (size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.empty()) continue;
        const std::string& id = rec[0];
        if (rec.size() != static_cast<size_t>(dim) + 1) {
            throw InputError(path.string() + ": row \"" + id + "\" has " +
                             std::to_string(rec.size() - 1) + " values, expected " +
                             std::to_string(dim));
        }
        if (!seen.emplace(id, true).second) {
            throw InputError(path.string() + ": duplicate id \"" + id + "\"");
        }
        m.doc_ids.push_back(id);
        for (int j = 0; j < dim; ++j) {
            const double v = parse_double(rec[static_cast<size_t>(j) + 1],
                                          path.string() + " row \"" + id + "\"");
            if (!std::isfinite(v)) {
                throw InputError(path.string() + ": non-finite value in row \"" + id + "\"");
            }
            m.data.push_back(v);
        }
    }
    return m;
}

inline void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path,
                            const std::string& model_name) {
    std::string out = "id";
    for (int j = 0; j < m.dim; ++j) out += ",v" + std::to_string(j);
    out += '\n';
    for (size_t i = 0; i < m.n_rows(); ++i) {
        out += csv_escape(m.doc_ids[i]);
        for (double v : m.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_text_file(path, out);
    nlohmann::json meta{{"dim", m.dim}, {"model_name", model_name}};
    write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

// Reorders rows to match the corpus document order; rows whose ids are not in
// the corpus are dropped.
inline EmbeddingMatrix align(const EmbeddingMatrix& m, const Corpus& corpus) {
    std::unordered_map<std::string, size_t> row_of;
    row_of.reserve(m.n_rows());
    for (size_t i = 0; i < m.n_rows(); ++i) row_of.emplace(m.doc_ids[i], i);

    EmbeddingMatrix out;
    out.dim = m.dim;
    out.provenance = m.provenance;
    out.doc_ids.reserve(corpus.size());
    out.data.reserve(corpus.size() * static_cast<size_t>(m.dim));
    for (const Document& d : corpus.documents()) {
        auto it = row_of.find(d.id);
        if (it == row_of.end()) {
            throw InputError("align: embedding row missing for document id \"" + d.id + "\"");
        }
        out.doc_ids.push_back(d.id);
        auto row = m.row(it->second);
        out.data.insert(out.data.end(), row.begin(), row.end());
    }
    return out;
}

}  // namespace curveplan
