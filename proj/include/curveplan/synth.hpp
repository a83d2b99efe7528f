#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curveplan/corpus.hpp"
#include "curveplan/errors.hpp"
#include "curveplan/rng.hpp"

namespace curveplan {

struct BernoulliPair {
    double pos = 0.0;
    double neg = 0.0;
};

struct SynthSpec {
    int n_docs = 1000;
    double positive_fraction = 0.5;
    int n_strong = 20;
    int n_noisy = 0;
    int n_background = 500;
    int doc_length_min = 30;
    int doc_length_max = 80;
    BernoulliPair p_strong{0.6, 0.2};
    BernoulliPair p_noisy{0.35, 0.30};
    // Per-word geometric decay of the strong presence gap: word k keeps
    // (30% + 70% * strong_decay^k) of the full gap, so a decaying vocabulary
    // has a stable head of core terms while every strong word retains at
    // least 30% of the gap. 1.0 keeps all strong words equally informative.
    double strong_decay = 1.0;
    uint64_t seed = 0;

    double p_strong_pos(int k) const {
        const double keep = 0.3 + 0.7 * std::pow(strong_decay, k);
        return p_strong.neg + (p_strong.pos - p_strong.neg) * keep;
    }

    void validate() const {
        if (n_docs <= 0) throw UsageError("synth: n_docs must be positive");
        if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
            throw UsageError("synth: positive_fraction must be in (0,1)");
        }
        if (n_strong < 0 || n_noisy < 0 || n_background < 0) {
            throw UsageError("synth: counts must be nonnegative");
        }
        if (doc_length_min < 1 || doc_length_min > doc_length_max) {
            throw UsageError("synth: need 1 <= doc_length_min <= doc_length_max");
        }
        auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!in_unit(p_strong.pos) || !in_unit(p_strong.neg) || !in_unit(p_noisy.pos) ||
            !in_unit(p_noisy.neg)) {
            throw UsageError("synth: probabilities must be in [0,1]");
        }
        if (!(p_strong.pos > p_strong.neg)) {
            throw UsageError("synth: p_strong.pos must exceed p_strong.neg");
        }
        if (p_noisy.pos < p_noisy.neg) {
            throw UsageError("synth: p_noisy.pos must be >= p_noisy.neg");
        }
        if (!(strong_decay > 0.0 && strong_decay <= 1.0)) {
            throw UsageError("synth: strong_decay must be in (0,1]");
        }
    }
};

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    return nlohmann::json{{"n_docs", s.n_docs},
                          {"positive_fraction", s.positive_fraction},
                          {"n_strong", s.n_strong},
                          {"n_noisy", s.n_noisy},
                          {"n_background", s.n_background},
                          {"doc_length", {{"min", s.doc_length_min}, {"max", s.doc_length_max}}},
                          {"p_strong", {{"pos", s.p_strong.pos}, {"neg", s.p_strong.neg}}},
                          {"p_noisy", {{"pos", s.p_noisy.pos}, {"neg", s.p_noisy.neg}}},
                          {"strong_decay", s.strong_decay},
                          {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.n_docs = j.value("n_docs", s.n_docs);
    s.positive_fraction = j.value("positive_fraction", s.positive_fraction);
    s.n_strong = j.value("n_strong", s.n_strong);
    s.n_noisy = j.value("n_noisy", s.n_noisy);
    s.n_background = j.value("n_background", s.n_background);
    if (j.contains("doc_length")) {
        s.doc_length_min = j["doc_length"].value("min", s.doc_length_min);
        s.doc_length_max = j["doc_length"].value("max", s.doc_length_max);
    }
    if (j.contains("p_strong")) {
        s.p_strong.pos = j["p_strong"].value("pos", s.p_strong.pos);
        s.p_strong.neg = j["p_strong"].value("neg", s.p_strong.neg);
    }
    if (j.contains("p_noisy")) {
        s.p_noisy.pos = j["p_noisy"].value("pos", s.p_noisy.pos);
        s.p_noisy.neg = j["p_noisy"].value("neg", s.p_noisy.neg);
    }
    s.strong_decay = j.value("strong_decay", s.strong_decay);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

struct BayesEstimate {
    double accuracy = 0.0;
    double std_error = 0.0;
    int n_mc = 0;
};

struct SynthCorpusBundle {
    Corpus corpus;
    std::vector<std::string> planted_strong;
    std::vector<std::string> planted_noisy;
    std::optional<BayesEstimate> bayes_rate_estimate;
};

namespace detail {

inline std::string padded_token(const std::string& prefix, int index, int width) {
    std::string digits = std::to_string(index);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return prefix + digits;
}

inline int token_width(int count) {
    int width = 1;
    for (int v = count - 1; v >= 10; v /= 10) ++width;
    return std::max(width, 3);
}

// Zipf(s) sampler over ranks 1..n via the precomputed cumulative mass.
class ZipfSampler {
public:
    ZipfSampler(int n, double s) {
        cumulative_.reserve(static_cast<size_t>(n));
        double total = 0.0;
        for (int k = 1; k <= n; ++k) {
            total += std::pow(static_cast<double>(k), -s);
            cumulative_.push_back(total);
        }
    }

    bool empty() const { return cumulative_.empty(); }

    int sample(Rng& rng) const {
        const double u = rng.next_double() * cumulative_.back();
        const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<int>(it - cumulative_.begin());
    }

private:
    std::vector<double> cumulative_;
};

// Log-likelihood-ratio score of the exact Bayes rule over the planted words.
// Guarded logs keep deterministic plants (p = 0 or 1) well-defined.
inline double safe_log(double p) {
    constexpr double kNegHuge = -1e30;
    return p <= 0.0 ? kNegHuge : std::log(p);
}

struct BayesRule {
    std::vector<double> llr_present;
    std::vector<double> llr_absent;
    double prior_llr = 0.0;

    explicit BayesRule(const SynthSpec& spec) {
        prior_llr = safe_log(spec.positive_fraction) - safe_log(1.0 - spec.positive_fraction);
        for (int k = 0; k < spec.n_strong; ++k) {
            const double pos = spec.p_strong_pos(k);
            const double neg = spec.p_strong.neg;
            llr_present.push_back(safe_log(pos) - safe_log(neg));
            llr_absent.push_back(safe_log(1.0 - pos) - safe_log(1.0 - neg));
        }
        for (int k = 0; k < spec.n_noisy; ++k) {
            llr_present.push_back(safe_log(spec.p_noisy.pos) - safe_log(spec.p_noisy.neg));
            llr_absent.push_back(safe_log(1.0 - spec.p_noisy.pos) - safe_log(1.0 - spec.p_noisy.neg));
        }
    }

    int predict(const std::vector<char>& presence) const {
        double score = prior_llr;
        for (size_t k = 0; k < presence.size(); ++k) {
            score += presence[k] ? llr_present[k] : llr_absent[k];
        }
        return score > 0.0 ? 1 : 0;
    }
};

}  // namespace detail

// Monte Carlo accuracy of the exact Bayes rule (known per-word Bernoulli
// parameters and class prior) on freshly generated documents.
inline BayesEstimate estimate_bayes_rate(const SynthSpec& spec, int n_mc) {
    spec.validate();
    if (n_mc < 1000) throw UsageError("estimate_bayes_rate: n_mc must be >= 1000");

    const detail::BayesRule rule(spec);
    Rng rng(derive_seed(spec.seed, "bayes_mc"));
    const size_t n_words = static_cast<size_t>(spec.n_strong + spec.n_noisy);
    std::vector<char> presence(n_words);
    int correct = 0;
    for (int i = 0; i < n_mc; ++i) {
        const int label = rng.next_bernoulli(spec.positive_fraction) ? 1 : 0;
        for (int k = 0; k < spec.n_strong; ++k) {
            const double p = label == 1 ? spec.p_strong_pos(k) : spec.p_strong.neg;
            presence[static_cast<size_t>(k)] = rng.next_bernoulli(p);
        }
        for (int k = 0; k < spec.n_noisy; ++k) {
            const double p = label == 1 ? spec.p_noisy.pos : spec.p_noisy.neg;
            presence[static_cast<size_t>(spec.n_strong + k)] = rng.next_bernoulli(p);
        }
        if (rule.predict(presence) == label) ++correct;
    }

    BayesEstimate est;
    est.n_mc = n_mc;
    est.accuracy = static_cast<double>(correct) / n_mc;
    est.std_error = std::sqrt(est.accuracy * (1.0 - est.accuracy) / n_mc);
    return est;
}

// Generates a labeled corpus with planted strong and noisy vocabulary.
// Per-document seeds are derived from (spec.seed, doc index), so generation
// is deterministic and order-free. Documents are bags of tokens: planted
// words fire independently by label, then Zipf(1.1) background words fill to
// a uniform target length, and the token order is shuffled.
inline SynthCorpusBundle generate(const SynthSpec& spec, int bayes_mc = 100000) {
    spec.validate();

    SynthCorpusBundle bundle;
    const int strong_width = detail::token_width(std::max(spec.n_strong, 1));
    const int noisy_width = detail::token_width(std::max(spec.n_noisy, 1));
    const int bg_width = detail::token_width(std::max(spec.n_background, 1));
    for (int k = 0; k < spec.n_strong; ++k) {
        bundle.planted_strong.push_back(detail::padded_token("strong", k, strong_width));
    }
    for (int k = 0; k < spec.n_noisy; ++k) {
        bundle.planted_noisy.push_back(detail::padded_token("noisy", k, noisy_width));
    }

    const detail::ZipfSampler background(spec.n_background, 1.1);

    std::vector<std::vector<std::string>> doc_tokens(static_cast<size_t>(spec.n_docs));
    std::vector<int> labels(static_cast<size_t>(spec.n_docs));
    std::vector<char> strong_seen(static_cast<size_t>(spec.n_strong), 0);
    std::vector<char> noisy_seen(static_cast<size_t>(spec.n_noisy), 0);

    for (int i = 0; i < spec.n_docs; ++i) {
        Rng rng(derive_seed(spec.seed, "doc", static_cast<uint64_t>(i)));
        const int label = rng.next_bernoulli(spec.positive_fraction) ? 1 : 0;
        labels[static_cast<size_t>(i)] = label;

        auto& tokens = doc_tokens[static_cast<size_t>(i)];
        for (int k = 0; k < spec.n_strong; ++k) {
            const double p = label == 1 ? spec.p_strong_pos(k) : spec.p_strong.neg;
            if (rng.next_bernoulli(p)) {
                tokens.push_back(bundle.planted_strong[static_cast<size_t>(k)]);
                strong_seen[static_cast<size_t>(k)] = 1;
            }
        }
        for (int k = 0; k < spec.n_noisy; ++k) {
            const double p = label == 1 ? spec.p_noisy.pos : spec.p_noisy.neg;
            if (rng.next_bernoulli(p)) {
                tokens.push_back(bundle.planted_noisy[static_cast<size_t>(k)]);
                noisy_seen[static_cast<size_t>(k)] = 1;
            }
        }

        const int span = spec.doc_length_max - spec.doc_length_min + 1;
        const int target =
            spec.doc_length_min + static_cast<int>(rng.next_below(static_cast<uint64_t>(span)));
        if (!background.empty()) {
            while (static_cast<int>(tokens.size()) < target) {
                tokens.push_back(detail::padded_token("bg", background.sample(rng), bg_width));
            }
        }
        rng.shuffle(tokens);
    }

    // Planted tokens that never fired (vanishingly rare at realistic specs)
    // are injected into one document of the favored class to keep the plant
    // manifest truthful.
    {
        Rng fixup(derive_seed(spec.seed, "fixup"));
        std::vector<int> pos_docs, neg_docs;
        for (int i = 0; i < spec.n_docs; ++i) {
            (labels[static_cast<size_t>(i)] == 1 ? pos_docs : neg_docs).push_back(i);
        }
        auto inject = [&](const std::string& token) {
            const std::vector<int>& preferred = !pos_docs.empty() ? pos_docs : neg_docs;
            const int doc = preferred[static_cast<size_t>(
                fixup.next_below(static_cast<uint64_t>(preferred.size())))];
            doc_tokens[static_cast<size_t>(doc)].push_back(token);
        };
        for (int k = 0; k < spec.n_strong; ++k) {
            if (!strong_seen[static_cast<size_t>(k)]) {
                inject(bundle.planted_strong[static_cast<size_t>(k)]);
            }
        }
        for (int k = 0; k < spec.n_noisy; ++k) {
            if (!noisy_seen[static_cast<size_t>(k)]) {
                inject(bundle.planted_noisy[static_cast<size_t>(k)]);
            }
        }
    }

    const int id_width = detail::token_width(spec.n_docs);
    std::vector<Document> docs;
    docs.reserve(static_cast<size_t>(spec.n_docs));
    for (int i = 0; i < spec.n_docs; ++i) {
        Document d;
        d.id = detail::padded_token("doc", i, id_width);
        d.label = labels[static_cast<size_t>(i)];
        std::string text;
        for (const auto& t : doc_tokens[static_cast<size_t>(i)]) {
            if (!text.empty()) text += ' ';
            text += t;
        }
        d.text = std::move(text);
        docs.push_back(std::move(d));
    }
    bundle.corpus = Corpus::from_documents(std::move(docs));

    if (spec.n_strong + spec.n_noisy > 0 && bayes_mc > 0) {
        bundle.bayes_rate_estimate = estimate_bayes_rate(spec, bayes_mc);
    }
    return bundle;
}

// Plant manifest written next to generated corpora.
inline nlohmann::json plant_manifest_json(const SynthCorpusBundle& bundle, const SynthSpec& spec) {
    nlohmann::json j{{"spec", synth_spec_to_json(spec)},
                     {"planted_strong", bundle.planted_strong},
                     {"planted_noisy", bundle.planted_noisy}};
    if (bundle.bayes_rate_estimate) {
        j["bayes_rate"] = bundle.bayes_rate_estimate->accuracy;
        j["bayes_rate_std_error"] = bundle.bayes_rate_estimate->std_error;
        j["bayes_rate_n_mc"] = bundle.bayes_rate_estimate->n_mc;
    } else {
        j["bayes_rate"] = nullptr;
    }
    return j;
}

}  // namespace curveplan
