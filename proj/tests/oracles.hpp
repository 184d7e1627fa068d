#pragma once

// Test-side reference implementations, deliberately written on different
// algorithmic routes than the library so agreement is meaningful. Nothing in
// here may call into the code paths under test.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

/// Chi-square (1 df) survival via numeric integration of the transformed
/// density: P(X >= x) = integral over s in [sqrt(x), inf) of 2*phi(s) ds,
/// Simpson's rule on a truncated range. Library route is closed-form erfc.
inline double chi2_survival_1df(double x) {
    if (x <= 0.0) return 1.0;
    const double lo = std::sqrt(x);
    const double hi = lo + 42.0;  // phi(s) is negligible past lo+42
    const int steps = 200000;     // even
    const double h = (hi - lo) / steps;
    auto integrand = [](double s) {
        return 2.0 * std::exp(-s * s / 2.0) / std::sqrt(2.0 * 3.14159265358979323846);
    };
    double sum = integrand(lo) + integrand(hi);
    for (int i = 1; i < steps; ++i) {
        sum += integrand(lo + i * h) * ((i % 2) ? 4.0 : 2.0);
    }
    return sum * h / 3.0;
}

struct McNemarRef {
    double statistic;
    double p_value;
};

inline McNemarRef mcnemar_ref(std::size_t b, std::size_t c) {
    double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    if (diff < 0.0) diff = 0.0;
    double statistic = diff * diff / static_cast<double>(b + c);
    return {statistic, chi2_survival_1df(statistic)};
}

/// Ranks of |d| with average ranks for ties, computed by a different method
/// than the library (pair sort instead of index sort).
inline std::vector<double> ranks_ref(const std::vector<double>& values) {
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) keyed.emplace_back(values[i], i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < keyed.size()) {
        std::size_t j = i;
        while (j + 1 < keyed.size() && keyed[j + 1].first == keyed[i].first) ++j;
        double average = 0.0;
        for (std::size_t k = i; k <= j; ++k) average += static_cast<double>(k + 1);
        average /= static_cast<double>(j - i + 1);
        for (std::size_t k = i; k <= j; ++k) ranks[keyed[k].second] = average;
        i = j + 1;
    }
    return ranks;
}

struct WilcoxonRef {
    double w_statistic;  // min(W+, W-)
    double p_value;      // exact two-sided, enumeration
    std::size_t n;
};

/// Exact Wilcoxon by brute-force enumeration over all 2^n sign assignments
/// (library uses a DP over doubled ranks). Only sensible for small n.
inline WilcoxonRef wilcoxon_exact_ref(const std::vector<double>& differences) {
    std::vector<double> nonzero;
    for (double d : differences) {
        if (d != 0.0) nonzero.push_back(d);
    }
    const std::size_t n = nonzero.size();
    std::vector<double> abs_values(n);
    for (std::size_t i = 0; i < n; ++i) abs_values[i] = std::abs(nonzero[i]);
    std::vector<double> ranks = ranks_ref(abs_values);

    double w_plus = 0.0;
    double w_minus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        (nonzero[i] > 0.0 ? w_plus : w_minus) += ranks[i];
    }

    const std::uint64_t assignments = 1ULL << n;
    std::uint64_t at_or_below = 0;
    std::uint64_t at_or_above = 0;
    const double eps = 1e-9;
    for (std::uint64_t mask = 0; mask < assignments; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1ULL << i)) w += ranks[i];
        }
        if (w <= w_plus + eps) ++at_or_below;
        if (w >= w_plus - eps) ++at_or_above;
    }
    double p = 2.0 * static_cast<double>(std::min(at_or_below, at_or_above)) /
               static_cast<double>(assignments);
    return {std::min(w_plus, w_minus), std::min(p, 1.0), n};
}

/// Brute-force Okapi BM25: no inverted index, terms recounted per document by
/// scanning. Tokenization contract matches the library's (lowercased
/// alphanumeric runs) since the formula is defined over those terms.
struct ScoredDoc {
    std::size_t index;
    double score;
};

inline std::vector<std::string> bm25_terms_ref(const std::string& text) {
    std::vector<std::string> terms;
    std::string current;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!current.empty()) {
            terms.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(current);
    return terms;
}

inline std::vector<ScoredDoc> bm25_ref(const std::vector<std::string>& docs,
                                       const std::string& query, double k1, double b) {
    const std::size_t doc_count = docs.size();
    std::vector<std::vector<std::string>> doc_terms(doc_count);
    double total_len = 0.0;
    for (std::size_t d = 0; d < doc_count; ++d) {
        doc_terms[d] = bm25_terms_ref(docs[d]);
        total_len += static_cast<double>(doc_terms[d].size());
    }
    const double avg_len = doc_count ? total_len / static_cast<double>(doc_count) : 0.0;

    std::vector<std::string> query_terms = bm25_terms_ref(query);
    std::sort(query_terms.begin(), query_terms.end());
    query_terms.erase(std::unique(query_terms.begin(), query_terms.end()), query_terms.end());

    std::vector<ScoredDoc> scored(doc_count);
    for (std::size_t d = 0; d < doc_count; ++d) {
        scored[d].index = d;
        double score = 0.0;
        for (const auto& term : query_terms) {
            std::size_t df = 0;
            for (std::size_t e = 0; e < doc_count; ++e) {
                df += std::count(doc_terms[e].begin(), doc_terms[e].end(), term) > 0 ? 1 : 0;
            }
            if (df == 0) continue;
            double tf = static_cast<double>(
                std::count(doc_terms[d].begin(), doc_terms[d].end(), term));
            if (tf == 0.0) continue;
            double idf = std::max(std::log((static_cast<double>(doc_count) -
                                            static_cast<double>(df) + 0.5) /
                                           (static_cast<double>(df) + 0.5)),
                                  1e-6);
            double denom =
                tf + k1 * (1.0 - b + b * static_cast<double>(doc_terms[d].size()) /
                                         (avg_len > 0.0 ? avg_len : 1.0));
            score += idf * tf * (k1 + 1.0) / denom;
        }
        scored[d].score = score;
    }
    std::stable_sort(scored.begin(), scored.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.index < y.index;
    });
    return scored;
}

}  // namespace oracle
