#include "clipper/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "clipper/errors.hpp"

namespace clipper {

std::string to_string(SignificanceTest test) {
    return test == SignificanceTest::McNemar ? "McNemar" : "Wilcoxon";
}

double chi_square_survival_1df(double x) {
    if (x <= 0.0) return 1.0;
    return std::erfc(std::sqrt(x / 2.0));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

SignificanceResult mcnemar(std::size_t b_discordant, std::size_t c_discordant) {
    const double b = static_cast<double>(b_discordant);
    const double c = static_cast<double>(c_discordant);
    if (b + c == 0.0) {
        throw NoDiscordantPairsError("McNemar needs at least one discordant pair");
    }
    // Continuity correction clamped so the statistic is never negative.
    double numerator = std::max(std::abs(b - c) - 1.0, 0.0);
    double statistic = numerator * numerator / (b + c);
    SignificanceResult result;
    result.test = SignificanceTest::McNemar;
    result.statistic = statistic;
    result.p_value = chi_square_survival_1df(statistic);
    return result;
}

std::vector<double> average_ranks(const std::vector<double>& abs_values) {
    const std::size_t n = abs_values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return abs_values[a] < abs_values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && abs_values[order[j + 1]] == abs_values[order[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

/// Exact two-sided p for W+ by enumerating the null distribution. Ranks are
/// multiples of 0.5, so doubling them makes the sums integral.
double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus) {
    std::vector<long> doubled;
    doubled.reserve(ranks.size());
    long total = 0;
    for (double r : ranks) {
        doubled.push_back(std::lround(2.0 * r));
        total += doubled.back();
    }
    // counts[s] = number of sign assignments with doubled W+ == s
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    for (long r : doubled) {
        for (long s = total; s >= r; --s) {
            counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
        }
    }
    double assignments = std::pow(2.0, static_cast<double>(ranks.size()));
    long observed = std::lround(2.0 * w_plus);
    double below = 0.0;
    double above = 0.0;
    for (long s = 0; s <= total; ++s) {
        if (s <= observed) below += counts[static_cast<std::size_t>(s)];
        if (s >= observed) above += counts[static_cast<std::size_t>(s)];
    }
    double p = 2.0 * std::min(below, above) / assignments;
    return std::min(p, 1.0);
}

}  // namespace

SignificanceResult wilcoxon(const std::vector<double>& differences) {
    std::vector<double> nonzero;
    for (double d : differences) {
        if (d != 0.0) nonzero.push_back(d);
    }
    if (nonzero.empty()) {
        throw AllZeroDifferencesError("Wilcoxon needs at least one nonzero difference");
    }
    const std::size_t n = nonzero.size();

    std::vector<double> abs_values(n);
    for (std::size_t i = 0; i < n; ++i) abs_values[i] = std::abs(nonzero[i]);
    std::vector<double> ranks = average_ranks(abs_values);

    double w_plus = 0.0;
    double w_minus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nonzero[i] > 0.0) {
            w_plus += ranks[i];
        } else {
            w_minus += ranks[i];
        }
    }

    SignificanceResult result;
    result.test = SignificanceTest::Wilcoxon;
    result.statistic = std::min(w_plus, w_minus);

    if (n <= 12) {
        result.p_value = wilcoxon_exact_p(ranks, w_plus);
        return result;
    }

    // Normal approximation with tie correction.
    double nd = static_cast<double>(n);
    double mean = nd * (nd + 1.0) / 4.0;
    double variance = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
    std::map<double, std::size_t> tie_groups;
    for (double v : abs_values) ++tie_groups[v];
    for (const auto& [value, count] : tie_groups) {
        double t = static_cast<double>(count);
        variance -= (t * t * t - t) / 48.0;
    }
    double z = (w_plus - mean) / std::sqrt(variance);
    result.p_value = 2.0 * normal_cdf(-std::abs(z));
    result.p_value = std::min(result.p_value, 1.0);
    return result;
}

}  // namespace clipper
