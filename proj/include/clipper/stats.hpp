#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace clipper {

enum class SignificanceTest { McNemar, Wilcoxon };

std::string to_string(SignificanceTest test);

struct SignificanceResult {
    SignificanceTest test = SignificanceTest::McNemar;
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Continuity-corrected McNemar over discordant pair counts:
/// chi2 = (max(|b-c|-1, 0))^2 / (b+c), p from chi-square with 1 df.
/// Throws NoDiscordantPairsError when b + c == 0.
SignificanceResult mcnemar(std::size_t b_discordant, std::size_t c_discordant);

/// Wilcoxon signed-rank test over paired score differences. Zeros are
/// dropped; |d| ranks use average ranks for ties; the statistic is
/// W = min(W+, W-). Exact two-sided p by sign enumeration when n <= 12,
/// otherwise a normal approximation with tie correction.
/// Throws AllZeroDifferencesError when every difference is zero.
SignificanceResult wilcoxon(const std::vector<double>& differences);

/// Survival function of the chi-square distribution with one degree of
/// freedom: P(X >= x).
double chi_square_survival_1df(double x);

/// Standard normal CDF.
double normal_cdf(double z);

/// Average ranks of |values|, ties averaged; exposed for the test oracle.
std::vector<double> average_ranks(const std::vector<double>& abs_values);

}  // namespace clipper
