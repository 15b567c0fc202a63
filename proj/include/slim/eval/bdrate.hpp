#pragma once

#include <string>
#include <vector>

namespace slim {

struct RatePoint {
    double bpp = 0.0;
    double accuracy = 0.0;
};

struct RateAccuracyCurve {
    std::vector<RatePoint> points;
    std::string label;
};

// Throws unless the curve has >= 4 points, strictly positive bpp, and
// accuracies in [0,1].
void validate_curve(const RateAccuracyCurve& curve);

// Average bitrate difference (percent) of `test` against `reference`:
// log10(bpp) is fitted as a cubic function of accuracy for each curve
// (least-squares polynomial, or a monotone piecewise cubic when
// `monotone_pchip` is set), the difference is averaged over the overlapping
// accuracy interval, and the result is (10^avg - 1) * 100. Negative means the
// test curve spends fewer bits for the same accuracy. Exact accuracy ties
// within a curve are perturbed by 1e-9 with a warning; curves whose accuracy
// ranges do not overlap are rejected.
double bd_rate(const RateAccuracyCurve& reference, const RateAccuracyCurve& test, bool monotone_pchip = false);

struct AblationResult {
    std::string label;
    double bd_rate_vs_ref = 0.0;
};

// BD-rate of every variant against variants[reference]; all curves must have
// the same number of rate points (matched sweeps).
std::vector<AblationResult> compare_ablations(const std::vector<RateAccuracyCurve>& variants, size_t reference,
                                              bool monotone_pchip = false);

}  // namespace slim
