#include "slim/eval/bdrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/Dense>

namespace slim {

namespace {

struct CurveXY {
    std::vector<double> acc;     // sorted ascending, ties perturbed
    std::vector<double> logbpp;  // log10(bpp)
};

CurveXY to_xy(const RateAccuracyCurve& curve) {
    std::vector<RatePoint> pts = curve.points;
    std::sort(pts.begin(), pts.end(), [](const RatePoint& a, const RatePoint& b) { return a.accuracy < b.accuracy; });
    CurveXY xy;
    xy.acc.reserve(pts.size());
    xy.logbpp.reserve(pts.size());
    for (const auto& p : pts) {
        double a = p.accuracy;
        if (!xy.acc.empty() && a <= xy.acc.back()) {
            std::fprintf(stderr, "bd_rate: curve '%s' has tied accuracy %.12g; perturbing by 1e-9\n",
                         curve.label.c_str(), a);
            a = xy.acc.back() + 1e-9;
        }
        xy.acc.push_back(a);
        xy.logbpp.push_back(std::log10(p.bpp));
    }
    return xy;
}

// Definite integral of the least-squares cubic through (acc, logbpp).
double integrate_poly(const CurveXY& c, double lo, double hi) {
    const int n = static_cast<int>(c.acc.size());
    Eigen::MatrixXd v(n, 4);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        double p = 1.0;
        for (int k = 0; k < 4; ++k) {
            v(i, k) = p;
            p *= c.acc[static_cast<size_t>(i)];
        }
        y(i) = c.logbpp[static_cast<size_t>(i)];
    }
    Eigen::Vector4d coef = v.colPivHouseholderQr().solve(y);
    double integral = 0.0;
    for (int k = 0; k < 4; ++k)
        integral += coef(k) * (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / static_cast<double>(k + 1);
    return integral;
}

// Monotone piecewise-cubic (Fritsch-Carlson) integral over [lo, hi].
double integrate_pchip(const CurveXY& c, double lo, double hi) {
    const size_t n = c.acc.size();
    std::vector<double> h(n - 1), delta(n - 1), m(n);
    for (size_t i = 0; i + 1 < n; ++i) {
        h[i] = c.acc[i + 1] - c.acc[i];
        delta[i] = (c.logbpp[i + 1] - c.logbpp[i]) / h[i];
    }
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            m[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    for (size_t i = 0; i + 1 < n; ++i) {
        if (delta[i] == 0.0) {
            m[i] = m[i + 1] = 0.0;
        } else {
            const double a = m[i] / delta[i], b = m[i + 1] / delta[i];
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double t = 3.0 / std::sqrt(s);
                m[i] = t * a * delta[i];
                m[i + 1] = t * b * delta[i];
            }
        }
    }
    double integral = 0.0;
    for (size_t i = 0; i + 1 < n; ++i) {
        const double a = std::max(lo, c.acc[i]), b = std::min(hi, c.acc[i + 1]);
        if (b <= a) continue;
        // Hermite segment as a cubic in t = (x - x_i)/h
        const double y0 = c.logbpp[i], y1 = c.logbpp[i + 1];
        const double d0 = m[i] * h[i], d1 = m[i + 1] * h[i];
        const std::array<double, 4> p = {y0, d0, -3.0 * y0 + 3.0 * y1 - 2.0 * d0 - d1,
                                         2.0 * y0 - 2.0 * y1 + d0 + d1};
        const double ta = (a - c.acc[i]) / h[i], tb = (b - c.acc[i]) / h[i];
        double seg = 0.0;
        for (int k = 0; k < 4; ++k)
            seg += p[static_cast<size_t>(k)] * (std::pow(tb, k + 1) - std::pow(ta, k + 1)) / static_cast<double>(k + 1);
        integral += seg * h[i];
    }
    return integral;
}

}  // namespace

void validate_curve(const RateAccuracyCurve& curve) {
    if (curve.points.size() < 4)
        throw std::invalid_argument("bd_rate: curve '" + curve.label + "' has " + std::to_string(curve.points.size()) +
                                    " points; need at least 4 for a cubic fit");
    for (const auto& p : curve.points) {
        if (!(p.bpp > 0.0))
            throw std::invalid_argument("bd_rate: curve '" + curve.label + "' has non-positive bpp " +
                                        std::to_string(p.bpp));
        if (p.accuracy < 0.0 || p.accuracy > 1.0)
            throw std::invalid_argument("bd_rate: curve '" + curve.label + "' has accuracy " +
                                        std::to_string(p.accuracy) + " outside [0,1]");
    }
}

double bd_rate(const RateAccuracyCurve& reference, const RateAccuracyCurve& test, bool monotone_pchip) {
    validate_curve(reference);
    validate_curve(test);
    CurveXY r = to_xy(reference), t = to_xy(test);
    const double lo = std::max(r.acc.front(), t.acc.front());
    const double hi = std::min(r.acc.back(), t.acc.back());
    if (!(hi > lo))
        throw std::invalid_argument("bd_rate: accuracy ranges of '" + reference.label + "' and '" + test.label +
                                    "' do not overlap");
    const double ir = monotone_pchip ? integrate_pchip(r, lo, hi) : integrate_poly(r, lo, hi);
    const double it = monotone_pchip ? integrate_pchip(t, lo, hi) : integrate_poly(t, lo, hi);
    const double avg = (it - ir) / (hi - lo);
    return (std::pow(10.0, avg) - 1.0) * 100.0;
}

std::vector<AblationResult> compare_ablations(const std::vector<RateAccuracyCurve>& variants, size_t reference,
                                              bool monotone_pchip) {
    if (reference >= variants.size()) throw std::out_of_range("compare_ablations: reference index out of range");
    const size_t grid = variants[reference].points.size();
    for (const auto& v : variants)
        if (v.points.size() != grid)
            throw std::invalid_argument("compare_ablations: variant '" + v.label + "' has " +
                                        std::to_string(v.points.size()) + " rate points, reference has " +
                                        std::to_string(grid));
    std::vector<AblationResult> out;
    out.reserve(variants.size());
    for (const auto& v : variants)
        out.push_back({v.label, bd_rate(variants[reference], v, monotone_pchip)});
    return out;
}

}  // namespace slim
