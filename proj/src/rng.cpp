#include "jccmdp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace jccmdp {

std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream_id) {
    // splitmix64 finalizer over the combined word.
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform(Rng& rng, double lo, double hi) {
    // Explicit construction instead of std::uniform_real_distribution: the
    // distribution objects are not guaranteed to produce identical streams
    // across standard library implementations.
    const double u = (rng() >> 11) * 0x1.0p-53; // [0,1)
    return lo + (hi - lo) * u;
}

double standard_normal(Rng& rng) {
    // Inverse-CDF sampling keeps the draw count per variate fixed at one,
    // which the deterministic seed-split accounting relies on.
    double u = uniform(rng, 0.0, 1.0);
    if (u <= 0.0) u = 0x1.0p-53;
    return normal_quantile(u);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw std::domain_error("normal_quantile: p outside [0,1]");
    }
    // Acklam's rational approximation followed by one Halley step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

double truncated_normal_quantile(double u, double mean, double sd, double lo, double hi) {
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("truncated_normal_quantile: u");
    if (sd == 0.0) return mean;
    if (!(lo <= hi)) throw std::domain_error("truncated_normal_quantile: lo > hi");
    const double fa = normal_cdf((lo - mean) / sd);
    const double fb = normal_cdf((hi - mean) / sd);
    const double f = fa + u * (fb - fa);
    double x;
    if (f <= 0.0) {
        x = lo;
    } else if (f >= 1.0) {
        x = hi;
    } else {
        x = mean + sd * normal_quantile(f);
    }
    return std::min(hi, std::max(lo, x));
}

double positive_stable(Rng& rng, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("positive_stable: alpha must be in (0,1)");
    // Kanter/Zolotarev: S = (B(U)/E)^{(1-alpha)/alpha}, U ~ U(0,pi),
    // E ~ Exp(1), with
    //   B(u) = sin(alpha u)^{alpha/(1-alpha)} sin((1-alpha) u)
    //          / sin(u)^{1/(1-alpha)}.
    const double u = uniform(rng, 1e-12, M_PI - 1e-12);
    double e = -std::log(uniform(rng, 0.0, 1.0));
    if (e <= 0.0) e = 1e-300;
    const double ratio = (1.0 - alpha) / alpha;
    const double log_b = (alpha / (1.0 - alpha)) * std::log(std::sin(alpha * u)) +
                         std::log(std::sin((1.0 - alpha) * u)) -
                         std::log(std::sin(u)) / (1.0 - alpha);
    return std::exp(ratio * (log_b - std::log(e)));
}

} // namespace jccmdp
