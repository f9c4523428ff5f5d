#include "updraft/shash.hpp"

#include <cmath>

#include "updraft/errors.hpp"

namespace updraft {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562; // ln(sqrt(2*pi))
constexpr double kSqrt2 = 1.41421356237309504880168872420970;

/// log(cosh(t)) without overflow for large |t|.
double log_cosh(double t) {
    const double a = std::fabs(t);
    return a + std::log1p(std::exp(-2.0 * a)) - 0.69314718055994530941723212145818;
}

} // namespace

void validate_params(const ShashParams& p) {
    if (!std::isfinite(p.mu) || !std::isfinite(p.sigma) || !std::isfinite(p.gamma) ||
        !std::isfinite(p.tau))
        throw DomainError("SHASH parameters must be finite");
    if (!(p.sigma > 0.0))
        throw DomainError("SHASH sigma must be > 0");
    if (!(p.tau > 0.0))
        throw DomainError("SHASH tau must be > 0");
}

double shash_log_pdf(const ShashParams& p, double y) {
    validate_params(p);
    if (!std::isfinite(y))
        throw DomainError("SHASH evaluation point must be finite");
    const double z = (y - p.mu) / p.sigma;
    const double t = p.tau * std::asinh(z) - p.gamma;
    const double s = std::sinh(t);
    return std::log(p.tau) - std::log(p.sigma) - kLogSqrt2Pi + log_cosh(t) -
           0.5 * std::log1p(z * z) - 0.5 * s * s;
}

double shash_pdf(const ShashParams& p, double y) {
    return std::exp(shash_log_pdf(p, y));
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

namespace {

double norm_quantile_lower(double prob);

} // namespace

double norm_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw DomainError("quantile probability must lie in (0,1)");
    // Reflect the upper half onto the lower: 1-p is exact for p >= 0.5 and
    // the refinement below is only well-conditioned against small tail mass.
    if (prob > 0.5)
        return -norm_quantile_lower(1.0 - prob);
    return norm_quantile_lower(prob);
}

namespace {

double norm_quantile_lower(double prob) {
    // Acklam's rational approximation, then one Halley refinement.
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
    if (prob < plow) {
        const double q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = prob - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }

    // Halley step on f(x) = norm_cdf(x) - prob; x <= ~0.7 here so the CDF
    // difference carries full precision.
    const double e = norm_cdf(x) - prob;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846264338327950) *
                     std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

} // namespace

double shash_cdf(const ShashParams& p, double y) {
    validate_params(p);
    if (!std::isfinite(y))
        throw DomainError("SHASH evaluation point must be finite");
    const double z = (y - p.mu) / p.sigma;
    const double s = std::sinh(p.tau * std::asinh(z) - p.gamma);
    return norm_cdf(s);
}

double shash_quantile(const ShashParams& p, double prob) {
    validate_params(p);
    const double zq = norm_quantile(prob);
    return p.mu + p.sigma * std::sinh((std::asinh(zq) + p.gamma) / p.tau);
}

double shash_median(const ShashParams& p) {
    validate_params(p);
    return p.mu + p.sigma * std::sinh(p.gamma / p.tau);
}

double shash_sample(const ShashParams& p, Rng& rng) {
    validate_params(p);
    const double z = normal01(rng);
    return p.mu + p.sigma * std::sinh((std::asinh(z) + p.gamma) / p.tau);
}

} // namespace updraft
