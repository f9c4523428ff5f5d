#pragma once

#include "updraft/rng.hpp"

namespace updraft {

/// Parameters of the sinh-arcsinh-normal distribution.
/// With z = (y-mu)/sigma and t = tau*asinh(z) - gamma, the density is
///   pdf(y) = tau/(sigma*sqrt(2*pi)) * cosh(t)/sqrt(1+z^2) * exp(-sinh(t)^2/2).
/// gamma=0, tau=1 reduces to Normal(mu, sigma). Quantiles increase with
/// gamma, so positive gamma skews right.
struct ShashParams {
    double mu = 0.0;    // location, m/s
    double sigma = 1.0; // scale, m/s, > 0
    double gamma = 0.0; // skewness
    double tau = 1.0;   // tailweight, > 0
};

/// Throws DomainError unless sigma>0, tau>0 and all fields are finite.
void validate_params(const ShashParams& p);

double shash_pdf(const ShashParams& p, double y);

/// log(pdf) in expanded form; finite wherever pdf underflows to 0 but the
/// exponent is still representable.
double shash_log_pdf(const ShashParams& p, double y);

double shash_cdf(const ShashParams& p, double y);

/// Inverse CDF. p must lie in (0,1).
double shash_quantile(const ShashParams& p, double prob);

double shash_median(const ShashParams& p);

/// One draw: Z ~ N(0,1), then mu + sigma*sinh((asinh(Z)+gamma)/tau).
double shash_sample(const ShashParams& p, Rng& rng);

/// Standard normal CDF via erfc.
double norm_cdf(double x);

/// Standard normal inverse CDF; rational approximation refined with one
/// Halley step against erfc (abs error well below 1e-9).
double norm_quantile(double prob);

} // namespace updraft
