#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "gcr/error.hpp"

namespace gcr {

enum class Family { Gaussian, Poisson, Bernoulli, Gamma };

struct FamilySpec {
  Family family = Family::Gaussian;
  bool dispersion_known = false;  // true with phi = 1 for Poisson/Bernoulli

  static FamilySpec from_name(const std::string& name) {
    if (name == "gaussian") return {Family::Gaussian, false};
    if (name == "poisson") return {Family::Poisson, true};
    if (name == "bernoulli") return {Family::Bernoulli, true};
    if (name == "gamma") return {Family::Gamma, false};
    fail_data("unknown family '" + name +
              "' (expected gaussian|poisson|bernoulli|gamma)");
  }

  const char* name() const {
    switch (family) {
      case Family::Gaussian: return "gaussian";
      case Family::Poisson: return "poisson";
      case Family::Bernoulli: return "bernoulli";
      case Family::Gamma: return "gamma";
    }
    return "?";
  }
};

// theta = h(eta), mu = a'(theta), var_unit = a''(theta),
// kurt_ratio = a''''(theta) / a''(theta)^2.
struct MomentBundle {
  double theta;
  double mu;
  double var_unit;
  double kurt_ratio;
};

namespace detail {
// The logistic saturates well before +-30; clamping avoids overflow without
// moving any estimate at double precision.
inline double clamp_logit_eta(double eta) { return std::clamp(eta, -30.0, 30.0); }
}  // namespace detail

inline MomentBundle family_moments(const FamilySpec& f, double eta, double phi) {
  if (!std::isfinite(eta)) fail_data("linear predictor must be finite");
  if (!(phi > 0.0)) fail_data("dispersion phi must be positive");
  switch (f.family) {
    case Family::Gaussian:
      return {eta, eta, 1.0, 0.0};
    case Family::Poisson: {
      const double mu = std::exp(eta);
      return {eta, mu, mu, std::exp(-eta)};
    }
    case Family::Bernoulli: {
      const double theta = detail::clamp_logit_eta(eta);
      const double p = 1.0 / (1.0 + std::exp(-theta));
      const double v = p * (1.0 - p);
      return {theta, p, v, (1.0 - 6.0 * p + 6.0 * p * p) / v};
    }
    case Family::Gamma: {
      // h(x) = -e^{-x}, a'(theta) = -1/theta, a''(theta) = 1/theta^2,
      // a''''(theta) = 6/theta^4, so mu = e^eta and kurt_ratio = 6.
      const double theta = -std::exp(-eta);
      const double mu = std::exp(eta);
      return {theta, mu, mu * mu, 6.0};
    }
  }
  fail_numerical("unreachable family branch");
}

// d mu / d eta through the canonical machinery of each family.
inline double mean_derivative(const FamilySpec& f, double eta) {
  switch (f.family) {
    case Family::Gaussian: return 1.0;
    case Family::Poisson: return std::exp(eta);
    case Family::Bernoulli: {
      const double p = 1.0 / (1.0 + std::exp(-detail::clamp_logit_eta(eta)));
      return p * (1.0 - p);
    }
    case Family::Gamma: return std::exp(eta);
  }
  fail_numerical("unreachable family branch");
}

// Pearson residual (y - a'(theta)) / sqrt(a''(theta)); phi deliberately
// excluded.
inline double pearson_residual(const FamilySpec& f, double y, double eta,
                               double phi) {
  const MomentBundle mb = family_moments(f, eta, phi);
  if (mb.var_unit < 1e-300)
    fail_numerical("unit variance underflow in Pearson residual");
  return (y - mb.mu) / std::sqrt(mb.var_unit);
}

}  // namespace gcr
