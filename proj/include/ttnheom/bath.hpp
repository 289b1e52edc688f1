#pragma once

#include "ttnheom/linalg.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom::bath {

class BathError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate)
      : std::runtime_error(what), error_estimate(estimate) {}
  double error_estimate;
};

enum class Kind { DrudeLorentz, BrownianOscillator };

// Energies in cm^-1. For a Brownian oscillator omega_eff is the damped frequency
// sqrt(omega_b^2 - gamma^2).
struct SpectralComponent {
  Kind kind = Kind::DrudeLorentz;
  double lambda = 0.0;
  double gamma = 0.0;
  double omega_eff = 0.0;

  static SpectralComponent drude_lorentz(double lambda, double gamma);
  static SpectralComponent brownian(double omega_eff, double lambda, double gamma);
};

// One term c exp(gamma_exp t) of C(t) and its partner c_bar exp(gamma_exp t) of C*(t).
// Amplitudes in cm^-2, exponent in cm^-1.
struct Feature {
  cplx c;
  cplx c_bar;
  cplx gamma_exp;
  std::string coupling_id;
};

struct FeatureSet {
  std::vector<Feature> features;
  double temperature = 0.0;
  int n_pade = 0;

  int size() const { return static_cast<int>(features.size()); }
};

inline const std::string kDefaultCoupling = "q";

// Padé poles xi_j and residues eta_j of the [N-1/N] approximant
// coth(x/2) ~ 2/x + sum_j 4 eta_j x / (x^2 + xi_j^2).
struct PadeTerms {
  std::vector<double> xi;
  std::vector<double> eta;
};
PadeTerms pade_coth(int n);

// Spectral density J(omega) in cm^-1 for real or complex omega.
cplx spectral_density(const std::vector<SpectralComponent>& components, cplx omega);

FeatureSet decompose(const std::vector<SpectralComponent>& components, double temperature, int n_pade,
                     const std::string& coupling_id = kDefaultCoupling);

// C(t) by adaptive quadrature over omega, t in fs. Throws QuadratureError when the
// requested relative accuracy cannot be reached (e.g. t = 0 with a Drude-Lorentz tail).
cplx bcf_quadrature(const std::vector<SpectralComponent>& components, double temperature, double t_fs);

// sum_k c_k exp(gamma_k t), t in fs.
cplx reconstruct(const FeatureSet& fs, double t_fs);
// sum_k c_bar_k exp(gamma_k t), t in fs.
cplx reconstruct_conj(const FeatureSet& fs, double t_fs);

nlohmann::json to_json(const FeatureSet& fs);
FeatureSet feature_set_from_json(const nlohmann::json& j);

}  // namespace ttnheom::bath
