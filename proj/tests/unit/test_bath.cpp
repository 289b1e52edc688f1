#include "ttnheom/bath.hpp"
#include "ttnheom/scenarios.hpp"
#include "ttnheom/units.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace ttnheom;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kT = scenarios::kRoomTemperature;

double coth(double x) { return 1.0 / std::tanh(x); }

double pade_value(const bath::PadeTerms& p, double x) {
  double s = 2.0 / x;
  for (size_t j = 0; j < p.xi.size(); ++j) s += 4.0 * p.eta[j] * x / (x * x + p.xi[j] * p.xi[j]);
  return s;
}

// Error of the decomposition against quadrature on t = 0.5 .. t_max, normalized by max |C|.
double reconstruction_error(const bath::FeatureSet& fs, const std::vector<cplx>& ref, double step) {
  double scale = 0.0, err = 0.0;
  for (const auto& c : ref) scale = std::max(scale, std::abs(c));
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = step * static_cast<double>(i + 1);
    err = std::max(err, std::abs(bath::reconstruct(fs, t) - ref[i]) / scale);
  }
  return err;
}

std::vector<cplx> quadrature_grid(const std::vector<bath::SpectralComponent>& comps, int n, double step) {
  std::vector<cplx> out;
  for (int i = 1; i <= n; ++i) out.push_back(bath::bcf_quadrature(comps, kT, step * i));
  return out;
}

}  // namespace

TEST_CASE("Pade approximant of coth converges", "[bath]") {
  const auto p0 = bath::pade_coth(0);
  CHECK(p0.xi.empty());
  double prev = 1e300;
  for (int n : {1, 2, 3, 5}) {
    const auto p = bath::pade_coth(n);
    REQUIRE(p.xi.size() == static_cast<size_t>(n));
    for (size_t j = 0; j < p.xi.size(); ++j) {
      CHECK(p.xi[j] > 0.0);
      CHECK(p.eta[j] > 0.0);
      if (j > 0) CHECK(p.xi[j] > p.xi[j - 1]);
    }
    double err = 0.0;
    for (double x = 0.1; x <= 10.0; x += 0.1) err = std::max(err, std::abs(pade_value(p, x) - coth(x / 2.0)));
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-6);
  CHECK_THROWS_AS(bath::pade_coth(-1), bath::BathError);
}

TEST_CASE("feature counts follow the component list", "[bath]") {
  CHECK(bath::decompose(scenarios::thymine_bath(), kT, 3).size() == 20);
  CHECK(bath::decompose(scenarios::thymine_reduced(), kT, 1).size() == 4);
  CHECK(bath::decompose(scenarios::thymine_solvent(), kT, 0).size() == 1);
  const auto empty = bath::decompose({}, kT, 3);
  CHECK(empty.size() == 0);
  CHECK(bath::reconstruct(empty, 3.0) == cplx(0.0, 0.0));
}

TEST_CASE("single Drude-Lorentz term has the residue amplitude", "[bath]") {
  const auto fs = bath::decompose(scenarios::thymine_solvent(), kT, 0);
  REQUIRE(fs.size() == 1);
  const auto& f = fs.features[0];
  CHECK_THAT(f.gamma_exp.real(), WithinAbs(-54.45, 1e-12));
  CHECK(f.gamma_exp.imag() == 0.0);
  const double beta = 1.0 / (kBoltzmannInvCm * kT);
  const double lambda = 715.73, gamma = 54.45;
  CHECK_THAT(f.c.real(), WithinRel(lambda * gamma / std::tan(beta * gamma / 2.0), 1e-12));
  CHECK_THAT(f.c.imag(), WithinRel(-lambda * gamma, 1e-12));
  // Once the Matsubara tail has died out the single pole is the whole function.
  for (double t : {60.0, 80.0, 120.0}) {
    const cplx want = bath::bcf_quadrature(scenarios::thymine_solvent(), kT, t);
    CHECK(std::abs(bath::reconstruct(fs, t) - want) <= 1e-5 * std::abs(want));
  }
}

TEST_CASE("feature ordering and Brownian pairs", "[bath]") {
  const auto fs = bath::decompose(scenarios::thymine_bath(), kT, 3);
  CHECK(fs.features[0].gamma_exp.imag() == 0.0);
  double last_freq = 1e300;
  for (int b = 0; b < 8; ++b) {
    const auto& x = fs.features[static_cast<size_t>(1 + 2 * b)];
    const auto& y = fs.features[static_cast<size_t>(2 + 2 * b)];
    CHECK_THAT(x.gamma_exp.real(), WithinAbs(-50.0, 1e-12));
    CHECK_THAT(y.gamma_exp.real(), WithinAbs(-50.0, 1e-12));
    CHECK_THAT(x.gamma_exp.imag(), WithinAbs(-y.gamma_exp.imag(), 1e-12));
    const double w = std::abs(x.gamma_exp.imag());
    CHECK(w < last_freq);
    last_freq = w;
  }
  for (int j = 17; j < 20; ++j) CHECK(fs.features[static_cast<size_t>(j)].gamma_exp.imag() == 0.0);
  for (const auto& f : fs.features) CHECK(f.gamma_exp.real() < 0.0);

  const auto again = bath::decompose(scenarios::thymine_bath(), kT, 3);
  for (size_t k = 0; k < fs.features.size(); ++k) {
    CHECK(fs.features[k].c == again.features[k].c);
    CHECK(fs.features[k].gamma_exp == again.features[k].gamma_exp);
  }
}

TEST_CASE("conjugate amplitudes reproduce the conjugate correlation function", "[bath]") {
  const auto fs = bath::decompose(scenarios::thymine_bath(), kT, 3);
  for (double t : {0.0, 0.7, 5.0, 33.3, 250.0}) {
    const cplx a = bath::reconstruct(fs, t), b = bath::reconstruct_conj(fs, t);
    CHECK(std::abs(b - std::conj(a)) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("quadrature oracle edge cases", "[bath]") {
  const std::vector<bath::SpectralComponent> bo = {bath::SpectralComponent::brownian(1663.0, 330.0, 50.0)};
  const cplx c0 = bath::bcf_quadrature(bo, kT, 0.0);
  CHECK(std::abs(c0.imag()) <= 1e-8 * std::abs(c0));
  CHECK(c0.real() > 0.0);

  const std::vector<bath::SpectralComponent> weak = {bath::SpectralComponent::drude_lorentz(1e-12, 54.45)};
  CHECK(std::abs(bath::bcf_quadrature(weak, kT, 10.0)) < 1e-6);

  CHECK_THROWS_AS(bath::bcf_quadrature(bo, 0.0, 1.0), bath::BathError);
  CHECK_THROWS_AS(bath::bcf_quadrature(bo, kT, -1.0), bath::BathError);
}

TEST_CASE("invalid components and temperatures are rejected", "[bath]") {
  CHECK_THROWS_AS(bath::decompose(scenarios::thymine_bath(), 0.0, 3), bath::BathError);
  CHECK_THROWS_AS(bath::decompose(scenarios::thymine_bath(), kT, -1), bath::BathError);
  CHECK_THROWS_AS(bath::decompose({bath::SpectralComponent::drude_lorentz(-1.0, 50.0)}, kT, 0), bath::BathError);
  CHECK_THROWS_AS(bath::decompose({bath::SpectralComponent::drude_lorentz(1.0, 0.0)}, kT, 0), bath::BathError);
  CHECK_THROWS_AS(bath::decompose({bath::SpectralComponent::brownian(0.0, 10.0, 50.0)}, kT, 0), bath::BathError);
}

TEST_CASE("full bath decomposition against quadrature", "[bath][slow]") {
  const auto comps = scenarios::thymine_bath();
  // Coarse 5 fs grid to 500 fs for the monotonicity sweep; 0.5 fs grid to 200 fs for the bound.
  const auto coarse = quadrature_grid(comps, 100, 5.0);
  double prev = 1e300;
  for (int n = 0; n <= 5; ++n) {
    const double err = reconstruction_error(bath::decompose(comps, kT, n), coarse, 5.0);
    INFO("n_pade " << n << " error " << err);
    CHECK(err <= prev * (1.0 + 1e-9));
    prev = err;
  }
  const auto fine = quadrature_grid(comps, 400, 0.5);
  CHECK(reconstruction_error(bath::decompose(comps, kT, 3), fine, 0.5) <= 2e-2);
  CHECK(reconstruction_error(bath::decompose(comps, kT, 3), coarse, 5.0) <= 2e-2);
}

TEST_CASE("feature table JSON round trip", "[bath]") {
  const auto fs = bath::decompose(scenarios::thymine_reduced(), kT, 1, "q2");
  const auto j = bath::to_json(fs);
  const auto back = bath::feature_set_from_json(j);
  REQUIRE(back.size() == fs.size());
  for (size_t k = 0; k < fs.features.size(); ++k) {
    CHECK(back.features[k].c == fs.features[k].c);
    CHECK(back.features[k].c_bar == fs.features[k].c_bar);
    CHECK(back.features[k].gamma_exp == fs.features[k].gamma_exp);
    CHECK(back.features[k].coupling_id == "q2");
  }
  auto bad = j;
  bad["features"][0]["re_gamma"] = 1.0;
  CHECK_THROWS_AS(bath::feature_set_from_json(bad), bath::BathError);
}
