#include "ttnheom/bath.hpp"

#include "ttnheom/units.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace ttnheom::bath {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

void validate(const SpectralComponent& c) {
  if (!(c.lambda > 0.0)) throw BathError("spectral component: lambda must be positive");
  if (!(c.gamma > 0.0)) throw BathError("spectral component: gamma must be positive");
  if (c.kind == Kind::BrownianOscillator && !(c.omega_eff > 0.0))
    throw BathError("Brownian oscillator: omega_b^2 <= gamma^2 (no real damped frequency)");
}

// J(omega)/omega, finite at omega = 0.
cplx density_over_omega(const SpectralComponent& c, cplx w) {
  if (c.kind == Kind::DrudeLorentz) return 2.0 * c.lambda / kPi * c.gamma / (w * w + c.gamma * c.gamma);
  const double wb2 = c.omega_eff * c.omega_eff + c.gamma * c.gamma;
  const cplx d = w * w - wb2;
  return 4.0 * c.lambda / kPi * c.gamma * wb2 / (d * d + 4.0 * c.gamma * c.gamma * w * w);
}

double density_over_omega(const std::vector<SpectralComponent>& cs, double w) {
  double s = 0.0;
  for (const auto& c : cs) s += density_over_omega(c, cplx(w)).real();
  return s;
}

// Brownian-oscillator features from the two lower-half-plane poles of J.
void brownian_features(const SpectralComponent& c, double beta, std::vector<Feature>& out, const std::string& id) {
  const double wp = c.omega_eff;
  const double g = c.gamma;
  const double wb2 = wp * wp + g * g;
  const cplx poles[4] = {cplx(-wp, -g), cplx(wp, -g), cplx(wp, g), cplx(-wp, g)};
  cplx amp[2];
  for (int a = 0; a < 2; ++a) {
    const cplx p = poles[a];
    cplx den(1.0);
    for (int b = 0; b < 4; ++b)
      if (b != a) den *= p - poles[b];
    const cplx residue = 4.0 * c.lambda * g * wb2 / kPi * p / den;
    const cplx thermal = 1.0 / std::tanh(beta * p / 2.0) + 1.0;
    amp[a] = -kPi * kI * residue * thermal;
  }
  // exponent -i p: first pole gives -g + i wp, second -g - i wp.
  out.push_back({amp[0], std::conj(amp[1]), -kI * poles[0], id});
  out.push_back({amp[1], std::conj(amp[0]), -kI * poles[1], id});
}

struct IntegrandData {
  const std::vector<SpectralComponent>* cs;
  double beta;
};

double thermal_part(double w, void* p) {
  const auto* d = static_cast<const IntegrandData*>(p);
  const double x = d->beta * w;
  const double w_coth = x < 1e-6 ? 2.0 / d->beta * (1.0 + x * x / 12.0) : w / std::tanh(x / 2.0);
  return density_over_omega(*d->cs, w) * w_coth;
}

double plain_part(double w, void* p) {
  const auto* d = static_cast<const IntegrandData*>(p);
  return density_over_omega(*d->cs, w) * w;
}

void quiet_gsl() {
  static const bool done = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)done;
}

struct Workspaces {
  static constexpr size_t kLimit = 2000;
  gsl_integration_workspace* w = gsl_integration_workspace_alloc(kLimit);
  gsl_integration_workspace* cyc = gsl_integration_workspace_alloc(kLimit);
  ~Workspaces() {
    gsl_integration_workspace_free(w);
    gsl_integration_workspace_free(cyc);
  }
};

struct Piece {
  double value = 0.0;
  double error = 0.0;
  int status = GSL_SUCCESS;
};

// Integral of f(w) * trig(tau w) over [0, inf), split at the breakpoints; tau in cm.
Piece oscillatory_integral(gsl_function* f, double tau, bool cosine, const std::vector<double>& breaks,
                           double cutoff, double epsabs, bool tail_converges) {
  quiet_gsl();
  Workspaces ws;
  Piece r;
  const auto kind = cosine ? GSL_INTEG_COSINE : GSL_INTEG_SINE;
  std::unique_ptr<gsl_integration_qawo_table, decltype(&gsl_integration_qawo_table_free)> table(
      gsl_integration_qawo_table_alloc(tau, 1.0, kind, 50), &gsl_integration_qawo_table_free);
  for (size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k];
    const double b = breaks[k + 1];
    double v = 0.0;
    double e = 0.0;
    int st;
    if (tau == 0.0) {
      if (!cosine) continue;
      st = gsl_integration_qag(f, a, b, epsabs, 1e-11, Workspaces::kLimit, GSL_INTEG_GAUSS31, ws.w, &v, &e);
    } else {
      gsl_integration_qawo_table_set_length(table.get(), b - a);
      st = gsl_integration_qawo(f, a, epsabs, 1e-11, Workspaces::kLimit, ws.w, table.get(), &v, &e);
    }
    r.value += v;
    r.error += e;
    if (st != GSL_SUCCESS && r.status == GSL_SUCCESS) r.status = st;
  }
  double v = 0.0;
  double e = 0.0;
  int st = GSL_SUCCESS;
  if (tau == 0.0) {
    if (cosine) {
      if (!tail_converges) {
        r.status = GSL_EDIVERGE;
        r.error = std::numeric_limits<double>::infinity();
        return r;
      }
      st = gsl_integration_qagiu(f, cutoff, epsabs, 1e-11, Workspaces::kLimit, ws.w, &v, &e);
    }
  } else {
    std::unique_ptr<gsl_integration_qawo_table, decltype(&gsl_integration_qawo_table_free)> tail(
        gsl_integration_qawo_table_alloc(tau, 1.0, kind, 50), &gsl_integration_qawo_table_free);
    std::unique_ptr<gsl_integration_workspace, decltype(&gsl_integration_workspace_free)> inner(
        gsl_integration_workspace_alloc(Workspaces::kLimit), &gsl_integration_workspace_free);
    st = gsl_integration_qawf(f, cutoff, epsabs, Workspaces::kLimit, inner.get(), ws.cyc, tail.get(), &v, &e);
  }
  r.value += v;
  r.error += e;
  if (st != GSL_SUCCESS && r.status == GSL_SUCCESS) r.status = st;
  return r;
}

}  // namespace

SpectralComponent SpectralComponent::drude_lorentz(double lambda, double gamma) {
  return {Kind::DrudeLorentz, lambda, gamma, 0.0};
}

SpectralComponent SpectralComponent::brownian(double omega_eff, double lambda, double gamma) {
  return {Kind::BrownianOscillator, lambda, gamma, omega_eff};
}

PadeTerms pade_coth(int n) {
  if (n < 0) throw BathError("pade_coth: negative order");
  PadeTerms r;
  if (n == 0) return r;
  auto b = [](int m) { return 2.0 * m + 1.0; };
  Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int m = 1; m < 2 * n; ++m) lam(m - 1, m) = lam(m, m - 1) = 1.0 / std::sqrt(b(m) * b(m + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lam, Eigen::EigenvaluesOnly);
  std::vector<double> xi;
  for (Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()[k] > 0.0) xi.push_back(2.0 / es.eigenvalues()[k]);
  std::sort(xi.begin(), xi.end());
  std::vector<double> zeta;
  if (n > 1) {
    Eigen::MatrixXd lt = Eigen::MatrixXd::Zero(2 * n - 1, 2 * n - 1);
    for (int m = 1; m < 2 * n - 1; ++m) lt(m - 1, m) = lt(m, m - 1) = 1.0 / std::sqrt(b(m + 1) * b(m + 2));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> et(lt, Eigen::EigenvaluesOnly);
    for (Index k = 0; k < et.eigenvalues().size(); ++k)
      if (et.eigenvalues()[k] > 1e-12) zeta.push_back(2.0 / et.eigenvalues()[k]);
    std::sort(zeta.begin(), zeta.end());
  }
  for (int j = 0; j < n; ++j) {
    double num = 1.0;
    for (int k = 0; k < n - 1; ++k) num *= zeta[k] * zeta[k] - xi[j] * xi[j];
    double den = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != j) den *= xi[k] * xi[k] - xi[j] * xi[j];
    r.eta.push_back(0.5 * n * b(n + 1) * num / den);
  }
  r.xi = std::move(xi);
  return r;
}

cplx spectral_density(const std::vector<SpectralComponent>& components, cplx omega) {
  cplx s(0.0);
  for (const auto& c : components) s += density_over_omega(c, omega) * omega;
  return s;
}

FeatureSet decompose(const std::vector<SpectralComponent>& components, double temperature, int n_pade,
                     const std::string& coupling_id) {
  if (!(temperature > 0.0)) throw BathError("decompose: temperature must be positive");
  if (n_pade < 0) throw BathError("decompose: n_pade must be non-negative");
  for (const auto& c : components) validate(c);

  FeatureSet fs;
  fs.temperature = temperature;
  fs.n_pade = n_pade;
  const double beta = 1.0 / (kBoltzmannInvCm * temperature);

  for (const auto& c : components) {
    if (c.kind != Kind::DrudeLorentz) continue;
    const cplx amp = c.lambda * c.gamma * (1.0 / std::tan(beta * c.gamma / 2.0) - kI);
    fs.features.push_back({amp, std::conj(amp), cplx(-c.gamma, 0.0), coupling_id});
  }

  std::vector<const SpectralComponent*> bo;
  for (const auto& c : components)
    if (c.kind == Kind::BrownianOscillator) bo.push_back(&c);
  std::stable_sort(bo.begin(), bo.end(),
                   [](const SpectralComponent* a, const SpectralComponent* b) { return a->omega_eff > b->omega_eff; });
  for (const auto* c : bo) brownian_features(*c, beta, fs.features, coupling_id);

  if (!components.empty()) {
    const PadeTerms pade = pade_coth(n_pade);
    for (int j = 0; j < n_pade; ++j) {
      const double nu = pade.xi[j] / beta;
      const cplx amp = -(2.0 * kPi * kI * pade.eta[j] / beta) * spectral_density(components, cplx(0.0, -nu));
      const cplx real_amp(amp.real(), 0.0);
      fs.features.push_back({real_amp, real_amp, cplx(-nu, 0.0), coupling_id});
    }
  }
  return fs;
}

cplx bcf_quadrature(const std::vector<SpectralComponent>& components, double temperature, double t_fs) {
  if (!(temperature > 0.0)) throw BathError("bcf_quadrature: temperature must be positive");
  if (t_fs < 0.0) throw BathError("bcf_quadrature: negative time");
  if (components.empty()) return cplx(0.0);
  for (const auto& c : components) validate(c);

  IntegrandData data{&components, 1.0 / (kBoltzmannInvCm * temperature)};
  const double tau = t_fs / kInvCmPerInvFs;

  double top = 0.0;
  bool has_dl = false;
  std::vector<double> breaks{0.0};
  for (const auto& c : components) {
    if (c.kind == Kind::DrudeLorentz) {
      has_dl = true;
      for (double f : {1.0, 10.0, 100.0}) breaks.push_back(f * c.gamma);
      top = std::max(top, 100.0 * c.gamma);
    } else {
      for (double f : {-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0}) breaks.push_back(c.omega_eff + f * c.gamma);
      top = std::max(top, c.omega_eff + 100.0 * c.gamma);
    }
  }
  const double cutoff = std::max(2.0e4, 4.0 * top);
  breaks.push_back(cutoff);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::remove_if(breaks.begin(), breaks.end(), [&](double x) { return x < 0.0 || x > cutoff; }),
               breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               breaks.end());

  // Natural scale of the integrals: integral of |J coth| over the finite window.
  gsl_function ft{&thermal_part, &data};
  gsl_function fp{&plain_part, &data};
  double scale = 0.0;
  {
    quiet_gsl();
    Workspaces ws;
    for (size_t k = 0; k + 1 < breaks.size(); ++k) {
      double v = 0.0;
      double e = 0.0;
      gsl_integration_qag(&ft, breaks[k], breaks[k + 1], 0.0, 1e-6, Workspaces::kLimit, GSL_INTEG_GAUSS31, ws.w,
                          &v, &e);
      scale += std::abs(v);
    }
  }
  const double epsabs = 1e-12 * scale;

  const Piece re = oscillatory_integral(&ft, tau, true, breaks, cutoff, epsabs, !has_dl);
  const Piece im = oscillatory_integral(&fp, tau, false, breaks, cutoff, epsabs, true);
  const cplx value(re.value, -im.value);
  const double err = re.error + im.error;
  if (re.status != GSL_SUCCESS || im.status != GSL_SUCCESS || !std::isfinite(err) ||
      err > 1e-8 * std::max(std::abs(value), 1e-300))
    throw QuadratureError("bcf_quadrature: no convergence (estimated error " + std::to_string(err) + ")", err);
  return value;
}

cplx reconstruct(const FeatureSet& fs, double t_fs) {
  cplx s(0.0);
  for (const auto& f : fs.features) s += f.c * std::exp(f.gamma_exp * per_fs(1.0) * t_fs);
  return s;
}

cplx reconstruct_conj(const FeatureSet& fs, double t_fs) {
  cplx s(0.0);
  for (const auto& f : fs.features) s += f.c_bar * std::exp(f.gamma_exp * per_fs(1.0) * t_fs);
  return s;
}

nlohmann::json to_json(const FeatureSet& fs) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& f : fs.features) {
    rows.push_back({{"re_c", f.c.real()},
                    {"im_c", f.c.imag()},
                    {"re_cbar", f.c_bar.real()},
                    {"im_cbar", f.c_bar.imag()},
                    {"re_gamma", f.gamma_exp.real()},
                    {"im_gamma", f.gamma_exp.imag()},
                    {"coupling_id", f.coupling_id}});
  }
  return {{"temperature", fs.temperature}, {"n_pade", fs.n_pade}, {"features", rows}};
}

FeatureSet feature_set_from_json(const nlohmann::json& j) {
  FeatureSet fs;
  const nlohmann::json* rows = &j;
  if (j.is_object()) {
    if (!j.contains("features")) throw BathError("feature table: missing 'features'");
    rows = &j.at("features");
    fs.temperature = j.value("temperature", 0.0);
    fs.n_pade = j.value("n_pade", 0);
  }
  if (!rows->is_array()) throw BathError("feature table: expected an array of rows");
  for (const auto& r : *rows) {
    try {
      Feature f;
      f.c = cplx(r.at("re_c").get<double>(), r.at("im_c").get<double>());
      f.c_bar = cplx(r.at("re_cbar").get<double>(), r.at("im_cbar").get<double>());
      f.gamma_exp = cplx(r.at("re_gamma").get<double>(), r.at("im_gamma").get<double>());
      f.coupling_id = r.value("coupling_id", kDefaultCoupling);
      if (!(f.gamma_exp.real() < 0.0)) throw BathError("feature table: every feature must decay (re_gamma < 0)");
      fs.features.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw BathError(std::string("feature table: ") + e.what());
    }
  }
  return fs;
}

}  // namespace ttnheom::bath
