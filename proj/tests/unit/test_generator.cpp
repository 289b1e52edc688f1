#include "support.hpp"

#include "ttnheom/oracle.hpp"
#include "ttnheom/units.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace ttnheom;
using namespace ttnheom::testing;
using Catch::Matchers::WithinAbs;

namespace {

const cplx kI(0.0, 1.0);

bath::FeatureSet one_feature(cplx c, cplx cbar, cplx gamma) {
  bath::FeatureSet fs;
  fs.temperature = 300.0;
  fs.features.push_back({c, cbar, gamma, bath::kDefaultCoupling});
  return fs;
}

// Written out ADO by ADO, independent of the term list:
// d rho_n = -i[H, rho_n] + gamma n rho_n + sqrt(n) (c Q rho_{n-1} - cbar rho_{n-1} Q) / z
//           - sqrt(n+1) z (Q rho_{n+1} - rho_{n+1} Q), all rates converted to fs^-1.
Vec hand_rhs(const Vec& omega, int m, int depth, const Mat& h, const Mat& q, const bath::Feature& f, cplx z) {
  auto ado = [&](int n) {
    Mat r = Mat::Zero(m, m);
    if (n < 0 || n >= depth) return r;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) r(i, j) = omega[(i * m + j) * depth + n];
    return r;
  };
  const double u = per_fs(1.0);
  Vec out(omega.size());
  for (int n = 0; n < depth; ++n) {
    const Mat rn = ado(n), lo = ado(n - 1), hi = ado(n + 1);
    Mat d = -kI * (h * rn - rn * h) + f.gamma_exp * static_cast<double>(n) * rn;
    d += std::sqrt(static_cast<double>(n)) * (f.c * q * lo - f.c_bar * lo * q) / z;
    d -= std::sqrt(static_cast<double>(n + 1)) * z * (q * hi - hi * q);
    d *= u;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out[(i * m + j) * depth + n] = d(i, j);
  }
  return out;
}

}  // namespace

TEST_CASE("ladder operators", "[generator]") {
  const auto l2 = gen::ladder_ops(2);
  Mat raise2(2, 2), lower2(2, 2);
  raise2 << 0, 0, 1, 0;
  lower2 << 0, 1, 0, 0;
  CHECK(l2.raise == raise2);
  CHECK(l2.lower == lower2);

  const auto l3 = gen::ladder_ops(3);
  CHECK_THAT(l3.raise(2, 1).real(), WithinAbs(std::sqrt(2.0), 1e-15));
  CHECK_THAT(l3.lower(1, 2).real(), WithinAbs(std::sqrt(2.0), 1e-15));

  const int n = 6;
  const auto l = gen::ladder_ops(n);
  const Mat comm = l.lower * l.raise - l.raise * l.lower;
  CHECK(max_abs(Mat(comm.topLeftCorner(n - 1, n - 1) - Mat::Identity(n - 1, n - 1))) <= 1e-14);
  CHECK_THAT(comm(n - 1, n - 1).real(), WithinAbs(-(n - 1.0), 1e-14));

  CHECK_THROWS_AS(gen::ladder_ops(1), gen::GeneratorError);
}

TEST_CASE("term counts", "[generator]") {
  const auto model = scenarios::two_level(0.0, 1000.0);
  CHECK(scenarios::assemble(model, bath::decompose(scenarios::thymine_solvent(), 300.0, 0), 4).terms.size() == 7);
  CHECK(scenarios::assemble(model, bath::decompose({}, 300.0, 0), 4).terms.size() == 2);
  const auto full = scenarios::assemble(model, bath::decompose(scenarios::thymine_bath(), 300.0, 3), 20);
  CHECK(full.terms.size() == 102);
  for (const auto& t : full.terms) CHECK_FALSE(t.time_dependent());

  auto driven = model;
  gen::Drive d;
  d.envelope.kind = gen::EnvelopeKind::Sinusoid;
  d.envelope.frequency = 2000.0;
  d.matrix = Mat::Identity(2, 2);
  driven.drives.push_back(d);
  const auto g = scenarios::assemble(driven, bath::decompose(scenarios::thymine_solvent(), 300.0, 0), 4);
  REQUIRE(g.terms.size() == 9);
  int timed = 0;
  for (const auto& t : g.terms) timed += t.time_dependent();
  CHECK(timed == 2);
}

TEST_CASE("every dissipator term touches one bexciton", "[generator]") {
  const auto g = scenarios::assemble(scenarios::two_level(0.0, 1000.0),
                                     bath::decompose(scenarios::thymine_reduced(), 300.0, 1), 5);
  std::vector<int> per_bex(4, 0);
  for (const auto& t : g.terms) {
    if (t.bex < 0) {
      CHECK(t.h_bex.size() == 0);
      continue;
    }
    CHECK(t.h_bex.rows() == 5);
    ++per_bex[static_cast<size_t>(t.bex)];
  }
  for (int c : per_bex) CHECK(c == 5);
}

TEST_CASE("default metric", "[generator]") {
  auto z = gen::default_metric(one_feature(4.0, 4.0, -1.0));
  CHECK(z[0] == cplx(0.0, 2.0));
  z = gen::default_metric(one_feature(cplx(-3.0, 4.0), cplx(-3.0, -4.0), cplx(-1.0, 2.0)));
  CHECK_THAT(z[0].imag(), WithinAbs(std::sqrt(5.0), 1e-14));
  CHECK(z[0].real() == 0.0);
  const auto dl = gen::default_metric(bath::decompose(scenarios::thymine_solvent(), 300.0, 0));
  CHECK(dl[0].real() == 0.0);
  CHECK(dl[0].imag() > 0.0);
}

TEST_CASE("drive envelopes", "[generator]") {
  gen::Envelope e;
  CHECK(e(12.0) == 1.0);
  e.kind = gen::EnvelopeKind::Sinusoid;
  e.amplitude = 2.0;
  e.frequency = kInvCmPerInvFs;
  e.phase = 0.5;
  CHECK_THAT(e(3.0), WithinAbs(2.0 * std::cos(3.5), 1e-14));
  e.kind = gen::EnvelopeKind::GaussianPulse;
  e.center = 10.0;
  e.width = 2.0;
  CHECK_THAT(e(10.0), WithinAbs(2.0, 1e-15));
  CHECK_THAT(e(12.0), WithinAbs(2.0 * std::exp(-0.5), 1e-15));
}

TEST_CASE("invalid models are rejected", "[generator]") {
  const auto fs = bath::decompose(scenarios::thymine_solvent(), 300.0, 0);
  gen::BexcitonSpace space{{4}, gen::default_metric(fs)};

  auto m = scenarios::two_level(0.0, 1000.0);
  m.couplings.clear();
  m.couplings["other"] = Mat::Identity(2, 2);
  CHECK_THROWS_AS(gen::build_generator(m, fs, space), gen::GeneratorError);

  m = scenarios::two_level(0.0, 1000.0);
  m.h0(0, 1) = cplx(0.0, 3.0);
  CHECK_THROWS_AS(gen::build_generator(m, fs, space), gen::GeneratorError);

  m = scenarios::two_level(0.0, 1000.0);
  auto zero = space;
  zero.metric_z[0] = 0.0;
  CHECK_THROWS_AS(gen::build_generator(m, fs, zero), gen::GeneratorError);
  auto short_depths = space;
  short_depths.depths.clear();
  CHECK_THROWS_AS(gen::build_generator(m, fs, short_depths), gen::GeneratorError);
  auto shallow = space;
  shallow.depths[0] = 1;
  CHECK_THROWS_AS(gen::build_generator(m, fs, shallow), gen::GeneratorError);
}

TEST_CASE("generator contracted against a dense EDO matches the hand-written hierarchy", "[generator]") {
  for (int depth : {2, 3, 5}) {
    INFO("depth " << depth);
    const auto fs = one_feature(cplx(3.0e5, -3.9e4), cplx(3.0e5, 3.9e4), cplx(-54.45, 12.0));
    const auto model = scenarios::two_level(800.0, 600.0);
    gen::BexcitonSpace space{{depth}, {cplx(0.3, 540.0)}};
    const auto g = gen::build_generator(model, fs, space);
    const auto edo = random_edo({depth}, 2, 11u + static_cast<unsigned>(depth));
    const Vec got = oracle::dense_rhs(edo, g, 0.0);
    const Vec want = hand_rhs(edo.data, 2, depth, model.h0, model.couplings.at("q"), fs.features[0], space.metric_z[0]);
    CHECK(max_abs(Vec(got - want)) <= 1e-13 * max_abs(want));
  }
}

TEST_CASE("features bind to their own coupling operator", "[generator]") {
  auto model = scenarios::two_level(0.0, 500.0);
  model.couplings["x"] = Mat::Zero(2, 2);
  model.couplings["x"](0, 1) = model.couplings["x"](1, 0) = 1.0;
  auto fs = bath::decompose(scenarios::thymine_solvent(), 300.0, 0);
  auto fx = bath::decompose(scenarios::thymine_solvent(), 300.0, 0, "x");
  fs.features.push_back(fx.features[0]);
  const auto g = scenarios::assemble(model, fs, 3);
  // Terms of feature 1 carry the off-diagonal operator on the ket side.
  bool seen = false;
  for (const auto& t : g.terms) {
    if (t.bex != 1 || t.sys_id < 0) continue;
    const auto& op = g.sys_ops[static_cast<size_t>(t.sys_id)];
    if (op.gt) {
      CHECK(*op.gt == model.couplings["x"]);
      seen = true;
    }
  }
  CHECK(seen);
}
