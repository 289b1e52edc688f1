#include "ttnheom/scenarios.hpp"

#include <cmath>

namespace ttnheom::scenarios {

std::vector<bath::SpectralComponent> thymine_bath() {
  using bath::SpectralComponent;
  std::vector<SpectralComponent> c{SpectralComponent::drude_lorentz(715.73, 54.45)};
  const double modes[8][2] = {{1663, 330.0}, {1416, 25.6}, {1376, 186.0}, {1243, 161.7},
                              {1193, 77.3},  {784, 26.5},  {665, 32.0},   {442, 14.9}};
  for (const auto& m : modes) c.push_back(SpectralComponent::brownian(m[0], m[1], 50.0));
  return c;
}

std::vector<bath::SpectralComponent> thymine_solvent() { return {thymine_bath().front()}; }

std::vector<bath::SpectralComponent> thymine_reduced() {
  const auto all = thymine_bath();
  return {all[0], all[1]};
}

gen::SystemModel two_level(double e, double v) {
  gen::SystemModel m;
  m.dim = 2;
  m.h0 = Mat::Zero(2, 2);
  m.h0(0, 0) = -e / 2;
  m.h0(1, 1) = e / 2;
  m.h0(0, 1) = v;
  m.h0(1, 0) = v;
  Mat q = Mat::Zero(2, 2);
  q(0, 0) = -0.5;
  q(1, 1) = 0.5;
  m.couplings[bath::kDefaultCoupling] = q;
  return m;
}

Mat plus_state() { return Mat::Constant(2, 2, 0.5); }

gen::SopGenerator assemble(const gen::SystemModel& model, const bath::FeatureSet& fs, int depth) {
  gen::BexcitonSpace space;
  space.depths.assign(static_cast<size_t>(fs.size()), depth);
  space.metric_z = gen::default_metric(fs);
  return gen::build_generator(model, fs, space);
}

}  // namespace ttnheom::scenarios
