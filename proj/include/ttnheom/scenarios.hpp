#pragma once

#include "ttnheom/bath.hpp"
#include "ttnheom/generator.hpp"

#include <vector>

namespace ttnheom::scenarios {

// Thymine nucleotide in water: one Drude-Lorentz solvent term and eight damped modes
// sorted by descending frequency. cm^-1.
std::vector<bath::SpectralComponent> thymine_bath();
// Solvent term only.
std::vector<bath::SpectralComponent> thymine_solvent();
// Solvent plus the strongest vibrational mode.
std::vector<bath::SpectralComponent> thymine_reduced();

inline constexpr double kRoomTemperature = 300.0;

// H = E/2 (|1><1| - |0><0|) + V (|1><0| + |0><1|), coupled through q = (|1><1| - |0><0|) / 2.
gen::SystemModel two_level(double e, double v);

// (|0> + |1>) / sqrt(2)
Mat plus_state();

// Generator with uniform depth and the default metric.
gen::SopGenerator assemble(const gen::SystemModel& model, const bath::FeatureSet& fs, int depth);

}  // namespace ttnheom::scenarios
