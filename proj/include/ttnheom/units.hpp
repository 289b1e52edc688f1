#pragma once

namespace ttnheom {

// Angular frequency of 1 fs^-1 expressed in cm^-1, i.e. 1 / (2 pi c) with c in cm/fs.
inline constexpr double kInvCmPerInvFs = 5308.837458877;

// Boltzmann constant in cm^-1 per kelvin.
inline constexpr double kBoltzmannInvCm = 0.695034800;

// Converts an energy or rate given in cm^-1 to an angular rate in fs^-1.
inline constexpr double per_fs(double per_cm) { return per_cm / kInvCmPerInvFs; }

}  // namespace ttnheom
