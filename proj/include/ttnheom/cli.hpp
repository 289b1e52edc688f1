#pragma once

#include "ttnheom/bath.hpp"
#include "ttnheom/generator.hpp"
#include "ttnheom/propagate.hpp"
#include "ttnheom/ttn.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitAbort = 3;

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BathComponent {
  bath::SpectralComponent spectral;
  std::string coupling = bath::kDefaultCoupling;
};

// Declarative run description. Energies cm^-1, times fs, temperature K.
struct RunSpec {
  gen::SystemModel system;
  Mat rho0;

  std::vector<BathComponent> components;
  double temperature = 300.0;
  int n_pade = 0;
  std::string feature_table;  // JSON feature table used instead of components when set

  int depth = 0;            // uniform depth, used when depths is empty
  std::vector<int> depths;  // per feature
  std::string metric = "default";

  ttn::TopologyKind topology = ttn::TopologyKind::Balanced;
  nlohmann::json nodes;       // explicit topology
  Index rank = 0;             // uniform rank; 0 means full
  std::vector<Index> ranks;   // bond-indexed, overrides rank

  prop::RunConfig run;
  double t_end = 0.0;
  double output_dt = 1.0;
  unsigned seed = 0;
  std::string output_dir = "ttnheom-out";
};

// Parses and validates TOML text; relative paths resolve against base_dir.
RunSpec parse_spec(const std::string& toml_text, const std::string& base_dir = ".");
RunSpec load_spec(const std::string& path);

// Matrix from JSON: rows of numbers or [re, im] pairs.
Mat matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json matrix_to_json(const Mat& m);

struct Overrides {
  std::optional<std::string> propagator;
  std::optional<Index> rank;
  std::optional<int> depth;
  std::optional<double> dt;
  std::optional<double> epsilon;
  std::optional<double> svd_tol;
  std::optional<Index> max_rank;
  std::optional<double> t_end;
  std::optional<std::string> output;
};

// Applies command-line overrides; returns one log line per field that changed.
std::vector<std::string> apply_overrides(RunSpec& spec, const Overrides& o);

bath::FeatureSet build_features(const RunSpec& spec);
gen::SopGenerator build_generator(const RunSpec& spec, const bath::FeatureSet& fs);
ttn::TreeTopology build_topology(const RunSpec& spec, const std::vector<int>& depths);
ttn::Ranks build_ranks(const RunSpec& spec, const ttn::TreeTopology& topo);

// Fully resolved configuration as written to the manifest.
nlohmann::json spec_to_json(const RunSpec& spec);

std::string checksum_file(const std::string& path);
std::string checksum_text(const std::string& text);

int main(int argc, char** argv);

}  // namespace ttnheom::cli
