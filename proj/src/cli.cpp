#include "ttnheom/cli.hpp"

#include "ttnheom/units.hpp"
#include "ttnheom/verify.hpp"

#include <CLI11.hpp>
#include <toml.hpp>

#include <Eigen/Core>
#include <boost/version.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef TTNHEOM_VERSION
#define TTNHEOM_VERSION "0.0.0"
#endif

namespace ttnheom::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* s = n.as_string()) return s->get();
  if (const auto* i = n.as_integer()) return i->get();
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* b = n.as_boolean()) return b->get();
  throw SchemaError("config: unsupported TOML value (dates and times are not used)");
}

// Reads fields of one table and reports any the schema does not know.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw SchemaError("config: [" + name_ + "] must be a table");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key) {
    used_.push_back(key);
    if (!j_.contains(key)) throw SchemaError("config: missing " + name_ + "." + key);
    return convert<T>(j_.at(key), key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.push_back(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  const json& raw(const std::string& key) {
    used_.push_back(key);
    if (!j_.contains(key)) throw SchemaError("config: missing " + name_ + "." + key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(used_.begin(), used_.end(), k) == used_.end())
        throw SchemaError("config: unknown field " + name_ + "." + k);
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw SchemaError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw SchemaError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw SchemaError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  const json& j_;
  std::string name_;
  std::vector<std::string> used_;
};

json matrix_field(Section& s, const std::string& key) {
  const json& v = s.raw(key);
  if (v.is_string()) {
    try {
      return json::parse(v.get<std::string>());
    } catch (const json::parse_error& e) {
      throw SchemaError("config: " + key + " is not valid JSON: " + e.what());
    }
  }
  return v;
}

gen::Envelope parse_envelope(Section& s) {
  gen::Envelope e;
  const auto kind = s.get<std::string>("kind", "constant");
  if (kind == "constant") e.kind = gen::EnvelopeKind::Constant;
  else if (kind == "sinusoid") e.kind = gen::EnvelopeKind::Sinusoid;
  else if (kind == "gaussian_pulse") e.kind = gen::EnvelopeKind::GaussianPulse;
  else throw SchemaError("config: drive kind must be constant, sinusoid or gaussian_pulse");
  e.amplitude = s.get<double>("amplitude", 1.0);
  e.frequency = s.get<double>("frequency_cm", 0.0);
  e.phase = s.get<double>("phase", 0.0);
  e.center = s.get<double>("center_fs", 0.0);
  e.width = s.get<double>("width_fs", 1.0);
  return e;
}

ttn::TopologyKind parse_topology_kind(const std::string& s) {
  if (s == "train") return ttn::TopologyKind::Train;
  if (s == "balanced") return ttn::TopologyKind::Balanced;
  if (s == "explicit") return ttn::TopologyKind::Explicit;
  throw SchemaError("config: topology.kind must be train, balanced or explicit");
}

std::string topology_name(ttn::TopologyKind k) {
  switch (k) {
    case ttn::TopologyKind::Train:
      return "train";
    case ttn::TopologyKind::Balanced:
      return "balanced";
    case ttn::TopologyKind::Explicit:
      return "explicit";
  }
  return "balanced";
}

IntegratorConfig parse_integrator(Section& s, IntegratorConfig c) {
  c.rtol = s.get<double>("rtol", c.rtol);
  c.atol = s.get<double>("atol", c.atol);
  c.h_init = s.get<double>("h_init_fs", c.h_init);
  c.h_max = s.get<double>("h_max_fs", c.h_max);
  c.h_min = s.get<double>("h_min_fs", c.h_min);
  if (!(c.rtol > 0) || !(c.atol > 0)) throw SchemaError("config: rtol and atol must be positive");
  if (!(c.h_init > 0) || !(c.h_max > 0) || !(c.h_min > 0)) throw SchemaError("config: step sizes must be positive");
  return c;
}

json integrator_json(const IntegratorConfig& c) {
  return {{"rtol", c.rtol}, {"atol", c.atol}, {"h_init_fs", c.h_init}, {"h_max_fs", c.h_max}, {"h_min_fs", c.h_min}};
}

void validate(const RunSpec& s) {
  s.system.validate();
  if (s.rho0.rows() != s.system.dim || s.rho0.cols() != s.system.dim)
    throw SchemaError("config: system.rho0 must be dim x dim");
  if ((s.rho0 - s.rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw SchemaError("config: system.rho0 must be Hermitian");
  if (std::abs(s.rho0.trace() - cplx(1.0)) > 1e-10) throw SchemaError("config: system.rho0 must have unit trace");
  if (!(s.temperature > 0)) throw SchemaError("config: bath.temperature_K must be positive");
  if (s.n_pade < 0) throw SchemaError("config: bath.n_pade must be non-negative");
  if (s.depths.empty() && s.depth < 2) throw SchemaError("config: space.depth must be at least 2");
  for (int n : s.depths)
    if (n < 2) throw SchemaError("config: space.depths entries must be at least 2");
  if (s.rank < 0) throw SchemaError("config: topology.rank must be positive");
  if (!(s.run.ps.delta > 0)) throw SchemaError("config: propagator.delta_fs must be positive");
  if (!(s.run.ps.svd_tol > 0)) throw SchemaError("config: propagator.svd_tol must be positive");
  if (s.run.ps.max_rank < 1) throw SchemaError("config: propagator.max_rank must be at least 1");
  if (!(s.run.ps.rank_headroom >= 1)) throw SchemaError("config: propagator.rank_headroom must be at least 1");
  if (!(s.run.direct.epsilon > 0)) throw SchemaError("config: propagator.epsilon must be positive");
  if (!(s.t_end >= 0)) throw SchemaError("config: schedule.t_end_fs must be non-negative");
  if (!(s.output_dt > 0)) throw SchemaError("config: schedule.output_dt_fs must be positive");
}

std::string fnv_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Mat matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw SchemaError("config: " + what + " must be a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = j[0].is_array() ? static_cast<Index>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw SchemaError("config: " + what + " rows must have equal length");
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<size_t>(c)];
      if (v.is_number()) m(r, c) = v.get<double>();
      else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        m(r, c) = cplx(v[0].get<double>(), v[1].get<double>());
      else throw SchemaError("config: " + what + " entries must be numbers or [re, im] pairs");
    }
  }
  return m;
}

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) {
      if (m(r, c).imag() == 0.0) row.push_back(m(r, c).real());
      else row.push_back({m(r, c).real(), m(r, c).imag()});
    }
    rows.push_back(row);
  }
  return rows;
}

RunSpec parse_spec(const std::string& toml_text, const std::string& base_dir) {
  json root;
  try {
    root = toml_to_json(toml::parse(toml_text));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: TOML syntax error at line " << e.source().begin.line << ": " << e.description();
    throw SchemaError(os.str());
  }
  RunSpec spec;
  Section top(root, "");
  spec.seed = top.get<unsigned>("seed", 0);
  spec.output_dir = top.get<std::string>("output_dir", spec.output_dir);
  if (fs::path(spec.output_dir).is_relative()) spec.output_dir = (fs::path(base_dir) / spec.output_dir).string();

  {
    Section s(top.raw("system"), "system");
    spec.system.dim = s.get<int>("dim");
    spec.system.h0 = matrix_from_json(matrix_field(s, "h0_cm"), "system.h0_cm");
    spec.rho0 = matrix_from_json(matrix_field(s, "rho0"), "system.rho0");
    if (s.has("couplings")) {
      const json& c = s.raw("couplings");
      if (!c.is_object()) throw SchemaError("config: system.couplings must be a table");
      for (const auto& [id, v] : c.items()) {
        json m = v;
        if (v.is_string()) m = json::parse(v.get<std::string>());
        spec.system.couplings[id] = matrix_from_json(m, "system.couplings." + id);
      }
    }
    if (s.has("drives")) {
      for (const auto& d : s.raw("drives")) {
        Section ds(d, "system.drives");
        gen::Drive drive;
        drive.envelope = parse_envelope(ds);
        drive.matrix = matrix_from_json(matrix_field(ds, "matrix_cm"), "system.drives.matrix_cm");
        ds.finish();
        spec.system.drives.push_back(std::move(drive));
      }
    }
    s.finish();
  }

  {
    Section s(top.raw("bath"), "bath");
    spec.temperature = s.get<double>("temperature_K");
    spec.n_pade = s.get<int>("n_pade", 0);
    spec.feature_table = s.get<std::string>("feature_table", "");
    if (!spec.feature_table.empty() && fs::path(spec.feature_table).is_relative())
      spec.feature_table = (fs::path(base_dir) / spec.feature_table).string();
    if (s.has("components")) {
      for (const auto& c : s.raw("components")) {
        Section cs(c, "bath.components");
        BathComponent bc;
        const auto kind = cs.get<std::string>("kind");
        const double lambda = cs.get<double>("lambda_cm");
        const double gamma = cs.get<double>("gamma_cm");
        if (!(lambda > 0) || !(gamma > 0)) throw SchemaError("config: bath component lambda and gamma must be positive");
        if (kind == "drude_lorentz") {
          bc.spectral = bath::SpectralComponent::drude_lorentz(lambda, gamma);
        } else if (kind == "brownian") {
          const double w = cs.get<double>("omega_eff_cm");
          if (!(w > 0)) throw SchemaError("config: omega_eff_cm must be positive");
          bc.spectral = bath::SpectralComponent::brownian(w, lambda, gamma);
        } else {
          throw SchemaError("config: bath component kind must be drude_lorentz or brownian");
        }
        bc.coupling = cs.get<std::string>("coupling", bath::kDefaultCoupling);
        cs.finish();
        spec.components.push_back(std::move(bc));
      }
    }
    if (spec.components.empty() && spec.feature_table.empty())
      throw SchemaError("config: bath needs components or a feature_table");
    s.finish();
  }

  {
    Section s(top.raw("space"), "space");
    spec.depth = s.get<int>("depth", 0);
    spec.depths = s.get<std::vector<int>>("depths", {});
    spec.metric = s.get<std::string>("metric", "default");
    if (spec.metric != "default") throw SchemaError("config: space.metric supports only \"default\"");
    s.finish();
  }

  {
    Section s(top.raw("topology"), "topology");
    spec.topology = parse_topology_kind(s.get<std::string>("kind", "balanced"));
    if (s.has("rank")) {
      const json& r = s.raw("rank");
      if (r.is_string() && r.get<std::string>() == "full") spec.rank = 0;
      else if (r.is_number_integer() && r.get<Index>() >= 1) spec.rank = r.get<Index>();
      else throw SchemaError("config: topology.rank must be a positive integer or \"full\"");
    }
    spec.ranks = s.get<std::vector<Index>>("ranks", {});
    if (spec.topology == ttn::TopologyKind::Explicit) spec.nodes = matrix_field(s, "nodes");
    s.finish();
  }

  {
    Section s(top.raw("propagator"), "propagator");
    auto& r = spec.run;
    try {
      r.strategy = prop::parse_strategy(s.get<std::string>("strategy", "mixed"));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("config: ") + e.what());
    }
    r.direct.ode = parse_integrator(s, r.direct.ode);
    r.direct.epsilon = s.get<double>("epsilon", r.direct.epsilon);
    r.direct.reorthonormalize_every = s.get<int>("reorthonormalize_every", 0);
    r.ps.ode = r.direct.ode;
    r.ps.delta = s.get<double>("delta_fs", r.ps.delta);
    r.ps.svd_tol = s.get<double>("svd_tol", r.ps.svd_tol);
    r.ps.max_rank = s.get<Index>("max_rank", r.ps.max_rank);
    r.ps.rank_headroom = s.get<double>("rank_headroom", r.ps.rank_headroom);
    r.switch_rank = s.get<Index>("switch_rank", r.ps.max_rank < r.switch_rank ? r.ps.max_rank : r.switch_rank);
    r.checkpoint_every_s = s.get<double>("checkpoint_every_s", 300.0);
    s.finish();
  }

  {
    Section s(top.raw("schedule"), "schedule");
    spec.t_end = s.get<double>("t_end_fs");
    spec.output_dt = s.get<double>("output_dt_fs");
    s.finish();
  }
  top.finish();
  try {
    validate(spec);
  } catch (const gen::GeneratorError& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  return spec;
}

RunSpec load_spec(const std::string& path) {
  if (!fs::exists(path)) throw SchemaError("config file not found: " + path);
  return parse_spec(read_text(path), fs::path(path).parent_path().string());
}

std::vector<std::string> apply_overrides(RunSpec& spec, const Overrides& o) {
  std::vector<std::string> log;
  auto note = [&](const std::string& field, const std::string& from, const std::string& to) {
    if (from != to) log.push_back("override " + field + ": " + from + " -> " + to);
  };
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (o.propagator) {
    prop::Strategy s;
    try {
      s = prop::parse_strategy(*o.propagator);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(e.what());
    }
    note("propagator.strategy", prop::to_string(spec.run.strategy), prop::to_string(s));
    spec.run.strategy = s;
  }
  if (o.rank) {
    if (*o.rank < 1) throw SchemaError("--rank must be at least 1");
    note("topology.rank", spec.rank == 0 ? "full" : std::to_string(spec.rank), std::to_string(*o.rank));
    spec.rank = *o.rank;
    spec.ranks.clear();
  }
  if (o.depth) {
    if (*o.depth < 2) throw SchemaError("--depth must be at least 2");
    note("space.depth", std::to_string(spec.depth), std::to_string(*o.depth));
    spec.depth = *o.depth;
    spec.depths.clear();
  }
  if (o.dt) {
    if (!(*o.dt > 0)) throw SchemaError("--dt must be positive");
    note("propagator.delta_fs", num(spec.run.ps.delta), num(*o.dt));
    spec.run.ps.delta = *o.dt;
  }
  if (o.epsilon) {
    if (!(*o.epsilon > 0)) throw SchemaError("--epsilon must be positive");
    note("propagator.epsilon", num(spec.run.direct.epsilon), num(*o.epsilon));
    spec.run.direct.epsilon = *o.epsilon;
  }
  if (o.svd_tol) {
    if (!(*o.svd_tol > 0)) throw SchemaError("--svd-tol must be positive");
    note("propagator.svd_tol", num(spec.run.ps.svd_tol), num(*o.svd_tol));
    spec.run.ps.svd_tol = *o.svd_tol;
  }
  if (o.max_rank) {
    if (*o.max_rank < 1) throw SchemaError("--max-rank must be at least 1");
    note("propagator.max_rank", std::to_string(spec.run.ps.max_rank), std::to_string(*o.max_rank));
    note("propagator.switch_rank", std::to_string(spec.run.switch_rank), std::to_string(*o.max_rank));
    spec.run.ps.max_rank = *o.max_rank;
    spec.run.switch_rank = *o.max_rank;
  }
  if (o.t_end) {
    if (!(*o.t_end >= 0)) throw SchemaError("--t-end must be non-negative");
    note("schedule.t_end_fs", num(spec.t_end), num(*o.t_end));
    spec.t_end = *o.t_end;
  }
  if (o.output) {
    note("output_dir", spec.output_dir, *o.output);
    spec.output_dir = *o.output;
  }
  return log;
}

bath::FeatureSet build_features(const RunSpec& spec) {
  if (!spec.feature_table.empty()) {
    auto f = bath::feature_set_from_json(json::parse(read_text(spec.feature_table)));
    if (f.temperature == 0.0) f.temperature = spec.temperature;
    return f;
  }
  // One pooled decomposition per coupling operator, in order of first appearance.
  std::vector<std::string> order;
  std::map<std::string, std::vector<bath::SpectralComponent>> groups;
  for (const auto& c : spec.components) {
    if (!groups.count(c.coupling)) order.push_back(c.coupling);
    groups[c.coupling].push_back(c.spectral);
  }
  bath::FeatureSet out;
  out.temperature = spec.temperature;
  out.n_pade = spec.n_pade;
  for (const auto& id : order) {
    const auto part = bath::decompose(groups[id], spec.temperature, spec.n_pade, id);
    out.features.insert(out.features.end(), part.features.begin(), part.features.end());
  }
  return out;
}

gen::SopGenerator build_generator(const RunSpec& spec, const bath::FeatureSet& fs) {
  gen::BexcitonSpace space;
  space.depths = spec.depths;
  if (space.depths.empty()) space.depths.assign(static_cast<size_t>(fs.size()), spec.depth);
  if (static_cast<int>(space.depths.size()) != fs.size())
    throw SchemaError("config: space.depths has " + std::to_string(space.depths.size()) + " entries for " +
                      std::to_string(fs.size()) + " features");
  space.metric_z = gen::default_metric(fs);
  return gen::build_generator(spec.system, fs, space);
}

ttn::TreeTopology build_topology(const RunSpec& spec, const std::vector<int>& depths) {
  return ttn::make_topology(spec.topology, depths, spec.system.dim, spec.nodes);
}

ttn::Ranks build_ranks(const RunSpec& spec, const ttn::TreeTopology& topo) {
  if (!spec.ranks.empty()) {
    if (static_cast<int>(spec.ranks.size()) != topo.num_nodes())
      throw SchemaError("config: topology.ranks needs one entry per node (entry 0 unused)");
    ttn::Ranks r(spec.ranks.begin(), spec.ranks.end());
    r[0] = 1;
    return r;
  }
  return spec.rank == 0 ? ttn::full_ranks(topo) : ttn::clamp_ranks(topo, spec.rank);
}

json spec_to_json(const RunSpec& s) {
  json sys = {{"dim", s.system.dim}, {"h0_cm", matrix_to_json(s.system.h0)}, {"rho0", matrix_to_json(s.rho0)}};
  json couplings = json::object();
  for (const auto& [id, m] : s.system.couplings) couplings[id] = matrix_to_json(m);
  sys["couplings"] = couplings;
  json drives = json::array();
  for (const auto& d : s.system.drives) {
    static const char* kinds[] = {"constant", "sinusoid", "gaussian_pulse"};
    drives.push_back({{"kind", kinds[static_cast<int>(d.envelope.kind)]},
                      {"amplitude", d.envelope.amplitude},
                      {"frequency_cm", d.envelope.frequency},
                      {"phase", d.envelope.phase},
                      {"center_fs", d.envelope.center},
                      {"width_fs", d.envelope.width},
                      {"matrix_cm", matrix_to_json(d.matrix)}});
  }
  sys["drives"] = drives;

  json comps = json::array();
  for (const auto& c : s.components) {
    json j = {{"kind", c.spectral.kind == bath::Kind::DrudeLorentz ? "drude_lorentz" : "brownian"},
              {"lambda_cm", c.spectral.lambda},
              {"gamma_cm", c.spectral.gamma},
              {"coupling", c.coupling}};
    if (c.spectral.kind == bath::Kind::BrownianOscillator) j["omega_eff_cm"] = c.spectral.omega_eff;
    comps.push_back(j);
  }
  json bath = {{"temperature_K", s.temperature}, {"n_pade", s.n_pade}, {"components", comps}};
  if (!s.feature_table.empty()) bath["feature_table"] = s.feature_table;

  json space = {{"metric", s.metric}};
  if (s.depths.empty()) space["depth"] = s.depth;
  else space["depths"] = s.depths;

  json topo = {{"kind", topology_name(s.topology)}};
  if (!s.ranks.empty()) topo["ranks"] = s.ranks;
  else if (s.rank == 0) topo["rank"] = "full";
  else topo["rank"] = s.rank;
  if (s.topology == ttn::TopologyKind::Explicit) topo["nodes"] = s.nodes;

  const auto& r = s.run;
  json propj = integrator_json(r.direct.ode);
  propj["strategy"] = prop::to_string(r.strategy);
  propj["epsilon"] = r.direct.epsilon;
  propj["reorthonormalize_every"] = r.direct.reorthonormalize_every;
  propj["delta_fs"] = r.ps.delta;
  propj["svd_tol"] = r.ps.svd_tol;
  propj["max_rank"] = r.ps.max_rank;
  propj["rank_headroom"] = r.ps.rank_headroom;
  propj["switch_rank"] = r.switch_rank;
  propj["checkpoint_every_s"] = r.checkpoint_every_s;

  return {{"seed", s.seed},
          {"output_dir", s.output_dir},
          {"system", sys},
          {"bath", bath},
          {"space", space},
          {"topology", topo},
          {"propagator", propj},
          {"schedule", {{"t_end_fs", s.t_end}, {"output_dt_fs", s.output_dt}}}};
}

std::string checksum_text(const std::string& text) { return "fnv1a64:" + fnv_hex(text); }

std::string checksum_file(const std::string& path) { return checksum_text(read_text(path)); }

namespace {

json versions() {
  std::ostringstream eigen, boost;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  boost << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.' << BOOST_VERSION % 100;
  return {{"ttnheom", TTNHEOM_VERSION},
          {"eigen", eigen.str()},
          {"boost", boost.str()},
          {"toml++", std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." +
                         std::to_string(TOML_LIB_PATCH)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION},
          {"compiler", __VERSION__}};
}

void write_json(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

struct Paths {
  std::string dir, csv, manifest, checkpoint;
  explicit Paths(const std::string& d)
      : dir(d),
        csv((fs::path(d) / "trajectory.csv").string()),
        manifest((fs::path(d) / "manifest.json").string()),
        checkpoint((fs::path(d) / "checkpoint.ttn").string()) {}
};

void print_features(const bath::FeatureSet& fs, bool as_json) {
  if (as_json) {
    std::cout << bath::to_json(fs).dump(2) << '\n';
    return;
  }
  std::printf("# K = %d features, T = %g K, n_pade = %d (c in cm^-2, gamma in cm^-1)\n", fs.size(), fs.temperature,
              fs.n_pade);
  std::printf("%4s %16s %16s %16s %16s %16s %16s  %s\n", "k", "re_c", "im_c", "re_cbar", "im_cbar", "re_gamma",
              "im_gamma", "coupling");
  for (int k = 0; k < fs.size(); ++k) {
    const auto& f = fs.features[static_cast<size_t>(k)];
    std::printf("%4d %16.8e %16.8e %16.8e %16.8e %16.8e %16.8e  %s\n", k + 1, f.c.real(), f.c.imag(), f.c_bar.real(),
                f.c_bar.imag(), f.gamma_exp.real(), f.gamma_exp.imag(), f.coupling_id.c_str());
  }
}

// Runs or resumes a propagation and streams samples to trajectory.csv.
int execute(RunSpec spec, const std::vector<std::string>& override_log, const std::string& config_path,
            const std::string& resume_from) {
  const auto features = build_features(spec);
  const auto g = build_generator(spec, features);
  const auto topo = build_topology(spec, g.depths);
  const auto ranks = build_ranks(spec, topo);

  Paths paths(spec.output_dir);
  fs::create_directories(paths.dir);
  spec.run.checkpoint_path = paths.checkpoint;

  prop::Propagator propagator(g, spec.run);
  ttn::TtnState state;
  if (resume_from.empty()) {
    state = ttn::init_state(topo, spec.rho0, ranks);
  } else {
    auto ck = ttn::load_checkpoint(resume_from, topo);
    state = std::move(ck.state);
    if (!ck.metadata.empty()) {
      const json meta = json::parse(ck.metadata);
      propagator.set_switched(meta.value("switched", false));
      const double h = meta.value("h_direct", 0.0);
      if (h > 0) propagator.set_direct_step(h);
    }
  }

  json manifest;
  manifest["command"] = resume_from.empty() ? "run" : "resume";
  manifest["config_path"] = config_path;
  manifest["config_checksum"] = checksum_file(config_path);
  manifest["resolved_config"] = spec_to_json(spec);
  manifest["overrides"] = override_log;
  manifest["features"] = bath::to_json(features);
  manifest["num_features"] = features.size();
  manifest["num_terms"] = g.terms.size();
  manifest["topology"] = {{"hash", std::to_string(topo.hash())}, {"nodes", topo.num_nodes()},
                          {"initial_ranks", state.ranks()}, {"initial_size", state.size()}};
  manifest["versions"] = versions();
  manifest["units"] = {{"time", "fs"}, {"energy", "cm^-1"}, {"temperature", "K"},
                       {"cm_inv_per_fs_inv", kInvCmPerInvFs}};
  if (!resume_from.empty()) {
    manifest["resumed_from"] = resume_from;
    manifest["resumed_at_fs"] = state.time;
  }
  manifest["status"] = "running";
  write_json(paths.manifest, manifest);

  const bool append = !resume_from.empty() && fs::exists(paths.csv);
  // Rows written after the checkpoint are dropped; the checkpoint sample itself is kept once.
  bool have_start_row = false;
  if (append) {
    std::ifstream in(paths.csv);
    std::string line, kept;
    for (bool header = true; std::getline(in, line); header = false) {
      if (!header) {
        const double t = std::stod(line.substr(0, line.find(',')));
        if (t > state.time + 1e-9) break;
        have_start_row = std::abs(t - state.time) <= 1e-9;
      }
      kept += line + '\n';
    }
    in.close();
    std::ofstream(paths.csv, std::ios::trunc) << kept;
  }
  std::FILE* csv = std::fopen(paths.csv.c_str(), append ? "a" : "w");
  if (!csv) throw std::runtime_error("cannot open " + paths.csv);
  if (!append) {
    std::fprintf(csv, "%s\n", csv_header(spec.system.dim).c_str());
    std::fflush(csv);
  }
  bool first = true;
  auto on_sample = [&](const Sample& s, const ttn::TtnState&, const prop::Propagator&) {
    if (first && have_start_row) {
      first = false;
      return;
    }
    first = false;
    std::fprintf(csv, "%s\n", csv_row(s).c_str());
    std::fflush(csv);
  };

  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::vector<std::string> warnings;
  try {
    const auto traj = prop::run(propagator, std::move(state), spec.t_end, spec.output_dt, on_sample);
    warnings = traj.warnings;
    manifest["status"] = "completed";
  } catch (const prop::PropagationError& e) {
    warnings = propagator.warnings();
    manifest["status"] = "aborted";
    manifest["abort"] = {{"message", e.what()}, {"time_fs", e.time}, {"checkpoint", paths.checkpoint}};
    std::cerr << "ttnheom: propagation aborted at t = " << e.time << " fs: " << e.what() << '\n';
    code = kExitAbort;
  }
  std::fclose(csv);
  manifest["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["warnings"] = warnings;
  manifest["switched_to_direct"] = propagator.switched();
  manifest["truncation_weight"] = propagator.truncation_weight();
  manifest["max_semiunitary_deviation"] = propagator.max_semiunitary_deviation();
  manifest["trajectory_checksum"] = checksum_file(paths.csv);
  if (fs::exists(paths.checkpoint)) manifest["checkpoint_checksum"] = checksum_file(paths.checkpoint);
  write_json(paths.manifest, manifest);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree tensor network HEOM propagator"};
  app.set_version_flag("--version", std::string(TTNHEOM_VERSION));
  app.require_subcommand(1);

  std::string config;
  Overrides ov;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--propagator", ov.propagator, "direct, ps1, ps2 or mixed");
    sub->add_option("--rank", ov.rank, "uniform initial bond rank");
    sub->add_option("--depth", ov.depth, "uniform bexciton depth N");
    sub->add_option("--dt", ov.dt, "projector-splitting step (fs)");
    sub->add_option("--epsilon", ov.epsilon, "regularization floor for direct integration");
    sub->add_option("--svd-tol", ov.svd_tol, "two-site truncation threshold");
    sub->add_option("--max-rank", ov.max_rank, "rank cap, also the mixed switch rank");
    sub->add_option("--t-end", ov.t_end, "final time (fs)");
    sub->add_option("--output", ov.output, "output directory");
  };

  auto* run_cmd = app.add_subcommand("run", "propagate a run spec");
  run_cmd->add_option("--config", config, "TOML run spec")->required();
  add_overrides(run_cmd);

  bool as_json = false;
  auto* feat_cmd = app.add_subcommand("features", "print the bath feature table");
  feat_cmd->add_option("--config", config, "TOML run spec")->required();
  feat_cmd->add_flag("--json", as_json, "print JSON instead of a table");

  std::string suite = "small";
  auto* verify_cmd = app.add_subcommand("verify", "run the dense-oracle acceptance suite");
  verify_cmd->add_option("--suite", suite, "small or full");
  std::vector<std::string> only;
  verify_cmd->add_option("--only", only, "criterion ids to run instead of the whole suite")->delimiter(',');

  std::string checkpoint;
  auto* resume_cmd = app.add_subcommand("resume", "continue a run from its checkpoint");
  resume_cmd->add_option("--checkpoint", checkpoint, "checkpoint written by run")->required();
  resume_cmd->add_option("--config", config, "TOML run spec of the original run")->required();
  add_overrides(resume_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitSchema;
  }

  try {
    if (*feat_cmd) {
      print_features(build_features(load_spec(config)), as_json);
      return kExitOk;
    }
    if (*verify_cmd) {
      const auto results = only.empty() ? verify::run_suite(verify::parse_suite(suite), std::cout)
                                        : verify::run_criteria(only, std::cout);
      for (const auto& r : results)
        if (!r.passed) return kExitFailure;
      return kExitOk;
    }
    RunSpec spec = load_spec(config);
    const auto log = apply_overrides(spec, ov);
    for (const auto& l : log) std::cerr << l << '\n';
    return execute(std::move(spec), log, config, *resume_cmd ? checkpoint : std::string());
  } catch (const SchemaError& e) {
    std::cerr << "ttnheom: " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::invalid_argument& e) {
    // Generator, topology, bath and state validation errors.
    std::cerr << "ttnheom: invalid input: " << e.what() << '\n';
    return kExitSchema;
  } catch (const json::exception& e) {
    std::cerr << "ttnheom: invalid JSON: " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "ttnheom: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ttnheom::cli
