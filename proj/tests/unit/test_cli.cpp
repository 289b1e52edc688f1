#include "ttnheom/cli.hpp"
#include "ttnheom/trajectory.hpp"
#include "ttnheom/units.hpp"

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ttnheom;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
seed = 3
output_dir = "out"

[system]
dim = 2
h0_cm = [[0.0, 1000.0], [1000.0, 0.0]]
rho0 = "[[0.5, 0.5], [0.5, 0.5]]"
couplings = { q = [[-0.5, 0.0], [0.0, 0.5]] }

[bath]
temperature_K = 300.0
n_pade = 0

[[bath.components]]
kind = "drude_lorentz"
lambda_cm = 715.73
gamma_cm = 54.45

[space]
depth = 3

[topology]
kind = "train"
rank = "full"

[propagator]
strategy = "ps1"
delta_fs = 0.05

[schedule]
t_end_fs = 4.0
output_dt_fs = 1.0
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ttnheom_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& text, const std::string& name = "run.toml") {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

int cli_main(std::vector<std::string> args) {
  args.insert(args.begin(), "ttnheom");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every CSV line with the trailing wall_ms column removed.
std::vector<std::string> without_wall(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line.substr(0, line.rfind(',')));
  return out;
}

std::string capture(const std::string& cmd) {
  std::string out;
  if (std::FILE* f = popen(cmd.c_str(), "r")) {
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
    pclose(f);
  }
  return out;
}

}  // namespace

TEST_CASE("run spec parsing", "[cli]") {
  const auto spec = cli::parse_spec(kSmall, "/base");
  CHECK(spec.system.dim == 2);
  CHECK(spec.system.h0(0, 1) == cplx(1000.0, 0.0));
  CHECK(spec.rho0(1, 0) == cplx(0.5, 0.0));
  CHECK(spec.system.couplings.at("q")(1, 1) == cplx(0.5, 0.0));
  REQUIRE(spec.components.size() == 1);
  CHECK(spec.components[0].spectral.lambda == 715.73);
  CHECK(spec.depth == 3);
  CHECK(spec.topology == ttn::TopologyKind::Train);
  CHECK(spec.rank == 0);
  CHECK(spec.run.strategy == prop::Strategy::Ps1);
  CHECK(spec.run.ps.delta == 0.05);
  CHECK(spec.run.direct.epsilon == 1e-4);
  CHECK(spec.t_end == 4.0);
  CHECK(spec.seed == 3u);
  CHECK(fs::path(spec.output_dir) == fs::path("/base/out"));

  const auto fsx = cli::build_features(spec);
  CHECK(fsx.size() == 1);
  const auto g = cli::build_generator(spec, fsx);
  CHECK(g.terms.size() == 7);
  const auto topo = cli::build_topology(spec, g.depths);
  CHECK(cli::build_ranks(spec, topo) == ttn::full_ranks(topo));
}

TEST_CASE("complex matrix entries", "[cli]") {
  const json j = json::parse(R"([[1, [0, -2]], [[0, 2], 3]])");
  const Mat m = cli::matrix_from_json(j, "m");
  CHECK(m(0, 1) == cplx(0.0, -2.0));
  CHECK(m(1, 1) == cplx(3.0, 0.0));
  CHECK(cli::matrix_from_json(cli::matrix_to_json(m), "m") == m);
  CHECK_THROWS_AS(cli::matrix_from_json(json::parse("[[1, 2], [3]]"), "m"), cli::SchemaError);
  CHECK_THROWS_AS(cli::matrix_from_json(json::parse(R"([["a"]])"), "m"), cli::SchemaError);
}

TEST_CASE("schema violations", "[cli]") {
  const std::string base = kSmall;
  auto rejects = [](const std::string& text) { CHECK_THROWS_AS(cli::parse_spec(text), cli::SchemaError); };
  rejects(replace(base, "depth = 3", "depth = 3\ncolour = 1"));
  rejects(replace(base, "dim = 2", "dim = \"two\""));
  rejects(replace(base, "dim = 2\n", ""));
  rejects(replace(base, "rank = \"full\"", "rank = 0"));
  rejects(replace(base, "strategy = \"ps1\"", "strategy = \"rk4\""));
  rejects(replace(base, "kind = \"drude_lorentz\"", "kind = \"ohmic\""));
  rejects(replace(base, "rho0 = \"[[0.5, 0.5], [0.5, 0.5]]\"", "rho0 = [[1.0, 0.5], [0.5, 0.5]]"));
  rejects(replace(base, "h0_cm = [[0.0, 1000.0], [1000.0, 0.0]]", "h0_cm = [[0.0, 1000.0], [900.0, 0.0]]"));
  rejects(replace(base, "output_dt_fs = 1.0", "output_dt_fs = 0.0"));
  rejects(replace(base, "[space]", "[space\n"));
}

TEST_CASE("command line overrides win and are logged", "[cli]") {
  auto spec = cli::parse_spec(kSmall);
  cli::Overrides o;
  o.propagator = "mixed";
  o.rank = 2;
  o.max_rank = 6;
  o.dt = 0.02;
  o.t_end = 1.0;
  o.epsilon = 1e-4;  // same as the config, not logged
  const auto log = cli::apply_overrides(spec, o);
  CHECK(spec.run.strategy == prop::Strategy::Mixed);
  CHECK(spec.rank == 2);
  CHECK(spec.run.ps.max_rank == 6);
  CHECK(spec.run.switch_rank == 6);
  CHECK(spec.run.ps.delta == 0.02);
  CHECK(spec.t_end == 1.0);
  CHECK(log.size() == 6);
  bool saw = false;
  for (const auto& l : log) saw |= l == "override propagator.strategy: ps1 -> mixed";
  CHECK(saw);

  cli::Overrides bad;
  bad.propagator = "rk4";
  CHECK_THROWS_AS(cli::apply_overrides(spec, bad), cli::SchemaError);
  bad = {};
  bad.rank = 0;
  CHECK_THROWS_AS(cli::apply_overrides(spec, bad), cli::SchemaError);
}

TEST_CASE("resolved config round trips through the manifest form", "[cli]") {
  const auto spec = cli::parse_spec(kSmall);
  const json j = cli::spec_to_json(spec);
  CHECK(j.at("system").at("dim") == 2);
  CHECK(j.at("propagator").at("strategy") == "ps1");
  CHECK(j.at("schedule").at("t_end_fs") == 4.0);
  CHECK(cli::checksum_text("") == "fnv1a64:cbf29ce484222325");
  CHECK(cli::checksum_text("a") == "fnv1a64:af63dc4c8601ec8c");
}

TEST_CASE("run writes the trajectory and manifest", "[cli]") {
  const auto dir = scratch("run");
  const auto config = write_config(dir, kSmall);
  REQUIRE(cli_main({"run", "--config", config}) == cli::kExitOk);

  const auto csv = dir / "out" / "trajectory.csv";
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == csv_header(2));
  CHECK(header == "t_fs,re_rho_00,im_rho_00,re_rho_01,im_rho_01,re_rho_11,im_rho_11,purity,max_rank,ttn_size,wall_ms");
  const auto rows = read_csv(csv.string());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].t_fs == 0.0);
  CHECK(rows[0].purity == 1.0);
  CHECK(rows[4].t_fs == 4.0);
  for (const auto& s : rows) CHECK(std::abs(s.rho.trace() - 1.0) <= 1e-9);

  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m.at("status") == "completed");
  CHECK(m.at("num_features") == 1);
  CHECK(m.at("num_terms") == 7);
  CHECK(m.at("features").at("features").size() == 1);
  CHECK(m.at("units").at("cm_inv_per_fs_inv") == kInvCmPerInvFs);
  CHECK(m.at("resolved_config").at("space").at("depth") == 3);
  CHECK(m.at("trajectory_checksum") == cli::checksum_file(csv.string()));
  CHECK(m.at("config_checksum") == cli::checksum_file(config));
  CHECK(m.at("versions").contains("ttnheom"));
  CHECK(fs::exists(dir / "out" / "checkpoint.ttn"));
}

TEST_CASE("identical configs give identical trajectories", "[cli]") {
  const auto dir = scratch("det");
  const auto config = write_config(dir, replace(kSmall, "strategy = \"ps1\"", "strategy = \"mixed\"\nmax_rank = 4"));
  REQUIRE(cli_main({"run", "--config", config, "--output", (dir / "a").string(), "--rank", "1"}) == 0);
  REQUIRE(cli_main({"run", "--config", config, "--output", (dir / "b").string(), "--rank", "1"}) == 0);
  CHECK(without_wall(dir / "a" / "trajectory.csv") == without_wall(dir / "b" / "trajectory.csv"));
  const auto rows = read_csv((dir / "a" / "trajectory.csv").string());
  CHECK(rows.front().max_rank == 1);
  CHECK(rows.back().max_rank > 1);
}

TEST_CASE("schema errors exit with code 2", "[cli]") {
  const auto dir = scratch("schema");
  CHECK(cli_main({"run", "--config", write_config(dir, replace(kSmall, "[space]", "[space]\nwidth = 2"))}) ==
        cli::kExitSchema);
  CHECK(cli_main({"run", "--config", (dir / "missing.toml").string()}) == cli::kExitSchema);
  CHECK(cli_main({"run", "--config", write_config(dir, kSmall), "--propagator", "euler"}) == cli::kExitSchema);
  CHECK(cli_main({"frobnicate"}) == cli::kExitSchema);
  const auto unbound = replace(kSmall, "lambda_cm = 715.73", "lambda_cm = 715.73\ncoupling = \"x\"");
  CHECK(cli_main({"run", "--config", write_config(dir, unbound)}) == cli::kExitSchema);
}

TEST_CASE("propagation abort exits with code 3 and keeps the partial trajectory", "[cli]") {
  const auto dir = scratch("abort");
  const auto text = replace(kSmall, "strategy = \"ps1\"", "strategy = \"direct\"\nrtol = 1e-12\nh_init_fs = 1.0\nh_min_fs = 0.5");
  REQUIRE(cli_main({"run", "--config", write_config(dir, text)}) == cli::kExitAbort);
  const auto rows = read_csv((dir / "out" / "trajectory.csv").string());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].t_fs == 0.0);
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m.at("status") == "aborted");
  CHECK(m.at("abort").at("time_fs").get<double>() < 1.0);
  CHECK(fs::exists(dir / "out" / "checkpoint.ttn"));
}

TEST_CASE("resume continues from the checkpoint", "[cli]") {
  const auto dir = scratch("resume");
  const auto config = write_config(dir, kSmall);
  REQUIRE(cli_main({"run", "--config", config, "--output", (dir / "full").string()}) == 0);
  REQUIRE(cli_main({"run", "--config", config, "--output", (dir / "part").string(), "--t-end", "2"}) == 0);
  // A stray row past the checkpoint, as left by a crash after the last checkpoint.
  std::ofstream((dir / "part" / "trajectory.csv"), std::ios::app) << "3,9,9,9,9,9,9,9,1,1,0\n";
  REQUIRE(cli_main({"resume", "--checkpoint", (dir / "part" / "checkpoint.ttn").string(), "--config", config,
                    "--output", (dir / "part").string()}) == 0);
  const auto full = read_csv((dir / "full" / "trajectory.csv").string());
  const auto part = read_csv((dir / "part" / "trajectory.csv").string());
  REQUIRE(part.size() == full.size());
  for (size_t k = 0; k < full.size(); ++k) {
    CHECK(part[k].t_fs == full[k].t_fs);
    CHECK((part[k].rho - full[k].rho).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const json m = json::parse(slurp(dir / "part" / "manifest.json"));
  CHECK(m.at("command") == "resume");
  CHECK(m.at("resumed_at_fs") == 2.0);
}

#ifdef TTNHEOM_CLI
TEST_CASE("features subcommand prints the full bath table", "[cli]") {
  const auto dir = scratch("features");
  std::string text = replace(kSmall, "n_pade = 0", "n_pade = 3");
  std::string modes;
  const double bo[8][2] = {{1663, 330}, {1416, 25.6}, {1376, 186}, {1243, 161.7},
                           {1193, 77.3}, {784, 26.5}, {665, 32}, {442, 14.9}};
  for (const auto& b : bo) {
    std::ostringstream os;
    os << "\n[[bath.components]]\nkind = \"brownian\"\nomega_eff_cm = " << b[0] << "\nlambda_cm = " << b[1]
       << "\ngamma_cm = 50.0\n";
    modes += os.str();
  }
  text = replace(text, "gamma_cm = 54.45\n", "gamma_cm = 54.45\n" + modes);
  const auto config = write_config(dir, text);
  const json j = json::parse(capture(std::string(TTNHEOM_CLI) + " features --json --config " + config));
  CHECK(j.at("features").size() == 20);
  CHECK(j.at("n_pade") == 3);
  const auto table = capture(std::string(TTNHEOM_CLI) + " features --config " + config);
  CHECK(table.find("K = 20 features") != std::string::npos);
}

TEST_CASE("verify subcommand reports one line per criterion", "[cli]") {
  const auto out = capture(std::string(TTNHEOM_CLI) + " verify --only A9,A6");
  CHECK(out.find("A9   PASS") != std::string::npos);
  CHECK(out.find("A6 ") != std::string::npos);
}
#endif
