#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ymh/cli_io.hpp"

using namespace ymh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ymh_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

io::ExperimentConfig cfg(const std::string& experiment, const fs::path& out) {
  io::ExperimentConfig c;
  c.experiment = experiment;
  c.out = out.string();
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::NonConvergence;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  io::ExperimentConfig c;
  c.experiment = "energy-compare";
  c.lambda = {0.5, 2.0};
  c.epsilon = {0.08, 0.04, 0.02};
  c.R = {8.0};
  c.Ns = {50, 100, 200};
  c.h_fiber = {0.1, 0.05};
  c.fields = {5, 1};
  c.seed = 987654321987ULL;
  c.correction = false;
  c.tol = 1.2345678901234567e-11;
  const io::ExperimentConfig d = io::config_from_json(io::ojson::parse(io::to_json(c).dump()));
  CHECK(d == c);
  CHECK(io::config_digest(d) == io::config_digest(c));
  io::ExperimentConfig e = c;
  e.seed += 1;
  CHECK(io::config_digest(e) != io::config_digest(c));
}

TEST_CASE("scalars are accepted for list keys") {
  const auto c = io::config_from_json(io::ojson::parse(R"({"experiment":"identities","lambda":2})"));
  CHECK(c.lambda == std::vector<double>{2.0});
}

TEST_CASE("invalid configs are rejected") {
  auto parse = [](const char* s) { return io::config_from_json(io::ojson::parse(s)); };
  CHECK(code_of([&] { parse(R"({"lamda":[1]})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"lambda":"one"})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"lambda":[-1]})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"experiment":"nope"})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"N":[10.5]})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"epsilon":[0.9]})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"fields":[7]})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"seed":-3})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"({"correction":1})"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { parse(R"([1,2])"); }) == ErrorCode::ConfigInvalid);
  const fs::path bad = scratch("bad.json");
  std::ofstream(bad) << "{ not json";
  CHECK(code_of([&] { io::load_config(bad); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("identities pipeline lists ten gaps") {
  auto c = cfg("identities", scratch("identities"));
  c.lambda = {1.0, 2.0};
  const io::RunManifest m = io::run_experiment(c);
  int n = 0;
  for (const auto& k : m.checks)
    if (k.name.rfind("identity.", 0) == 0) {
      ++n;
      CHECK(k.value < 1e-6);
      CHECK(k.pass);
    }
  CHECK(n == 10);
  CHECK(m.all_pass());
  CHECK(m.config_digest == io::config_digest(c));
}

TEST_CASE("reruns give identical digests and CSV bytes") {
  for (const char* ex : {"jacobi-kernels", "metric-check"}) {
    auto a = cfg(ex, scratch(std::string(ex) + "_a"));
    auto b = cfg(ex, scratch(std::string(ex) + "_b"));
    a.seed = b.seed = 42;
    const auto ma = io::run_experiment(a), mb = io::run_experiment(b);
    CHECK(ma.config_digest != "");
    REQUIRE(ma.artifacts.size() == mb.artifacts.size());
    for (std::size_t i = 0; i < ma.artifacts.size(); ++i) {
      CHECK(ma.artifacts[i].file == mb.artifacts[i].file);
      CHECK(slurp(fs::path(a.out) / ma.artifacts[i].file) == slurp(fs::path(b.out) / mb.artifacts[i].file));
    }
    // manifests agree once timings and output paths are dropped
    auto strip = [](io::RunManifest m) {
      m.config.out.clear();
      m.config_digest.clear();
      return io::to_json(m, false).dump();
    };
    CHECK(strip(ma) == strip(mb));
  }
}

TEST_CASE("unstable degree-two vortex is recorded") {
  auto c = cfg("fiber-spectrum", scratch("spectrum"));
  c.lambda = {1.5};
  c.degree = 2;
  const auto m = io::run_experiment(c);
  const auto& k = m.check("fiber.lambda=1.5.j=2.smallest");
  CHECK(k.value < -1e-3);
  CHECK(k.pass);
}

TEST_CASE("every CSV has a header and a manifest entry") {
  const fs::path dir = scratch("orphans");
  auto c = cfg("jacobi-spectrum", dir);
  c.R = {5.0, 10.0};
  const auto m = io::run_experiment(c);
  std::set<std::string> listed;
  for (const auto& a : m.artifacts) listed.insert(a.file);
  int csv = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    ++csv;
    CHECK(listed.count(e.path().filename().string()) == 1);
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    CHECK(header == "R,mode,eig,residual");
  }
  CHECK(csv == static_cast<int>(listed.size()));
  std::set<std::string> names;
  for (const auto& k : m.checks) CHECK(names.insert(k.name).second);
  const auto j = io::ojson::parse(slurp(dir / "manifest.json"));
  CHECK(j.begin().key() == "tool_version");
  CHECK(j["config_digest"] == m.config_digest);
  CHECK(j["checks"].size() == m.checks.size());
}

TEST_CASE("module errors surface as pipeline failures") {
  auto c = cfg("first-correction", scratch("fc"));
  c.degree = 2;
  CHECK(code_of([&] { io::run_experiment(c); }) == ErrorCode::PipelineFailure);
  auto d = cfg("identities", scratch("id_bad"));
  d.lambda = {-1.0};
  CHECK(code_of([&] { io::run_experiment(d); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("convergence study") {
  auto c = cfg("converge", scratch("converge"));
  c.study = "jacobi-kernels";
  auto t = io::convergence_study(c);
  REQUIRE(t.rows.size() == 6);
  for (const auto& r : t.rows) {
    CHECK(std::abs(r.fit.slope - 2.0) < 0.2);
    CHECK_FALSE(r.flagged);
  }
  c.study = "first-order-hook";
  t = io::convergence_study(c);
  CHECK(std::abs(t.row("first-order-hook").fit.slope - 1.0) < 0.2);
  CHECK(t.row("first-order-hook").flagged);
  c.study = "vortex";
  t = io::convergence_study(c);
  CHECK(std::abs(t.row("vortex-order2").fit.slope - 2.0) < 0.2);
  c.study = "jacobi-kernels";
  c.Ns = {100, 200};
  CHECK(code_of([&] { io::convergence_study(c); }) == ErrorCode::InsufficientLadder);
}

TEST_CASE("field state CSV layout") {
  auto p = std::make_shared<const VortexProfile>(solve_vortex(1.0, 1));
  const ApproxSolution sol(make_chart(0.08), p);
  const fs::path dir = scratch("field");
  fs::create_directories(dir);
  io::write_field_state_csv(sample_field_state(sol), dir / "state.csv", 8);
  std::ifstream in(dir / "state.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "s,theta,a,b,re_psi,im_psi,A_s,A_theta,A_a,A_b");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 25 * 16 * 4 * 2);
}

TEST_CASE("command line entry point") {
  const char* exe = std::getenv("YMH_CLI");
  if (!exe) SKIP("YMH_CLI not set");
  const fs::path dir = scratch("cli");
  const std::string base = std::string(exe) + " jacobi-kernels --out " + dir.string() + " --seed 9 > /dev/null";
  CHECK(std::system(base.c_str()) == 0);
  const auto j = io::ojson::parse(slurp(dir / "manifest.json"));
  CHECK(j["seed"] == 9);
  const fs::path bad = scratch("cli_bad.json");
  std::ofstream(bad) << R"({"tolerance": 1e-9})";
  const std::string cmd = std::string(exe) + " identities --config " + bad.string() + " 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 64);
}
