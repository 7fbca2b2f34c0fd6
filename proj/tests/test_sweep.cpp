#include "doctest.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "tribody/errors.hpp"
#include "tribody/sweep.hpp"

using namespace tribody;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tribody_sweep_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SweepConfig small(const fs::path& out, EngineKind engine = EngineKind::multispin) {
  SweepConfig c;
  c.master_seed = 77;
  c.output_dir = out.string();
  c.checkpoint_interval = 256;
  c.engine = engine;
  SweepRow r;
  r.p = {0.0, 0.05};
  r.L = {4, 6, 8};
  r.samples = engine == EngineKind::scalar ? 3 : 70;
  r.b = 10;
  r.T_min = 1.8;
  r.T_max = 2.8;
  r.n_T = 8;
  c.rows = {r};
  return c;
}

bool mentions(const std::vector<std::string>& errs, const std::string& s) {
  for (const auto& e : errs)
    if (e.find(s) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("config round trip") {
  SweepConfig c = small("out");
  c.lattice = LatticeKind::triangular;
  c.rows[0].L = {6, 9};
  c.lane_width = 512;
  c.measure_every = 4;
  c.average_k_directions = true;
  const auto back = parse_config(serialize_config(c));
  CHECK(back == c);
}

TEST_CASE("scalar p and L are accepted") {
  const auto c = parse_config(R"({"schema": 1, "lattice": "uj", "master_seed": 3, "rows": [{"p": 0.1, "L": 12, "samples": 4, "b": 8, "T_min": 1, "T_max": 2, "n_T": 3}]})");
  REQUIRE(c.rows.size() == 1);
  CHECK(c.rows[0].p == std::vector<double>{0.1});
  CHECK(c.rows[0].L == std::vector<int>{12});
}

TEST_CASE("odd union jack size names the parity constraint") {
  SweepConfig c = small("out");
  c.rows[0].L = {12, 13};
  const auto errs = validate_config(c);
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].find("rows[0].L[1]") == 0);
  CHECK(errs[0].find("even") != std::string::npos);
}

TEST_CASE("every problem is reported") {
  const std::string text = R"({"schema": 1, "lattice": "union_jack", "master_seed": 1, "workers": 0, "lane_width": 100, "bogus": 1,
    "rows": [{"p": [0.6], "L": [13], "samples": 0, "b": 2, "T_min": -1, "T_max": -2, "n_T": 1}]})";
  try {
    parse_config(text);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"workers", "lane_width", "bogus", "rows[0].p[0]", "rows[0].L[0]", "rows[0].samples",
                            "rows[0].b", "rows[0].T_min", "rows[0].T_max", "rows[0].n_T"})
      CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
  }
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
}

TEST_CASE("duplicate points and short runs are rejected") {
  SweepConfig c = small("out");
  c.rows.push_back(c.rows[0]);
  c.rows[1].L = {8};
  CHECK(mentions(validate_config(c), "already defined"));
  SweepConfig d = small("out");
  d.rows[0].b = 5;
  d.measure_every = 4;
  CHECK(mentions(validate_config(d), "four log bins"));
}

TEST_CASE("plan expansion and seeds") {
  const auto pts = expand_points(small("out"));
  REQUIRE(pts.size() == 6);
  CHECK(pts[0].p == 0.0);
  CHECK(pts[0].L == 4);
  CHECK(pts[5].L == 8);
  CHECK(pts[0].temperatures.size() == 8);
  CHECK(sample_seed(1, 0.1, 12, 0) == sample_seed(1, 0.1, 12, 0));
  CHECK(sample_seed(1, 0.1, 12, 0) != sample_seed(1, 0.1, 12, 1));
  CHECK(sample_seed(1, 0.1, 12, 0) != sample_seed(1, 0.1, 18, 0));
  CHECK(sample_seed(1, 0.1, 12, 0) != sample_seed(2, 0.1, 12, 0));
  CHECK(estimated_cost_seconds(small("out")) > 0);
}

TEST_CASE("worker count override") {
  ::setenv("TRIBODY_WORKERS", "5", 1);
  CHECK(effective_workers(2) == 5);
  ::setenv("TRIBODY_WORKERS", "zero", 1);
  CHECK(effective_workers(2) == 2);
  ::unsetenv("TRIBODY_WORKERS");
  CHECK(effective_workers(3) == 3);
}

TEST_CASE("results do not depend on worker count or interruption") {
  for (EngineKind engine : {EngineKind::multispin, EngineKind::scalar}) {
    const fs::path one = scratch("one"), three = scratch("three"), cut = scratch("cut");
    RunOptions o1;
    o1.workers = 1;
    const auto r1 = run_sweep(small(one, engine), o1);
    CHECK(r1.completed_points == 6);
    CHECK_FALSE(r1.interrupted);

    RunOptions o3;
    o3.workers = 3;
    run_sweep(small(three, engine), o3);
    for (const char* f : {"results.csv", "equilibration.csv", "energies.csv"})
      CHECK(slurp(one / f) == slurp(three / f));

    clear_stop();
    std::thread stopper([] {
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
      request_stop();
    });
    const auto part = run_sweep(small(cut, engine), o3);
    stopper.join();
    clear_stop();
    if (part.interrupted) CHECK_THROWS_AS(run_sweep(small(cut, engine), o1), ConfigError);
    RunOptions resume;
    resume.resume = true;
    resume.workers = 2;
    run_sweep(small(cut, engine), resume);
    CHECK(slurp(one / "results.csv") == slurp(cut / "results.csv"));

    SweepConfig changed = small(cut, engine);
    changed.master_seed = 78;
    CHECK_THROWS_AS(run_sweep(changed, resume), IntegrityError);

    const auto a = analyze(one);
    CHECK(fs::exists(one / "boundary.csv"));
    CHECK(fs::exists(one / "pc.json"));
    CHECK(fs::exists(one / "collapse.csv"));
    CHECK(slurp(one / "boundary.csv").rfind("p,T_c,err,status", 0) == 0);
    CHECK(a.boundary.size() == 2);
    for (const auto& d : {one, three, cut}) fs::remove_all(d);
  }
}

TEST_CASE("analyze needs results") {
  const fs::path d = scratch("empty");
  fs::create_directories(d);
  CHECK_THROWS_AS(analyze(d), InsufficientDataError);
  fs::remove_all(d);
}
