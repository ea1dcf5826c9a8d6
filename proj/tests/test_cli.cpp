#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#ifndef BPDL_CLI_PATH
#define BPDL_CLI_PATH "bpdl"
#endif

namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bpdl_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BPDL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream f(p);
  f << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kSimulateConfig = R"({
  "model": {
    "dimension": 1, "side": 100.0, "mortality": 0.0,
    "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
    "competition": {"family": "gaussian", "amplitude": 0.5, "sigma": 1.0}
  },
  "run": {
    "initial_density": 2.0, "t_end": 3.0, "observe_every": 1.0,
    "replicas": 3, "seed": 12345
  },
  "output": {"directory": "OUTDIR"}
})";

}  // namespace

TEST_CASE("schema violations exit with code 2") {
  TempDir tmp;
  SUBCASE("unknown key") {
    const auto cfg = write_config(tmp.path, "bad.json", R"({
      "model": {
        "dimension": 1, "side": 100.0, "mortality": 0.0, "typo_key": 1,
        "dispersal": {"family": "zero"}, "competition": {"family": "zero"}
      },
      "run": {"initial_density": 1.0, "t_end": 1.0, "observe_every": 1.0,
              "replicas": 1, "seed": 1}
    })");
    CHECK(run_cli("simulate --config " + cfg.string()) == 2);
  }
  SUBCASE("weight gap must be positive") {
    const auto cfg = write_config(tmp.path, "bound.json", R"({
      "model": {
        "dimension": 1, "side": 100.0, "mortality": 1.0,
        "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
        "competition": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0}
      },
      "bound": {"theta": 1.0, "theta_prime": 0.5}
    })");
    CHECK(run_cli("bound --config " + cfg.string()) == 2);
  }
  SUBCASE("malformed json") {
    const auto cfg = write_config(tmp.path, "broken.json", "{ not json");
    CHECK(run_cli("simulate --config " + cfg.string()) == 2);
  }
  SUBCASE("bad kernel family") {
    const auto cfg = write_config(tmp.path, "fam.json", R"({
      "model": {
        "dimension": 1, "side": 100.0, "mortality": 0.0,
        "dispersal": {"family": "cauchy", "amplitude": 1.0, "sigma": 1.0},
        "competition": {"family": "zero"}
      },
      "run": {"initial_density": 1.0, "t_end": 1.0, "observe_every": 1.0,
              "replicas": 1, "seed": 1}
    })");
    CHECK(run_cli("simulate --config " + cfg.string()) == 2);
  }
}

TEST_CASE("simulate twice with the same seed is byte-identical") {
  TempDir tmp;
  std::string body = kSimulateConfig;
  body.replace(body.find("OUTDIR"), 6, (tmp.path / "out1").string());
  const auto cfg = write_config(tmp.path, "sim.json", body);

  CHECK(run_cli("simulate --config " + cfg.string()) == 0);
  CHECK(run_cli("simulate --config " + cfg.string() + " --out " + (tmp.path / "out2").string() +
                " --threads 1") == 0);

  const auto t1 = slurp(tmp.path / "out1" / "trajectory.csv");
  const auto t2 = slurp(tmp.path / "out2" / "trajectory.csv");
  REQUIRE_FALSE(t1.empty());
  CHECK(t1 == t2);
}

TEST_CASE("manifest lists every output file with a hash") {
  TempDir tmp;
  std::string body = kSimulateConfig;
  body.replace(body.find("OUTDIR"), 6, (tmp.path / "out").string());
  const auto cfg = write_config(tmp.path, "sim.json", body);
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);

  const std::string manifest = slurp(tmp.path / "out" / "manifest.json");
  REQUIRE_FALSE(manifest.empty());
  for (const auto& entry : fs::directory_iterator(tmp.path / "out")) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CHECK(manifest.find('"' + name + '"') != std::string::npos);
  }
}

TEST_CASE("population cap exits with code 3 and leaves partial outputs") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path, "cap.json", R"({
    "model": {
      "dimension": 1, "side": 100.0, "mortality": 0.0,
      "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
      "competition": {"family": "zero"}
    },
    "run": {"initial_density": 2.0, "t_end": 30.0, "observe_every": 1.0,
            "replicas": 2, "seed": 99, "population_cap": 500},
    "output": {"directory": ")" + (tmp.path / "out").string() + R"("}
  })");
  CHECK(run_cli("simulate --config " + cfg.string()) == 3);
  CHECK(fs::exists(tmp.path / "out" / "trajectory.csv"));
}

TEST_CASE("hierarchy blow-up exits with code 4") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path, "blowup.json", R"({
    "model": {
      "dimension": 1, "side": 50.0, "mortality": 0.0,
      "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
      "competition": {"family": "zero"}
    },
    "run": {"t_end": 1.0, "seed": 1, "replicas": 1, "initial_density": 1.0,
            "observe_every": 1.0},
    "hierarchy": {"grid_points": 512, "t_end": 30.0, "closure": "poisson",
                  "initial_density": 2.0, "blowup_cap": 50.0},
    "output": {"directory": ")" + (tmp.path / "out").string() + R"("}
  })");
  CHECK(run_cli("hierarchy --config " + cfg.string()) == 4);
}

TEST_CASE("simulate with snapshots feeds estimate") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path, "pipeline.json", R"({
    "model": {
      "dimension": 1, "side": 100.0, "mortality": 0.0,
      "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
      "competition": {"family": "gaussian", "amplitude": 0.5, "sigma": 1.0}
    },
    "run": {"initial_density": 2.0, "t_end": 2.0, "observe_every": 1.0,
            "replicas": 12, "seed": 321, "write_snapshots": true},
    "output": {"directory": ")" + (tmp.path / "sim").string() + R"("}
  })");
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);
  REQUIRE(fs::exists(tmp.path / "sim" / "snapshots" / "snap_t0000_r0000.txt"));

  const auto est = write_config(tmp.path, "estimate.json", R"({
    "estimate": {"snapshot_dir": ")" + (tmp.path / "sim" / "snapshots").string() + R"("},
    "analysis": {"pair_bin_width": 0.5, "pair_r_max": 5.0, "window_side": 1.0, "n_max": 4},
    "run": {"t_end": 1.0, "seed": 7, "replicas": 1, "initial_density": 1.0,
            "observe_every": 1.0},
    "output": {"directory": ")" + (tmp.path / "est").string() + R"("}
  })");
  REQUIRE(run_cli("estimate --config " + est.string()) == 0);
  const std::string density = slurp(tmp.path / "est" / "density.csv");
  CHECK(density.find("t,k1_hat,stderr,n_replicas") == 0);
  CHECK(fs::exists(tmp.path / "est" / "paircorr.csv"));
  CHECK(fs::exists(tmp.path / "est" / "moments.csv"));
}

TEST_CASE("certify writes a validated certificate for the gaussian pair") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path, "cert.json", R"({
    "model": {
      "dimension": 1, "side": 100.0, "mortality": 0.0,
      "dispersal": {"family": "gaussian", "amplitude": 1.0, "sigma": 1.0},
      "competition": {"family": "gaussian", "amplitude": 1.0, "sigma": 2.0}
    },
    "run": {"t_end": 1.0, "seed": 2025, "replicas": 1, "initial_density": 1.0,
            "observe_every": 1.0},
    "certify": {"budget": 10000, "adversarial_rounds": 50},
    "output": {"directory": ")" + (tmp.path / "out").string() + R"("}
  })");
  REQUIRE(run_cli("certify --config " + cfg.string()) == 0);
  const std::string cert = slurp(tmp.path / "out" / "certificate.json");
  CHECK(cert.find("\"validated\": true") != std::string::npos);
}

TEST_SUITE_END();
