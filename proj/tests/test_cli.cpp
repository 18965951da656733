#include "siamfv/cli.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using siamfv::cli::dispatch;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("siamfv-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2 with help") {
    Run r = run({});
    CHECK(r.code == 2);
    r = run({"frobnicate"});
    CHECK(r.code == 2);
    r = run({"gradcheck", "--clusters", "2"});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: ", 0) == 0);
    CHECK(r.err.find("--count") != std::string::npos);
    r = run({"eval", "--gallery", "/nonexistent/g.json", "--out", "x"});
    CHECK(r.code == 2);
    r = run({"synth", "--classes", "4", "--items-per-class", "2", "--descriptors-per-item", "3", "--dim", "4",
             "--seed", "1", "--out", "x", "--bogus"});
    CHECK(r.code == 2);
    r = run({"gradcheck", "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--clusters") != std::string::npos);
  }

  TEST_CASE("domain errors exit 1 with one line") {
    TempDir dir;
    {
      std::ofstream(dir / "g.json") << "{\"items\": 5}";
    }
    Run r = run({"eval", "--gallery", dir / "g.json", "--out", dir / "r.json"});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    r = run({"gradcheck", "--clusters", "1", "--dim", "1", "--count", "1", "--seed", "0", "--step", "0.5"});
    CHECK(r.code == 1);
  }

  TEST_CASE("pipeline runs end to end") {
    TempDir dir;
    REQUIRE(run({"synth", "--classes", "6", "--items-per-class", "4", "--descriptors-per-item", "12", "--dim", "4",
                 "--seed", "3", "--out", dir / "data"})
                .code == 0);
    REQUIRE(run({"init-gmm", "--manifest", dir / "data/manifest.json", "--clusters", "2", "--out", dir / "g.fvg",
                 "--seed", "1"})
                .code == 0);
    Run r = run({"train", "--manifest", dir / "data/manifest.json", "--gmm", dir / "g.fvg", "--epochs", "1",
                 "--iterations-per-epoch", "40", "--remine-every", "20", "--pairs-per-mine", "10", "--out",
                 dir / "run"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "run/metrics.jsonl"));
    CHECK(fs::exists(dir / "run/backbone.fvb"));
    REQUIRE(run({"encode", "--manifest", dir / "data/manifest.json", "--gmm", dir / "run/gmm.fvg", "--backbone",
                 dir / "run/backbone.fvb", "--out", dir / "enc"})
                .code == 0);
    r = run({"eval", "--gallery", dir / "enc/gallery.json", "--out", dir / "report.json"});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "report.json"));
    r = run({"encode", "--manifest", dir / "data/manifest.json", "--pool", "fv", "--out", dir / "enc2"});
    CHECK(r.code == 2);
  }

  TEST_CASE("gradcheck reports and passes") {
    TempDir dir;
    const Run r = run({"gradcheck", "--clusters", "2", "--dim", "3", "--count", "4", "--seed", "7", "--out",
                       dir / "gc.json"});
    CHECK(r.code == 0);
    CHECK(r.out.find("worst") != std::string::npos);
    CHECK(fs::exists(dir / "gc.json"));
  }
}
