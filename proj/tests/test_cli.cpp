#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = TABLETOP_CLI_BIN;
const std::string kAssets = TABLETOP_ASSET_DIR;

struct RunResult {
  int code = -1;
  std::string output;
};

// Runs the CLI through the shell; `prefix` can pipe stdin or set env vars.
RunResult run_cli(const std::string& args, const std::string& prefix = "") {
  std::string command = prefix + kBin + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buffer[4096];
  while (std::size_t n = fread(buffer, 1, sizeof(buffer), pipe)) {
    result.output.append(buffer, n);
    if (n < sizeof(buffer)) {
      if (feof(pipe)) break;
    }
  }
  int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return json::parse(in);
}

}  // namespace

TEST_CASE("run replays the banana episode and writes artifacts") {
  fs::path out = fresh_dir("tabletop_cli_run");
  auto r = run_cli(
      "run --scene " + kAssets + "/scenes/banana_plate.json --question " +
      q("How to place the banana on the left of the plate?") + " --fixture " +
      kAssets + "/fixtures/s01_banana_left_of_plate.json --out " +
      out.string());
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("You have picked up 011_banana") != std::string::npos);
  CHECK(r.output.find(
            "The banana has been successfully placed to the left of the "
            "plate.") != std::string::npos);
  CHECK(r.output.find("outcome: success") != std::string::npos);

  CHECK(fs::exists(out / "transcript.txt"));
  CHECK(fs::exists(out / "transcript.json"));
  CHECK(fs::exists(out / "final_scene.json"));
  CHECK(fs::exists(out / "scene.svg"));
  CHECK(fs::exists(out / "run_meta.json"));
  fs::remove_all(out);
}

TEST_CASE("run --expect infeasible matches refusal episodes") {
  fs::path out = fresh_dir("tabletop_cli_infeasible");
  auto r = run_cli("run --scene " + kAssets +
                   "/scenes/no_mustard.json --question " +
                   q("Place the mustard in front of the dishes") +
                   " --fixture " + kAssets +
                   "/fixtures/i01_mustard_in_front_of_dishes.json --expect "
                   "infeasible --out " +
                   out.string());
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("outcome: infeasible") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("run fails cleanly on config and file errors") {
  SUBCASE("missing scene file names the path") {
    auto r = run_cli("run --scene /nope/missing_scene.json --question q "
                     "--fixture " +
                     kAssets + "/fixtures/s01_banana_left_of_plate.json");
    CHECK(r.code != 0);
    CHECK(r.output.find("missing_scene.json") != std::string::npos);
  }
  SUBCASE("replay backend without a fixture") {
    auto r = run_cli("run --scene " + kAssets +
                     "/scenes/banana_plate.json --question q");
    CHECK(r.code != 0);
    CHECK(r.output.find("--fixture") != std::string::npos);
  }
}

TEST_CASE("eval runs the shipped suite offline") {
  fs::path out = fresh_dir("tabletop_cli_eval");
  auto r = run_cli("eval --out " + out.string() + " --assets " + kAssets);
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("overall") != std::string::npos);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "report.json"));

  json report = read_json(out / "report.json");
  CHECK(report.at("overall").at("count") == 24);
  CHECK(report.at("simple").at("avg_steps_display") == 4);
  CHECK(report.at("high_level").at("avg_steps_display") == 6);
  CHECK(report.at("infeasible").at("avg_steps_display") == 5);
  fs::remove_all(out);
}

TEST_CASE("eval rejects a bad scenario directory") {
  auto r = run_cli("eval --scenarios /nope/scenarios");
  CHECK(r.code != 0);
}

TEST_CASE("spatial-eval reports zero variance without noise") {
  fs::path out = fresh_dir("tabletop_cli_spatial");
  auto r = run_cli("spatial-eval --out " + out.string() + " --assets " +
                   kAssets + " --trials 1 --sigma 0");
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "spatial.txt"));
  CHECK(fs::exists(out / "spatial.json"));

  json report = read_json(out / "spatial.json");
  REQUIRE(report.at("rows").size() == 8);
  for (const auto& row : report["rows"]) {
    CHECK(row.at("errors") == 0);
    CHECK(row.at("avg_variance").get<double>() == 0.0);
  }
  fs::remove_all(out);
}

TEST_CASE("spatial-eval honors a specifier subset") {
  fs::path out = fresh_dir("tabletop_cli_spatial_subset");
  auto r = run_cli("spatial-eval --out " + out.string() + " --assets " +
                   kAssets + " --specifiers left,right");
  CHECK(r.code == 0);
  json report = read_json(out / "spatial.json");
  REQUIRE(report.at("rows").size() == 2);
  CHECK(report["rows"][0].at("specifier") == "left");
  CHECK(report["rows"][1].at("specifier") == "right");
  fs::remove_all(out);
}

TEST_CASE("render draws a scene") {
  fs::path out = fresh_dir("tabletop_cli_render");
  auto r = run_cli("render --scene " + kAssets +
                   "/scenes/banana_plate.json --out " + out.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "scene.svg"));
  fs::remove_all(out);
}

TEST_CASE("ratings aggregates a JSON rating file") {
  fs::path dir = fresh_dir("tabletop_cli_ratings");
  fs::path input = dir / "ratings.json";
  {
    std::ofstream f(input);
    f << R"([{"label": "bowl of fruits", "ratings": [9, 10, 10]},
             {"label": "mustard refusal", "ratings": [10, 10, 10]}])";
  }
  auto r = run_cli("ratings --input " + input.string());
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("9.67") != std::string::npos);
  CHECK(r.output.find("0.58") != std::string::npos);
  CHECK(r.output.find("10.00") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("flag beats environment beats config file") {
  fs::path dir = fresh_dir("tabletop_cli_precedence");
  fs::path config = dir / "config.ini";
  {
    std::ofstream f(config);
    f << "max-steps=7\n";
  }
  const std::string base =
      "run --scene " + kAssets + "/scenes/banana_plate.json --question " +
      q("How to place the banana on the left of the plate?") + " --fixture " +
      kAssets + "/fixtures/s01_banana_left_of_plate.json --config " +
      config.string() + " --out ";

  fs::path out1 = dir / "flag_wins";
  auto r1 = run_cli(base + out1.string() + " --max-steps 5",
                    "env TABLETOP_MAX_STEPS=3 ");
  CHECK(r1.code == 0);
  CHECK(read_json(out1 / "run_meta.json").at("limits").at("max_steps") == 5);

  fs::path out2 = dir / "env_wins";
  auto r2 = run_cli(base + out2.string(), "env TABLETOP_MAX_STEPS=9 ");
  CHECK(r2.code == 0);
  CHECK(read_json(out2 / "run_meta.json").at("limits").at("max_steps") == 9);

  fs::path out3 = dir / "config_wins";
  auto r3 = run_cli(base + out3.string());
  CHECK(r3.code == 0);
  CHECK(read_json(out3 / "run_meta.json").at("limits").at("max_steps") == 7);
  fs::remove_all(dir);
}

TEST_CASE("repl quits cleanly and answers a command") {
  auto quit = run_cli("repl --scene " + kAssets + "/scenes/banana_plate.json" +
                          " --fixture " + kAssets +
                          "/fixtures/s01_banana_left_of_plate.json",
                      "printf ':quit\\n' | ");
  CHECK(quit.code == 0);

  auto scene_cmd = run_cli(
      "repl --scene " + kAssets + "/scenes/banana_plate.json" + " --fixture " +
          kAssets + "/fixtures/s01_banana_left_of_plate.json",
      "printf ':scene\\n:quit\\n' | ");
  CHECK(scene_cmd.code == 0);
  CHECK(scene_cmd.output.find("029_plate") != std::string::npos);
}
