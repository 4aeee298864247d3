// Drives the maneuver-net binary as a subprocess. Everything here goes
// through the public surface only: flags, config files, emitted artifacts
// and exit codes. The contract under test: 0 success, 2 usage/config,
// 1 for anything else, and byte-identical reruns from the same seed.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "maneuver/core/binary_io.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using maneuver::read_binary_file;
using maneuver::write_binary_file;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MANEUVER_NET_BIN) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CommandResult r;
  char buf[4096];
  size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Tiny scene: renders fast but still produces one lane change per direction
// plus a lane keeper, so manifests cover all three classes.
const char* kScene = R"({
  "frame_count": 64, "num_lanes": 3, "lane_width": 24, "margin_x": 14,
  "height": 72, "vehicle_width": 18, "vehicle_height": 14,
  "row0_y": 20, "row_spacing": 22,
  "event_frame_window": [28, 32]
})";

std::vector<std::string> relative_files(const std::string& root) {
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out.push_back(fs::relative(entry.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void require_identical_trees(const std::string& a, const std::string& b) {
  const auto fa = relative_files(a);
  const auto fb = relative_files(b);
  REQUIRE(fa == fb);
  for (const auto& rel : fa) {
    INFO(rel);
    REQUIRE(read_binary_file(a + "/" + rel) == read_binary_file(b + "/" + rel));
  }
}

int64_t manifest_rows(const std::string& path) {
  const auto bytes = read_binary_file(path);
  int64_t lines = 0;
  for (uint8_t c : bytes) lines += c == '\n';
  return lines - 1;  // header
}

// Dataset shared by the pipeline cases, built once through the binary.
struct CliWorkspace {
  std::string root;
  std::string scene;
  std::string data;

  CliWorkspace() {
    root = fs::absolute(testutil::scratch_dir("cli")).string();
    scene = root + "/scene.json";
    write_binary_file(scene, kScene);
    data = root + "/data";
    const CommandResult r =
        run_cli("synth --config " + scene + " --recordings 2 --seed 7 --out " + data);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(data + "/rec_000/meta.json"));
    REQUIRE(fs::exists(data + "/rec_001/tracks.csv"));
  }
};

CliWorkspace& workspace() {
  static CliWorkspace ws;
  return ws;
}

}  // namespace

TEST_CASE("version and help exit cleanly") {
  const CommandResult version = run_cli("--version");
  CHECK(version.exit_code == 0);
  CHECK(version.output.find("maneuver-net") != std::string::npos);
  CHECK(version.output.find("interchange format v") != std::string::npos);
  CHECK(version.output.find("MNT1") != std::string::npos);
  CHECK(version.output.find("MNCK") != std::string::npos);

  const CommandResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("Subcommands") != std::string::npos);
  CHECK(help.output.find("train") != std::string::npos);
}

TEST_CASE("unknown subcommands and bad flags are usage errors") {
  const CommandResult unknown = run_cli("frobnicate");
  CHECK(unknown.exit_code == 2);
  // usage text accompanies the complaint
  CHECK(unknown.output.find("Usage: maneuver-net") != std::string::npos);
  CHECK(unknown.output.find("Subcommands") != std::string::npos);

  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("synth --no-such-flag --out x").exit_code == 2);
  CHECK(run_cli("windows --data x --out y --scale 9").exit_code == 2);
  CHECK(run_cli("--log-level shout stats --data x").exit_code == 2);
}

TEST_CASE("synthesis reruns are byte-identical") {
  const CliWorkspace& ws = workspace();
  const std::string out = ws.root + "/resynth";
  const std::string first = ws.root + "/resynth_first";
  const std::string cmd = "synth --config " + ws.scene + " --recordings 2 --seed 7 --out " + out;

  REQUIRE(run_cli(cmd).exit_code == 0);
  fs::rename(out, first);
  REQUIRE(run_cli(cmd).exit_code == 0);

  require_identical_trees(first, out);  // includes run.json and every frame
}

TEST_CASE("the pipeline runs end to end from synthesis to report") {
  const CliWorkspace& ws = workspace();
  const std::string manifests = ws.root + "/manifests";
  const std::string cache = ws.root + "/cache";

  const CommandResult windows =
      run_cli("--log-level error --seed 5 windows --data " + ws.data + " --out " + manifests +
              " --n 6 --stride 20 --margin 10 --val-fraction 0.25");
  REQUIRE(windows.exit_code == 0);
  const nlohmann::json summary = nlohmann::json::parse(windows.output);
  REQUIRE(summary.at("windows").get<int64_t>() ==
          summary.at("NLC").get<int64_t>() + summary.at("LLC").get<int64_t>() +
              summary.at("RLC").get<int64_t>());
  REQUIRE(summary.at("LLC").get<int64_t>() == 2);
  REQUIRE(summary.at("RLC").get<int64_t>() == 2);
  const int64_t train_rows = manifest_rows(manifests + "/train.csv");
  const int64_t val_rows = manifest_rows(manifests + "/val.csv");
  REQUIRE(train_rows + val_rows == summary.at("windows").get<int64_t>());

  REQUIRE(run_cli("--log-level error extract --data " + ws.data + " --out " + cache +
                  " --scale 2 --size 32")
              .exit_code == 0);

  const nlohmann::json train_cfg{{"model", "baseline"},
                                 {"observation_frames", 6},
                                 {"tte", 0},
                                 {"scale", 2},
                                 {"input_size", 32},
                                 {"width_multiplier", 0.0625},
                                 {"batch_size", 8},
                                 {"epochs", 2},
                                 {"learning_rate", 0.02},
                                 {"seed", 11},
                                 {"cache", cache},
                                 {"train_manifest", manifests + "/train.csv"},
                                 {"val_manifest", manifests + "/val.csv"}};
  const std::string cfg_path = ws.root + "/train.json";
  write_binary_file(cfg_path, train_cfg.dump(2));

  const std::string run1 = ws.root + "/run1";
  const CommandResult train =
      run_cli("--log-level error train --config " + cfg_path + " --out " + run1);
  REQUIRE(train.exit_code == 0);
  REQUIRE(fs::exists(run1 + "/run.json"));  // resolved config, written before training
  REQUIRE(fs::exists(run1 + "/model.ckpt"));
  const nlohmann::json history =
      nlohmann::json::parse(read_binary_file(run1 + "/history.json"));
  REQUIRE(history.at("epochs").size() == 2);
  const int64_t steps_per_epoch = (train_rows + 7) / 8;
  REQUIRE(history.at("steps").get<int64_t>() == 2 * steps_per_epoch);

  // same config, fresh run: checkpoint bytes match exactly
  const std::string run2 = ws.root + "/run2";
  REQUIRE(run_cli("--log-level error train --config " + cfg_path + " --out " + run2).exit_code == 0);
  REQUIRE(read_binary_file(run1 + "/model.ckpt") == read_binary_file(run2 + "/model.ckpt"));
  REQUIRE(read_binary_file(run1 + "/history.json") == read_binary_file(run2 + "/history.json"));

  const std::string evaldir = ws.root + "/eval1";
  const CommandResult eval = run_cli("--log-level error eval --ckpt " + run1 +
                                     "/model.ckpt --manifest " + manifests + "/val.csv --cache " +
                                     cache + " --out " + evaldir);
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.output.find("accuracy") != std::string::npos);
  CHECK(eval.output.find("precision") != std::string::npos);
  REQUIRE(fs::exists(evaldir + "/report.json"));

  // the written text report is exactly what eval printed
  const auto report_txt = read_binary_file(evaldir + "/report.txt");
  REQUIRE(std::string(report_txt.begin(), report_txt.end()) == eval.output);

  // report re-renders the metrics file to the same table
  const CommandResult report =
      run_cli("--log-level error report --input " + evaldir + "/report.json");
  REQUIRE(report.exit_code == 0);
  REQUIRE(report.output == eval.output);
}

TEST_CASE("config mistakes exit 2 and missing or bad inputs exit 1") {
  const CliWorkspace& ws = workspace();

  const CommandResult absent = run_cli("train --config " + ws.root + "/absent.json --out " +
                                       ws.root + "/x");
  CHECK(absent.exit_code == 1);
  CHECK(absent.output.find("io:") != std::string::npos);

  const std::string bad_model = ws.root + "/bad_model.json";
  write_binary_file(bad_model, R"({"model": "transformer"})");
  const CommandResult bad = run_cli("train --config " + bad_model + " --out " + ws.root + "/x");
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("config:") != std::string::npos);

  const std::string no_cache = ws.root + "/no_cache.json";
  write_binary_file(no_cache, R"({"model": "baseline", "train_manifest": "t.csv"})");
  const CommandResult missing_cache =
      run_cli("train --config " + no_cache + " --out " + ws.root + "/x");
  CHECK(missing_cache.exit_code == 2);
  CHECK(missing_cache.output.find("cache") != std::string::npos);

  const std::string empty_manifest = ws.root + "/empty.csv";
  write_binary_file(empty_manifest, "recording,vehicle_id,start,end,label,scale\n");
  const std::string run1_ckpt = ws.root + "/run1/model.ckpt";
  if (fs::exists(run1_ckpt)) {
    const CommandResult empty = run_cli("eval --ckpt " + run1_ckpt + " --manifest " +
                                        empty_manifest + " --cache " + ws.root + "/cache");
    CHECK(empty.exit_code == 1);
    CHECK(empty.output.find("validation:") != std::string::npos);
  }

  const std::string no_recordings = ws.root + "/empty_dataset";
  fs::create_directories(no_recordings);
  const CommandResult none = run_cli("stats --data " + no_recordings);
  CHECK(none.exit_code == 1);
  CHECK(none.output.find("validation:") != std::string::npos);
}

TEST_CASE("sweep renders a table that report reproduces from its metrics") {
  const CliWorkspace& ws = workspace();
  const std::string cache = ws.root + "/cache";
  if (!fs::exists(cache)) {
    REQUIRE(run_cli("--log-level error extract --data " + ws.data + " --out " + cache +
                    " --scale 2 --size 32")
                .exit_code == 0);
  }

  const nlohmann::json grid{
      {"base",
       {{"observation_frames", 6},
        {"tte", 0},
        {"scale", 2},
        {"input_size", 32},
        {"width_multiplier", 0.0625},
        {"batch_size", 8},
        {"epochs", 1},
        {"learning_rate", 0.02},
        {"seed", 11}}},
      {"models", {"baseline", "disjoint"}},
      {"dataset",
       {{"nlc_stride", 20}, {"nlc_exclusion_margin", 10}, {"val_fraction", 0.25}, {"split_seed", 5}}}};
  const std::string grid_path = ws.root + "/grid.json";
  write_binary_file(grid_path, grid.dump(2));

  const std::string out = ws.root + "/sweep";
  const CommandResult sweep = run_cli("--log-level error sweep --grid " + grid_path + " --data " +
                                      ws.data + " --cache " + cache + " --out " + out);
  REQUIRE(sweep.exit_code == 0);
  CHECK(sweep.output.find("baseline") != std::string::npos);
  CHECK(sweep.output.find("disjoint") != std::string::npos);
  CHECK(sweep.output.find("x2") != std::string::npos);
  REQUIRE(fs::exists(out + "/checkpoints/cell_00_baseline_n6_tte0_x2.ckpt"));

  const auto table = read_binary_file(out + "/sweep.txt");
  REQUIRE(std::string(table.begin(), table.end()) == sweep.output);

  const CommandResult report = run_cli("report --input " + out + "/sweep.json");
  REQUIRE(report.exit_code == 0);
  REQUIRE(report.output == sweep.output);

  const std::string bad_grid = ws.root + "/bad_grid.json";
  write_binary_file(bad_grid, R"({"bogus": 1})");
  const CommandResult rejected = run_cli("sweep --grid " + bad_grid + " --data " + ws.data +
                                         " --cache " + cache + " --out " + ws.root + "/x");
  CHECK(rejected.exit_code == 2);
  CHECK(rejected.output.find("unknown grid key") != std::string::npos);
}
