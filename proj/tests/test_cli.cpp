#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hidyna/json_codec.hpp"
#include "hidyna/sim_eval.hpp"
#include "hidyna/store_service.hpp"

using namespace hidyna;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  std::string cmd = std::string{"\""} + HIDYNA_CLI_PATH + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
  int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

const std::string kScenario = std::string{HIDYNA_SCENARIO_DIR} + "/cafeteria.json";
const std::string kAdversarial = std::string{HIDYNA_SCENARIO_DIR} + "/cafeteria_adversarial.json";

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hidyna_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: version and usage errors") {
  CHECK(run_cli("--version").output.find("0.1.0") != std::string::npos);
  CHECK(run_cli("--version").exit_code == 0);

  auto no_sub = run_cli("");
  CHECK(no_sub.exit_code == 1);

  auto unknown = run_cli("frobnicate");
  CHECK(unknown.exit_code == 1);

  auto missing = run_cli("build-static --regions r.json");
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("--frames") != std::string::npos);

  auto badflag = run_cli("simulate --scenario x.json --out y --no-such-flag");
  CHECK(badflag.exit_code == 1);
}

TEST_CASE("cli: simulate -> build-static -> run-dynamic -> fuse -> agent pipeline") {
  auto dir = fresh_dir("pipeline");
  auto sim = run_cli("simulate --scenario " + kScenario + " --seed 1 --out " + dir.string());
  INFO(sim.output);
  REQUIRE(sim.exit_code == 0);
  CHECK(fs::exists(dir / "stream.cam-cafe.jsonl"));
  CHECK(fs::exists(dir / "stream.cam-lab.jsonl"));
  CHECK(fs::exists(dir / "static_frames.jsonl"));
  CHECK(fs::exists(dir / "gt.json"));

  auto bs = run_cli("build-static --frames " + (dir / "static_frames.jsonl").string() +
                    " --regions " + (dir / "regions.json").string() + " --doorways " +
                    (dir / "doorways.json").string() + " --out " + (dir / "static.json").string());
  INFO(bs.output);
  REQUIRE(bs.exit_code == 0);
  auto g = json_from_file((dir / "static.json").string());
  CHECK(g.at("static_objects").size() == 6);
  CHECK(g.at("regions").size() == 3);

  for (const char* cam : {"cam-cafe", "cam-lab"}) {
    auto rd = run_cli("run-dynamic --stream " + (dir / ("stream." + std::string{cam} + ".jsonl")).string() +
                      " --window 10 --hz 5 --top-k 20 --out " + dir.string());
    INFO(rd.output);
    REQUIRE(rd.exit_code == 0);
  }
  CHECK(fs::exists(dir / "dyn.cam-cafe.2.json"));
  CHECK(fs::exists(dir / "dyn.cam-lab.6.json"));

  auto fz = run_cli("fuse --static " + (dir / "static.json").string() + " --dynamic " +
                    dir.string() + " --mode spatial --bthr 0.6 --tick 2 --out " +
                    (dir / "snap.2.json").string());
  INFO(fz.output);
  REQUIRE(fz.exit_code == 0);
  auto snap = json_from_file((dir / "snap.2.json").string());
  CHECK(snap.at("tick") == 2);
  CHECK(snap.at("merges").size() == 6);

  // Semantic fusion over the same subgraphs with a camera->region map.
  json_to_file((dir / "camera_region.json").string(),
               json{{"cam-cafe", "cafeteria"}, {"cam-lab", "laboratory"}});
  auto fz_sem = run_cli("fuse --static " + (dir / "static.json").string() + " --dynamic " +
                        dir.string() + " --mode semantic --camera-region " +
                        (dir / "camera_region.json").string() + " --tick 2 --out " +
                        (dir / "snap_sem.2.json").string());
  INFO(fz_sem.output);
  REQUIRE(fz_sem.exit_code == 0);
  auto sem = json_from_file((dir / "snap_sem.2.json").string());
  CHECK(sem.at("merges").size() >= 1);  // designated-class fixtures match their statics

  // Agent against the snapshot directory with a scripted reply.
  json_to_file((dir / "mock.json").string(),
               json{{"2", "1. navigate to counter in cafeteria\n2. pick coffee in cafeteria"},
                    {"default", "nothing"}});
  auto ag = run_cli("agent --store " + dir.string() + " --mock " + (dir / "mock.json").string() +
                    " --start-region laboratory --log " + (dir / "agent.jsonl").string());
  INFO(ag.output);
  REQUIRE(ag.exit_code == 0);
  CHECK(ag.output.find("plan completed") != std::string::npos);
  CHECK(fs::exists(dir / "agent.jsonl"));
}

TEST_CASE("cli: identical seeds produce byte-identical outputs") {
  auto d1 = fresh_dir("det1");
  auto d2 = fresh_dir("det2");
  REQUIRE(run_cli("simulate --scenario " + kScenario + " --seed 9 --out " + d1.string())
              .exit_code == 0);
  REQUIRE(run_cli("simulate --scenario " + kScenario + " --seed 9 --out " + d2.string())
              .exit_code == 0);
  for (const char* f : {"stream.cam-cafe.jsonl", "stream.cam-lab.jsonl", "gt.json",
                        "static_frames.jsonl"})
    CHECK(file_bytes(d1 / f) == file_bytes(d2 / f));
}

TEST_CASE("cli: eval emits a report with perfect scores on the clean demo scenario") {
  auto dir = fresh_dir("eval");
  auto ev = run_cli("eval --scenario " + kScenario + " --report " +
                    (dir / "report.json").string() + " --csv " + (dir / "report.csv").string());
  INFO(ev.output);
  REQUIRE(ev.exit_code == 0);
  auto report = json_from_file((dir / "report.json").string());
  REQUIRE(report.at("intervals").size() == 1);
  CHECK(report.at("intervals")[0].at("v_acc") == 1.0);
  CHECK(report.at("intervals")[0].at("e_acc") == 1.0);
  CHECK(fs::exists(dir / "report.csv"));

  // Pipeline parameters load from --config (eval-scoped, JSON).
  json_to_file((dir / "pipeline.json").string(),
               json{{"eval_interval_s", 30.0}, {"fusion", {{"b_thr", 0.6}}}});
  auto ev2 = run_cli("eval --scenario " + kScenario + " --config " +
                     (dir / "pipeline.json").string() + " --report " +
                     (dir / "report2.json").string());
  INFO(ev2.output);
  REQUIRE(ev2.exit_code == 0);
  CHECK(json_from_file((dir / "report2.json").string()).at("intervals").size() == 2);
}

TEST_CASE("cli: demo completes the delivery plan; adversarial variant halts") {
  auto demo = run_cli("demo --scenario " + kScenario + " --seed 1");
  INFO(demo.output);
  REQUIRE(demo.exit_code == 0);
  CHECK(demo.output.find("plan accepted") != std::string::npos);
  CHECK(demo.output.find("step 4 place coffee in laboratory: ok") != std::string::npos);
  CHECK(demo.output.find("demo finished: plan completed") != std::string::npos);

  auto bad = run_cli("demo --scenario " + kAdversarial + " --seed 1");
  INFO(bad.output);
  REQUIRE(bad.exit_code == 0);
  CHECK(bad.output.find("FAILED") != std::string::npos);
  CHECK(bad.output.find("not found") != std::string::npos);
  CHECK(bad.output.find("demo finished: plan halted") != std::string::npos);
}

TEST_CASE("cli: agent consumes a snapshot from a live store URL") {
  auto dir = fresh_dir("agent_url");

  // Build a snapshot through the library and serve it in-process.
  auto scenario = load_scenario(kScenario);
  ScenarioRun run(scenario, PipelineConfig{});
  GraphStore store(run.base());
  store.commit(run.snapshot_at(2));
  StoreService service(store);
  int port = service.start_async();

  json_to_file((dir / "mock.json").string(),
               json{{"2", "1. pick coffee in cafeteria"}, {"default", "nothing"}});
  auto ag = run_cli("agent --store http://127.0.0.1:" + std::to_string(port) + " --mock " +
                    (dir / "mock.json").string() + " --start-region cafeteria");
  INFO(ag.output);
  CHECK(ag.exit_code == 0);
  CHECK(ag.output.find("plan completed") != std::string::npos);
  service.stop();
}

TEST_CASE("cli: seed resolves with flag > env > default precedence") {
  auto flag_dir = fresh_dir("seed_flag");
  auto env_dir = fresh_dir("seed_env");
  auto both_dir = fresh_dir("seed_both");

  // Noise makes the seed observable in the byte stream.
  auto noisy = json_from_file(kScenario);
  noisy["noise"]["detection_dropout"] = 0.4;
  auto noisy_path = flag_dir / "noisy.json";
  json_to_file(noisy_path.string(), noisy);

  REQUIRE(run_cli("simulate --scenario " + noisy_path.string() + " --seed 4 --out " +
                  flag_dir.string())
              .exit_code == 0);
  setenv("HIDYNA_SEED", "4", 1);
  REQUIRE(run_cli("simulate --scenario " + noisy_path.string() + " --out " + env_dir.string())
              .exit_code == 0);
  // Flag beats the environment.
  setenv("HIDYNA_SEED", "99", 1);
  REQUIRE(run_cli("simulate --scenario " + noisy_path.string() + " --seed 4 --out " +
                  both_dir.string())
              .exit_code == 0);
  unsetenv("HIDYNA_SEED");

  CHECK(file_bytes(flag_dir / "stream.cam-cafe.jsonl") ==
        file_bytes(env_dir / "stream.cam-cafe.jsonl"));
  CHECK(file_bytes(flag_dir / "stream.cam-cafe.jsonl") ==
        file_bytes(both_dir / "stream.cam-cafe.jsonl"));
}

TEST_CASE("cli: invalid inputs exit with code 1") {
  auto dir = fresh_dir("bad");
  std::ofstream(dir / "broken.json") << "{not json";
  auto r = run_cli("simulate --scenario " + (dir / "broken.json").string() + " --out " +
                   dir.string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error") != std::string::npos);
}
