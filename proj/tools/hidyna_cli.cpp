// hidyna: hierarchical dynamic scene graph pipelines behind one entry point.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hidyna/agent.hpp"
#include "hidyna/dynamic_builder.hpp"
#include "hidyna/fusion.hpp"
#include "hidyna/graph_store.hpp"
#include "hidyna/json_codec.hpp"
#include "hidyna/sim_eval.hpp"
#include "hidyna/static_builder.hpp"
#include "hidyna/store_service.hpp"
#include "hidyna/version.hpp"

namespace fs = std::filesystem;
using namespace hidyna;

namespace {

void print_resolved(const std::string& subcommand, const json& cfg) {
  std::cerr << subcommand << " config: " << cfg.dump() << "\n";
}

std::set<std::string> read_class_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open class file '" + path + "'");
  std::set<std::string> classes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) classes.insert(to_lower(line));
  }
  return classes;
}

std::vector<std::string> read_skills_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open skills file '" + path + "'");
  std::vector<std::string> skills;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) skills.push_back(line);
  }
  return skills;
}

std::vector<std::string> default_skills() {
  return {"navigate to {object} in {region}", "pick {object} in {region}",
          "place {object} in {region}"};
}

const char* kDefaultSystemContext =
    "You are an embodied service robot operating in a multi-room building. "
    "Read the scene structures and ongoing relations, decide whether any "
    "optional skill helps, and reply with an ordered list of steps of the "
    "form 'navigate to / pick / place {object} in {region}'.";

struct DynFile {
  std::string camera;
  std::int64_t tick;
  fs::path path;
};

std::vector<DynFile> scan_dyn_dir(const std::string& dir) {
  std::vector<DynFile> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    // dyn.<camera>.<tick>.json
    if (name.rfind("dyn.", 0) != 0 || entry.path().extension() != ".json") continue;
    const std::string stem = name.substr(4, name.size() - 4 - 5);
    auto dot = stem.rfind('.');
    if (dot == std::string::npos) continue;
    try {
      out.push_back({stem.substr(0, dot), std::stoll(stem.substr(dot + 1)), entry.path()});
    } catch (...) {
      continue;
    }
  }
  std::sort(out.begin(), out.end(), [](const DynFile& a, const DynFile& b) {
    return std::tie(a.tick, a.camera) < std::tie(b.tick, b.camera);
  });
  return out;
}

UnifiedSnapshot load_store_snapshot(const std::string& store) {
  if (store.rfind("http://", 0) == 0 || store.rfind("https://", 0) == 0)
    return fetch_latest_snapshot(store);
  // Directory of snap.<tick>.json files: pick the highest tick.
  std::optional<fs::path> best;
  std::int64_t best_tick = -1;
  for (const auto& entry : fs::directory_iterator(store)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("snap.", 0) != 0 || entry.path().extension() != ".json") continue;
    try {
      std::int64_t t = std::stoll(name.substr(5, name.size() - 5 - 5));
      if (t > best_tick) {
        best_tick = t;
        best = entry.path();
      }
    } catch (...) {
      continue;
    }
  }
  if (!best) throw ValidationError("no snap.<tick>.json files in '" + store + "'");
  return json_from_file(best->string()).get<UnifiedSnapshot>();
}

struct DemoOptions {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string mock_path;
  std::string skills_path;
  std::string log_path;
};

int run_demo(const DemoOptions& opt) {
  Scenario scenario = load_scenario(opt.scenario_path);
  PipelineConfig cfg;

  std::string mock = opt.mock_path;
  if (mock.empty()) {
    auto sibling = fs::path(opt.scenario_path).parent_path() / "mock_llm.json";
    if (!fs::exists(sibling))
      throw ValidationError("demo: no --mock given and no mock_llm.json next to the scenario");
    mock = sibling.string();
  }
  LlmEndpointConfig llm;
  llm.mock_script = mock;

  auto skills = opt.skills_path.empty() ? default_skills() : read_skills_file(opt.skills_path);

  ScenarioRun run(scenario, cfg, opt.seed);
  GraphStore store(run.base());

  std::ofstream log;
  if (!opt.log_path.empty()) {
    log.open(opt.log_path, std::ios::binary);
    if (!log) throw std::runtime_error("cannot write '" + opt.log_path + "'");
  }
  auto emit = [&](const json& j) {
    if (log.is_open()) log << j.dump() << '\n';
  };

  std::string robot_region = scenario.robot_start;
  if (robot_region.empty()) robot_region = run.base().regions.front().id;

  std::int64_t tick = 0;
  auto advance = [&] {
    ++tick;
    store.commit(run.snapshot_at(tick));
  };

  bool plan_done = false;
  bool plan_completed = false;
  std::string halt_reason;

  while (tick < run.ticks()) {
    advance();
    if (plan_done) continue;

    auto snap = store.latest();
    auto bundle = render_prompt(*snap, skills, kDefaultSystemContext);
    std::string reply = query_llm(bundle, llm);

    TaskPlan plan;
    try {
      plan = parse_plan(reply, *snap);
    } catch (const NoActionablePlan&) {
      std::cout << "tick " << tick << ": no actionable plan\n";
      emit({{"tick", tick}, {"event", "idle"}});
      continue;
    } catch (const PlanValidationError& e) {
      std::cout << "tick " << tick << ": plan rejected: " << e.what() << "\n";
      emit({{"tick", tick}, {"event", "rejected"}, {"reasons", e.step_errors}});
      continue;
    }

    std::cout << "tick " << tick << ": plan accepted\n" << format_plan(plan);
    emit({{"tick", tick}, {"event", "plan"}, {"plan", plan}});

    auto exec = execute_plan(plan, store, robot_region, [&](std::size_t) {
      if (tick < run.ticks()) advance();
    });
    for (const auto& rec : exec.records) {
      std::cout << "  step " << rec.step_index + 1 << " " << verb_name(rec.step.verb) << " "
                << rec.step.object << " in " << rec.step.region << ": "
                << (rec.ok ? "ok" : "FAILED") << " (" << rec.note << ")\n";
      emit({{"tick", tick}, {"event", "step"}, {"record", rec}});
      robot_region = rec.robot_region;
    }
    plan_done = true;
    plan_completed = exec.completed;
    if (!exec.completed && !exec.records.empty()) halt_reason = exec.records.back().note;
    emit({{"tick", tick},
          {"event", "result"},
          {"completed", exec.completed},
          {"steps_ok", std::count_if(exec.records.begin(), exec.records.end(),
                                     [](const ExecutionRecord& r) { return r.ok; })},
          {"steps", exec.records.size()}});
  }

  if (!plan_done) {
    std::cout << "demo finished: no plan was triggered\n";
    emit({{"event", "summary"}, {"outcome", "no-plan"}});
  } else if (plan_completed) {
    std::cout << "demo finished: plan completed\n";
    emit({{"event", "summary"}, {"outcome", "completed"}});
  } else {
    std::cout << "demo finished: plan halted (" << halt_reason << ")\n";
    emit({{"event", "summary"}, {"outcome", "halted"}, {"reason", halt_reason}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical dynamic scene graph engine"};
  app.set_version_flag("--version", std::string{kVersion});
  app.set_config("--config");
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::int64_t global_seed = -1;
  app.add_option("--seed", global_seed, "override scenario rng seed")->envname("HIDYNA_SEED");
  auto seed_opt = [&]() -> std::optional<std::uint64_t> {
    if (global_seed < 0) return std::nullopt;
    return std::uint64_t(global_seed);
  };

  // build-static
  auto* cmd_static = app.add_subcommand("build-static", "build the global static graph");
  std::string frames_path, regions_path, doorways_path, out_path, classes_path;
  StaticBuildConfig static_cfg;
  cmd_static->add_option("--frames", frames_path, "posed observation jsonl")->required();
  cmd_static->add_option("--regions", regions_path, "region annotation json")->required();
  cmd_static->add_option("--doorways", doorways_path, "doorway annotation json")->required();
  cmd_static->add_option("--out", out_path, "output graph json")->required();
  cmd_static->add_option("--vthr", static_cfg.v_thr, "volume threshold (m^3)");
  cmd_static->add_option("--classes", classes_path, "static class list, one label per line");
  cmd_static->add_option("--merge-overlap", static_cfg.merge_overlap, "duplicate merge overlap");
  cmd_static->add_option("--connectivity-gap", static_cfg.connectivity_gap_m,
                         "doorway-to-footprint gap (m)");

  // run-dynamic
  auto* cmd_dyn = app.add_subcommand("run-dynamic", "build per-window dynamic subgraphs");
  std::string stream_path, dyn_out_dir;
  DynamicConfig dyn_cfg;
  cmd_dyn->add_option("--stream", stream_path, "per-camera stream jsonl")->required();
  cmd_dyn->add_option("--out", dyn_out_dir, "output directory")->required();
  cmd_dyn->add_option("--window", dyn_cfg.window_s, "window length (s)");
  cmd_dyn->add_option("--hz", dyn_cfg.frame_hz, "frame rate (Hz)");
  cmd_dyn->add_option("--top-k", dyn_cfg.top_k, "pair proposal budget");
  cmd_dyn->add_option("--priority-fraction", dyn_cfg.priority_fraction,
                      "prioritized share of top-k");
  cmd_dyn->add_option("--merge-gap", dyn_cfg.merge_gap_s, "span consolidation gap (s)");

  // fuse
  auto* cmd_fuse = app.add_subcommand("fuse", "anchor dynamic subgraphs to the static graph");
  std::string fuse_static, fuse_dyn_dir, fuse_mode = "spatial", camera_region_path, fuse_out;
  std::int64_t fuse_tick_id = -1;
  FusionConfig fusion_cfg;
  cmd_fuse->add_option("--static", fuse_static, "static graph json")->required();
  cmd_fuse->add_option("--dynamic", fuse_dyn_dir, "directory of dyn.<camera>.<tick>.json")
      ->required();
  cmd_fuse->add_option("--mode", fuse_mode, "spatial|semantic")
      ->check(CLI::IsMember({"spatial", "semantic"}));
  cmd_fuse->add_option("--bthr", fusion_cfg.b_thr, "merge overlap threshold");
  cmd_fuse->add_option("--camera-region", camera_region_path, "camera->region map json");
  cmd_fuse->add_option("--tick", fuse_tick_id, "tick to fuse (default: latest)");
  cmd_fuse->add_option("--out", fuse_out, "output snapshot json")->required();

  // serve-store
  auto* cmd_serve = app.add_subcommand("serve-store", "serve a snapshot over HTTP");
  std::string serve_snapshot, serve_host = "127.0.0.1";
  int serve_port = 8080;
  cmd_serve->add_option("--snapshot", serve_snapshot, "snapshot json")->required();
  cmd_serve->add_option("--host", serve_host, "bind host");
  cmd_serve->add_option("--port", serve_port, "bind port");

  // agent
  auto* cmd_agent = app.add_subcommand("agent", "one reason-plan-execute cycle");
  std::string agent_store, agent_skills, agent_llm_url, agent_mock, agent_log, agent_start;
  cmd_agent->add_option("--store", agent_store, "store URL or snapshot directory")->required();
  cmd_agent->add_option("--skills", agent_skills, "skills file, one per line");
  cmd_agent->add_option("--llm-endpoint", agent_llm_url, "LLM endpoint URL")
      ->envname("HIDYNA_LLM_ENDPOINT");
  cmd_agent->add_option("--mock", agent_mock, "mock LLM script json");
  cmd_agent->add_option("--log", agent_log, "execution log jsonl");
  cmd_agent->add_option("--start-region", agent_start, "robot start region");

  // simulate
  auto* cmd_sim = app.add_subcommand("simulate", "emit perception streams and ground truth");
  std::string sim_scenario, sim_out;
  cmd_sim->add_option("--scenario", sim_scenario, "scenario json")->required();
  cmd_sim->add_option("--out", sim_out, "output directory")->required();

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "run the evaluation protocol");
  std::string eval_scenario, eval_config, eval_report, eval_csv, eval_synonyms;
  cmd_eval->add_option("--scenario", eval_scenario, "scenario json")->required();
  cmd_eval->add_option("--config,--pipeline", eval_config, "pipeline config json");
  cmd_eval->add_option("--report", eval_report, "report json")->required();
  cmd_eval->add_option("--csv", eval_csv, "also write csv");
  cmd_eval->add_option("--synonyms", eval_synonyms, "synonym map json");

  // demo
  auto* cmd_demo = app.add_subcommand("demo", "simulate -> dynamic -> fuse -> agent loop");
  DemoOptions demo;
  cmd_demo->add_option("--scenario", demo.scenario_path, "scenario json")->required();
  cmd_demo->add_option("--mock", demo.mock_path, "mock LLM script json");
  cmd_demo->add_option("--skills", demo.skills_path, "skills file");
  cmd_demo->add_option("--log", demo.log_path, "demo log jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*cmd_static) {
      if (!classes_path.empty()) static_cfg.static_classes = read_class_file(classes_path);
      print_resolved("build-static", json(static_cfg));
      auto frames = load_frames_jsonl(frames_path);
      auto regions = load_regions(regions_path);
      auto doorways = load_doorways(doorways_path);
      std::vector<std::string> warnings;
      auto graph = build_static_graph(frames, regions, doorways, static_cfg, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      json_to_file(out_path, json(graph));
      std::cout << "static graph: " << graph.regions.size() << " regions, "
                << graph.static_objects.size() << " objects, " << graph.static_edges.size()
                << " edges -> " << out_path << "\n";
    } else if (*cmd_dyn) {
      print_resolved("run-dynamic", json(dyn_cfg));
      auto stream = read_stream_jsonl(stream_path);
      if (stream.frames.empty()) throw ValidationError("stream has no frames");
      const std::string camera = stream.frames.front().camera_id;
      for (const auto& f : stream.frames)
        if (f.camera_id != camera)
          throw ValidationError("run-dynamic expects a single-camera stream");
      fs::create_directories(dyn_out_dir);
      const std::int64_t n = last_tick(stream, dyn_cfg.window_s);
      for (std::int64_t k = 1; k <= n; ++k) {
        auto sub = build_subgraph(stream.frames, stream.candidates, camera,
                                  double(k - 1) * dyn_cfg.window_s, double(k) * dyn_cfg.window_s,
                                  dyn_cfg);
        auto path = fs::path(dyn_out_dir) / ("dyn." + camera + "." + std::to_string(k) + ".json");
        json_to_file(path.string(), json(sub));
      }
      std::cout << "wrote " << n << " windows for camera " << camera << " -> " << dyn_out_dir
                << "\n";
    } else if (*cmd_fuse) {
      fusion_cfg.mode = fuse_mode == "semantic" ? FusionMode::Semantic : FusionMode::Spatial;
      if (!camera_region_path.empty())
        fusion_cfg.camera_region =
            json_from_file(camera_region_path).get<std::map<std::string, std::string>>();
      print_resolved("fuse", json(fusion_cfg));
      auto base = json_from_file(fuse_static).get<GlobalGraph>();
      auto files = scan_dyn_dir(fuse_dyn_dir);
      if (files.empty()) throw ValidationError("no dyn.<camera>.<tick>.json files in '" +
                                               fuse_dyn_dir + "'");
      std::int64_t tick = fuse_tick_id >= 0 ? fuse_tick_id : files.back().tick;
      std::vector<DynamicSubgraph> subs;
      for (const auto& f : files)
        if (f.tick == tick) subs.push_back(json_from_file(f.path.string()).get<DynamicSubgraph>());
      if (subs.empty()) throw ValidationError("no subgraphs for tick " + std::to_string(tick));
      auto snap = fuse_tick(base, subs, fusion_cfg, tick);
      validate_snapshot(snap);
      json_to_file(fuse_out, json(snap));
      std::cout << "fused tick " << tick << ": " << subs.size() << " subgraph(s), "
                << snap.merges.size() << " merge(s) -> " << fuse_out << "\n";
    } else if (*cmd_serve) {
      auto snap = json_from_file(serve_snapshot).get<UnifiedSnapshot>();
      GraphStore store(snap.base);
      store.commit(snap);
      StoreService service(store);
      std::cout << "serving snapshot tick " << snap.tick << " on http://" << serve_host << ":"
                << serve_port << "\n";
      if (!service.listen(serve_host, serve_port))
        throw std::runtime_error("cannot bind " + serve_host + ":" + std::to_string(serve_port));
    } else if (*cmd_agent) {
      auto snap = load_store_snapshot(agent_store);
      GraphStore store(snap.base);
      store.commit(snap);
      auto skills = agent_skills.empty() ? default_skills() : read_skills_file(agent_skills);

      LlmEndpointConfig llm;
      if (!agent_mock.empty()) llm.mock_script = agent_mock;
      else if (!agent_llm_url.empty()) llm.url = agent_llm_url;
      else throw ValidationError("agent: need --mock or --llm-endpoint");

      std::ofstream log;
      if (!agent_log.empty()) {
        log.open(agent_log, std::ios::binary);
        if (!log) throw std::runtime_error("cannot write '" + agent_log + "'");
      }
      auto emit = [&](const json& j) {
        if (log.is_open()) log << j.dump() << '\n';
      };

      auto latest = store.latest();
      auto bundle = render_prompt(*latest, skills, kDefaultSystemContext);
      emit({{"kind", "prompt"}, {"tick", bundle.snapshot_tick}, {"rendered", bundle.rendered}});
      std::string reply = query_llm(bundle, llm);
      emit({{"kind", "reply"}, {"text", reply}});

      try {
        auto plan = parse_plan(reply, *latest);
        emit({{"kind", "plan"}, {"plan", plan}});
        std::cout << format_plan(plan);
        std::string start = agent_start.empty() ? latest->base.regions.front().id : agent_start;
        auto exec = execute_plan(plan, store, start);
        for (const auto& rec : exec.records) {
          emit({{"kind", "step"}, {"record", rec}});
          std::cout << "step " << rec.step_index + 1 << ": " << (rec.ok ? "ok" : "FAILED") << " ("
                    << rec.note << ")\n";
        }
        emit({{"kind", "result"}, {"completed", exec.completed}});
        std::cout << (exec.completed ? "plan completed\n" : "plan halted\n");
      } catch (const NoActionablePlan&) {
        emit({{"kind", "result"}, {"completed", false}, {"note", "no actionable plan"}});
        std::cout << "no actionable plan\n";
      } catch (const PlanValidationError& e) {
        emit({{"kind", "result"}, {"completed", false}, {"note", e.what()}});
        std::cout << "plan rejected: " << e.what() << "\n";
      }
    } else if (*cmd_sim) {
      auto scenario = load_scenario(sim_scenario);
      print_resolved("simulate", {{"scenario", sim_scenario},
                                  {"seed", global_seed >= 0 ? std::uint64_t(global_seed)
                                                            : scenario.noise.rng_seed}});
      auto sim = simulate(scenario, seed_opt());
      write_simulation(sim, scenario, sim_out);
      std::size_t frames = 0;
      for (const auto& [_, s] : sim.streams) frames += s.frames.size();
      std::cout << "simulated " << scenario.duration_s << " s: " << sim.streams.size()
                << " stream(s), " << frames << " frames, " << sim.ground_truth.ticks.size()
                << " gt ticks -> " << sim_out << "\n";
    } else if (*cmd_eval) {
      auto scenario = load_scenario(eval_scenario);
      PipelineConfig cfg;
      if (!eval_config.empty()) cfg = json_from_file(eval_config).get<PipelineConfig>();
      print_resolved("eval", json(cfg));
      std::optional<SynonymMap> syn;
      if (!eval_synonyms.empty()) syn = SynonymMap::from_file(eval_synonyms);
      auto report = run_eval(scenario, cfg, seed_opt(), syn ? &*syn : nullptr);
      json_to_file(eval_report, json(report));
      if (!eval_csv.empty()) write_report_csv(report, eval_csv);
      for (const auto& iv : report.intervals)
        std::cout << "t=" << iv.time << " tick=" << iv.tick << " v_acc=" << iv.v_acc
                  << " e_acc=" << iv.e_acc << "\n";
      std::cout << "mean v_acc=" << report.mean_v_acc() << " -> " << eval_report << "\n";
    } else if (*cmd_demo) {
      demo.seed = seed_opt();
      return run_demo(demo);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
