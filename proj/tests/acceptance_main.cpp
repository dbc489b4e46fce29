// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "hidyna/agent.hpp"
#include "hidyna/dynamic_builder.hpp"
#include "hidyna/fusion.hpp"
#include "hidyna/graph_store.hpp"
#include "hidyna/json_codec.hpp"
#include "hidyna/sim_eval.hpp"
#include "hidyna/static_builder.hpp"

#include "generators.hpp"

using namespace hidyna;
using namespace hidyna::testgen;

namespace {

int failures = 0;

class Criterion {
 public:
  Criterion(int id, std::string name)
      : id_(id), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& detail = {}) {
    if (!ok) {
      ok_ = false;
      if (!detail.empty() && notes_.empty()) notes_ = detail;
    }
  }

  void note(const std::string& text) {
    if (notes_.empty()) notes_ = text;
  }

  ~Criterion() {
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
    std::printf("%s criterion %d: %s (%.1f s)%s%s\n", ok_ ? "PASS" : "FAIL", id_, name_.c_str(),
                elapsed.count(), notes_.empty() ? "" : " -- ", notes_.c_str());
    std::fflush(stdout);
    if (!ok_) ++failures;
  }

  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  int id_;
  std::string name_;
  bool ok_ = true;
  std::string notes_;
  std::chrono::steady_clock::time_point start_;
};

std::string scenario_path(const std::string& file) {
  return std::string{HIDYNA_SCENARIO_DIR} + "/" + file;
}

// Independent fixpoint-merge oracle for span consolidation.
std::vector<TimeSpan> consolidate_oracle(std::vector<TimeSpan> spans, double gap) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < spans.size() && !changed; ++i) {
      for (std::size_t j = 0; j < spans.size() && !changed; ++j) {
        if (i == j) continue;
        const auto [a1, b1] = spans[i];
        const auto [a2, b2] = spans[j];
        if (a2 - b1 < gap && a1 - b2 < gap) {
          spans[i] = {std::min(a1, a2), std::max(b1, b2)};
          spans.erase(spans.begin() + long(j));
          changed = true;
        }
      }
    }
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

void criterion_1() {
  Criterion c(1, "span-consolidation oracle equivalence (10000 random lists)");
  c.check(consolidate_spans({{0, 5}, {6, 10}}, 2.0) == std::vector<TimeSpan>{{0, 10}},
          "[(0,5),(6,10)] example");
  Rng rng(10101);
  for (int trial = 0; trial < 10000; ++trial) {
    auto spans = random_spans(rng, 50);
    if (consolidate_spans(spans, 2.0) != consolidate_oracle(spans, 2.0)) {
      c.check(false, "mismatch at trial " + std::to_string(trial));
      return;
    }
  }
  c.check(c.elapsed_s() < 10.0, "runtime bound 10 s exceeded");
}

void criterion_2() {
  Criterion c(2, "pair-prioritization quota on 1000 random track sets");
  Rng rng(2222);
  DynamicConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    cfg.top_k = 1 + int(rng.next_below(30));
    std::vector<Track> tracks;
    const std::size_t n = 2 + rng.next_below(9);
    for (std::size_t i = 0; i < n; ++i) {
      Track t;
      t.track_id = std::int64_t(i);
      std::string label = random_label(rng);
      t.entries.push_back({0.0, label, {0, 0, 5, 5}, Feature{{1.0}}, {}});
      if (rng.bernoulli(0.7))
        t.entries.push_back({0.2, label, {0, 0, 5, 5}, Feature{{1.0}}, {}});
      tracks.push_back(std::move(t));
    }

    // Oracle: rebuild the candidate pools with the same orientation rule.
    std::size_t pool_p = 0, pool_o = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        std::string li = tracks[i].class_label(), lj = tracks[j].class_label();
        bool hi = cfg.is_human(li), hj = cfg.is_human(lj);
        std::string subj = li, obj = lj;
        if (hj && !hi) std::swap(subj, obj);
        else if (!hi && !hj && cfg.is_furniture(li) && !cfg.is_furniture(lj))
          std::swap(subj, obj);
        if (cfg.is_human(subj) || cfg.is_furniture(obj)) ++pool_p;
        else ++pool_o;
      }
    }
    const std::size_t k = std::size_t(cfg.top_k);
    const std::size_t quota = std::size_t(std::ceil(cfg.priority_fraction * double(cfg.top_k)));
    const std::size_t rest = k > quota ? k - quota : 0;
    std::size_t base_p = std::min(quota, pool_p), base_o = std::min(rest, pool_o);
    std::size_t expect_p = std::min(pool_p, base_p + (rest - base_o));
    std::size_t expect_o = std::min(pool_o, base_o + (quota - base_p));

    auto pairs = propose_pairs(tracks, cfg);
    auto pairs2 = propose_pairs(tracks, cfg);
    std::size_t got_p = 0;
    for (const auto& [s, o] : pairs) {
      const std::string sl = tracks[std::size_t(s)].class_label();
      const std::string ol = tracks[std::size_t(o)].class_label();
      if (cfg.is_human(sl) || cfg.is_furniture(ol)) ++got_p;
    }
    bool ok = pairs == pairs2 && pairs.size() <= k && got_p == expect_p &&
              pairs.size() - got_p == expect_o;
    if (!ok) {
      c.check(false, "trial " + std::to_string(trial) + ": got " + std::to_string(got_p) + "+" +
                         std::to_string(pairs.size() - got_p) + ", expected " +
                         std::to_string(expect_p) + "+" + std::to_string(expect_o));
      return;
    }
  }
}

void criterion_3() {
  Criterion c(3, "fusion invariants on 500 random pairs per mode, b_thr boundaries");
  Rng rng(3333);
  for (int mode_i = 0; mode_i < 2; ++mode_i) {
    const bool spatial = mode_i == 0;
    for (int trial = 0; trial < 500; ++trial) {
      auto base = random_global_graph(rng);
      FusionConfig cfg;
      cfg.mode = spatial ? FusionMode::Spatial : FusionMode::Semantic;
      cfg.b_thr = 0.6;
      std::vector<DynamicSubgraph> subs;
      const std::size_t nc = 1 + rng.next_below(2);
      for (std::size_t cam = 0; cam < nc; ++cam) {
        std::string id = "cam" + std::to_string(cam);
        cfg.camera_region[id] = base.regions[std::size_t(rng.next_below(base.regions.size()))].id;
        subs.push_back(random_subgraph(rng, base, id, 0.0, 10.0, spatial));
      }

      const std::string before = json(base).dump();
      UnifiedSnapshot snap;
      try {
        snap = fuse_tick(base, subs, cfg, 1);
        validate_snapshot(snap);  // anchoring totality: merged XOR anchored
      } catch (const std::exception& e) {
        c.check(false, std::string{spatial ? "spatial" : "semantic"} + " trial " +
                           std::to_string(trial) + ": " + e.what());
        return;
      }
      // Static preservation.
      if (json(base).dump() != before || json(snap.base).dump() != before) {
        c.check(false, "base mutated");
        return;
      }
      // Clearing: pure function of (base, subgraphs) regardless of history order.
      auto replay = fuse_tick(base, subs, cfg, 1);
      if (json(replay).dump() != json(snap).dump()) {
        c.check(false, "tick is not a pure function");
        return;
      }
    }
  }

  // Shuffled-history purity: fusing ticks in any order yields the same snapshots.
  {
    auto base = random_global_graph(rng, 4, 6);
    FusionConfig cfg;
    std::vector<std::vector<DynamicSubgraph>> history;
    for (int t = 0; t < 5; ++t)
      history.push_back({random_subgraph(rng, base, "cam0", 0.0, 10.0, true)});
    std::vector<std::string> in_order;
    for (int t = 0; t < 5; ++t)
      in_order.push_back(json(fuse_tick(base, history[std::size_t(t)], cfg, t + 1)).dump());
    std::vector<std::size_t> order{4, 1, 3, 0, 2};
    for (std::size_t i : order) {
      auto snap = fuse_tick(base, history[i], cfg, std::int64_t(i + 1));
      c.check(json(snap).dump() == in_order[i], "shuffled history diverged");
    }
  }

  // Boundary behavior at b_thr = 1.0 and b_thr -> 0+.
  {
    GlobalGraph base;
    base.regions = random_regions(rng, 1);
    StaticObjectVertex sv;
    sv.id = "s0";
    sv.class_label = "table";
    sv.box = {{1, 1, 0}, {3, 3, 1}};
    sv.region_id = base.regions[0].id;
    base.static_objects = {sv};
    base.static_edges = {{StaticEdgeKind::Belonging, "s0", sv.region_id}};
    const auto& s = base.static_objects.front();

    DynamicSubgraph sub;
    sub.camera_id = "cam";
    sub.window_start = 0.0;
    sub.window_end = 10.0;
    InstanceVertex exact;
    exact.track_id = 0;
    exact.class_label = "thing";
    exact.feature.values = {1.0};
    exact.last_footprint = {0, 0, 5, 5};
    exact.box3 = s.box;
    exact.first_seen = 0.0;
    exact.last_seen = 9.0;
    InstanceVertex partial = exact;
    partial.track_id = 1;
    Vec3 shift = (s.box.max_corner - s.box.min_corner) * 0.5;
    partial.box3 = Box3{s.box.min_corner + shift, s.box.max_corner + shift};
    sub.vertices = {exact, partial};

    FusionConfig hard;
    hard.b_thr = 1.0;
    auto snap_hard = fuse_tick(base, {sub}, hard, 1);
    bool exact_merged = false, partial_merged = false;
    for (const auto& m : snap_hard.merges) {
      if (m.track_id == 0) exact_merged = true;
      if (m.track_id == 1) partial_merged = true;
    }
    c.check(exact_merged && !partial_merged, "b_thr=1.0 must merge only exact overlap");

    FusionConfig loose;
    loose.b_thr = 1e-12;
    auto snap_loose = fuse_tick(base, {sub}, loose, 1);
    c.check(snap_loose.merges.size() == 2, "b_thr->0+ must merge any positive overlap");
  }
}

void criterion_4() {
  Criterion c(4, "static filter fidelity on 1000 random candidate sets (v_thr = 2 m^3)");
  Rng rng(4444);
  StaticBuildConfig cfg;  // v_thr = 2.0; class set includes couch, fridge, tv
  for (const char* cls : {"couch", "fridge", "tv"})
    c.check(cfg.is_static_class(cls), "default class set must include the example classes");

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<StaticCandidate> candidates;
    const std::size_t n = rng.next_below(25);
    for (std::size_t i = 0; i < n; ++i)
      candidates.push_back({random_label(rng), random_box(rng), "o" + std::to_string(i)});

    auto kept = filter_static(candidates, cfg);
    std::vector<StaticCandidate> expected;
    for (const auto& cand : candidates)
      if (box_volume(cand.box) >= cfg.v_thr || cfg.is_static_class(cand.label))
        expected.push_back(cand);
    if (!(kept == expected)) {
      c.check(false, "brute-force mismatch at trial " + std::to_string(trial));
      return;
    }

    StaticBuildConfig higher = cfg;
    higher.v_thr = cfg.v_thr + rng.uniform(0.0, 3.0);
    if (filter_static(candidates, higher).size() > kept.size()) {
      c.check(false, "monotonicity violated at trial " + std::to_string(trial));
      return;
    }
  }
}

EvalReport eval_clean_600s() {
  auto scenario = load_scenario(scenario_path("cafeteria_eval.json"));
  PipelineConfig cfg;  // window 10 s, 5 Hz from the scenario; eval every 60 s
  return run_eval(scenario, cfg, 7);
}

void criterion_5() {
  Criterion c(5, "perfect-perception ceiling: V.Acc = E.Acc = 1.000 over 10 min");
  auto report = eval_clean_600s();
  c.check(report.intervals.size() == 10,
          "expected 10 evaluation intervals, got " + std::to_string(report.intervals.size()));
  for (const auto& iv : report.intervals) {
    if (iv.v_acc != 1.0 || iv.e_acc != 1.0) {
      std::ostringstream os;
      os << "tick " << iv.tick << ": v_acc=" << iv.v_acc << " e_acc=" << iv.e_acc
         << " pred=" << iv.pred_vertices << " gt=" << iv.gt_vertices;
      c.check(false, os.str());
      return;
    }
  }
  c.note("10 intervals, all exactly 1.000");
  c.check(c.elapsed_s() < 60.0, "runtime bound 60 s exceeded");
}

void criterion_6() {
  Criterion c(6, "noise monotonicity: mean V.Acc decreases over dropout {0, 0.3, 0.6}");
  auto scenario = load_scenario(scenario_path("cafeteria_eval.json"));
  PipelineConfig cfg;
  std::vector<double> means;
  for (double dropout : {0.0, 0.3, 0.6}) {
    auto s = scenario;
    s.noise.detection_dropout = dropout;
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) acc += run_eval(s, cfg, seed).mean_v_acc();
    means.push_back(acc / 10.0);
  }
  std::ostringstream os;
  os << "means: " << means[0] << ", " << means[1] << ", " << means[2];
  c.note(os.str());
  c.check(means[0] - means[1] > 0.02 && means[1] - means[2] > 0.02, os.str());
  c.check(c.elapsed_s() < 300.0, "runtime bound 5 min exceeded");
}

void criterion_7() {
  Criterion c(7, "recall_at_k monotone in K on 1000 random sets; synonym example accepted");
  Rng rng(7777);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<RelationTuple> gt;
    const std::size_t ng = 1 + rng.next_below(20);
    for (std::size_t i = 0; i < ng; ++i)
      gt.push_back({random_label(rng), rng.bernoulli(0.5) ? "near" : "on", random_label(rng)});
    std::vector<ScoredRelation> pred;
    const std::size_t np = rng.next_below(150);
    for (std::size_t i = 0; i < np; ++i)
      pred.push_back({{random_label(rng), rng.bernoulli(0.5) ? "near" : "on", random_label(rng)},
                      rng.next_double()});
    double r20 = recall_at_k(pred, gt, 20);
    double r50 = recall_at_k(pred, gt, 50);
    double r100 = recall_at_k(pred, gt, 100);
    double m20 = recall_at_k(pred, gt, 20, RecallMode::MeanPerPredicate);
    double m50 = recall_at_k(pred, gt, 50, RecallMode::MeanPerPredicate);
    double m100 = recall_at_k(pred, gt, 100, RecallMode::MeanPerPredicate);
    if (!(r20 <= r50 && r50 <= r100 && m20 <= m50 && m50 <= m100)) {
      c.check(false, "monotonicity violated at trial " + std::to_string(trial));
      return;
    }
  }
  auto syn = SynonymMap::from_file(scenario_path("synonyms.json"));
  std::vector<RelationTuple> gt{{"person", "sitting on", "sofa"}};
  std::vector<ScoredRelation> pred{{{"adult", "on", "couch"}, 0.9}};
  c.check(recall_at_k(pred, gt, 20, RecallMode::Plain, &syn) == 1.0,
          "synonym example pair must count as correct");
}

void criterion_8() {
  Criterion c(8, "route-planner equals the BFS oracle on 200 random region graphs");
  Rng rng(8888);
  for (int trial = 0; trial < 200; ++trial) {
    GlobalGraph g;
    const std::size_t n = 2 + rng.next_below(49);
    g.regions = random_regions(rng, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(2.5 / double(n)))
          g.static_edges.push_back(
              {StaticEdgeKind::Connectivity, g.regions[i].id, g.regions[j].id});
    auto snap = fuse_tick(g, {}, FusionConfig{}, 1);

    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& e : g.static_edges) {
      adj[e.a].push_back(e.b);
      adj[e.b].push_back(e.a);
    }
    const std::string from = g.regions[std::size_t(rng.next_below(n))].id;
    const std::string to = g.regions[std::size_t(rng.next_below(n))].id;
    std::map<std::string, int> dist;
    std::queue<std::string> q;
    dist[to] = 0;
    q.push(to);
    while (!q.empty()) {
      auto cur = q.front();
      q.pop();
      for (const auto& nb : adj[cur])
        if (!dist.count(nb)) {
          dist[nb] = dist[cur] + 1;
          q.push(nb);
        }
    }

    try {
      auto path = plan_route(from, to, snap);
      bool ok = dist.count(from) && path.size() == std::size_t(dist[from]) + 1 &&
                path.front() == from && path.back() == to;
      for (std::size_t i = 0; ok && i + 1 < path.size(); ++i) {
        bool adjacent = false;
        for (const auto& nb : adj[path[i]])
          if (nb == path[i + 1]) adjacent = true;
        ok = adjacent;
      }
      if (!ok) {
        c.check(false, "path mismatch at trial " + std::to_string(trial));
        return;
      }
    } catch (const std::exception&) {
      if (dist.count(from)) {
        c.check(false, "route refused though the oracle found one (trial " +
                           std::to_string(trial) + ")");
        return;
      }
    }
  }
}

std::string run_cli_capture(const std::string& args, int* exit_code) {
  std::string cmd = std::string{"\""} + HIDYNA_CLI_PATH + "\" " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    *exit_code = -1;
    return {};
  }
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
  *exit_code = WEXITSTATUS(pclose(pipe));
  return out;
}

void criterion_9() {
  Criterion c(9, "end-to-end demo: coffee delivery completes; adversarial variant halts");
  int code = 0;
  auto out = run_cli_capture("demo --scenario " + scenario_path("cafeteria.json") + " --seed 1",
                             &code);
  c.check(code == 0, "demo exit code " + std::to_string(code));
  c.check(out.find("plan accepted") != std::string::npos, "plan was not triggered");
  for (const char* needle :
       {"step 1 navigate counter in cafeteria: ok", "step 2 pick coffee in cafeteria: ok",
        "step 3 navigate desk in laboratory: ok", "step 4 place coffee in laboratory: ok"})
    c.check(out.find(needle) != std::string::npos, std::string{"missing: "} + needle);
  c.check(out.find("demo finished: plan completed") != std::string::npos,
          "plan did not complete");

  auto bad = run_cli_capture(
      "demo --scenario " + scenario_path("cafeteria_adversarial.json") + " --seed 1", &code);
  c.check(code == 0, "adversarial demo exit code " + std::to_string(code));
  c.check(bad.find("FAILED") != std::string::npos &&
              bad.find("not found") != std::string::npos,
          "missing logged precondition failure");
  c.check(bad.find("demo finished: plan halted") != std::string::npos,
          "adversarial demo did not halt");
  c.check(c.elapsed_s() < 30.0, "runtime bound 30 s exceeded");
}

void criterion_10() {
  Criterion c(10, "determinism: repeated runs are byte-identical");
  c.check(json(eval_clean_600s()).dump() == json(eval_clean_600s()).dump(),
          "clean eval reports differ");

  auto scenario = load_scenario(scenario_path("cafeteria_eval.json"));
  scenario.noise.detection_dropout = 0.3;
  PipelineConfig cfg;
  c.check(json(run_eval(scenario, cfg, 3)).dump() == json(run_eval(scenario, cfg, 3)).dump(),
          "noisy eval reports differ");

  int code1 = 0, code2 = 0;
  auto d1 = run_cli_capture("demo --scenario " + scenario_path("cafeteria.json") + " --seed 1",
                            &code1);
  auto d2 = run_cli_capture("demo --scenario " + scenario_path("cafeteria.json") + " --seed 1",
                            &code2);
  c.check(code1 == 0 && code2 == 0 && d1 == d2, "demo outputs differ across reruns");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (failures == 0) std::printf("acceptance: all 10 criteria passed\n");
  else std::printf("acceptance: %d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
