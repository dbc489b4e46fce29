#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "hidyna/dynamic_builder.hpp"
#include "hidyna/fusion.hpp"
#include "hidyna/json_codec.hpp"
#include "hidyna/rng.hpp"
#include "hidyna/static_builder.hpp"

namespace hidyna {

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

struct ScenarioCamera {
  std::string id;
  std::string region;
  std::optional<Pose> pose;
};

inline void to_json(json& j, const ScenarioCamera& c) {
  j = json{{"id", c.id}, {"region", c.region}};
  if (c.pose) j["pose"] = *c.pose;
}
inline void from_json(const json& j, ScenarioCamera& c) {
  j.at("id").get_to(c.id);
  j.at("region").get_to(c.region);
  c.pose.reset();
  if (j.contains("pose")) c.pose = j.at("pose").get<Pose>();
}

struct StaticPlacement {
  std::string id;
  std::string label;
  Box3 box;
};

inline void to_json(json& j, const StaticPlacement& p) {
  j = json{{"id", p.id}, {"label", p.label}, {"box", p.box}};
}
inline void from_json(const json& j, StaticPlacement& p) {
  j.at("id").get_to(p.id);
  j.at("label").get_to(p.label);
  j.at("box").get_to(p.box);
}

enum class EventKind { Appear, Move, Remove, RelationStart, RelationStop };

struct TimelineEvent {
  double time = 0.0;
  EventKind kind = EventKind::Appear;
  // appear
  std::string object_id;
  std::string label;
  Vec3 extent{0.3, 0.3, 0.3};
  // appear / move
  Vec3 position{0.0, 0.0, 0.0};
  Vec3 velocity{0.0, 0.0, 0.0};
  // relation_start / relation_stop
  std::string subject_id;
  std::string target_id;
  std::string predicate;
};

inline void to_json(json& j, const TimelineEvent& e) {
  static const char* names[] = {"appear", "move", "remove", "relation_start", "relation_stop"};
  j = json{{"time", e.time}, {"kind", names[int(e.kind)]}};
  switch (e.kind) {
    case EventKind::Appear:
      j["object_id"] = e.object_id;
      j["label"] = e.label;
      j["extent"] = e.extent;
      j["position"] = e.position;
      j["velocity"] = e.velocity;
      break;
    case EventKind::Move:
      j["object_id"] = e.object_id;
      j["position"] = e.position;
      j["velocity"] = e.velocity;
      break;
    case EventKind::Remove:
      j["object_id"] = e.object_id;
      break;
    case EventKind::RelationStart:
    case EventKind::RelationStop:
      j["subject_id"] = e.subject_id;
      j["target_id"] = e.target_id;
      j["predicate"] = e.predicate;
      break;
  }
}
inline void from_json(const json& j, TimelineEvent& e) {
  j.at("time").get_to(e.time);
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "appear") e.kind = EventKind::Appear;
  else if (kind == "move") e.kind = EventKind::Move;
  else if (kind == "remove") e.kind = EventKind::Remove;
  else if (kind == "relation_start") e.kind = EventKind::RelationStart;
  else if (kind == "relation_stop") e.kind = EventKind::RelationStop;
  else throw ValidationError("unknown timeline event kind '" + kind + "'");
  e.object_id = j.value("object_id", std::string{});
  e.label = j.value("label", std::string{});
  if (j.contains("extent")) j.at("extent").get_to(e.extent);
  if (j.contains("position")) j.at("position").get_to(e.position);
  if (j.contains("velocity")) j.at("velocity").get_to(e.velocity);
  e.subject_id = j.value("subject_id", std::string{});
  e.target_id = j.value("target_id", std::string{});
  e.predicate = j.value("predicate", std::string{});
}

struct NoiseModel {
  double detection_dropout = 0.0;
  double label_flip = 0.0;
  double box_jitter_m = 0.0;
  std::uint64_t rng_seed = 0;
};

inline void to_json(json& j, const NoiseModel& n) {
  j = json{{"detection_dropout", n.detection_dropout},
           {"label_flip", n.label_flip},
           {"box_jitter_m", n.box_jitter_m},
           {"rng_seed", n.rng_seed}};
}
inline void from_json(const json& j, NoiseModel& n) {
  NoiseModel d;
  n.detection_dropout = j.value("detection_dropout", d.detection_dropout);
  n.label_flip = j.value("label_flip", d.label_flip);
  n.box_jitter_m = j.value("box_jitter_m", d.box_jitter_m);
  n.rng_seed = j.value("rng_seed", d.rng_seed);
}

/// Scripted world: regions and doorways, static placements, cameras, and a
/// time-ordered event list, plus seeded perception noise.
struct Scenario {
  std::vector<RegionVertex> regions;
  std::vector<Doorway> doorways;
  std::vector<StaticPlacement> statics;
  std::vector<ScenarioCamera> cameras;
  std::vector<TimelineEvent> timeline;
  NoiseModel noise;
  double duration_s = 60.0;
  double frame_hz = 5.0;
  double window_s = 10.0;
  int feature_dim = 16;
  std::string robot_start;
};

inline void to_json(json& j, const Scenario& s) {
  j = json{{"regions", s.regions},   {"doorways", s.doorways}, {"statics", s.statics},
           {"cameras", s.cameras},   {"timeline", s.timeline}, {"noise", s.noise},
           {"duration_s", s.duration_s}, {"frame_hz", s.frame_hz}, {"window_s", s.window_s},
           {"feature_dim", s.feature_dim}, {"robot_start", s.robot_start}};
}
inline void from_json(const json& j, Scenario& s) {
  Scenario d;
  j.at("regions").get_to(s.regions);
  s.doorways = j.value("doorways", std::vector<Doorway>{});
  s.statics = j.value("statics", std::vector<StaticPlacement>{});
  s.cameras = j.value("cameras", std::vector<ScenarioCamera>{});
  s.timeline = j.value("timeline", std::vector<TimelineEvent>{});
  if (j.contains("noise")) j.at("noise").get_to(s.noise);
  s.duration_s = j.value("duration_s", d.duration_s);
  s.frame_hz = j.value("frame_hz", d.frame_hz);
  s.window_s = j.value("window_s", d.window_s);
  s.feature_dim = j.value("feature_dim", d.feature_dim);
  s.robot_start = j.value("robot_start", std::string{});
}

inline void validate_scenario(const Scenario& s) {
  if (s.regions.empty()) throw ValidationError("scenario: no regions");
  for (const auto& r : s.regions) validate_region(r);
  std::set<std::string> region_ids;
  for (const auto& r : s.regions) region_ids.insert(r.id);
  for (const auto& c : s.cameras)
    if (!region_ids.count(c.region))
      throw ValidationError("scenario: camera '" + c.id + "' references unknown region '" +
                            c.region + "'");
  auto p01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!p01(s.noise.detection_dropout) || !p01(s.noise.label_flip))
    throw ValidationError("scenario: noise probabilities must lie in [0,1]");
  std::set<std::string> known;
  for (const auto& p : s.statics) known.insert(p.id);
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& e : s.timeline) {
    if (e.time < prev) throw ValidationError("scenario: timeline events must be time-sorted");
    prev = e.time;
    switch (e.kind) {
      case EventKind::Appear:
        if (e.object_id.empty()) throw ValidationError("scenario: appear without object_id");
        known.insert(e.object_id);
        break;
      case EventKind::Move:
      case EventKind::Remove:
        if (!known.count(e.object_id))
          throw ValidationError("scenario: event references undefined object '" + e.object_id +
                                "'");
        break;
      case EventKind::RelationStart:
      case EventKind::RelationStop:
        if (!known.count(e.subject_id) || !known.count(e.target_id))
          throw ValidationError("scenario: relation references undefined object ('" +
                                e.subject_id + "', '" + e.target_id + "')");
        break;
    }
  }
}

inline Scenario load_scenario(const std::string& path) {
  auto s = json_from_file(path).get<Scenario>();
  validate_scenario(s);
  return s;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct GtVertex {
  std::string id;
  std::string label;
  Box3 box;
  std::string region_id;
  std::string kind;  // "static" | "dynamic"
};

inline void to_json(json& j, const GtVertex& v) {
  j = json{{"id", v.id}, {"label", v.label}, {"box", v.box}, {"region_id", v.region_id},
           {"kind", v.kind}};
}
inline void from_json(const json& j, GtVertex& v) {
  j.at("id").get_to(v.id);
  j.at("label").get_to(v.label);
  j.at("box").get_to(v.box);
  j.at("region_id").get_to(v.region_id);
  j.at("kind").get_to(v.kind);
}

struct GtEdge {
  std::string kind;  // "connectivity" | "belonging" | "anchor" | "relation"
  std::string a;
  std::string b;
  std::string predicate;

  friend bool operator==(const GtEdge&, const GtEdge&) = default;
  friend auto operator<=>(const GtEdge&, const GtEdge&) = default;
};

inline void to_json(json& j, const GtEdge& e) {
  j = json{{"kind", e.kind}, {"a", e.a}, {"b", e.b}};
  if (!e.predicate.empty()) j["predicate"] = e.predicate;
}
inline void from_json(const json& j, GtEdge& e) {
  j.at("kind").get_to(e.kind);
  j.at("a").get_to(e.a);
  j.at("b").get_to(e.b);
  e.predicate = j.value("predicate", std::string{});
}

struct RelationTuple {
  std::string subject;
  std::string predicate;
  std::string object;

  friend bool operator==(const RelationTuple&, const RelationTuple&) = default;
  friend auto operator<=>(const RelationTuple&, const RelationTuple&) = default;
};

inline void to_json(json& j, const RelationTuple& t) {
  j = json{{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object}};
}
inline void from_json(const json& j, RelationTuple& t) {
  j.at("subject").get_to(t.subject);
  j.at("predicate").get_to(t.predicate);
  j.at("object").get_to(t.object);
}

struct GtTick {
  std::int64_t tick = 0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::vector<GtVertex> vertices;
  std::vector<GtEdge> edges;
  std::vector<RelationTuple> relations;
};

inline void to_json(json& j, const GtTick& t) {
  j = json{{"tick", t.tick},         {"window_start", t.window_start},
           {"window_end", t.window_end}, {"vertices", t.vertices},
           {"edges", t.edges},       {"relations", t.relations}};
}
inline void from_json(const json& j, GtTick& t) {
  j.at("tick").get_to(t.tick);
  j.at("window_start").get_to(t.window_start);
  j.at("window_end").get_to(t.window_end);
  j.at("vertices").get_to(t.vertices);
  j.at("edges").get_to(t.edges);
  j.at("relations").get_to(t.relations);
}

struct GroundTruth {
  std::vector<GtTick> ticks;

  const GtTick* at_tick(std::int64_t k) const {
    for (const auto& t : ticks)
      if (t.tick == k) return &t;
    return nullptr;
  }
};

inline void to_json(json& j, const GroundTruth& g) { j = json{{"ticks", g.ticks}}; }
inline void from_json(const json& j, GroundTruth& g) { j.at("ticks").get_to(g.ticks); }

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

struct SimOutput {
  std::map<std::string, StreamData> streams;   // per camera id
  std::vector<FrameObservation> static_frames;  // posed mapping pass
  GroundTruth ground_truth;
};

namespace simdetail {

struct DynState {
  std::string label;
  Vec3 extent{0.3, 0.3, 0.3};
  Vec3 anchor_pos{0.0, 0.0, 0.0};
  Vec3 velocity{0.0, 0.0, 0.0};
  double anchor_time = 0.0;
  bool active = false;

  Vec3 position(double t) const { return anchor_pos + velocity * (t - anchor_time); }
};

/// Identity-stable one-hot feature: ordinal slot in a fixed-dimension vector.
/// Distinct instances are orthogonal as long as the scenario holds fewer
/// objects than feature_dim.
inline Feature feature_of(std::size_t ordinal, int dim) {
  Feature f;
  f.values.assign(std::size_t(dim), 0.0);
  f.values[ordinal % std::size_t(dim)] = 1.0;
  return f;
}

inline const RegionVertex* region_of_point(const Vec2& p, const std::vector<RegionVertex>& regions) {
  const RegionVertex* best = nullptr;
  for (const auto& r : regions)
    if (point_in_polygon(p, r.footprint) && (!best || r.id < best->id)) best = &r;
  return best;
}

/// Fake image-plane rect: floor coordinates scaled to pixels. Consistent per
/// object and frame-to-frame, which is all the association stage needs.
inline PixelRect rect_of(const Vec3& center, const Vec3& extent) {
  return PixelRect{(center[0] - extent[0] * 0.5) * 100.0, (center[1] - extent[1] * 0.5) * 100.0,
                   std::max(1.0, extent[0] * 100.0), std::max(1.0, extent[1] * 100.0)};
}

}  // namespace simdetail

/// Replays the scenario at frame_hz per camera, applying seeded detection
/// dropout, label flips, and box jitter, and emits relation candidates whose
/// window-local track ids mirror the tracker's deterministic first-seen
/// numbering. Also produces one clean posed mapping pass for the static
/// builder and the per-tick ground truth.
inline SimOutput simulate(const Scenario& scenario,
                          std::optional<std::uint64_t> seed_override = std::nullopt) {
  validate_scenario(scenario);
  const std::uint64_t seed = seed_override.value_or(scenario.noise.rng_seed);
  SimOutput out;

  // Instance ordinals (placements first, then appear order) key the features.
  std::map<std::string, std::size_t> ordinal;
  std::vector<std::string> dyn_order;
  for (const auto& p : scenario.statics) ordinal.emplace(p.id, ordinal.size());
  for (const auto& e : scenario.timeline)
    if (e.kind == EventKind::Appear && !ordinal.count(e.object_id)) {
      ordinal.emplace(e.object_id, ordinal.size());
      dyn_order.push_back(e.object_id);
    }

  static const std::vector<std::string> decoy_labels{"bag", "bottle", "phone", "book", "jacket"};

  // Static mapping pass: one posed frame observing every placement, no noise.
  {
    FrameObservation f;
    f.camera_id = "mapper";
    f.time = 0.0;
    f.pose = Pose{};
    for (const auto& p : scenario.statics) {
      Detection d;
      d.label = p.label;
      d.score = 1.0;
      d.feature = simdetail::feature_of(ordinal.at(p.id), scenario.feature_dim);
      d.rect = simdetail::rect_of(p.box.center(), p.box.max_corner - p.box.min_corner);
      d.box3 = p.box;
      f.detections.push_back(std::move(d));
    }
    out.static_frames.push_back(std::move(f));
  }

  const double dt = 1.0 / scenario.frame_hz;
  const std::int64_t n_frames = std::int64_t(std::llround(scenario.duration_s * scenario.frame_hz));
  const std::int64_t n_ticks = std::int64_t(std::floor((scenario.duration_s - 1e-9) /
                                                       scenario.window_s)) + 1;

  struct CamState {
    Rng rng;
    std::int64_t window_index = -1;
    std::map<std::string, std::int64_t> local_track;  // instance id -> window track id
  };
  std::map<std::string, CamState> cams;
  for (const auto& c : scenario.cameras) {
    cams.emplace(c.id, CamState{derive_rng(seed, c.id), -1, {}});
    out.streams[c.id];  // materialize stream
  }

  std::map<std::string, simdetail::DynState> dyn;
  std::set<std::tuple<std::string, std::string, std::string>> active_relations;
  std::size_t next_event = 0;

  // Per-tick visibility bookkeeping for the ground truth.
  struct GtDyn {
    Box3 last_box;
    std::string last_region;
    bool seen = false;
  };
  std::map<std::string, GtDyn> gt_dyn;
  std::set<std::tuple<std::string, std::string, std::string>> gt_rel;
  std::int64_t gt_tick = 1;

  // GT statics and structural edges are the same every tick.
  StaticBuildConfig gt_cfg;
  std::vector<GtVertex> gt_static_vertices;
  std::vector<GtEdge> gt_static_edges;
  for (const auto& e : build_connectivity(scenario.regions, scenario.doorways, gt_cfg))
    gt_static_edges.push_back({"connectivity", e.a, e.b, ""});
  for (const auto& p : scenario.statics) {
    StaticCandidate c{p.label, p.box, p.id};
    if (filter_static({c}, gt_cfg).empty()) continue;
    std::string region = assign_region(p.box, scenario.regions);
    gt_static_vertices.push_back({p.id, p.label, p.box, region, "static"});
    gt_static_edges.push_back({"belonging", p.id, region, ""});
  }

  auto flush_gt_tick = [&](std::int64_t k) {
    GtTick t;
    t.tick = k;
    t.window_start = double(k - 1) * scenario.window_s;
    t.window_end = double(k) * scenario.window_s;
    t.vertices = gt_static_vertices;
    t.edges = gt_static_edges;
    for (const auto& id : dyn_order) {
      auto it = gt_dyn.find(id);
      if (it == gt_dyn.end() || !it->second.seen) continue;
      t.vertices.push_back({id, dyn[id].label, it->second.last_box, it->second.last_region,
                            "dynamic"});
      t.edges.push_back({"anchor", id, it->second.last_region, ""});
    }
    std::vector<std::tuple<std::string, std::string, std::string>> rels(gt_rel.begin(),
                                                                        gt_rel.end());
    for (const auto& [s, o, p] : rels) {
      t.edges.push_back({"relation", s, o, p});
      std::string slabel = dyn.count(s) ? dyn[s].label : std::string{};
      std::string olabel = dyn.count(o) ? dyn[o].label : std::string{};
      for (const auto& pl : scenario.statics) {
        if (pl.id == s) slabel = pl.label;
        if (pl.id == o) olabel = pl.label;
      }
      t.relations.push_back({slabel, p, olabel});
    }
    out.ground_truth.ticks.push_back(std::move(t));
    gt_dyn.clear();
    gt_rel.clear();
  };

  for (std::int64_t fi = 0; fi < n_frames; ++fi) {
    const double t = double(fi) * dt;

    while (next_event < scenario.timeline.size() && scenario.timeline[next_event].time <= t) {
      const auto& e = scenario.timeline[next_event];
      switch (e.kind) {
        case EventKind::Appear: {
          auto& d = dyn[e.object_id];
          d.label = e.label;
          d.extent = e.extent;
          d.anchor_pos = e.position;
          d.velocity = e.velocity;
          d.anchor_time = e.time;
          d.active = true;
          break;
        }
        case EventKind::Move: {
          auto& d = dyn[e.object_id];
          d.anchor_pos = e.position;
          d.velocity = e.velocity;
          d.anchor_time = e.time;
          break;
        }
        case EventKind::Remove:
          dyn[e.object_id].active = false;
          break;
        case EventKind::RelationStart:
          active_relations.insert({e.subject_id, e.target_id, e.predicate});
          break;
        case EventKind::RelationStop:
          active_relations.erase({e.subject_id, e.target_id, e.predicate});
          break;
      }
      ++next_event;
    }

    // Close the ground-truth window when the frame enters the next one.
    while (tick_of(t, scenario.window_s) > gt_tick) {
      flush_gt_tick(gt_tick);
      ++gt_tick;
    }

    const std::int64_t window_index = tick_of(t, scenario.window_s);

    for (const auto& cam : scenario.cameras) {
      auto& cs = cams.at(cam.id);
      if (cs.window_index != window_index) {
        cs.window_index = window_index;
        cs.local_track.clear();
      }

      // Truth-level visibility: instance center inside the camera's region.
      struct Visible {
        std::string id;
        std::string label;
        Vec3 center;
        Vec3 extent;
        bool is_static;
      };
      std::vector<Visible> visible;
      for (const auto& p : scenario.statics) {
        Vec3 c = p.box.center();
        const auto* r = simdetail::region_of_point({c[0], c[1]}, scenario.regions);
        if (r && r->id == cam.region)
          visible.push_back({p.id, p.label, c, p.box.max_corner - p.box.min_corner, true});
      }
      for (const auto& id : dyn_order) {
        auto it = dyn.find(id);
        if (it == dyn.end() || !it->second.active) continue;
        Vec3 c = it->second.position(t);
        const auto* r = simdetail::region_of_point({c[0], c[1]}, scenario.regions);
        if (r && r->id == cam.region) visible.push_back({id, it->second.label, c,
                                                         it->second.extent, false});
      }

      // Ground truth tracks pre-noise visibility.
      for (const auto& v : visible) {
        if (v.is_static) continue;
        auto& g = gt_dyn[v.id];
        g.seen = true;
        g.last_box = Box3::from_center_extent(v.center, v.extent);
        g.last_region = cam.region;
      }
      for (const auto& rel : active_relations) {
        const auto& [sid, oid, pred] = rel;
        bool s_vis = false, o_vis = false;
        for (const auto& v : visible) {
          if (v.id == sid) s_vis = true;
          if (v.id == oid) o_vis = true;
        }
        if (s_vis && o_vis) gt_rel.insert(rel);
      }

      FrameObservation frame;
      frame.camera_id = cam.id;
      frame.time = t;
      frame.pose = cam.pose;

      std::vector<std::pair<std::string, bool>> emitted;  // (instance id, emitted?)
      for (const auto& v : visible) {
        if (scenario.noise.detection_dropout > 0.0 &&
            cs.rng.bernoulli(scenario.noise.detection_dropout)) {
          emitted.push_back({v.id, false});
          continue;
        }
        Detection d;
        d.label = v.label;
        if (scenario.noise.label_flip > 0.0 && cs.rng.bernoulli(scenario.noise.label_flip))
          d.label = decoy_labels[std::size_t(cs.rng.next_below(decoy_labels.size()))];
        d.score = 1.0;
        d.feature = simdetail::feature_of(ordinal.at(v.id), scenario.feature_dim);
        Vec3 center = v.center;
        if (scenario.noise.box_jitter_m > 0.0) {
          for (int ax = 0; ax < 3; ++ax)
            center[ax] += cs.rng.uniform(-scenario.noise.box_jitter_m, scenario.noise.box_jitter_m);
        }
        d.rect = simdetail::rect_of(center, v.extent);
        if (cam.pose) d.box3 = Box3::from_center_extent(center, v.extent);
        frame.detections.push_back(std::move(d));
        emitted.push_back({v.id, true});
      }
      out.streams[cam.id].frames.push_back(frame);

      // Window-local track ids in first-emission order, mirroring the tracker.
      for (const auto& [id, ok] : emitted)
        if (ok && !cs.local_track.count(id))
          cs.local_track.emplace(id, std::int64_t(cs.local_track.size()));

      for (const auto& [sid, oid, pred] : active_relations) {
        bool s_ok = false, o_ok = false;
        for (const auto& [id, ok] : emitted) {
          if (id == sid) s_ok = ok;
          if (id == oid) o_ok = ok;
        }
        if (!s_ok || !o_ok) continue;
        RelationCandidate c;
        c.time = t;
        c.subject_track = cs.local_track.at(sid);
        c.object_track = cs.local_track.at(oid);
        c.predicate = pred;
        c.confidence = 0.9;
        out.streams[cam.id].candidates.push_back(c);
      }
    }
  }

  while (gt_tick <= n_ticks) {
    flush_gt_tick(gt_tick);
    ++gt_tick;
  }
  return out;
}

/// Writes streams, the mapping pass, annotations, and ground truth to a
/// directory in the CLI file layout.
inline void write_simulation(const SimOutput& sim, const Scenario& scenario,
                             const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& [cam, data] : sim.streams) {
    std::ofstream out(fs::path(dir) / ("stream." + cam + ".jsonl"), std::ios::binary);
    std::size_t ci = 0;
    for (const auto& f : data.frames) {
      out << json(f).dump() << '\n';
      while (ci < data.candidates.size() && data.candidates[ci].time <= f.time)
        out << json(data.candidates[ci++]).dump() << '\n';
    }
    for (; ci < data.candidates.size(); ++ci) out << json(data.candidates[ci]).dump() << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "static_frames.jsonl", std::ios::binary);
    for (const auto& f : sim.static_frames) out << json(f).dump() << '\n';
  }
  json_to_file((fs::path(dir) / "regions.json").string(), json(scenario.regions));
  json_to_file((fs::path(dir) / "doorways.json").string(), json(scenario.doorways));
  json_to_file((fs::path(dir) / "gt.json").string(), json(sim.ground_truth));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalVertex {
  std::string uid;
  std::string label;
  std::optional<Box3> box;
  std::string region_id;
};

struct EvalGraph {
  std::vector<EvalVertex> vertices;
  std::vector<GtEdge> edges;  // same shape as ground-truth edges
};

/// Flattens a snapshot for metric computation: static vertices plus non-merged
/// instances; merged instance endpoints collapse onto their static vertex.
inline EvalGraph eval_graph_from_snapshot(const UnifiedSnapshot& snap) {
  EvalGraph g;
  for (const auto& o : snap.base.static_objects)
    g.vertices.push_back(EvalVertex{o.id, o.class_label, o.box, o.region_id});
  for (const auto& e : snap.base.static_edges)
    g.edges.push_back({e.kind == StaticEdgeKind::Connectivity ? "connectivity" : "belonging",
                       e.a, e.b, ""});

  for (const auto& a : snap.anchored) {
    std::map<std::int64_t, std::string> merged_to;
    for (const auto& m : snap.merges)
      if (m.camera_id == a.subgraph.camera_id) merged_to[m.track_id] = m.static_id;
    auto regions = detail::instance_regions(snap, a);

    auto uid_of = [&](std::int64_t track) {
      auto it = merged_to.find(track);
      if (it != merged_to.end()) return it->second;
      return a.subgraph.camera_id + "/" + std::to_string(track);
    };

    for (const auto& v : a.subgraph.vertices) {
      if (merged_to.count(v.track_id)) continue;
      auto rit = regions.find(v.track_id);
      g.vertices.push_back(EvalVertex{uid_of(v.track_id), v.class_label, v.box3,
                                      rit == regions.end() ? std::string{} : rit->second});
    }
    for (const auto& e : a.anchors) g.edges.push_back({"anchor", uid_of(e.track_id), e.region_id, ""});
    for (const auto& e : a.subgraph.edges)
      g.edges.push_back({"relation", uid_of(e.subject_id), uid_of(e.object_id), e.predicate});
  }
  return g;
}

inline EvalGraph eval_graph_from_gt(const GtTick& t) {
  EvalGraph g;
  for (const auto& v : t.vertices)
    g.vertices.push_back(EvalVertex{v.id, v.label, v.box, v.region_id});
  g.edges = t.edges;
  return g;
}

/// Greedy 1-to-1 matching on overlap (descending) between equal-label vertices
/// with overlap above 0.6. Returns pred uid -> gt uid.
inline std::map<std::string, std::string> match_vertices(const EvalGraph& pred,
                                                          const EvalGraph& gt,
                                                          double overlap_thr = 0.6) {
  struct Cand {
    double overlap;
    std::size_t p, g;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < pred.vertices.size(); ++p) {
    for (std::size_t q = 0; q < gt.vertices.size(); ++q) {
      if (to_lower(pred.vertices[p].label) != to_lower(gt.vertices[q].label)) continue;
      if (!pred.vertices[p].box || !gt.vertices[q].box) continue;
      double ov = box_overlap_ratio(*pred.vertices[p].box, *gt.vertices[q].box);
      if (ov > overlap_thr) cands.push_back({ov, p, q});
    }
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (pred.vertices[a.p].uid != pred.vertices[b.p].uid)
      return pred.vertices[a.p].uid < pred.vertices[b.p].uid;
    return gt.vertices[a.g].uid < gt.vertices[b.g].uid;
  });
  std::set<std::size_t> used_p, used_g;
  std::map<std::string, std::string> mapping;
  for (const auto& c : cands) {
    if (used_p.count(c.p) || used_g.count(c.g)) continue;
    used_p.insert(c.p);
    used_g.insert(c.g);
    mapping[pred.vertices[c.p].uid] = gt.vertices[c.g].uid;
  }
  return mapping;
}

/// Fraction of vertices matched 1-to-1 (equal label, overlap > 0.6) over
/// max(|pred|, |gt|); 1.0 when both sides are empty.
inline double vertex_accuracy(const EvalGraph& pred, const EvalGraph& gt) {
  const std::size_t denom = std::max(pred.vertices.size(), gt.vertices.size());
  if (denom == 0) return 1.0;
  return double(match_vertices(pred, gt).size()) / double(denom);
}

/// Fraction of predicted edges whose (kind, mapped endpoints, predicate)
/// exist in the ground truth; vacuously 1.0 with no predicted edges.
inline double edge_accuracy(const EvalGraph& pred, const EvalGraph& gt) {
  if (pred.edges.empty()) return 1.0;
  auto mapping = match_vertices(pred, gt);
  std::set<std::string> region_ids;  // region endpoints map by identity
  for (const auto& e : gt.edges) {
    if (e.kind == "connectivity") {
      region_ids.insert(e.a);
      region_ids.insert(e.b);
    } else if (e.kind != "relation") {
      region_ids.insert(e.b);
    }
  }
  auto map_endpoint = [&](const std::string& uid) -> std::optional<std::string> {
    auto it = mapping.find(uid);
    if (it != mapping.end()) return it->second;
    if (region_ids.count(uid)) return uid;
    return std::nullopt;
  };
  std::set<GtEdge> gt_set;
  for (const auto& e : gt.edges) {
    GtEdge n = e;
    if (n.kind == "connectivity" && n.b < n.a) std::swap(n.a, n.b);
    gt_set.insert(n);
  }
  std::size_t hits = 0;
  for (const auto& e : pred.edges) {
    auto a = map_endpoint(e.a);
    auto b = map_endpoint(e.b);
    if (!a || !b) continue;
    GtEdge n{e.kind, *a, *b, e.predicate};
    if (n.kind == "connectivity" && n.b < n.a) std::swap(n.a, n.b);
    if (gt_set.count(n)) ++hits;
  }
  return double(hits) / double(pred.edges.size());
}

/// Alias -> canonical map standing in for human open-vocabulary judgment.
struct SynonymMap {
  std::map<std::string, std::string> alias_to_canon;

  std::string canon(const std::string& s) const {
    auto l = to_lower(s);
    auto it = alias_to_canon.find(l);
    return it == alias_to_canon.end() ? l : it->second;
  }
  RelationTuple canon(const RelationTuple& t) const {
    return {canon(t.subject), canon(t.predicate), canon(t.object)};
  }

  /// File schema: {"canonical": ["alias", ...], ...}
  static SynonymMap from_file(const std::string& path) {
    SynonymMap m;
    const json doc = json_from_file(path);
    for (const auto& [canon_key, aliases] : doc.items()) {
      const std::string c = to_lower(canon_key);
      m.alias_to_canon[c] = c;
      for (const auto& a : aliases) m.alias_to_canon[to_lower(a.get<std::string>())] = c;
    }
    return m;
  }
};

struct ScoredRelation {
  RelationTuple tuple;
  double score = 0.0;
};

enum class RecallMode { Plain, MeanPerPredicate };

/// R@K / mR@K: fraction of ground-truth tuples recovered by the top-K scored
/// predictions, optionally averaged per predicate, optionally under a synonym
/// equivalence. Empty ground truth is an error (undefined recall).
inline double recall_at_k(std::vector<ScoredRelation> pred, const std::vector<RelationTuple>& gt,
                          int k, RecallMode mode = RecallMode::Plain,
                          const SynonymMap* synonyms = nullptr) {
  if (gt.empty()) throw ValidationError("recall_at_k: undefined recall (empty ground truth)");
  SynonymMap identity;
  const SynonymMap& syn = synonyms ? *synonyms : identity;

  std::stable_sort(pred.begin(), pred.end(),
                   [](const ScoredRelation& a, const ScoredRelation& b) { return a.score > b.score; });
  if (int(pred.size()) > k) pred.resize(std::size_t(k));

  std::vector<RelationTuple> gt_canon;
  for (const auto& t : gt) gt_canon.push_back(syn.canon(t));
  std::vector<bool> taken(gt_canon.size(), false);
  std::vector<bool> matched(gt_canon.size(), false);
  for (const auto& p : pred) {
    auto c = syn.canon(p.tuple);
    for (std::size_t i = 0; i < gt_canon.size(); ++i) {
      if (taken[i] || gt_canon[i] != c) continue;
      taken[i] = matched[i] = true;
      break;
    }
  }

  if (mode == RecallMode::Plain) {
    std::size_t hits = 0;
    for (bool b : matched) hits += b ? 1 : 0;
    return double(hits) / double(gt.size());
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_pred;  // hits, total
  for (std::size_t i = 0; i < gt_canon.size(); ++i) {
    auto& [hits, total] = per_pred[gt_canon[i].predicate];
    ++total;
    if (matched[i]) ++hits;
  }
  double sum = 0.0;
  for (const auto& [_, ht] : per_pred) sum += double(ht.first) / double(ht.second);
  return sum / double(per_pred.size());
}

// ---------------------------------------------------------------------------
// End-to-end pipeline driver and evaluation protocol
// ---------------------------------------------------------------------------

struct PipelineConfig {
  StaticBuildConfig static_cfg;
  DynamicConfig dynamic_cfg;
  FusionConfig fusion_cfg;
  double eval_interval_s = 60.0;
};

inline void to_json(json& j, const PipelineConfig& c) {
  j = json{{"static", c.static_cfg},
           {"dynamic", c.dynamic_cfg},
           {"fusion", c.fusion_cfg},
           {"eval_interval_s", c.eval_interval_s}};
}
inline void from_json(const json& j, PipelineConfig& c) {
  PipelineConfig d;
  if (j.contains("static")) j.at("static").get_to(c.static_cfg);
  if (j.contains("dynamic")) j.at("dynamic").get_to(c.dynamic_cfg);
  if (j.contains("fusion")) j.at("fusion").get_to(c.fusion_cfg);
  c.eval_interval_s = j.value("eval_interval_s", d.eval_interval_s);
}

/// One simulated run wired through the full pipeline: static graph from the
/// mapping pass, per-window dynamic subgraphs, fused snapshot per tick.
class ScenarioRun {
 public:
  ScenarioRun(Scenario scenario, PipelineConfig cfg,
              std::optional<std::uint64_t> seed_override = std::nullopt)
      : scenario_(std::move(scenario)), cfg_(std::move(cfg)) {
    cfg_.dynamic_cfg.window_s = scenario_.window_s;
    cfg_.dynamic_cfg.frame_hz = scenario_.frame_hz;
    cfg_.fusion_cfg.camera_region.clear();
    for (const auto& c : scenario_.cameras) cfg_.fusion_cfg.camera_region[c.id] = c.region;
    sim_ = simulate(scenario_, seed_override);
    base_ = build_static_graph(sim_.static_frames, scenario_.regions, scenario_.doorways,
                               cfg_.static_cfg);
  }

  std::int64_t ticks() const {
    return std::int64_t(std::floor((scenario_.duration_s - 1e-9) / scenario_.window_s)) + 1;
  }

  std::vector<DynamicSubgraph> subgraphs_at(std::int64_t tick) const {
    const double w = scenario_.window_s;
    std::vector<DynamicSubgraph> subs;
    for (const auto& [cam, data] : sim_.streams)
      subs.push_back(build_subgraph(data.frames, data.candidates, cam, double(tick - 1) * w,
                                    double(tick) * w, cfg_.dynamic_cfg));
    return subs;
  }

  UnifiedSnapshot snapshot_at(std::int64_t tick) const {
    return fuse_tick(base_, subgraphs_at(tick), cfg_.fusion_cfg, tick);
  }

  const GroundTruth& ground_truth() const { return sim_.ground_truth; }
  const GlobalGraph& base() const { return base_; }
  const Scenario& scenario() const { return scenario_; }
  const PipelineConfig& config() const { return cfg_; }
  const SimOutput& sim() const { return sim_; }

 private:
  Scenario scenario_;
  PipelineConfig cfg_;
  SimOutput sim_;
  GlobalGraph base_;
};

struct EvalInterval {
  double time = 0.0;
  std::int64_t tick = 0;
  double v_acc = 0.0;
  double e_acc = 0.0;
  std::map<int, double> recall;       // K -> R@K (absent when GT has no relations)
  std::map<int, double> mean_recall;  // K -> mR@K
  std::size_t pred_vertices = 0;
  std::size_t gt_vertices = 0;
};

inline void to_json(json& j, const EvalInterval& e) {
  j = json{{"time", e.time},
           {"tick", e.tick},
           {"v_acc", e.v_acc},
           {"e_acc", e.e_acc},
           {"pred_vertices", e.pred_vertices},
           {"gt_vertices", e.gt_vertices}};
  if (!e.recall.empty()) {
    json r = json::object(), mr = json::object();
    for (const auto& [k, v] : e.recall) r[std::to_string(k)] = v;
    for (const auto& [k, v] : e.mean_recall) mr[std::to_string(k)] = v;
    j["recall_at"] = r;
    j["mean_recall_at"] = mr;
  }
}

struct EvalReport {
  std::uint64_t seed = 0;
  std::vector<EvalInterval> intervals;

  double mean_v_acc() const {
    if (intervals.empty()) return 0.0;
    double s = 0.0;
    for (const auto& i : intervals) s += i.v_acc;
    return s / double(intervals.size());
  }
};

inline void to_json(json& j, const EvalReport& r) {
  j = json{{"seed", r.seed}, {"intervals", r.intervals}, {"mean_v_acc", r.mean_v_acc()}};
}

/// Runs the full protocol: simulate, build, fuse, and score V.Acc / E.Acc and
/// R/mR@K at every evaluation interval.
inline EvalReport run_eval(const Scenario& scenario, const PipelineConfig& cfg,
                           std::optional<std::uint64_t> seed_override = std::nullopt,
                           const SynonymMap* synonyms = nullptr,
                           const std::vector<int>& ks = {20, 50, 100}) {
  if (cfg.eval_interval_s <= 0.0) throw ValidationError("run_eval: eval_interval_s must be > 0");
  const double ratio = cfg.eval_interval_s / scenario.window_s;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    throw ValidationError("run_eval: eval interval must be a multiple of the window length");

  ScenarioRun run(scenario, cfg, seed_override);
  EvalReport report;
  report.seed = seed_override.value_or(scenario.noise.rng_seed);

  const std::int64_t step = std::int64_t(std::llround(ratio));
  for (std::int64_t tick = step; tick <= run.ticks(); tick += step) {
    const GtTick* gt = run.ground_truth().at_tick(tick);
    if (!gt) continue;
    auto snap = run.snapshot_at(tick);
    auto pred = eval_graph_from_snapshot(snap);
    auto gt_graph = eval_graph_from_gt(*gt);

    EvalInterval iv;
    iv.time = double(tick) * scenario.window_s;
    iv.tick = tick;
    iv.v_acc = vertex_accuracy(pred, gt_graph);
    iv.e_acc = edge_accuracy(pred, gt_graph);
    iv.pred_vertices = pred.vertices.size();
    iv.gt_vertices = gt_graph.vertices.size();

    if (!gt->relations.empty()) {
      // Score predicted tuples by total observed span coverage.
      std::vector<ScoredRelation> scored;
      for (const auto& a : snap.anchored) {
        for (const auto& e : a.subgraph.edges) {
          double cover = 0.0;
          for (const auto& [ta, tb] : e.spans) cover += tb - ta;
          scored.push_back({{e.subject_class, e.predicate, e.object_class}, cover});
        }
      }
      for (int k : ks) {
        iv.recall[k] = recall_at_k(scored, gt->relations, k, RecallMode::Plain, synonyms);
        iv.mean_recall[k] =
            recall_at_k(scored, gt->relations, k, RecallMode::MeanPerPredicate, synonyms);
      }
    }
    report.intervals.push_back(std::move(iv));
  }
  return report;
}

inline void write_report_csv(const EvalReport& r, const std::string& path,
                             const std::vector<int>& ks = {20, 50, 100}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "time,tick,v_acc,e_acc";
  for (int k : ks) out << ",r@" << k;
  for (int k : ks) out << ",mr@" << k;
  out << '\n';
  for (const auto& iv : r.intervals) {
    out << iv.time << ',' << iv.tick << ',' << iv.v_acc << ',' << iv.e_acc;
    for (int k : ks) {
      out << ',';
      if (iv.recall.count(k)) out << iv.recall.at(k);
    }
    for (int k : ks) {
      out << ',';
      if (iv.mean_recall.count(k)) out << iv.mean_recall.at(k);
    }
    out << '\n';
  }
}

}  // namespace hidyna
