#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hidyna/scene_model.hpp"

// Canonical JSON encodings: snake_case keys, optionals omitted when absent.
// These are the wire format for every module boundary and CLI file, so the
// field names here are load-bearing.

namespace hidyna {

using json = nlohmann::json;

inline void to_json(json& j, const Pose& p) {
  j = json{{"position", p.position}, {"orientation", p.orientation}};
}
inline void from_json(const json& j, Pose& p) {
  j.at("position").get_to(p.position);
  j.at("orientation").get_to(p.orientation);
}

inline void to_json(json& j, const Box3& b) {
  j = json{{"min_corner", b.min_corner}, {"max_corner", b.max_corner}};
}
inline void from_json(const json& j, Box3& b) {
  j.at("min_corner").get_to(b.min_corner);
  j.at("max_corner").get_to(b.max_corner);
}

inline void to_json(json& j, const Feature& f) { j = json{{"values", f.values}}; }
inline void from_json(const json& j, Feature& f) { j.at("values").get_to(f.values); }

inline void to_json(json& j, const PixelRect& r) {
  j = json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}
inline void from_json(const json& j, PixelRect& r) {
  j.at("x").get_to(r.x);
  j.at("y").get_to(r.y);
  j.at("w").get_to(r.w);
  j.at("h").get_to(r.h);
}

inline void to_json(json& j, const RegionVertex& r) {
  j = json{{"id", r.id}, {"name", r.name}, {"footprint", r.footprint}, {"centroid", r.centroid}};
}
inline void from_json(const json& j, RegionVertex& r) {
  j.at("id").get_to(r.id);
  r.name = j.value("name", r.id);
  j.at("footprint").get_to(r.footprint);
  if (j.contains("centroid")) j.at("centroid").get_to(r.centroid);
  else r.centroid = polygon_centroid(r.footprint);
}

inline void to_json(json& j, const StaticObjectVertex& o) {
  j = json{{"id", o.id},
           {"class_label", o.class_label},
           {"box", o.box},
           {"region_id", o.region_id},
           {"merged_from", o.merged_from}};
}
inline void from_json(const json& j, StaticObjectVertex& o) {
  j.at("id").get_to(o.id);
  j.at("class_label").get_to(o.class_label);
  j.at("box").get_to(o.box);
  j.at("region_id").get_to(o.region_id);
  o.merged_from = j.value("merged_from", std::vector<std::string>{});
}

inline void to_json(json& j, const StaticEdge& e) {
  j = json{{"kind", e.kind == StaticEdgeKind::Connectivity ? "connectivity" : "belonging"},
           {"a", e.a},
           {"b", e.b}};
}
inline void from_json(const json& j, StaticEdge& e) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "connectivity") e.kind = StaticEdgeKind::Connectivity;
  else if (kind == "belonging") e.kind = StaticEdgeKind::Belonging;
  else throw ValidationError("unknown static edge kind '" + kind + "'");
  j.at("a").get_to(e.a);
  j.at("b").get_to(e.b);
}

inline void to_json(json& j, const InstanceVertex& v) {
  j = json{{"track_id", v.track_id},
           {"class_label", v.class_label},
           {"feature", v.feature},
           {"last_footprint", v.last_footprint},
           {"first_seen", v.first_seen},
           {"last_seen", v.last_seen}};
  if (v.box3) j["box3"] = *v.box3;
}
inline void from_json(const json& j, InstanceVertex& v) {
  j.at("track_id").get_to(v.track_id);
  j.at("class_label").get_to(v.class_label);
  j.at("feature").get_to(v.feature);
  j.at("last_footprint").get_to(v.last_footprint);
  j.at("first_seen").get_to(v.first_seen);
  j.at("last_seen").get_to(v.last_seen);
  v.box3.reset();
  if (j.contains("box3")) v.box3 = j.at("box3").get<Box3>();
}

inline void to_json(json& j, const RelationEdge& e) {
  j = json{{"subject_id", e.subject_id},
           {"subject_class", e.subject_class},
           {"object_id", e.object_id},
           {"object_class", e.object_class},
           {"predicate", e.predicate},
           {"spans", e.spans}};
}
inline void from_json(const json& j, RelationEdge& e) {
  j.at("subject_id").get_to(e.subject_id);
  j.at("subject_class").get_to(e.subject_class);
  j.at("object_id").get_to(e.object_id);
  j.at("object_class").get_to(e.object_class);
  j.at("predicate").get_to(e.predicate);
  j.at("spans").get_to(e.spans);
}

inline void to_json(json& j, const DynamicSubgraph& g) {
  j = json{{"window_start", g.window_start},
           {"window_end", g.window_end},
           {"camera_id", g.camera_id},
           {"vertices", g.vertices},
           {"edges", g.edges}};
}
inline void from_json(const json& j, DynamicSubgraph& g) {
  j.at("window_start").get_to(g.window_start);
  j.at("window_end").get_to(g.window_end);
  j.at("camera_id").get_to(g.camera_id);
  j.at("vertices").get_to(g.vertices);
  j.at("edges").get_to(g.edges);
}

inline void to_json(json& j, const GlobalGraph& g) {
  j = json{{"regions", g.regions},
           {"static_objects", g.static_objects},
           {"static_edges", g.static_edges},
           {"version", g.version}};
}
inline void from_json(const json& j, GlobalGraph& g) {
  j.at("regions").get_to(g.regions);
  j.at("static_objects").get_to(g.static_objects);
  j.at("static_edges").get_to(g.static_edges);
  g.version = j.value("version", std::int64_t{0});
}

inline void to_json(json& j, const AnchorEdge& a) {
  j = json{{"track_id", a.track_id}, {"region_id", a.region_id}};
}
inline void from_json(const json& j, AnchorEdge& a) {
  j.at("track_id").get_to(a.track_id);
  j.at("region_id").get_to(a.region_id);
}

inline void to_json(json& j, const AnchoredSubgraph& a) {
  j = json{{"subgraph", a.subgraph}, {"anchors", a.anchors}};
}
inline void from_json(const json& j, AnchoredSubgraph& a) {
  j.at("subgraph").get_to(a.subgraph);
  j.at("anchors").get_to(a.anchors);
}

inline void to_json(json& j, const MergeRecord& m) {
  j = json{{"camera_id", m.camera_id}, {"track_id", m.track_id}, {"static_id", m.static_id}};
}
inline void from_json(const json& j, MergeRecord& m) {
  j.at("camera_id").get_to(m.camera_id);
  j.at("track_id").get_to(m.track_id);
  j.at("static_id").get_to(m.static_id);
}

inline void to_json(json& j, const UnifiedSnapshot& s) {
  j = json{{"base", s.base},
           {"anchored", s.anchored},
           {"merges", s.merges},
           {"tick", s.tick},
           {"wall_time", s.wall_time}};
}
inline void from_json(const json& j, UnifiedSnapshot& s) {
  j.at("base").get_to(s.base);
  j.at("anchored").get_to(s.anchored);
  j.at("merges").get_to(s.merges);
  j.at("tick").get_to(s.tick);
  j.at("wall_time").get_to(s.wall_time);
}

inline void to_json(json& j, const Detection& d) {
  j = json{{"label", d.label}, {"score", d.score}, {"feature", d.feature}, {"rect", d.rect}};
  if (d.depth_m) j["depth_m"] = *d.depth_m;
  if (d.box3) j["box3"] = *d.box3;
}
inline void from_json(const json& j, Detection& d) {
  j.at("label").get_to(d.label);
  d.score = j.value("score", 1.0);
  j.at("feature").get_to(d.feature);
  j.at("rect").get_to(d.rect);
  d.depth_m.reset();
  d.box3.reset();
  if (j.contains("depth_m")) d.depth_m = j.at("depth_m").get<double>();
  if (j.contains("box3")) d.box3 = j.at("box3").get<Box3>();
}

inline void to_json(json& j, const FrameObservation& f) {
  j = json{{"kind", "frame"},
           {"camera_id", f.camera_id},
           {"time", f.time},
           {"detections", f.detections}};
  if (f.pose) j["pose"] = *f.pose;
}
inline void from_json(const json& j, FrameObservation& f) {
  j.at("camera_id").get_to(f.camera_id);
  j.at("time").get_to(f.time);
  j.at("detections").get_to(f.detections);
  f.pose.reset();
  if (j.contains("pose")) f.pose = j.at("pose").get<Pose>();
}

inline void to_json(json& j, const RelationCandidate& c) {
  j = json{{"kind", "relation_candidate"},
           {"time", c.time},
           {"subject_track", c.subject_track},
           {"object_track", c.object_track},
           {"predicate", c.predicate},
           {"confidence", c.confidence}};
}
inline void from_json(const json& j, RelationCandidate& c) {
  j.at("time").get_to(c.time);
  j.at("subject_track").get_to(c.subject_track);
  j.at("object_track").get_to(c.object_track);
  j.at("predicate").get_to(c.predicate);
  j.at("confidence").get_to(c.confidence);
}

inline void to_json(json& j, const SkillPrimitive& s) {
  j = json{{"verb", verb_name(s.verb)}, {"object", s.object}, {"region", s.region}};
}
inline void from_json(const json& j, SkillPrimitive& s) {
  const auto verb = j.at("verb").get<std::string>();
  if (verb == "navigate") s.verb = SkillVerb::Navigate;
  else if (verb == "pick") s.verb = SkillVerb::Pick;
  else if (verb == "place") s.verb = SkillVerb::Place;
  else throw ValidationError("unknown skill verb '" + verb + "'");
  j.at("object").get_to(s.object);
  j.at("region").get_to(s.region);
}

inline void to_json(json& j, const TaskPlan& p) {
  j = json{{"steps", p.steps}, {"snapshot_tick", p.snapshot_tick}};
}
inline void from_json(const json& j, TaskPlan& p) {
  j.at("steps").get_to(p.steps);
  j.at("snapshot_tick").get_to(p.snapshot_tick);
}

// ---- file helpers ----

inline json json_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("parse error in '" + path + "': " + e.what());
  }
  return j;
}

inline void json_to_file(const std::string& path, const json& j, int indent = 2) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(indent) << '\n';
}

/// One parsed JSON value per non-empty line; parse failures carry the line number.
inline std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ValidationError("parse error in '" + path + "' line " + std::to_string(lineno) +
                            ": " + e.what());
    }
  }
  return out;
}

}  // namespace hidyna
