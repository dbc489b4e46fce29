#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hidyna/geometry.hpp"

namespace hidyna {

/// Fixed-length instance descriptor; dimension is declared per stream and
/// must stay constant within it.
struct Feature {
  std::vector<double> values;

  friend bool operator==(const Feature&, const Feature&) = default;
};

inline double cosine_similarity(const Feature& a, const Feature& b) {
  if (a.values.size() != b.values.size() || a.values.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

/// Room-scale node of the global graph. Footprint is a simple CCW polygon in
/// floor coordinates (meters).
struct RegionVertex {
  std::string id;
  std::string name;
  Polygon2 footprint;
  Vec2 centroid{0.0, 0.0};

  friend bool operator==(const RegionVertex&, const RegionVertex&) = default;
};

/// Rarely-moved macro-object kept in the global graph after the relatively
/// static filter. merged_from records the observation ids unioned into it.
struct StaticObjectVertex {
  std::string id;
  std::string class_label;
  Box3 box;
  std::string region_id;
  std::vector<std::string> merged_from;

  friend bool operator==(const StaticObjectVertex&, const StaticObjectVertex&) = default;
};

enum class StaticEdgeKind { Connectivity, Belonging };

/// connectivity: region<->region, stored once, queried both ways.
/// belonging: object -> region.
struct StaticEdge {
  StaticEdgeKind kind = StaticEdgeKind::Connectivity;
  std::string a;
  std::string b;

  friend bool operator==(const StaticEdge&, const StaticEdge&) = default;
};

struct PixelRect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline double rect_iou(const PixelRect& a, const PixelRect& b) {
  double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  double inter = ix * iy;
  double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// One tracked instance within a window. box3 is present iff the source
/// camera is posed.
struct InstanceVertex {
  std::int64_t track_id = 0;
  std::string class_label;
  Feature feature;
  PixelRect last_footprint;
  std::optional<Box3> box3;
  double first_seen = 0.0;
  double last_seen = 0.0;

  friend bool operator==(const InstanceVertex&, const InstanceVertex&) = default;
};

using TimeSpan = std::pair<double, double>;

/// Subject-predicate-object relation with the time spans it was observed,
/// disjoint and sorted; gaps below the consolidation threshold are merged away.
struct RelationEdge {
  std::int64_t subject_id = 0;
  std::string subject_class;
  std::int64_t object_id = 0;
  std::string object_class;
  std::string predicate;
  std::vector<TimeSpan> spans;

  friend bool operator==(const RelationEdge&, const RelationEdge&) = default;
};

/// Per-camera, per-window dynamic relation graph.
struct DynamicSubgraph {
  double window_start = 0.0;
  double window_end = 0.0;
  std::string camera_id;
  std::vector<InstanceVertex> vertices;
  std::vector<RelationEdge> edges;

  const InstanceVertex* find_vertex(std::int64_t track_id) const {
    for (const auto& v : vertices)
      if (v.track_id == track_id) return &v;
    return nullptr;
  }

  friend bool operator==(const DynamicSubgraph&, const DynamicSubgraph&) = default;
};

/// Persistent global layer: regions, filtered static objects, connectivity
/// and belonging edges.
struct GlobalGraph {
  std::vector<RegionVertex> regions;
  std::vector<StaticObjectVertex> static_objects;
  std::vector<StaticEdge> static_edges;
  std::int64_t version = 0;

  const RegionVertex* find_region(const std::string& id) const {
    for (const auto& r : regions)
      if (r.id == id) return &r;
    return nullptr;
  }
  const StaticObjectVertex* find_static(const std::string& id) const {
    for (const auto& o : static_objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  /// Region of a static object via its belonging edge.
  std::string belonging_region(const std::string& object_id) const {
    for (const auto& e : static_edges)
      if (e.kind == StaticEdgeKind::Belonging && e.a == object_id) return e.b;
    return {};
  }
  std::vector<std::string> neighbors(const std::string& region_id) const {
    std::vector<std::string> out;
    for (const auto& e : static_edges) {
      if (e.kind != StaticEdgeKind::Connectivity) continue;
      if (e.a == region_id) out.push_back(e.b);
      else if (e.b == region_id) out.push_back(e.a);
    }
    return out;
  }

  friend bool operator==(const GlobalGraph&, const GlobalGraph&) = default;
};

/// Instance -> region attachment produced by fusion for vertices that did not
/// merge into a static vertex.
struct AnchorEdge {
  std::int64_t track_id = 0;
  std::string region_id;

  friend bool operator==(const AnchorEdge&, const AnchorEdge&) = default;
};

struct AnchoredSubgraph {
  DynamicSubgraph subgraph;
  std::vector<AnchorEdge> anchors;

  friend bool operator==(const AnchoredSubgraph&, const AnchoredSubgraph&) = default;
};

/// Dynamic vertex identified with an existing static vertex.
struct MergeRecord {
  std::string camera_id;
  std::int64_t track_id = 0;
  std::string static_id;

  friend bool operator==(const MergeRecord&, const MergeRecord&) = default;
};

/// Immutable fused graph at one tick; the unit read by the agent and planner.
/// The base graph is carried structurally unchanged.
struct UnifiedSnapshot {
  GlobalGraph base;
  std::vector<AnchoredSubgraph> anchored;
  std::vector<MergeRecord> merges;
  std::int64_t tick = 0;
  double wall_time = 0.0;

  bool is_merged(const std::string& camera_id, std::int64_t track_id) const {
    for (const auto& m : merges)
      if (m.camera_id == camera_id && m.track_id == track_id) return true;
    return false;
  }

  friend bool operator==(const UnifiedSnapshot&, const UnifiedSnapshot&) = default;
};

/// One detected instance in a frame. box3 is precomputed by the perception
/// front-end when available; otherwise pose + depth_m allow back-projection.
struct Detection {
  std::string label;
  double score = 1.0;
  Feature feature;
  PixelRect rect;
  std::optional<double> depth_m;
  std::optional<Box3> box3;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameObservation {
  std::string camera_id;
  double time = 0.0;
  std::optional<Pose> pose;
  std::vector<Detection> detections;

  friend bool operator==(const FrameObservation&, const FrameObservation&) = default;
};

/// Externally scored relation hypothesis for one frame; ingested, not learned.
struct RelationCandidate {
  double time = 0.0;
  std::int64_t subject_track = 0;
  std::int64_t object_track = 0;
  std::string predicate;
  double confidence = 0.0;

  friend bool operator==(const RelationCandidate&, const RelationCandidate&) = default;
};

enum class SkillVerb { Navigate, Pick, Place };

inline const char* verb_name(SkillVerb v) {
  switch (v) {
    case SkillVerb::Navigate: return "navigate";
    case SkillVerb::Pick: return "pick";
    case SkillVerb::Place: return "place";
  }
  return "?";
}

struct SkillPrimitive {
  SkillVerb verb = SkillVerb::Navigate;
  std::string object;
  std::string region;

  friend bool operator==(const SkillPrimitive&, const SkillPrimitive&) = default;
};

struct TaskPlan {
  std::vector<SkillPrimitive> steps;
  std::int64_t snapshot_tick = 0;

  friend bool operator==(const TaskPlan&, const TaskPlan&) = default;
};

// ---- structural validation used by tests and ingest paths ----

inline void validate_region(const RegionVertex& r) {
  if (r.footprint.size() < 3 || !polygon_is_simple(r.footprint))
    throw ValidationError("region '" + r.id + "': footprint must be a simple polygon");
}

inline void validate_relation_edge(const RelationEdge& e, double min_gap) {
  double prev_end = -std::numeric_limits<double>::infinity();
  for (const auto& [ta, tb] : e.spans) {
    if (ta >= tb) throw ValidationError("relation span with t_a >= t_b");
    if (ta - prev_end < 0.0) throw ValidationError("relation spans overlap or are unsorted");
    if (prev_end > -std::numeric_limits<double>::infinity() && ta - prev_end < min_gap)
      throw ValidationError("relation spans closer than the consolidation gap");
    prev_end = tb;
  }
}

inline void validate_subgraph(const DynamicSubgraph& g, double min_gap = 0.0) {
  for (const auto& e : g.edges) {
    if (!g.find_vertex(e.subject_id) || !g.find_vertex(e.object_id))
      throw ValidationError("relation edge endpoint not in subgraph");
    validate_relation_edge(e, min_gap);
  }
  for (const auto& v : g.vertices)
    if (v.first_seen > v.last_seen)
      throw ValidationError("instance first_seen > last_seen");
}

inline void validate_global_graph(const GlobalGraph& g) {
  std::set<std::string> region_ids;
  for (const auto& r : g.regions) {
    validate_region(r);
    if (!region_ids.insert(r.id).second)
      throw ValidationError("duplicate region id '" + r.id + "'");
  }
  std::map<std::string, int> belonging_count;
  for (const auto& o : g.static_objects) belonging_count[o.id] = 0;
  for (const auto& e : g.static_edges) {
    if (e.kind == StaticEdgeKind::Connectivity) {
      if (!region_ids.count(e.a) || !region_ids.count(e.b) || e.a == e.b)
        throw ValidationError("connectivity edge must link two distinct regions");
    } else {
      if (!belonging_count.count(e.a) || !region_ids.count(e.b))
        throw ValidationError("belonging edge must link object -> region");
      ++belonging_count[e.a];
    }
  }
  for (const auto& [id, n] : belonging_count)
    if (n != 1) throw ValidationError("object '" + id + "' must have exactly one belonging edge");
  for (const auto& o : g.static_objects)
    if (!region_ids.count(o.region_id))
      throw ValidationError("object '" + o.id + "' references unknown region");
}

}  // namespace hidyna
