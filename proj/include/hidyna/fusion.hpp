#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hidyna/json_codec.hpp"
#include "hidyna/scene_model.hpp"
#include "hidyna/static_builder.hpp"

namespace hidyna {

enum class FusionMode { Spatial, Semantic };

/// Anchoring parameters. Spatial mode needs posed instances (box3); semantic
/// mode needs a camera -> region map for every fused camera.
struct FusionConfig {
  FusionMode mode = FusionMode::Spatial;
  double b_thr = 0.6;
  std::set<std::string> static_classes{"couch", "fridge", "tv", "table", "counter", "shelf"};
  std::map<std::string, std::string> camera_region;
  OverlapMetric overlap_metric = OverlapMetric::MinVolume;

  bool is_static_class(const std::string& label) const {
    return static_classes.count(to_lower(label)) > 0;
  }
};

inline void to_json(json& j, const FusionConfig& c) {
  j = json{{"mode", c.mode == FusionMode::Spatial ? "spatial" : "semantic"},
           {"b_thr", c.b_thr},
           {"static_classes", c.static_classes},
           {"camera_region", c.camera_region},
           {"overlap_metric", c.overlap_metric == OverlapMetric::MinVolume ? "min_volume" : "iou"}};
}
inline void from_json(const json& j, FusionConfig& c) {
  FusionConfig d;
  const auto mode = j.value("mode", std::string{"spatial"});
  if (mode == "spatial") c.mode = FusionMode::Spatial;
  else if (mode == "semantic") c.mode = FusionMode::Semantic;
  else throw ValidationError("unknown fusion mode '" + mode + "'");
  c.b_thr = j.value("b_thr", d.b_thr);
  if (j.contains("static_classes")) {
    c.static_classes.clear();
    for (const auto& s : j.at("static_classes")) c.static_classes.insert(to_lower(s.get<std::string>()));
  }
  c.camera_region = j.value("camera_region", d.camera_region);
  const auto metric = j.value("overlap_metric", std::string{"min_volume"});
  c.overlap_metric = metric == "iou" ? OverlapMetric::IoU : OverlapMetric::MinVolume;
}

namespace detail {

/// Best-overlapping static vertex at or above b_thr; ties go to the larger
/// static volume, then the lexicographically smaller id.
inline const StaticObjectVertex* best_spatial_merge(const Box3& box, const GlobalGraph& base,
                                                    const FusionConfig& cfg) {
  const StaticObjectVertex* best = nullptr;
  double best_overlap = -1.0;
  for (const auto& s : base.static_objects) {
    double ov = box_overlap_ratio(box, s.box, cfg.overlap_metric);
    if (ov < cfg.b_thr) continue;
    if (!best || ov > best_overlap) {
      best = &s;
      best_overlap = ov;
    } else if (ov == best_overlap) {
      double vb = box_volume(best->box), vs = box_volume(s.box);
      if (vs > vb || (vs == vb && s.id < best->id)) best = &s;
    }
  }
  return best;
}

/// Largest same-class static vertex belonging to the given region.
inline const StaticObjectVertex* semantic_match(const std::string& label, const std::string& region,
                                                const GlobalGraph& base) {
  const StaticObjectVertex* best = nullptr;
  const std::string want = to_lower(label);
  for (const auto& s : base.static_objects) {
    if (to_lower(s.class_label) != want || s.region_id != region) continue;
    if (!best) {
      best = &s;
      continue;
    }
    double vb = box_volume(best->box), vs = box_volume(s.box);
    if (vs > vb || (vs == vb && s.id < best->id)) best = &s;
  }
  return best;
}

/// Connected components over instance vertices and relation edges, spans
/// ignored: any relation active in the window links its endpoints.
inline std::map<std::int64_t, std::size_t> components_of(const DynamicSubgraph& sub) {
  std::map<std::int64_t, std::size_t> index;
  std::vector<std::size_t> parent(sub.vertices.size());
  for (std::size_t i = 0; i < sub.vertices.size(); ++i) {
    index[sub.vertices[i].track_id] = i;
    parent[i] = i;
  }
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : sub.edges) parent[find(index.at(e.subject_id))] = find(index.at(e.object_id));
  std::map<std::int64_t, std::size_t> comp;
  for (const auto& [tid, i] : index) comp[tid] = find(i);
  return comp;
}

/// Region attachment per non-merged instance: its own anchor edge when it has
/// one, otherwise its component's unique attachment region.
inline std::map<std::int64_t, std::string> instance_regions(const UnifiedSnapshot& snap,
                                                            const AnchoredSubgraph& a) {
  std::map<std::int64_t, std::string> out;
  auto comp = components_of(a.subgraph);
  std::map<std::size_t, std::string> comp_region;
  for (const auto& e : a.anchors) comp_region[comp.at(e.track_id)] = e.region_id;
  for (const auto& m : snap.merges) {
    if (m.camera_id != a.subgraph.camera_id) continue;
    auto it = comp.find(m.track_id);
    if (it != comp.end()) comp_region[it->second] = snap.base.belonging_region(m.static_id);
  }
  for (const auto& e : a.anchors) out[e.track_id] = e.region_id;
  for (const auto& v : a.subgraph.vertices) {
    if (out.count(v.track_id) || snap.is_merged(a.subgraph.camera_id, v.track_id)) continue;
    auto it = comp_region.find(comp.at(v.track_id));
    if (it != comp_region.end()) out[v.track_id] = it->second;
  }
  return out;
}

}  // namespace detail

/// Spatial alignment: instances overlapping a static vertex at b_thr or more
/// merge into it; the rest anchor to the region containing their box. The base
/// graph is never mutated.
inline AnchoredSubgraph fuse_spatial(const GlobalGraph& base, const DynamicSubgraph& sub,
                                     const FusionConfig& cfg, std::vector<MergeRecord>& merges) {
  AnchoredSubgraph out{sub, {}};
  for (const auto& v : sub.vertices) {
    if (!v.box3) throw ValidationError("spatial fusion requires posed camera (instance " +
                                       std::to_string(v.track_id) + " has no box3)");
    if (const auto* s = detail::best_spatial_merge(*v.box3, base, cfg)) {
      merges.push_back({sub.camera_id, v.track_id, s->id});
    } else {
      out.anchors.push_back({v.track_id, assign_region(*v.box3, base.regions)});
    }
  }
  return out;
}

/// Semantic matching: connected components that contain a designated-class
/// vertex merge that vertex with the same-class static vertex in the camera's
/// region; components without any such match get one anchor edge from their
/// lowest track id to the region.
inline AnchoredSubgraph fuse_semantic(const GlobalGraph& base, const DynamicSubgraph& sub,
                                      const FusionConfig& cfg, std::vector<MergeRecord>& merges) {
  auto it = cfg.camera_region.find(sub.camera_id);
  if (it == cfg.camera_region.end())
    throw ValidationError("semantic fusion: unknown camera '" + sub.camera_id + "'");
  const std::string& region = it->second;
  if (!base.find_region(region))
    throw ValidationError("semantic fusion: camera '" + sub.camera_id +
                          "' maps to unknown region '" + region + "'");

  AnchoredSubgraph out{sub, {}};
  auto comp = detail::components_of(sub);

  std::map<std::size_t, std::vector<const InstanceVertex*>> members;
  for (const auto& v : sub.vertices) members[comp.at(v.track_id)].push_back(&v);

  for (auto& [root, verts] : members) {
    std::sort(verts.begin(), verts.end(), [](const InstanceVertex* a, const InstanceVertex* b) {
      return a->track_id < b->track_id;
    });
    bool attached = false;
    for (const auto* v : verts) {
      if (!cfg.is_static_class(v->class_label)) continue;
      if (const auto* s = detail::semantic_match(v->class_label, region, base)) {
        merges.push_back({sub.camera_id, v->track_id, s->id});
        attached = true;
      }
    }
    if (!attached) out.anchors.push_back({verts.front()->track_id, region});
  }
  return out;
}

/// One fusion cycle: prior dynamic content is discarded and each subgraph is
/// fused per the configured mode into a fresh immutable snapshot. Pure
/// function of (base, subgraphs); wall_time is the shared window end.
inline UnifiedSnapshot fuse_tick(const GlobalGraph& base,
                                 const std::vector<DynamicSubgraph>& subgraphs,
                                 const FusionConfig& cfg, std::int64_t tick_id) {
  double window_end = 0.0;
  for (std::size_t i = 0; i < subgraphs.size(); ++i) {
    if (i == 0) window_end = subgraphs[i].window_end;
    else if (std::abs(subgraphs[i].window_end - window_end) > 1e-9)
      throw ValidationError("fuse_tick: subgraphs have mixed window ends");
  }

  UnifiedSnapshot snap;
  snap.base = base;
  snap.tick = tick_id;
  snap.wall_time = window_end;
  for (const auto& sub : subgraphs) {
    snap.anchored.push_back(cfg.mode == FusionMode::Spatial
                                ? fuse_spatial(base, sub, cfg, snap.merges)
                                : fuse_semantic(base, sub, cfg, snap.merges));
  }
  return snap;
}

/// Anchoring totality: every instance vertex is merged XOR anchored. Either
/// it carries exactly one merge record, or it reaches exactly one region via
/// its own anchor edge or its component's attachment. Throws on violation.
inline void validate_snapshot(const UnifiedSnapshot& snap) {
  validate_global_graph(snap.base);
  for (const auto& a : snap.anchored) {
    std::map<std::int64_t, int> merge_count;
    std::map<std::int64_t, std::vector<std::string>> own_anchor;
    for (const auto& m : snap.merges) {
      if (m.camera_id != a.subgraph.camera_id) continue;
      if (!a.subgraph.find_vertex(m.track_id))
        throw ValidationError("merge references unknown track");
      if (!snap.base.find_static(m.static_id))
        throw ValidationError("merge references unknown static vertex");
      ++merge_count[m.track_id];
    }
    for (const auto& e : a.anchors) {
      if (!a.subgraph.find_vertex(e.track_id))
        throw ValidationError("anchor references unknown track");
      if (!snap.base.find_region(e.region_id))
        throw ValidationError("anchor references unknown region");
      own_anchor[e.track_id].push_back(e.region_id);
    }

    auto comp = detail::components_of(a.subgraph);
    std::map<std::size_t, std::set<std::string>> comp_regions;
    for (const auto& e : a.anchors) comp_regions[comp.at(e.track_id)].insert(e.region_id);
    for (const auto& m : snap.merges) {
      if (m.camera_id != a.subgraph.camera_id) continue;
      comp_regions[comp.at(m.track_id)].insert(snap.base.belonging_region(m.static_id));
    }

    for (const auto& v : a.subgraph.vertices) {
      const int merged = merge_count.count(v.track_id) ? merge_count[v.track_id] : 0;
      const auto anchors_it = own_anchor.find(v.track_id);
      const std::size_t anchors = anchors_it == own_anchor.end() ? 0 : anchors_it->second.size();
      if (merged > 1) throw ValidationError("instance merged into more than one static vertex");
      if (merged == 1 && anchors > 0)
        throw ValidationError("instance both merged and anchored");
      if (merged == 1) continue;
      if (anchors == 1) continue;
      if (anchors > 1) throw ValidationError("instance anchored more than once");
      const auto reach = comp_regions.find(comp.at(v.track_id));
      if (reach == comp_regions.end() || reach->second.empty())
        throw ValidationError("instance neither merged nor anchored");
      if (reach->second.size() > 1)
        throw ValidationError("instance reachable from more than one region");
    }
  }
}

}  // namespace hidyna
