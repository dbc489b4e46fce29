#pragma once

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "hidyna/json_codec.hpp"
#include "hidyna/scene_model.hpp"

namespace hidyna {

inline std::string to_lower(std::string s) {
  for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Relatively-static filter parameters plus connectivity extraction knobs.
struct StaticBuildConfig {
  double v_thr = 2.0;  // m^3
  std::set<std::string> static_classes{"couch", "fridge", "tv", "table", "counter", "shelf"};
  double merge_overlap = 0.6;
  double connectivity_gap_m = 1.5;

  bool is_static_class(const std::string& label) const {
    return static_classes.count(to_lower(label)) > 0;
  }

  void validate() const {
    if (v_thr <= 0.0) throw ValidationError("static config: v_thr must be > 0");
    if (merge_overlap <= 0.0 || merge_overlap > 1.0)
      throw ValidationError("static config: merge_overlap must lie in (0,1]");
    if (connectivity_gap_m < 0.0)
      throw ValidationError("static config: connectivity_gap_m must be >= 0");
  }
};

inline void to_json(json& j, const StaticBuildConfig& c) {
  j = json{{"v_thr", c.v_thr},
           {"static_classes", c.static_classes},
           {"merge_overlap", c.merge_overlap},
           {"connectivity_gap_m", c.connectivity_gap_m}};
}
inline void from_json(const json& j, StaticBuildConfig& c) {
  StaticBuildConfig d;
  c.v_thr = j.value("v_thr", d.v_thr);
  if (j.contains("static_classes")) {
    c.static_classes.clear();
    for (const auto& s : j.at("static_classes")) c.static_classes.insert(to_lower(s.get<std::string>()));
  }
  c.merge_overlap = j.value("merge_overlap", d.merge_overlap);
  c.connectivity_gap_m = j.value("connectivity_gap_m", d.connectivity_gap_m);
}

/// One posed object observation before filtering/merging.
struct StaticCandidate {
  std::string label;
  Box3 box;
  std::string source_id;

  friend bool operator==(const StaticCandidate&, const StaticCandidate&) = default;
};

/// Declared doorway segment used for region connectivity.
struct Doorway {
  std::string id;
  Vec2 a{0.0, 0.0};
  Vec2 b{0.0, 0.0};
};

inline void to_json(json& j, const Doorway& d) {
  j = json{{"id", d.id}, {"a", d.a}, {"b", d.b}};
}
inline void from_json(const json& j, Doorway& d) {
  d.id = j.value("id", std::string{});
  j.at("a").get_to(d.a);
  j.at("b").get_to(d.b);
}

/// Keeps exactly the candidates with volume >= v_thr or a designated class.
inline std::vector<StaticCandidate> filter_static(const std::vector<StaticCandidate>& candidates,
                                                  const StaticBuildConfig& cfg) {
  std::vector<StaticCandidate> kept;
  for (const auto& c : candidates)
    if (box_volume(c.box) >= cfg.v_thr || cfg.is_static_class(c.label)) kept.push_back(c);
  return kept;
}

/// Containing footprint wins; otherwise nearest region centroid. Ties break to
/// the lexicographically smaller region id.
inline std::string assign_region(const Box3& box, const std::vector<RegionVertex>& regions) {
  if (regions.empty()) throw ValidationError("assign_region: no regions");
  const Vec3 c3 = box.center();
  const Vec2 c{c3[0], c3[1]};

  const RegionVertex* containing = nullptr;
  for (const auto& r : regions) {
    if (!point_in_polygon(c, r.footprint)) continue;
    if (!containing || r.id < containing->id) containing = &r;
  }
  if (containing) return containing->id;

  const RegionVertex* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& r : regions) {
    double d = norm2({c[0] - r.centroid[0], c[1] - r.centroid[1]});
    if (d < best_d || (d == best_d && best && r.id < best->id)) {
      best = &r;
      best_d = d;
    }
  }
  return best->id;
}

namespace detail {
struct Dsu {
  std::vector<std::size_t> parent;
  explicit Dsu(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};
}  // namespace detail

/// Unions same-label candidates whose pairwise overlap reaches merge_overlap
/// (transitively) into a single min/max envelope vertex.
inline std::vector<StaticCandidate> merge_duplicate_statics(
    const std::vector<StaticCandidate>& kept, const StaticBuildConfig& cfg,
    std::vector<std::vector<std::string>>* merged_from = nullptr) {
  detail::Dsu dsu(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = i + 1; j < kept.size(); ++j)
      if (kept[i].label == kept[j].label &&
          box_overlap_ratio(kept[i].box, kept[j].box) >= cfg.merge_overlap)
        dsu.unite(i, j);

  std::vector<StaticCandidate> out;
  if (merged_from) merged_from->clear();
  std::vector<long> group_of(kept.size(), -1);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    std::size_t root = dsu.find(i);
    if (group_of[root] < 0) {
      group_of[root] = long(out.size());
      out.push_back(kept[i]);
      if (merged_from) merged_from->push_back({kept[i].source_id});
    } else {
      auto& v = out[std::size_t(group_of[root])];
      v.box = v.box.envelope(kept[i].box);
      if (merged_from) (*merged_from)[std::size_t(group_of[root])].push_back(kept[i].source_id);
    }
  }
  return out;
}

/// Connectivity edge between two regions iff a doorway segment lies within
/// connectivity_gap_m of both footprints. Doorways touching fewer than two
/// regions are skipped with a warning.
inline std::vector<StaticEdge> build_connectivity(const std::vector<RegionVertex>& regions,
                                                  const std::vector<Doorway>& doorways,
                                                  const StaticBuildConfig& cfg,
                                                  std::vector<std::string>* warnings = nullptr) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& d : doorways) {
    std::vector<const RegionVertex*> touched;
    for (const auto& r : regions)
      if (segment_polygon_distance(d.a, d.b, r.footprint) <= cfg.connectivity_gap_m)
        touched.push_back(&r);
    if (touched.size() < 2) {
      if (warnings)
        warnings->push_back("doorway '" + d.id + "' touches " +
                            std::to_string(touched.size()) + " region(s); skipped");
      continue;
    }
    for (std::size_t i = 0; i < touched.size(); ++i)
      for (std::size_t j = i + 1; j < touched.size(); ++j) {
        auto a = touched[i]->id, b = touched[j]->id;
        if (b < a) std::swap(a, b);
        pairs.insert({a, b});
      }
  }
  std::vector<StaticEdge> edges;
  for (const auto& [a, b] : pairs) edges.push_back({StaticEdgeKind::Connectivity, a, b});
  return edges;
}

inline std::string sanitize_id(const std::string& label) {
  std::string s = to_lower(label);
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

/// Extracts candidates from posed frames (detections must carry box3),
/// filters, merges duplicates, assigns one belonging edge per object, and
/// adds doorway connectivity. Deterministic: same inputs, byte-identical export.
inline GlobalGraph build_static_graph(const std::vector<FrameObservation>& frames,
                                      const std::vector<RegionVertex>& regions,
                                      const std::vector<Doorway>& doorways,
                                      const StaticBuildConfig& cfg,
                                      std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  for (const auto& r : regions) validate_region(r);
  if (regions.empty()) throw ValidationError("build_static_graph: no regions");

  std::vector<StaticCandidate> candidates;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const auto& f = frames[fi];
    if (!f.pose)
      throw ValidationError("build_static_graph: frame " + std::to_string(fi) + " (" +
                            f.camera_id + ") is not posed");
    if (!f.pose->unit_quaternion())
      throw ValidationError("build_static_graph: frame " + std::to_string(fi) +
                            " pose quaternion is not unit length");
    for (std::size_t di = 0; di < f.detections.size(); ++di) {
      const auto& d = f.detections[di];
      if (!d.box3)
        throw ValidationError("build_static_graph: detection without box3 (frame " +
                              std::to_string(fi) + ", detection " + std::to_string(di) + ")");
      if (d.score < 0.0 || d.score > 1.0)
        throw ValidationError("build_static_graph: detection score outside [0,1]");
      candidates.push_back(
          {d.label, *d.box3, f.camera_id + ":" + std::to_string(fi) + ":" + std::to_string(di)});
    }
  }

  auto kept = filter_static(candidates, cfg);
  std::vector<std::vector<std::string>> merged_from;
  auto merged = merge_duplicate_statics(kept, cfg, &merged_from);

  GlobalGraph g;
  g.regions = regions;
  g.version = 0;
  g.static_edges = build_connectivity(regions, doorways, cfg, warnings);

  std::map<std::string, int> label_counter;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    StaticObjectVertex v;
    v.class_label = merged[i].label;
    v.box = merged[i].box;
    v.merged_from = merged_from[i];
    v.region_id = assign_region(v.box, regions);
    v.id = sanitize_id(v.class_label) + "-" + std::to_string(++label_counter[v.class_label]);
    g.static_objects.push_back(v);
    g.static_edges.push_back({StaticEdgeKind::Belonging, v.id, v.region_id});
  }
  validate_global_graph(g);
  return g;
}

// ---- annotation file loaders ----

inline std::vector<RegionVertex> load_regions(const std::string& path) {
  auto j = json_from_file(path);
  const json& arr = j.is_array() ? j : j.at("regions");
  return arr.get<std::vector<RegionVertex>>();
}

inline std::vector<Doorway> load_doorways(const std::string& path) {
  auto j = json_from_file(path);
  const json& arr = j.is_array() ? j : j.at("doorways");
  return arr.get<std::vector<Doorway>>();
}

inline std::vector<FrameObservation> load_frames_jsonl(const std::string& path) {
  std::vector<FrameObservation> frames;
  for (const auto& j : read_jsonl(path)) {
    if (j.value("kind", "frame") != "frame") continue;
    frames.push_back(j.get<FrameObservation>());
  }
  return frames;
}

}  // namespace hidyna
