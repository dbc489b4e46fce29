#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hidyna/json_codec.hpp"
#include "hidyna/scene_model.hpp"
#include "hidyna/static_builder.hpp"

namespace hidyna {

struct CameraIntrinsics {
  double focal_px = 500.0;
  double cx = 320.0;
  double cy = 240.0;
};

inline void to_json(json& j, const CameraIntrinsics& c) {
  j = json{{"focal_px", c.focal_px}, {"cx", c.cx}, {"cy", c.cy}};
}
inline void from_json(const json& j, CameraIntrinsics& c) {
  CameraIntrinsics d;
  c.focal_px = j.value("focal_px", d.focal_px);
  c.cx = j.value("cx", d.cx);
  c.cy = j.value("cy", d.cy);
}

/// Sliding-window pipeline parameters. Defaults follow the recording protocol
/// (5 Hz frames, 10 s window, 2 s span consolidation, 70% prioritized pairs).
struct DynamicConfig {
  double window_s = 10.0;
  double frame_hz = 5.0;
  int top_k = 20;
  double priority_fraction = 0.7;
  double merge_gap_s = 2.0;
  double assoc_iou_min = 0.3;
  double assoc_feat_min = 0.5;
  double conf_min = 0.5;
  std::set<std::string> human_labels{"person", "human", "man", "woman", "adult", "child"};
  std::set<std::string> furniture_labels{"couch", "fridge", "tv", "table", "counter", "shelf"};
  CameraIntrinsics intrinsics;
  double default_extent_m = 0.3;

  bool is_human(const std::string& label) const { return human_labels.count(to_lower(label)) > 0; }
  bool is_furniture(const std::string& label) const {
    return furniture_labels.count(to_lower(label)) > 0;
  }
  double frame_gap_tol() const { return 1.0 / frame_hz + 1e-6; }

  void validate() const {
    if (window_s <= 0.0) throw ValidationError("dynamic config: window_s must be > 0");
    if (frame_hz <= 0.0) throw ValidationError("dynamic config: frame_hz must be > 0");
    if (priority_fraction < 0.0 || priority_fraction > 1.0)
      throw ValidationError("dynamic config: priority_fraction must lie in [0,1]");
    if (merge_gap_s < 0.0) throw ValidationError("dynamic config: merge_gap_s must be >= 0");
    if (conf_min < 0.0 || conf_min > 1.0)
      throw ValidationError("dynamic config: conf_min must lie in [0,1]");
    if (top_k < 0) throw ValidationError("dynamic config: top_k must be >= 0");
  }
};

inline void to_json(json& j, const DynamicConfig& c) {
  j = json{{"window_s", c.window_s},
           {"frame_hz", c.frame_hz},
           {"top_k", c.top_k},
           {"priority_fraction", c.priority_fraction},
           {"merge_gap_s", c.merge_gap_s},
           {"assoc_iou_min", c.assoc_iou_min},
           {"assoc_feat_min", c.assoc_feat_min},
           {"conf_min", c.conf_min},
           {"human_labels", c.human_labels},
           {"furniture_labels", c.furniture_labels},
           {"intrinsics", c.intrinsics},
           {"default_extent_m", c.default_extent_m}};
}
inline void from_json(const json& j, DynamicConfig& c) {
  DynamicConfig d;
  c.window_s = j.value("window_s", d.window_s);
  c.frame_hz = j.value("frame_hz", d.frame_hz);
  c.top_k = j.value("top_k", d.top_k);
  c.priority_fraction = j.value("priority_fraction", d.priority_fraction);
  c.merge_gap_s = j.value("merge_gap_s", d.merge_gap_s);
  c.assoc_iou_min = j.value("assoc_iou_min", d.assoc_iou_min);
  c.assoc_feat_min = j.value("assoc_feat_min", d.assoc_feat_min);
  c.conf_min = j.value("conf_min", d.conf_min);
  if (j.contains("human_labels")) {
    c.human_labels.clear();
    for (const auto& s : j.at("human_labels")) c.human_labels.insert(to_lower(s.get<std::string>()));
  }
  if (j.contains("furniture_labels")) {
    c.furniture_labels.clear();
    for (const auto& s : j.at("furniture_labels"))
      c.furniture_labels.insert(to_lower(s.get<std::string>()));
  }
  if (j.contains("intrinsics")) j.at("intrinsics").get_to(c.intrinsics);
  c.default_extent_m = j.value("default_extent_m", d.default_extent_m);
}

/// Pinhole back-projection of the rect center at the given depth, transformed
/// into world coordinates; extent falls back to a fixed cube.
inline Box3 backproject_rect(const Pose& pose, const PixelRect& rect, double depth_m,
                             const CameraIntrinsics& intr, double extent_m) {
  const double u = rect.x + rect.w * 0.5;
  const double v = rect.y + rect.h * 0.5;
  const Vec3 p_cam{(u - intr.cx) / intr.focal_px * depth_m, (v - intr.cy) / intr.focal_px * depth_m,
                   depth_m};
  const Vec3 world = pose.apply(p_cam);
  return Box3::from_center_extent(world, {extent_m, extent_m, extent_m});
}

struct TrackEntry {
  double time = 0.0;
  std::string label;
  PixelRect rect;
  Feature feature;
  std::optional<Box3> box3;
};

/// One associated instance across the window's frames.
struct Track {
  std::int64_t track_id = 0;
  std::vector<TrackEntry> entries;

  /// Majority-vote label; ties resolve to the earliest-seen label.
  std::string class_label() const {
    std::map<std::string, int> counts;
    for (const auto& e : entries) ++counts[e.label];
    std::string best;
    int best_n = -1;
    for (const auto& e : entries) {
      int n = counts[e.label];
      if (n > best_n) {
        best = e.label;
        best_n = n;
      }
    }
    return best;
  }

  const TrackEntry& last() const { return entries.back(); }
  bool seen_at(double t) const {
    for (const auto& e : entries)
      if (e.time == t) return true;
    return false;
  }
};

/// Greedy per-frame association maximizing (rect IoU + cosine similarity)/2,
/// both floors required. Unmatched detections open new tracks; ids follow
/// first-seen order. Tracks never expire within a window.
inline std::vector<Track> associate_frames(const std::vector<FrameObservation>& window_frames,
                                           const DynamicConfig& cfg) {
  std::vector<Track> tracks;
  std::size_t feature_dim = 0;
  bool dim_known = false;

  for (const auto& frame : window_frames) {
    const bool posed = frame.pose.has_value();
    struct Cand {
      double score;
      std::size_t track;
      std::size_t det;
    };
    std::vector<Cand> cands;
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
      const auto& last = tracks[ti].last();
      for (std::size_t di = 0; di < frame.detections.size(); ++di) {
        const auto& d = frame.detections[di];
        if (dim_known && d.feature.values.size() != feature_dim)
          throw ValidationError("associate_frames: feature dimension mismatch within stream");
        double iou = rect_iou(last.rect, d.rect);
        double sim = cosine_similarity(last.feature, d.feature);
        if (iou < cfg.assoc_iou_min || sim < cfg.assoc_feat_min) continue;
        cands.push_back({(iou + sim) * 0.5, ti, di});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.track != b.track) return a.track < b.track;
      return a.det < b.det;
    });

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> det_used(frame.detections.size(), false);
    auto make_entry = [&](const Detection& d) {
      if (!dim_known) {
        feature_dim = d.feature.values.size();
        dim_known = true;
      } else if (d.feature.values.size() != feature_dim) {
        throw ValidationError("associate_frames: feature dimension mismatch within stream");
      }
      for (double v : d.feature.values)
        if (!std::isfinite(v))
          throw ValidationError("associate_frames: non-finite feature entry");
      TrackEntry e{frame.time, d.label, d.rect, d.feature, std::nullopt};
      if (posed) {
        if (d.box3) e.box3 = d.box3;
        else if (d.depth_m)
          e.box3 = backproject_rect(*frame.pose, d.rect, *d.depth_m, cfg.intrinsics,
                                    cfg.default_extent_m);
        else
          throw ValidationError("associate_frames: posed frame requires box3 or depth_m");
      }
      return e;
    };

    for (const auto& c : cands) {
      if (track_used[c.track] || det_used[c.det]) continue;
      track_used[c.track] = true;
      det_used[c.det] = true;
      tracks[c.track].entries.push_back(make_entry(frame.detections[c.det]));
    }
    for (std::size_t di = 0; di < frame.detections.size(); ++di) {
      if (det_used[di]) continue;
      Track t;
      t.track_id = std::int64_t(tracks.size());
      t.entries.push_back(make_entry(frame.detections[di]));
      tracks.push_back(std::move(t));
    }
  }
  return tracks;
}

using TrackPair = std::pair<std::int64_t, std::int64_t>;  // (subject, object)

/// Top-k pair proposal with the relatively-static prior: one candidate per
/// unordered track pair, oriented human-as-subject / furniture-as-object
/// (lower id as subject otherwise). ceil(priority_fraction * top_k) slots go
/// to prioritized pairs ranked by co-visibility; shortfall in either pool
/// backfills from the other.
inline std::vector<TrackPair> propose_pairs(const std::vector<Track>& tracks,
                                            const DynamicConfig& cfg) {
  if (tracks.size() < 2 || cfg.top_k <= 0) return {};

  struct Scored {
    TrackPair pair;
    int covis;
  };
  std::vector<Scored> prioritized, others;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = i + 1; j < tracks.size(); ++j) {
      const Track* s = &tracks[i];
      const Track* o = &tracks[j];
      const std::string li = s->class_label(), lj = o->class_label();
      const bool hi = cfg.is_human(li), hj = cfg.is_human(lj);
      const bool fi = cfg.is_furniture(li), fj = cfg.is_furniture(lj);
      if (hj && !hi) std::swap(s, o);
      else if (!hi && !hj && fi && !fj) std::swap(s, o);
      if (s->track_id > o->track_id && ((hi && hj) || (!hi && !hj && !(fi ^ fj))))
        std::swap(s, o);

      int covis = 0;
      for (const auto& e : tracks[i].entries)
        if (tracks[j].seen_at(e.time)) ++covis;

      Scored sc{{s->track_id, o->track_id}, covis};
      const bool prio = cfg.is_human(s->class_label()) || cfg.is_furniture(o->class_label());
      (prio ? prioritized : others).push_back(sc);
    }
  }
  auto rank = [](std::vector<Scored>& v) {
    std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
      if (a.covis != b.covis) return a.covis > b.covis;
      return a.pair < b.pair;
    });
  };
  rank(prioritized);
  rank(others);

  const std::size_t k = std::size_t(cfg.top_k);
  const std::size_t quota = std::size_t(std::ceil(cfg.priority_fraction * double(cfg.top_k)));
  const std::size_t rest = k > quota ? k - quota : 0;
  std::size_t take_p = std::min(quota, prioritized.size());
  std::size_t take_o = std::min(rest, others.size());
  take_p = std::min(prioritized.size(), take_p + (rest - take_o));    // backfill from prioritized
  take_o = std::min(others.size(), take_o + (quota - std::min(quota, prioritized.size())));
  if (take_p + take_o > k) take_o = k - take_p;

  std::vector<TrackPair> out;
  out.reserve(take_p + take_o);
  for (std::size_t i = 0; i < take_p; ++i) out.push_back(prioritized[i].pair);
  for (std::size_t i = 0; i < take_o; ++i) out.push_back(others[i].pair);
  return out;
}

/// Sorts spans and merges neighbors whose gap is below merge_gap_s; output is
/// disjoint, sorted, and all remaining gaps are >= merge_gap_s.
inline std::vector<TimeSpan> consolidate_spans(std::vector<TimeSpan> spans, double merge_gap_s) {
  for (const auto& [ta, tb] : spans)
    if (ta >= tb) throw ValidationError("consolidate_spans: span with t_a >= t_b");
  std::sort(spans.begin(), spans.end());
  std::vector<TimeSpan> out;
  for (const auto& s : spans) {
    if (!out.empty() && s.first - out.back().second < merge_gap_s)
      out.back().second = std::max(out.back().second, s.second);
    else
      out.push_back(s);
  }
  return out;
}

struct RelationAssembly {
  std::vector<RelationEdge> edges;
  std::size_t unknown_track_skips = 0;
};

/// Builds relation edges for the proposed pairs from per-frame candidate
/// scores: confidence-gated hits form contiguous runs (frame-gap tolerant),
/// runs become raw spans, spans get consolidated. Candidates referencing
/// unknown tracks are skipped and counted.
inline RelationAssembly assemble_relations(const std::vector<TrackPair>& pairs,
                                           const std::vector<RelationCandidate>& candidates,
                                           const std::vector<Track>& tracks,
                                           double window_start, double window_end,
                                           const DynamicConfig& cfg) {
  RelationAssembly result;
  std::map<std::int64_t, const Track*> by_id;
  for (const auto& t : tracks) by_id[t.track_id] = &t;
  std::set<TrackPair> proposed(pairs.begin(), pairs.end());

  std::map<std::tuple<std::int64_t, std::int64_t, std::string>, std::vector<double>> hits;
  for (const auto& c : candidates) {
    if (c.time < window_start || c.time >= window_end) continue;
    if (c.confidence < cfg.conf_min) continue;
    if (!by_id.count(c.subject_track) || !by_id.count(c.object_track)) {
      ++result.unknown_track_skips;
      continue;
    }
    if (!proposed.count({c.subject_track, c.object_track})) continue;
    hits[{c.subject_track, c.object_track, c.predicate}].push_back(c.time);
  }

  const double gap_tol = cfg.frame_gap_tol();
  const double single_width = 0.5 / cfg.frame_hz;
  for (auto& [key, times] : hits) {
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::vector<TimeSpan> raw;
    double run_start = times.front(), run_end = times.front();
    auto flush = [&] {
      // A single-frame run widens to half a frame period to keep t_a < t_b.
      raw.emplace_back(run_start, run_end > run_start ? run_end : run_start + single_width);
    };
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (times[i] - run_end <= gap_tol) {
        run_end = times[i];
      } else {
        flush();
        run_start = run_end = times[i];
      }
    }
    flush();

    RelationEdge e;
    e.subject_id = std::get<0>(key);
    e.object_id = std::get<1>(key);
    e.predicate = std::get<2>(key);
    e.subject_class = by_id[e.subject_id]->class_label();
    e.object_class = by_id[e.object_id]->class_label();
    e.spans = consolidate_spans(raw, cfg.merge_gap_s);
    result.edges.push_back(std::move(e));
  }
  return result;
}

inline InstanceVertex vertex_from_track(const Track& t) {
  InstanceVertex v;
  v.track_id = t.track_id;
  v.class_label = t.class_label();
  v.feature = t.last().feature;
  v.last_footprint = t.last().rect;
  v.box3 = t.last().box3;
  v.first_seen = t.entries.front().time;
  v.last_seen = t.entries.back().time;
  return v;
}

/// Full per-window pipeline: association, pair proposal, relation assembly.
/// Consumes only data inside [window_start, window_end).
inline DynamicSubgraph build_subgraph(const std::vector<FrameObservation>& frames,
                                      const std::vector<RelationCandidate>& candidates,
                                      const std::string& camera_id, double window_start,
                                      double window_end, const DynamicConfig& cfg,
                                      std::size_t* unknown_track_skips = nullptr) {
  cfg.validate();
  if (std::abs((window_end - window_start) - cfg.window_s) > 1e-6)
    throw ValidationError("build_subgraph: window does not match configured window length");

  std::vector<FrameObservation> in_window;
  double prev_time = -std::numeric_limits<double>::infinity();
  for (const auto& f : frames) {
    if (f.camera_id != camera_id) continue;
    if (f.time < window_start || f.time >= window_end) continue;
    if (f.time <= prev_time)
      throw ValidationError("build_subgraph: frame times must be strictly increasing per camera");
    if (f.pose && !f.pose->unit_quaternion())
      throw ValidationError("build_subgraph: pose quaternion is not unit length");
    for (const auto& d : f.detections)
      if (d.score < 0.0 || d.score > 1.0)
        throw ValidationError("build_subgraph: detection score outside [0,1]");
    prev_time = f.time;
    in_window.push_back(f);
  }

  auto tracks = associate_frames(in_window, cfg);
  auto pairs = propose_pairs(tracks, cfg);
  auto assembled = assemble_relations(pairs, candidates, tracks, window_start, window_end, cfg);
  if (unknown_track_skips) *unknown_track_skips = assembled.unknown_track_skips;

  DynamicSubgraph g;
  g.window_start = window_start;
  g.window_end = window_end;
  g.camera_id = camera_id;
  for (const auto& t : tracks) g.vertices.push_back(vertex_from_track(t));
  g.edges = std::move(assembled.edges);
  validate_subgraph(g, cfg.merge_gap_s);
  return g;
}

// ---- stream files ----

struct StreamData {
  std::vector<FrameObservation> frames;
  std::vector<RelationCandidate> candidates;
};

/// Parses a per-camera stream: FrameObservation and RelationCandidate lines
/// discriminated by the "kind" field.
inline StreamData read_stream_jsonl(const std::string& path) {
  StreamData s;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    const auto kind = j.value("kind", "frame");
    if (kind == "frame") {
      s.frames.push_back(j.get<FrameObservation>());
    } else if (kind == "relation_candidate") {
      auto c = j.get<RelationCandidate>();
      if (c.confidence < 0.0 || c.confidence > 1.0)
        throw ValidationError("candidate confidence outside [0,1] in '" + path + "' line " +
                              std::to_string(lineno));
      s.candidates.push_back(std::move(c));
    } else {
      throw ValidationError("unknown stream line kind '" + kind + "' in '" + path + "'");
    }
  }
  return s;
}

/// Number of the window containing time t: tick k covers [(k-1)*w, k*w).
inline std::int64_t tick_of(double t, double window_s) {
  return std::int64_t(std::floor(t / window_s)) + 1;
}

/// Highest complete tick given the last event time in a stream.
inline std::int64_t last_tick(const StreamData& s, double window_s) {
  double last = 0.0;
  for (const auto& f : s.frames) last = std::max(last, f.time);
  for (const auto& c : s.candidates) last = std::max(last, c.time);
  return tick_of(last, window_s);
}

}  // namespace hidyna
