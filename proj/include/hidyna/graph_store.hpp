#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <string>
#include <vector>

#include "hidyna/fusion.hpp"
#include "hidyna/json_codec.hpp"
#include "hidyna/scene_model.hpp"

namespace hidyna {

using SnapshotPtr = std::shared_ptr<const UnifiedSnapshot>;

/// Snapshot registry: single writer commits, any number of readers hold
/// immutable snapshots; a ring of the last H ticks is kept for agents that
/// reason about the recent past.
class GraphStore {
 public:
  explicit GraphStore(GlobalGraph base, std::size_t history_capacity = 8)
      : base_(std::move(base)), capacity_(history_capacity) {}

  /// Rejects non-monotone ticks; evicts the oldest entry at capacity.
  std::int64_t commit(UnifiedSnapshot snapshot) {
    std::lock_guard lock(mu_);
    if (!history_.empty() && snapshot.tick <= history_.back()->tick)
      throw ValidationError("commit: tick " + std::to_string(snapshot.tick) +
                            " is not greater than latest " +
                            std::to_string(history_.back()->tick));
    auto ptr = std::make_shared<const UnifiedSnapshot>(std::move(snapshot));
    history_.push_back(ptr);
    if (history_.size() > capacity_) history_.pop_front();
    return ptr->tick;
  }

  SnapshotPtr latest() const {
    std::lock_guard lock(mu_);
    return history_.empty() ? nullptr : history_.back();
  }

  SnapshotPtr at_tick(std::int64_t tick) const {
    std::lock_guard lock(mu_);
    for (const auto& s : history_)
      if (s->tick == tick) return s;
    return nullptr;
  }

  std::vector<std::int64_t> history_ticks() const {
    std::lock_guard lock(mu_);
    std::vector<std::int64_t> out;
    for (const auto& s : history_) out.push_back(s->tick);
    return out;
  }

  bool in_history(std::int64_t tick) const { return at_tick(tick) != nullptr; }

  const GlobalGraph& base() const { return base_; }

 private:
  GlobalGraph base_;
  std::size_t capacity_;
  std::deque<SnapshotPtr> history_;
  mutable std::mutex mu_;
};

struct ObjectHit {
  std::string vertex_id;
  std::string kind;  // "static" | "dynamic"
  std::string region_id;
  Vec3 position{0.0, 0.0, 0.0};

  friend bool operator==(const ObjectHit&, const ObjectHit&) = default;
};

inline void to_json(json& j, const ObjectHit& h) {
  j = json{{"vertex_id", h.vertex_id},
           {"kind", h.kind},
           {"region_id", h.region_id},
           {"position", h.position}};
}
inline void from_json(const json& j, ObjectHit& h) {
  j.at("vertex_id").get_to(h.vertex_id);
  j.at("kind").get_to(h.kind);
  j.at("region_id").get_to(h.region_id);
  j.at("position").get_to(h.position);
}

/// Case-insensitive exact label match over static vertices and non-merged
/// dynamic instances; statics first, then by id.
inline std::vector<ObjectHit> find_object(const std::string& name, const UnifiedSnapshot& snap) {
  const std::string want = to_lower(name);
  std::vector<ObjectHit> statics, dynamics;

  for (const auto& o : snap.base.static_objects) {
    if (to_lower(o.class_label) != want) continue;
    statics.push_back({o.id, "static", o.region_id, o.box.center()});
  }
  std::sort(statics.begin(), statics.end(),
            [](const ObjectHit& a, const ObjectHit& b) { return a.vertex_id < b.vertex_id; });

  for (const auto& a : snap.anchored) {
    auto regions = detail::instance_regions(snap, a);
    for (const auto& v : a.subgraph.vertices) {
      if (to_lower(v.class_label) != want) continue;
      if (snap.is_merged(a.subgraph.camera_id, v.track_id)) continue;
      ObjectHit hit;
      hit.vertex_id = a.subgraph.camera_id + "/" + std::to_string(v.track_id);
      hit.kind = "dynamic";
      auto it = regions.find(v.track_id);
      hit.region_id = it == regions.end() ? std::string{} : it->second;
      if (v.box3) {
        hit.position = v.box3->center();
      } else if (const auto* r = snap.base.find_region(hit.region_id)) {
        hit.position = {r->centroid[0], r->centroid[1], 0.0};
      }
      dynamics.push_back(std::move(hit));
    }
  }
  std::sort(dynamics.begin(), dynamics.end(),
            [](const ObjectHit& a, const ObjectHit& b) { return a.vertex_id < b.vertex_id; });

  statics.insert(statics.end(), dynamics.begin(), dynamics.end());
  return statics;
}

struct RouteOptions {
  bool metric_weights = false;  // hop count by default; centroid distance behind the flag
};

/// Shortest region path over connectivity edges. Hop-count ties resolve to the
/// lexicographically smallest sequence; same-region queries return one element.
inline std::vector<std::string> plan_route(const std::string& from_region,
                                           const std::string& to_region,
                                           const UnifiedSnapshot& snap,
                                           const RouteOptions& opts = {}) {
  const GlobalGraph& g = snap.base;
  if (!g.find_region(from_region))
    throw ValidationError("plan_route: unknown region '" + from_region + "'");
  if (!g.find_region(to_region))
    throw ValidationError("plan_route: unknown region '" + to_region + "'");
  if (from_region == to_region) return {from_region};

  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& e : g.static_edges) {
    if (e.kind != StaticEdgeKind::Connectivity) continue;
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  for (auto& [_, n] : adj) std::sort(n.begin(), n.end());

  auto edge_cost = [&](const std::string& a, const std::string& b) {
    if (!opts.metric_weights) return 1.0;
    const auto* ra = g.find_region(a);
    const auto* rb = g.find_region(b);
    return norm2({ra->centroid[0] - rb->centroid[0], ra->centroid[1] - rb->centroid[1]});
  };

  // Distance-to-target, then greedy front-first construction: picking the
  // smallest feasible next region yields the lexicographically least path.
  std::map<std::string, double> dist;
  using Item = std::pair<double, std::string>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[to_region] = 0.0;
  pq.push({0.0, to_region});
  while (!pq.empty()) {
    auto [d, r] = pq.top();
    pq.pop();
    if (d > dist[r]) continue;
    for (const auto& n : adj[r]) {
      double nd = d + edge_cost(r, n);
      if (!dist.count(n) || nd < dist[n] - 1e-12) {
        dist[n] = nd;
        pq.push({nd, n});
      }
    }
  }
  if (!dist.count(from_region)) throw std::runtime_error("plan_route: no route from '" +
                                                         from_region + "' to '" + to_region + "'");

  std::vector<std::string> path{from_region};
  std::string cur = from_region;
  while (cur != to_region) {
    const std::string* next = nullptr;
    for (const auto& n : adj[cur]) {
      if (!dist.count(n)) continue;
      if (std::abs(dist[n] + edge_cost(cur, n) - dist[cur]) > 1e-9) continue;
      if (!next) next = &n;  // neighbors are sorted; first feasible is lex-least
    }
    if (!next) throw std::runtime_error("plan_route: no route from '" + from_region + "' to '" +
                                        to_region + "'");
    path.push_back(*next);
    cur = *next;
  }
  return path;
}

/// All relation edges of the snapshot; with `at`, only edges with a span
/// containing that time.
inline std::vector<RelationEdge> active_relations(const UnifiedSnapshot& snap,
                                                  std::optional<double> at = std::nullopt) {
  std::vector<RelationEdge> out;
  for (const auto& a : snap.anchored) {
    for (const auto& e : a.subgraph.edges) {
      if (!at) {
        out.push_back(e);
        continue;
      }
      for (const auto& [ta, tb] : e.spans) {
        if (*at >= ta && *at <= tb) {
          out.push_back(e);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace hidyna
