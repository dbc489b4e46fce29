#include <catch2/catch_amalgamated.hpp>

#include <queue>
#include <thread>

#include "hidyna/graph_store.hpp"
#include "hidyna/store_service.hpp"

#include "generators.hpp"

using namespace hidyna;
using namespace hidyna::testgen;

namespace {

RegionVertex rect_region(const std::string& id, double x0, double y0, double x1, double y1) {
  RegionVertex r;
  r.id = id;
  r.name = id;
  r.footprint = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  r.centroid = {(x0 + x1) / 2, (y0 + y1) / 2};
  return r;
}

GlobalGraph three_room_base() {
  GlobalGraph g;
  g.regions = {rect_region("cafeteria", 0, 0, 10, 10), rect_region("corridor", 12, 0, 22, 10),
               rect_region("laboratory", 24, 0, 34, 10)};
  StaticObjectVertex fridge;
  fridge.id = "fridge-1";
  fridge.class_label = "fridge";
  fridge.box = {{1, 1, 0}, {2, 2, 1.9}};
  fridge.region_id = "cafeteria";
  StaticObjectVertex desk;
  desk.id = "desk-1";
  desk.class_label = "desk";
  desk.box = {{30, 8, 0}, {32, 9, 0.9}};
  desk.region_id = "laboratory";
  g.static_objects = {fridge, desk};
  g.static_edges = {{StaticEdgeKind::Connectivity, "cafeteria", "corridor"},
                    {StaticEdgeKind::Connectivity, "corridor", "laboratory"},
                    {StaticEdgeKind::Belonging, "fridge-1", "cafeteria"},
                    {StaticEdgeKind::Belonging, "desk-1", "laboratory"}};
  return g;
}

UnifiedSnapshot snapshot_with_coffee(const GlobalGraph& base, std::int64_t tick) {
  DynamicSubgraph sub;
  sub.camera_id = "cam-cafe";
  sub.window_start = double(tick - 1) * 10.0;
  sub.window_end = double(tick) * 10.0;
  InstanceVertex coffee;
  coffee.track_id = 0;
  coffee.class_label = "coffee";
  coffee.feature.values = {1.0};
  coffee.last_footprint = {10, 10, 12, 12};
  coffee.box3 = Box3::from_center_extent({5, 5, 1.0}, {0.12, 0.12, 0.12});
  coffee.first_seen = sub.window_start;
  coffee.last_seen = sub.window_end - 0.2;
  sub.vertices = {coffee};
  return fuse_tick(base, {sub}, FusionConfig{}, tick);
}

}  // namespace

TEST_CASE("commit: monotone ticks, rejection, ring eviction") {
  auto base = three_room_base();
  GraphStore store(base, 8);
  CHECK(store.latest() == nullptr);

  store.commit(snapshot_with_coffee(base, 1));
  store.commit(snapshot_with_coffee(base, 2));
  CHECK(store.latest()->tick == 2);

  CHECK_THROWS_AS(store.commit(snapshot_with_coffee(base, 2)), ValidationError);

  for (std::int64_t t = 3; t <= 10; ++t) store.commit(snapshot_with_coffee(base, t));
  CHECK(store.history_ticks() == std::vector<std::int64_t>{3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(store.in_history(3));
  CHECK_FALSE(store.in_history(2));
}

TEST_CASE("find_object: statics, anchored dynamics, misses") {
  auto base = three_room_base();
  auto snap = snapshot_with_coffee(base, 1);

  auto fridge = find_object("fridge", snap);
  REQUIRE(fridge.size() == 1);
  CHECK(fridge[0].vertex_id == "fridge-1");
  CHECK(fridge[0].kind == "static");
  CHECK(fridge[0].region_id == "cafeteria");
  CHECK(fridge[0].position[0] == Catch::Approx(1.5));

  auto coffee = find_object("coffee", snap);
  REQUIRE(coffee.size() == 1);
  CHECK(coffee[0].kind == "dynamic");
  CHECK(coffee[0].region_id == "cafeteria");
  CHECK(coffee[0].vertex_id == "cam-cafe/0");
  CHECK(coffee[0].position[2] == Catch::Approx(1.0));

  CHECK(find_object("unicorn", snap).empty());
  CHECK(find_object("FRIDGE", snap).size() == 1);  // case-insensitive
}

TEST_CASE("find_object lists statics before dynamics") {
  auto base = three_room_base();
  DynamicSubgraph sub;
  sub.camera_id = "cam";
  sub.window_start = 0.0;
  sub.window_end = 10.0;
  InstanceVertex v;
  v.track_id = 0;
  v.class_label = "fridge";
  v.feature.values = {1.0};
  v.last_footprint = {0, 0, 5, 5};
  v.box3 = Box3::from_center_extent({7, 7, 1.0}, {0.5, 0.5, 1.0});  // away from fridge-1
  v.first_seen = 0.0;
  v.last_seen = 9.8;
  sub.vertices = {v};
  auto snap = fuse_tick(base, {sub}, FusionConfig{}, 1);

  auto hits = find_object("fridge", snap);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].kind == "static");
  CHECK(hits[1].kind == "dynamic");
}

TEST_CASE("plan_route examples") {
  auto base = three_room_base();
  auto snap = fuse_tick(base, {}, FusionConfig{}, 1);

  CHECK(plan_route("laboratory", "laboratory", snap) ==
        std::vector<std::string>{"laboratory"});
  CHECK(plan_route("laboratory", "cafeteria", snap) ==
        std::vector<std::string>{"laboratory", "corridor", "cafeteria"});

  // Disconnected region.
  auto island = base;
  island.regions.push_back(rect_region("attic", 50, 0, 60, 10));
  auto snap2 = fuse_tick(island, {}, FusionConfig{}, 1);
  CHECK_THROWS_WITH(plan_route("attic", "cafeteria", snap2),
                    Catch::Matchers::ContainsSubstring("no route"));
  CHECK_THROWS_AS(plan_route("nowhere", "cafeteria", snap2), ValidationError);
}

namespace {

std::map<std::string, int> bfs_distances(const GlobalGraph& g, const std::string& src) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& e : g.static_edges) {
    if (e.kind != StaticEdgeKind::Connectivity) continue;
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::map<std::string, int> dist;
  std::queue<std::string> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    auto cur = q.front();
    q.pop();
    for (const auto& n : adj[cur]) {
      if (dist.count(n)) continue;
      dist[n] = dist[cur] + 1;
      q.push(n);
    }
  }
  return dist;
}

}  // namespace

TEST_CASE("plan_route matches the BFS oracle on random graphs") {
  Rng rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    GlobalGraph g;
    const std::size_t n = 2 + rng.next_below(49);
    g.regions = random_regions(rng, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(2.5 / double(n)))
          g.static_edges.push_back(
              {StaticEdgeKind::Connectivity, g.regions[i].id, g.regions[j].id});
    auto snap = fuse_tick(g, {}, FusionConfig{}, 1);

    const std::string from = g.regions[std::size_t(rng.next_below(n))].id;
    const std::string to = g.regions[std::size_t(rng.next_below(n))].id;
    auto dist = bfs_distances(g, to);

    if (!dist.count(from)) {
      CHECK_THROWS_WITH(plan_route(from, to, snap),
                        Catch::Matchers::ContainsSubstring("no route"));
      continue;
    }
    auto path = plan_route(from, to, snap);
    CHECK(path.size() == std::size_t(dist.at(from)) + 1);
    CHECK(path.front() == from);
    CHECK(path.back() == to);
    // Consecutive regions always share a connectivity edge.
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      bool adjacent = false;
      for (const auto& e : g.static_edges)
        if (e.kind == StaticEdgeKind::Connectivity &&
            ((e.a == path[i] && e.b == path[i + 1]) || (e.b == path[i] && e.a == path[i + 1])))
          adjacent = true;
      CHECK(adjacent);
    }
  }
}

TEST_CASE("plan_route picks the lexicographically smallest shortest path") {
  GlobalGraph g;
  g.regions = {rect_region("a", 0, 0, 1, 1), rect_region("m", 2, 0, 3, 1),
               rect_region("z", 4, 0, 5, 1), rect_region("goal", 6, 0, 7, 1)};
  g.static_edges = {{StaticEdgeKind::Connectivity, "a", "z"},
                    {StaticEdgeKind::Connectivity, "z", "goal"},
                    {StaticEdgeKind::Connectivity, "a", "m"},
                    {StaticEdgeKind::Connectivity, "m", "goal"}};
  auto snap = fuse_tick(g, {}, FusionConfig{}, 1);
  CHECK(plan_route("a", "goal", snap) == std::vector<std::string>{"a", "m", "goal"});
}

TEST_CASE("plan_route metric weights prefer geometric length over lexicographic order") {
  GlobalGraph g;
  g.regions = {rect_region("a", 0, 0, 1, 1), rect_region("far", 0, 40, 1, 41),
               rect_region("near", 2, 0, 3, 1), rect_region("goal", 4, 0, 5, 1)};
  g.static_edges = {{StaticEdgeKind::Connectivity, "a", "far"},
                    {StaticEdgeKind::Connectivity, "far", "goal"},
                    {StaticEdgeKind::Connectivity, "a", "near"},
                    {StaticEdgeKind::Connectivity, "near", "goal"}};
  auto snap = fuse_tick(g, {}, FusionConfig{}, 1);
  CHECK(plan_route("a", "goal", snap) == std::vector<std::string>{"a", "far", "goal"});
  RouteOptions metric;
  metric.metric_weights = true;
  CHECK(plan_route("a", "goal", snap, metric) == std::vector<std::string>{"a", "near", "goal"});
}

TEST_CASE("active_relations span filtering") {
  auto base = three_room_base();
  DynamicSubgraph sub;
  sub.camera_id = "cam";
  sub.window_start = 0.0;
  sub.window_end = 10.0;
  for (int i = 0; i < 2; ++i) {
    InstanceVertex v;
    v.track_id = i;
    v.class_label = i == 0 ? "person" : "cup";
    v.feature.values = {1.0};
    v.last_footprint = {double(i) * 100, 0, 10, 10};
    v.box3 = Box3::from_center_extent({5.0 + i, 5, 0.5}, {0.3, 0.3, 0.3});
    v.first_seen = 0.0;
    v.last_seen = 9.8;
    sub.vertices.push_back(v);
  }
  RelationEdge e;
  e.subject_id = 0;
  e.subject_class = "person";
  e.object_id = 1;
  e.object_class = "cup";
  e.predicate = "holding";
  e.spans = {{1.0, 3.0}, {6.0, 8.0}};  // consolidated: gap 3 >= 2
  sub.edges = {e};
  auto snap = fuse_tick(base, {sub}, FusionConfig{}, 1);

  CHECK(active_relations(snap).size() == 1);
  CHECK(active_relations(snap, 2.0).size() == 1);   // mid-span
  CHECK(active_relations(snap, 4.5).empty());       // inside the consolidated gap
  CHECK(active_relations(snap, 6.0).size() == 1);   // span start is inclusive
  CHECK(active_relations(snap, 9.5).empty());
}

TEST_CASE("store service: HTTP endpoints return the canonical JSON") {
  auto base = three_room_base();
  GraphStore store(base);
  store.commit(snapshot_with_coffee(base, 3));

  StoreService service(store);
  int port = service.start_async();
  httplib::Client client("127.0.0.1", port);

  auto latest = client.Get("/snapshot/latest");
  REQUIRE(latest);
  REQUIRE(latest->status == 200);
  auto snap = json::parse(latest->body).get<UnifiedSnapshot>();
  CHECK(snap.tick == 3);
  CHECK(snap.base == base);

  auto fetched = fetch_latest_snapshot("http://127.0.0.1:" + std::to_string(port));
  CHECK(fetched.tick == 3);

  auto obj = client.Get("/object?name=coffee");
  REQUIRE(obj);
  REQUIRE(obj->status == 200);
  auto hits = json::parse(obj->body).get<std::vector<ObjectHit>>();
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].region_id == "cafeteria");

  auto route = client.Get("/route?from=laboratory&to=cafeteria");
  REQUIRE(route);
  REQUIRE(route->status == 200);
  CHECK(json::parse(route->body).at("route") ==
        json::array({"laboratory", "corridor", "cafeteria"}));

  auto bad_route = client.Get("/route?from=laboratory&to=nowhere");
  REQUIRE(bad_route);
  CHECK(bad_route->status == 400);

  auto missing_param = client.Get("/object");
  REQUIRE(missing_param);
  CHECK(missing_param->status == 400);

  // Commits are visible to subsequent reads.
  store.commit(snapshot_with_coffee(base, 4));
  auto latest2 = client.Get("/snapshot/latest");
  REQUIRE(latest2);
  CHECK(json::parse(latest2->body).at("tick") == 4);

  service.stop();
}

TEST_CASE("snapshot isolation: readers keep their tick under concurrent commits") {
  auto base = three_room_base();
  GraphStore store(base, 8);
  store.commit(snapshot_with_coffee(base, 1));

  auto held = store.latest();
  const json before = json(*held);
  for (std::int64_t t = 2; t <= 6; ++t) store.commit(snapshot_with_coffee(base, t));

  CHECK(held->tick == 1);
  CHECK(json(*held).dump() == before.dump());
  CHECK(store.latest()->tick == 6);

  // Writer thread + reader threads smoke test.
  GraphStore shared(base, 4);
  shared.commit(snapshot_with_coffee(base, 1));
  std::thread writer([&] {
    for (std::int64_t t = 2; t <= 40; ++t) shared.commit(snapshot_with_coffee(base, t));
  });
  std::vector<std::thread> readers;
  std::atomic<bool> ok{true};
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        auto snap = shared.latest();
        if (!snap || snap->anchored.size() != 1) ok = false;
      }
    });
  }
  writer.join();
  for (auto& t : readers) t.join();
  CHECK(ok);
  CHECK(shared.latest()->tick == 40);
}
