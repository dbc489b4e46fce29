#pragma once

#include <cctype>
#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "hidyna/graph_store.hpp"
#include "hidyna/json_codec.hpp"
#include "hidyna/scene_model.hpp"

namespace hidyna {

/// The four prompt sections in their fixed order: system context, scene
/// structures, ongoing relations, optional skills.
struct PromptBundle {
  std::string system_context;
  std::string scene_structure;
  std::string ongoing_relations;
  std::string optional_skills;
  std::string rendered;
  std::int64_t snapshot_tick = 0;
};

inline std::string format_seconds(double t) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", t);
  return buf;
}

/// Pure function of (snapshot, skills, system_context); ordering is pinned to
/// (region id, vertex id, edge id) so identical snapshots render identically.
inline PromptBundle render_prompt(const UnifiedSnapshot& snap,
                                  const std::vector<std::string>& skills,
                                  const std::string& system_context) {
  PromptBundle b;
  b.system_context = system_context;
  b.snapshot_tick = snap.tick;

  std::vector<std::string> region_ids;
  for (const auto& r : snap.base.regions) region_ids.push_back(r.id);
  std::sort(region_ids.begin(), region_ids.end());

  std::string scene;
  scene += "regions: ";
  for (std::size_t i = 0; i < region_ids.size(); ++i)
    scene += (i ? ", " : "") + region_ids[i];
  scene += "\n";

  std::vector<std::pair<std::string, std::string>> conn;
  for (const auto& e : snap.base.static_edges)
    if (e.kind == StaticEdgeKind::Connectivity)
      conn.push_back({std::min(e.a, e.b), std::max(e.a, e.b)});
  std::sort(conn.begin(), conn.end());
  scene += "connectivity: ";
  if (conn.empty()) scene += "none";
  for (std::size_t i = 0; i < conn.size(); ++i)
    scene += (i ? "; " : "") + conn[i].first + " -- " + conn[i].second;
  scene += "\n";

  auto statics = snap.base.static_objects;
  std::sort(statics.begin(), statics.end(),
            [](const StaticObjectVertex& a, const StaticObjectVertex& b) {
              return std::tie(a.region_id, a.id) < std::tie(b.region_id, b.id);
            });
  for (const auto& o : statics) scene += o.id + " in " + o.region_id + "\n";
  b.scene_structure = scene;

  std::string ongoing;
  for (const auto& a : snap.anchored) {
    auto regions = detail::instance_regions(snap, a);
    for (const auto& v : a.subgraph.vertices) {
      if (snap.is_merged(a.subgraph.camera_id, v.track_id)) continue;
      auto it = regions.find(v.track_id);
      ongoing += v.class_label + " in " + (it == regions.end() ? "?" : it->second) + "\n";
    }
    for (const auto& e : a.subgraph.edges)
      for (const auto& [ta, tb] : e.spans)
        ongoing += e.subject_class + " " + e.predicate + " " + e.object_class + " (" +
                   format_seconds(ta) + "–" + format_seconds(tb) + ")\n";
  }
  if (ongoing.empty()) ongoing = "none\n";
  b.ongoing_relations = ongoing;

  std::string sk;
  for (const auto& s : skills) sk += s + "\n";
  if (sk.empty()) sk = "none\n";
  b.optional_skills = sk;

  b.rendered = b.system_context + "\n\nScene structures:\n" + b.scene_structure +
               "\nOngoing relations:\n" + b.ongoing_relations + "\nOptional skills:\n" +
               b.optional_skills;
  return b;
}

struct LlmEndpointConfig {
  std::string url;
  double timeout_s = 10.0;
  int max_retries = 2;
  std::optional<std::string> mock_script;  // when set, no network use
  double backoff_s = 0.5;
};

inline void to_json(json& j, const LlmEndpointConfig& c) {
  j = json{{"url", c.url},
           {"timeout_s", c.timeout_s},
           {"max_retries", c.max_retries},
           {"backoff_s", c.backoff_s}};
  if (c.mock_script) j["mock_script"] = *c.mock_script;
}
inline void from_json(const json& j, LlmEndpointConfig& c) {
  LlmEndpointConfig d;
  c.url = j.value("url", d.url);
  c.timeout_s = j.value("timeout_s", d.timeout_s);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.backoff_s = j.value("backoff_s", d.backoff_s);
  c.mock_script.reset();
  if (j.contains("mock_script")) c.mock_script = j.at("mock_script").get<std::string>();
}

namespace detail {
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}
}  // namespace detail

/// Sends the rendered prompt to the endpoint ({"prompt": ...} -> {"text": ...})
/// with exponential backoff, or replays a scripted reply keyed by snapshot tick
/// in mock mode.
inline std::string query_llm(const PromptBundle& bundle, const LlmEndpointConfig& cfg) {
  if (cfg.mock_script) {
    auto script = json_from_file(*cfg.mock_script);
    const std::string key = std::to_string(bundle.snapshot_tick);
    if (script.contains(key)) return script.at(key).get<std::string>();
    if (script.contains("default")) return script.at("default").get<std::string>();
    throw std::runtime_error("mock script has no reply for tick " + key + " and no default");
  }
  if (cfg.url.empty()) throw ValidationError("query_llm: no endpoint url and no mock script");

  auto [base, path] = detail::split_url(cfg.url);
  const int attempts = cfg.max_retries + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::duration<double>(cfg.backoff_s * double(1 << (attempt - 1)));
      std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::milliseconds>(delay));
    }
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
    auto res = client.Post(path, json{{"prompt", bundle.rendered}}.dump(), "application/json");
    if (!res) {
      last_error = "connection failed";
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    try {
      return json::parse(res->body).at("text").get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string{"malformed reply: "} + e.what();
    }
  }
  throw std::runtime_error("query_llm: giving up after " + std::to_string(attempts) +
                           " attempts (" + last_error + ")");
}

/// Raised when the reply contains no grammar-conformant step at all.
struct NoActionablePlan : std::runtime_error {
  NoActionablePlan() : std::runtime_error("no actionable plan") {}
};

/// Raised when steps parsed but at least one failed validation.
struct PlanValidationError : ValidationError {
  std::vector<std::string> step_errors;
  explicit PlanValidationError(std::vector<std::string> errs)
      : ValidationError("plan rejected: " + join(errs)), step_errors(std::move(errs)) {}
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
    return s;
  }
};

namespace detail {
inline bool region_exists(const UnifiedSnapshot& snap, const std::string& name) {
  const std::string want = to_lower(name);
  for (const auto& r : snap.base.regions)
    if (to_lower(r.id) == want || to_lower(r.name) == want) return true;
  return false;
}
inline std::string canonical_region(const UnifiedSnapshot& snap, const std::string& name) {
  const std::string want = to_lower(name);
  for (const auto& r : snap.base.regions)
    if (to_lower(r.id) == want || to_lower(r.name) == want) return r.id;
  return name;
}
}  // namespace detail

/// Extracts `navigate to / pick / place {object} in {region}` lines (tolerant
/// of numbering, bullets, and trailing punctuation) and validates each step
/// against the snapshot: the region must exist, and pick/place objects must
/// resolve via find_object. All steps must validate for the plan to be
/// accepted.
inline TaskPlan parse_plan(const std::string& raw, const UnifiedSnapshot& snap) {
  static const std::regex step_re(
      R"(^(navigate\s+to|pick|place)\s+(.+)\s+in\s+(.+?)[\s.,!?;:]*$)",
      std::regex::icase);

  TaskPlan plan;
  plan.snapshot_tick = snap.tick;
  std::vector<std::string> errors;

  std::istringstream lines(raw);
  std::string line;
  while (std::getline(lines, line)) {
    // Drop list markers: everything before the first letter.
    auto first_alpha = std::find_if(line.begin(), line.end(), [](unsigned char c) {
      return std::isalpha(c) != 0;
    });
    line.erase(line.begin(), first_alpha);

    std::smatch m;
    if (!std::regex_match(line, m, step_re)) continue;

    SkillPrimitive step;
    const std::string verb = to_lower(m[1].str());
    step.verb = verb.rfind("navigate", 0) == 0 ? SkillVerb::Navigate
                : verb == "pick"               ? SkillVerb::Pick
                                               : SkillVerb::Place;
    step.object = m[2].str();
    step.region = m[3].str();

    if (!detail::region_exists(snap, step.region)) {
      errors.push_back("step " + std::to_string(plan.steps.size() + 1) + ": unknown region '" +
                       step.region + "'");
    } else {
      step.region = detail::canonical_region(snap, step.region);
    }
    if (step.verb != SkillVerb::Navigate && find_object(step.object, snap).empty())
      errors.push_back("step " + std::to_string(plan.steps.size() + 1) +
                       ": unresolvable object '" + step.object + "'");
    plan.steps.push_back(std::move(step));
  }

  if (plan.steps.empty()) throw NoActionablePlan{};
  if (!errors.empty()) throw PlanValidationError(std::move(errors));
  return plan;
}

/// Rendering used for logs and the parse round-trip: numbered grammar lines.
inline std::string format_plan(const TaskPlan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    out += std::to_string(i + 1) + ". " + std::string{verb_name(s.verb)} +
           (s.verb == SkillVerb::Navigate ? " to " : " ") + s.object + " in " + s.region + "\n";
  }
  return out;
}

struct ExecutionRecord {
  std::size_t step_index = 0;
  SkillPrimitive step;
  bool ok = false;
  std::string note;
  std::string robot_region;
  std::optional<std::string> holding;
};

inline void to_json(json& j, const ExecutionRecord& r) {
  j = json{{"step_index", r.step_index},
           {"step", r.step},
           {"ok", r.ok},
           {"note", r.note},
           {"robot_region", r.robot_region}};
  if (r.holding) j["holding"] = *r.holding;
}

struct ExecutionLog {
  std::vector<ExecutionRecord> records;
  bool completed = false;
};

inline void to_json(json& j, const ExecutionLog& l) {
  j = json{{"records", l.records}, {"completed", l.completed}};
}

/// Simulated executor: navigate advances a virtual region pointer along
/// plan_route; pick requires co-location and an empty gripper; place requires
/// holding the object in the target region. Preconditions are re-checked
/// against the store's latest snapshot at each step, and the plan halts on the
/// first failure. on_step runs after every successful step, which lets a
/// driver advance the world between steps.
inline ExecutionLog execute_plan(const TaskPlan& plan, GraphStore& store,
                                 const std::string& start_region,
                                 const std::function<void(std::size_t)>& on_step = {}) {
  if (!store.in_history(plan.snapshot_tick))
    throw ValidationError("execute_plan: plan snapshot tick " +
                          std::to_string(plan.snapshot_tick) + " is no longer in store history");

  ExecutionLog log;
  std::string region = start_region;
  std::optional<std::string> holding;

  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& step = plan.steps[i];
    auto snap = store.latest();
    ExecutionRecord rec;
    rec.step_index = i;
    rec.step = step;

    try {
      switch (step.verb) {
        case SkillVerb::Navigate: {
          auto route = plan_route(region, step.region, *snap);
          region = step.region;
          rec.ok = true;
          rec.note = "route:";
          for (const auto& r : route) rec.note += " " + r;
          break;
        }
        case SkillVerb::Pick: {
          auto hits = find_object(step.object, *snap);
          if (hits.empty()) {
            rec.note = "object '" + step.object + "' not found in current snapshot";
          } else if (hits.front().region_id != region) {
            rec.note = "not co-located: robot in '" + region + "', object in '" +
                       hits.front().region_id + "'";
          } else if (holding) {
            rec.note = "gripper occupied by '" + *holding + "'";
          } else {
            holding = to_lower(step.object);
            rec.ok = true;
            rec.note = "picked '" + step.object + "' (" + hits.front().vertex_id + ")";
          }
          break;
        }
        case SkillVerb::Place: {
          if (!holding) {
            rec.note = "gripper empty";
          } else if (*holding != to_lower(step.object)) {
            rec.note = "holding '" + *holding + "', not '" + step.object + "'";
          } else if (region != step.region) {
            rec.note = "not co-located: robot in '" + region + "', target region '" +
                       step.region + "'";
          } else {
            holding.reset();
            rec.ok = true;
            rec.note = "placed '" + step.object + "' in '" + step.region + "'";
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.note = e.what();
    }

    rec.robot_region = region;
    rec.holding = holding;
    log.records.push_back(rec);
    if (!rec.ok) return log;
    if (on_step) on_step(i);
  }
  log.completed = true;
  return log;
}

}  // namespace hidyna
