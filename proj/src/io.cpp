#include "gocmpc/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace gocmpc {

using Json = nlohmann::json;

ParseError::ParseError(std::string path, std::string reason)
    : Error(path + ": " + reason), path_(std::move(path)), reason_(std::move(reason)) {}

SchemaVersionMismatch::SchemaVersionMismatch(long long found)
    : Error("schema_version " + std::to_string(found) + " is not supported (expected " +
            std::to_string(kSchemaVersion) + ")"),
      found_(found) {}

namespace {

// ---------------------------------------------------------------------------
// Strict reading helpers. Every accessor names the path of what it reads.

std::string join(const std::string& base, const std::string& key) { return base == "$" ? key : base + "." + key; }
std::string index(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
}

void allow_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ParseError(join(path, key), "unknown field");
    }
  }
}

const Json& field(const Json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(join(path, key), "missing field");
  return *it;
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "expected a finite number");
  return v;
}

long long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<long long>();
}

int small_int(const Json& j, const std::string& path) {
  const long long v = integer(j, path);
  if (v < -1000000 || v > 1000000) throw ParseError(path, "integer out of range");
  return static_cast<int>(v);
}

bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ParseError(path, "expected true or false");
  return j.get<bool>();
}

std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

const Json& array(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array");
  return j;
}

VectorXd vector_of(const Json& j, const std::string& path, int expected = -1) {
  array(j, path);
  if (expected >= 0 && static_cast<int>(j.size()) != expected) {
    throw ParseError(path, "expected " + std::to_string(expected) + " numbers");
  }
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], index(path, i));
  return v;
}

Json to_json(const VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// ---------------------------------------------------------------------------
// Constraints.

Json point_to_json(const PointRef& p) {
  switch (p.kind) {
    case PointRef::Kind::kAgent:
      return Json{{"agent", p.id}};
    case PointRef::Kind::kKeypoint:
      return Json{{"keypoint", p.id}};
    case PointRef::Kind::kAssigned:
      return Json("assigned");
  }
  return Json();
}

PointRef point_from_json(const Json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "assigned") return PointRef::assigned();
    throw ParseError(path, "expected \"assigned\" or an agent or keypoint reference");
  }
  allow_keys(j, path, {"agent", "keypoint"});
  if (j.size() != 1) throw ParseError(path, "expected exactly one of agent or keypoint");
  if (j.contains("agent")) return PointRef::agent(small_int(j["agent"], join(path, "agent")));
  return PointRef::keypoint(small_int(j["keypoint"], join(path, "keypoint")));
}

Json constraint_to_json(const ConstraintFn& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  Json pts = Json::array();
  for (const auto& p : c.points) pts.push_back(point_to_json(p));
  j["points"] = pts;
  switch (c.kind) {
    case ConstraintKind::kPointDistanceLE:
    case ConstraintKind::kPointDistanceGE:
    case ConstraintKind::kClearanceGE:
      j["distance"] = c.distance;
      break;
    case ConstraintKind::kGraspAt:
      j["tolerance"] = c.distance;
      break;
    case ConstraintKind::kAxisOffsetBetween:
      j["axis"] = c.axis;
      j["lo"] = c.lo;
      j["hi"] = c.hi;
      break;
    case ConstraintKind::kWithinBox:
      j["box_lo"] = to_json(c.box_lo);
      j["box_hi"] = to_json(c.box_hi);
      break;
  }
  if (!c.scope.empty()) j["scope"] = c.scope;
  if (c.subtask) j["subtask"] = *c.subtask;
  return j;
}

ConstraintFn constraint_from_json(const Json& j, const std::string& path, const SystemSpec& spec, int subtasks) {
  require_object(j, path);
  const std::string kind_name = text(field(j, path, "kind"), join(path, "kind"));
  const auto kind = constraint_kind_from_string(kind_name);
  if (!kind) throw ParseError(join(path, "kind"), "unknown constraint kind \"" + kind_name + "\"");
  ConstraintFn c;
  c.kind = *kind;
  switch (c.kind) {
    case ConstraintKind::kPointDistanceLE:
    case ConstraintKind::kPointDistanceGE:
    case ConstraintKind::kClearanceGE:
      allow_keys(j, path, {"kind", "points", "distance", "scope", "subtask"});
      c.distance = number(field(j, path, "distance"), join(path, "distance"));
      break;
    case ConstraintKind::kGraspAt:
      allow_keys(j, path, {"kind", "points", "tolerance", "scope", "subtask"});
      c.distance = number(field(j, path, "tolerance"), join(path, "tolerance"));
      break;
    case ConstraintKind::kAxisOffsetBetween:
      allow_keys(j, path, {"kind", "points", "axis", "lo", "hi", "scope", "subtask"});
      c.axis = small_int(field(j, path, "axis"), join(path, "axis"));
      c.lo = number(field(j, path, "lo"), join(path, "lo"));
      c.hi = number(field(j, path, "hi"), join(path, "hi"));
      break;
    case ConstraintKind::kWithinBox:
      allow_keys(j, path, {"kind", "points", "box_lo", "box_hi", "scope", "subtask"});
      c.box_lo = vector_of(field(j, path, "box_lo"), join(path, "box_lo"), spec.dim());
      c.box_hi = vector_of(field(j, path, "box_hi"), join(path, "box_hi"), spec.dim());
      break;
  }
  const auto pts_path = join(path, "points");
  const auto& pts = array(field(j, path, "points"), pts_path);
  for (std::size_t i = 0; i < pts.size(); ++i) c.points.push_back(point_from_json(pts[i], index(pts_path, i)));
  if (j.contains("scope")) {
    const auto sp = join(path, "scope");
    const auto& scope = array(j["scope"], sp);
    for (std::size_t i = 0; i < scope.size(); ++i) c.scope.push_back(small_int(scope[i], index(sp, i)));
  }
  if (j.contains("subtask")) c.subtask = small_int(j["subtask"], join(path, "subtask"));
  try {
    c.validate(spec, subtasks);
  } catch (const Error& e) {
    throw ParseError(path, e.what());
  }
  return c;
}

ConstraintSet constraints_from_json(const Json& j, const std::string& path, const SystemSpec& spec, int subtasks) {
  ConstraintSet out;
  array(j, path);
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(constraint_from_json(j[i], index(path, i), spec, subtasks));
  return out;
}

Json constraints_to_json(const ConstraintSet& set) {
  Json a = Json::array();
  for (const auto& c : set) a.push_back(constraint_to_json(c));
  return a;
}

// ---------------------------------------------------------------------------
// Planner parameters. Every field is optional on input and always written.

template <typename T>
struct ParamField {
  const char* key;
  T PlannerParams::*member;
};

constexpr ParamField<double> kDoubleParams[] = {
    {"tau", &PlannerParams::tau},
    {"epsilon", &PlannerParams::epsilon},
    {"dt", &PlannerParams::dt},
    {"delta_min", &PlannerParams::delta_min},
    {"v_max", &PlannerParams::v_max},
    {"a_max", &PlannerParams::a_max},
    {"w_time", &PlannerParams::w_time},
    {"w_smooth", &PlannerParams::w_smooth},
    {"w_vel_max", &PlannerParams::w_vel_max},
    {"w_acc_max", &PlannerParams::w_acc_max},
    {"w_track", &PlannerParams::w_track},
    {"activation_radius", &PlannerParams::activation_radius},
    {"j_max", &PlannerParams::j_max},
    {"m_big", &PlannerParams::m_big},
};
constexpr ParamField<bool> kBoolParams[] = {
    {"jerk_surrogate", &PlannerParams::jerk_surrogate},
    {"rest_at_grasp", &PlannerParams::rest_at_grasp},
    {"exhaustive", &PlannerParams::exhaustive},
    {"single_grasp", &PlannerParams::single_grasp},
};
constexpr ParamField<int> kIntParams[] = {
    {"horizon", &PlannerParams::horizon},
    {"threads", &PlannerParams::threads},
};

struct QpField {
  const char* key;
  double QpOptions::*d;
  int QpOptions::*i;
};
constexpr QpField kQpFields[] = {
    {"eps_abs", &QpOptions::eps_abs, nullptr},        {"eps_rel", &QpOptions::eps_rel, nullptr},
    {"kkt_tol", &QpOptions::kkt_tol, nullptr},        {"max_iterations", nullptr, &QpOptions::max_iterations},
    {"rho", &QpOptions::rho, nullptr},                {"sigma", &QpOptions::sigma, nullptr},
    {"alpha", &QpOptions::alpha, nullptr},            {"scaling_iterations", nullptr, &QpOptions::scaling_iterations},
    {"polish_interval", nullptr, &QpOptions::polish_interval},
};

struct NlpField {
  const char* key;
  double NlpOptions::*d;
  int NlpOptions::*i;
};
constexpr NlpField kNlpFields[] = {
    {"feas_tol", &NlpOptions::feas_tol, nullptr},
    {"opt_tol", &NlpOptions::opt_tol, nullptr},
    {"initial_penalty", &NlpOptions::initial_penalty, nullptr},
    {"max_penalty", &NlpOptions::max_penalty, nullptr},
    {"penalty_growth", &NlpOptions::penalty_growth, nullptr},
    {"required_decrease", &NlpOptions::required_decrease, nullptr},
    {"max_outer_iterations", nullptr, &NlpOptions::max_outer_iterations},
    {"max_inner_iterations", nullptr, &NlpOptions::max_inner_iterations},
    {"stagnation_window", nullptr, &NlpOptions::stagnation_window},
    {"stagnation_rel_change", &NlpOptions::stagnation_rel_change, nullptr},
};

template <typename Opts, typename Fields>
Json options_to_json(const Opts& o, const Fields& fields) {
  Json j = Json::object();
  for (const auto& f : fields) {
    if (f.d) {
      j[f.key] = o.*(f.d);
    } else {
      j[f.key] = o.*(f.i);
    }
  }
  return j;
}

template <typename Opts, typename Fields>
void options_from_json(const Json& j, const std::string& path, Opts& o, const Fields& fields) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    const auto p = join(path, key);
    auto it = std::find_if(std::begin(fields), std::end(fields), [&](const auto& f) { return key == f.key; });
    if (it == std::end(fields)) throw ParseError(p, "unknown field");
    if (it->d) {
      o.*(it->d) = number(value, p);
    } else {
      o.*(it->i) = small_int(value, p);
    }
  }
}

Json params_to_json(const PlannerParams& p) {
  Json j = Json::object();
  for (const auto& f : kDoubleParams) j[f.key] = p.*(f.member);
  for (const auto& f : kBoolParams) j[f.key] = p.*(f.member);
  for (const auto& f : kIntParams) j[f.key] = p.*(f.member);
  j["qp"] = options_to_json(p.qp, kQpFields);
  j["nlp"] = options_to_json(p.nlp, kNlpFields);
  return j;
}

PlannerParams params_from_json(const Json& j, const std::string& path) {
  require_object(j, path);
  PlannerParams p;
  for (const auto& [key, value] : j.items()) {
    const auto kp = join(path, key);
    if (key == "qp") {
      options_from_json(value, kp, p.qp, kQpFields);
      continue;
    }
    if (key == "nlp") {
      options_from_json(value, kp, p.nlp, kNlpFields);
      continue;
    }
    auto match = [&](const auto& fields) {
      return std::find_if(std::begin(fields), std::end(fields), [&](const auto& f) { return key == f.key; });
    };
    if (auto it = match(kDoubleParams); it != std::end(kDoubleParams)) {
      p.*(it->member) = number(value, kp);
    } else if (auto ib = match(kBoolParams); ib != std::end(kBoolParams)) {
      p.*(ib->member) = boolean(value, kp);
    } else if (auto ii = match(kIntParams); ii != std::end(kIntParams)) {
      p.*(ii->member) = small_int(value, kp);
    } else {
      throw ParseError(kp, "unknown field");
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw ParseError(path, e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Scenario sections.

Json disturbance_to_json(const Disturbance& d) {
  Json j{{"time", d.time}, {"kind", to_string(d.kind)}, {"id", d.id}};
  if (d.kind == DisturbanceKind::kTeleportKeypoint) j["displacement"] = to_json(d.displacement);
  if (d.kind == DisturbanceKind::kFreezeAgent) j["duration"] = d.duration;
  return j;
}

Disturbance disturbance_from_json(const Json& j, const std::string& path, int dim) {
  require_object(j, path);
  Disturbance d;
  const auto name = text(field(j, path, "kind"), join(path, "kind"));
  const auto kind = disturbance_kind_from_string(name);
  if (!kind) throw ParseError(join(path, "kind"), "unknown disturbance kind \"" + name + "\"");
  d.kind = *kind;
  switch (d.kind) {
    case DisturbanceKind::kTeleportKeypoint:
      allow_keys(j, path, {"time", "kind", "id", "displacement"});
      d.displacement = vector_of(field(j, path, "displacement"), join(path, "displacement"), dim);
      break;
    case DisturbanceKind::kDetachKeypoint:
      allow_keys(j, path, {"time", "kind", "id"});
      break;
    case DisturbanceKind::kFreezeAgent:
      allow_keys(j, path, {"time", "kind", "id", "duration"});
      d.duration = number(field(j, path, "duration"), join(path, "duration"));
      break;
  }
  d.time = number(field(j, path, "time"), join(path, "time"));
  d.id = small_int(field(j, path, "id"), join(path, "id"));
  return d;
}

Json generator_to_json(const GeneratorSpec& g) {
  return Json{{"kind", g.kind}, {"objects", g.objects}, {"agents", g.agents}};
}

GeneratorSpec generator_from_json(const Json& j, const std::string& path) {
  allow_keys(j, path, {"kind", "objects", "agents"});
  GeneratorSpec g;
  g.kind = text(field(j, path, "kind"), join(path, "kind"));
  if (g.kind != "stacking" && g.kind != "parallel_pickup") {
    throw ParseError(join(path, "kind"), "unknown generator \"" + g.kind + "\"");
  }
  g.objects = g.kind == "stacking" ? small_int(field(j, path, "objects"), join(path, "objects"))
                                   : (j.contains("objects") ? small_int(j["objects"], join(path, "objects")) : 2);
  g.agents = g.kind == "stacking" ? small_int(field(j, path, "agents"), join(path, "agents"))
                                  : (j.contains("agents") ? small_int(j["agents"], join(path, "agents")) : 2);
  if (g.objects < 1 || g.agents < 1) throw ParseError(path, "objects and agents must be at least 1");
  if (g.kind == "parallel_pickup" && (g.objects != 2 || g.agents != 2)) {
    throw ParseError(path, "parallel_pickup has two objects and two agents");
  }
  return g;
}

Scenario generate(const GeneratorSpec& g, std::uint64_t seed) {
  if (g.kind == "stacking") return generate_stacking_scenario(g.objects, g.agents, seed);
  return generate_parallel_pickup_scenario(seed);
}

std::uint64_t seed_from_json(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ParseError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

Scenario scenario_from_json(const Json& root) {
  if (root.is_null()) throw ParseError("$", "empty document");
  require_object(root, "$");
  if (root.empty()) throw ParseError("$", "empty document");
  const long long version = integer(field(root, "$", "schema_version"), "schema_version");
  if (version != kSchemaVersion) throw SchemaVersionMismatch(version);

  if (!root.contains("system") && root.contains("generator")) {
    allow_keys(root, "$", {"schema_version", "id", "seed", "generator"});
    const auto g = generator_from_json(root["generator"], "generator");
    const std::uint64_t seed = root.contains("seed") ? seed_from_json(root["seed"], "seed") : 0;
    Scenario s;
    try {
      s = generate(g, seed);
    } catch (const Error& e) {
      throw ParseError("generator", e.what());
    }
    if (root.contains("id")) s.id = text(root["id"], "id");
    return s;
  }

  allow_keys(root, "$", {"schema_version", "id", "seed", "budget_s", "system", "goc", "rigid_coupling", "obstacles",
                         "disturbances", "planner", "generator"});
  Scenario s;
  s.id = text(field(root, "$", "id"), "id");
  s.seed = root.contains("seed") ? seed_from_json(root["seed"], "seed") : 0;
  if (root.contains("budget_s")) s.budget = number(root["budget_s"], "budget_s");
  if (!(s.budget > 0)) throw ParseError("budget_s", "budget must be positive");

  // System.
  const Json& sys = field(root, "$", "system");
  allow_keys(sys, "system", {"agent_dims", "workspace", "agents", "keypoints"});
  SystemSpec spec;
  const auto& dims = array(field(sys, "system", "agent_dims"), "system.agent_dims");
  for (std::size_t i = 0; i < dims.size(); ++i) spec.agent_dims.push_back(small_int(dims[i], index("system.agent_dims", i)));
  const Json& ws = field(sys, "system", "workspace");
  allow_keys(ws, "system.workspace", {"lo", "hi"});
  spec.workspace.lo = vector_of(field(ws, "system.workspace", "lo"), "system.workspace.lo");
  spec.workspace.hi = vector_of(field(ws, "system.workspace", "hi"), "system.workspace.hi");
  const auto& kps = array(field(sys, "system", "keypoints"), "system.keypoints");
  spec.num_keypoints = static_cast<int>(kps.size());
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ParseError("system", e.what());
  }
  const int dim = spec.dim();
  const auto& agents = array(field(sys, "system", "agents"), "system.agents");
  if (static_cast<int>(agents.size()) != spec.num_agents()) {
    throw ParseError("system.agents", "expected one entry per agent_dims entry");
  }
  s.model.spec = spec;
  s.x0 = Configuration::zeros(spec);
  s.v0 = Configuration::zeros(spec);
  auto read_body = [&](const Json& j, const std::string& path, auto pos, auto vel) {
    allow_keys(j, path, {"position", "velocity"});
    pos = vector_of(field(j, path, "position"), join(path, "position"), dim);
    if (j.contains("velocity")) vel = vector_of(j["velocity"], join(path, "velocity"), dim);
  };
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const int j = static_cast<int>(i);
    read_body(agents[i], index("system.agents", i), s.x0.agent(j), s.v0.agent(j));
  }
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const int p = static_cast<int>(i);
    read_body(kps[i], index("system.keypoints", i), s.x0.keypoint(p), s.v0.keypoint(p));
  }

  // Graph.
  const Json& gj = field(root, "$", "goc");
  allow_keys(gj, "goc", {"subtask_count", "nodes", "edges"});
  Goc& g = s.model.goc;
  g.subtask_count = small_int(field(gj, "goc", "subtask_count"), "goc.subtask_count");
  if (g.subtask_count < 0) throw ParseError("goc.subtask_count", "must be non-negative");
  const auto& nodes = array(field(gj, "goc", "nodes"), "goc.nodes");
  g.num_nodes = static_cast<int>(nodes.size());
  g.node_constraints.resize(nodes.size());
  bool any_name = false;
  std::vector<std::string> names(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto path = index("goc.nodes", i);
    allow_keys(nodes[i], path, {"id", "name", "constraints"});
    if (small_int(field(nodes[i], path, "id"), join(path, "id")) != static_cast<int>(i)) {
      throw ParseError(join(path, "id"), "node ids must be dense and in order");
    }
    if (nodes[i].contains("name")) {
      names[i] = text(nodes[i]["name"], join(path, "name"));
      any_name = true;
    }
    if (nodes[i].contains("constraints")) {
      g.node_constraints[i] = constraints_from_json(nodes[i]["constraints"], join(path, "constraints"), spec,
                                                    g.subtask_count);
    }
  }
  if (any_name) g.node_names = names;
  const auto& edges = array(field(gj, "goc", "edges"), "goc.edges");
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto path = index("goc.edges", i);
    allow_keys(edges[i], path, {"from", "to", "constraints"});
    GocEdge e;
    e.from = small_int(field(edges[i], path, "from"), join(path, "from"));
    e.to = small_int(field(edges[i], path, "to"), join(path, "to"));
    for (int v : {e.from, e.to}) {
      if (v < 0 || v >= g.num_nodes) throw ParseError(path, "node " + std::to_string(v) + " does not exist");
    }
    if (!seen.insert(e.key()).second) throw ParseError(path, "duplicate edge");
    if (edges[i].contains("constraints")) {
      e.constraints = constraints_from_json(edges[i]["constraints"], join(path, "constraints"), spec, g.subtask_count);
    }
    g.edges.push_back(std::move(e));
  }
  try {
    validate_goc(g, spec);
  } catch (const Error& e) {
    throw ParseError("goc", e.what());
  }

  if (root.contains("rigid_coupling")) {
    const auto& rc = array(root["rigid_coupling"], "rigid_coupling");
    for (std::size_t i = 0; i < rc.size(); ++i) {
      const auto path = index("rigid_coupling", i);
      allow_keys(rc[i], path, {"from", "to", "keypoint", "subtask", "agent"});
      CarryEdge c;
      c.from = small_int(field(rc[i], path, "from"), join(path, "from"));
      c.to = small_int(field(rc[i], path, "to"), join(path, "to"));
      c.keypoint = small_int(field(rc[i], path, "keypoint"), join(path, "keypoint"));
      if (rc[i].contains("subtask")) c.subtask = small_int(rc[i]["subtask"], join(path, "subtask"));
      if (rc[i].contains("agent")) c.agent = small_int(rc[i]["agent"], join(path, "agent"));
      if (!g.find_edge(c.from, c.to)) throw ParseError(path, "carry refers to a missing edge");
      if (c.keypoint < 0 || c.keypoint >= spec.num_keypoints) throw ParseError(join(path, "keypoint"), "no such keypoint");
      if ((c.subtask < 0) == (c.agent < 0)) throw ParseError(path, "expected exactly one of subtask or agent");
      if (c.subtask >= g.subtask_count) throw ParseError(join(path, "subtask"), "no such subtask");
      if (c.agent >= spec.num_agents()) throw ParseError(join(path, "agent"), "no such agent");
      s.model.declared_carries.push_back(c);
    }
  }
  if (root.contains("obstacles")) {
    const auto& obs = array(root["obstacles"], "obstacles");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const auto path = index("obstacles", i);
      allow_keys(obs[i], path, {"center", "radius"});
      Obstacle o;
      o.center = vector_of(field(obs[i], path, "center"), join(path, "center"), dim);
      o.radius = number(field(obs[i], path, "radius"), join(path, "radius"));
      if (!(o.radius > 0)) throw ParseError(join(path, "radius"), "must be positive");
      s.model.obstacles.push_back(std::move(o));
    }
  }
  if (root.contains("disturbances")) {
    const auto& ds = array(root["disturbances"], "disturbances");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto path = index("disturbances", i);
      auto d = disturbance_from_json(ds[i], path, dim);
      const int limit = d.kind == DisturbanceKind::kFreezeAgent ? spec.num_agents() : spec.num_keypoints;
      if (d.id < 0 || d.id >= limit) throw ParseError(join(path, "id"), "no such target");
      if (!(d.time >= 0)) throw ParseError(join(path, "time"), "must be non-negative");
      s.disturbances.push_back(std::move(d));
    }
  }
  if (root.contains("planner")) s.params = params_from_json(root["planner"], "planner");
  if (root.contains("generator")) s.generator = generator_from_json(root["generator"], "generator");

  try {
    s.validate();
  } catch (const Error& e) {
    throw ParseError("$", e.what());
  }
  return s;
}

Json scenario_to_json(const Scenario& s) {
  Json root;
  root["schema_version"] = kSchemaVersion;
  root["id"] = s.id;
  root["seed"] = s.seed;
  root["budget_s"] = s.budget;
  const auto& spec = s.model.spec;
  Json sys;
  sys["agent_dims"] = spec.agent_dims;
  sys["workspace"] = Json{{"lo", to_json(spec.workspace.lo)}, {"hi", to_json(spec.workspace.hi)}};
  sys["agents"] = Json::array();
  for (int j = 0; j < spec.num_agents(); ++j) {
    sys["agents"].push_back(Json{{"position", to_json(s.x0.agent(j))}, {"velocity", to_json(s.v0.agent(j))}});
  }
  sys["keypoints"] = Json::array();
  for (int p = 0; p < spec.num_keypoints; ++p) {
    sys["keypoints"].push_back(Json{{"position", to_json(s.x0.keypoint(p))}, {"velocity", to_json(s.v0.keypoint(p))}});
  }
  root["system"] = sys;

  const Goc& g = s.model.goc;
  Json gj;
  gj["subtask_count"] = g.subtask_count;
  gj["nodes"] = Json::array();
  for (int v = 0; v < g.num_nodes; ++v) {
    Json n{{"id", v}, {"constraints", constraints_to_json(g.node_constraints[v])}};
    if (!g.node_names.empty() && !g.node_names[v].empty()) n["name"] = g.node_names[v];
    gj["nodes"].push_back(n);
  }
  gj["edges"] = Json::array();
  for (const auto& e : g.edges) {
    gj["edges"].push_back(Json{{"from", e.from}, {"to", e.to}, {"constraints", constraints_to_json(e.constraints)}});
  }
  root["goc"] = gj;

  root["rigid_coupling"] = Json::array();
  for (const auto& c : s.model.declared_carries) {
    Json j{{"from", c.from}, {"to", c.to}, {"keypoint", c.keypoint}};
    if (c.subtask >= 0) j["subtask"] = c.subtask;
    if (c.agent >= 0) j["agent"] = c.agent;
    root["rigid_coupling"].push_back(j);
  }
  root["obstacles"] = Json::array();
  for (const auto& o : s.model.obstacles) root["obstacles"].push_back(Json{{"center", to_json(o.center)}, {"radius", o.radius}});
  root["disturbances"] = Json::array();
  for (const auto& d : s.disturbances) root["disturbances"].push_back(disturbance_to_json(d));
  root["planner"] = params_to_json(s.params);
  if (s.generator) root["generator"] = generator_to_json(*s.generator);
  return root;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content, bool append = false) {
  std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Scenario parse_scenario(std::string_view input) {
  const auto first = input.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw ParseError("$", "empty document");
  Json root;
  try {
    root = Json::parse(input);
  } catch (const Json::parse_error& e) {
    throw ParseError("$", "invalid JSON at byte " + std::to_string(e.byte));
  }
  return scenario_from_json(root);
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path)); }

std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

void save_scenario(const Scenario& s, const std::filesystem::path& path) { write_file(path, serialize_scenario(s)); }

// ---------------------------------------------------------------------------
// Metrics.

MetricsRow MetricsRow::from_report(const Scenario& s, Method method, const EpisodeReport& r) {
  MetricsRow row;
  row.scenario = s.id;
  row.method = to_string(method);
  row.seed = s.seed;
  row.success = r.success;
  row.max_time_s = r.max_cycle_seconds;
  row.avg_time_s = r.avg_cycle_seconds;
  row.total_length_m = r.total_length;
  row.backtracks = r.backtracks;
  row.cycles = r.cycles;
  return row;
}

std::string metrics_header() {
  return "scenario,method,seed,success,max_time_s,avg_time_s,total_length_m,backtracks,cycles";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string scenario = r.scenario;
  std::replace(scenario.begin(), scenario.end(), ',', '_');
  return scenario + "," + r.method + "," + std::to_string(r.seed) + "," + (r.success ? "1" : "0") + "," +
         fmt(r.max_time_s) + "," + fmt(r.avg_time_s) + "," + fmt(r.total_length_m) + "," +
         std::to_string(r.backtracks) + "," + std::to_string(r.cycles);
}

void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::string out;
  if (fresh) out += metrics_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_line(r) + "\n";
  write_file(path, out, true);
}

// ---------------------------------------------------------------------------
// Trajectories.

namespace {

const char* kAxes = "xyz";

std::vector<std::string> trajectory_columns(int dim, int agents, int keypoints) {
  std::vector<std::string> cols{"t"};
  for (int j = 0; j < agents; ++j) {
    for (int d = 0; d < dim; ++d) cols.push_back("a" + std::to_string(j) + "_" + kAxes[d]);
  }
  for (int p = 0; p < keypoints; ++p) {
    for (int d = 0; d < dim; ++d) cols.push_back("k" + std::to_string(p) + "_" + kAxes[d]);
  }
  return cols;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string trajectory_csv(const Scenario& s, const EpisodeReport& r) {
  const auto& spec = s.model.spec;
  const auto cols = trajectory_columns(spec.dim(), spec.num_agents(), spec.num_keypoints);
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    out += fmt(r.times[i], "%.6f");
    for (Eigen::Index k = 0; k < r.trajectory[i].size(); ++k) out += "," + fmt(r.trajectory[i][k], "%.9g");
    out += "\n";
  }
  return out;
}

Trajectory parse_trajectory_csv(std::string_view input) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < input.size()) {
    auto nl = input.find('\n', start);
    if (nl == std::string_view::npos) nl = input.size();
    auto line = input.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("header", "missing header");

  const auto header = split(lines[0]);
  if (header.empty() || header[0] != "t") throw ParseError("header", "first column must be t");
  int agents = 0, keypoints = 0, dim = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto h = header[i];
    const auto us = h.find('_');
    if (h.size() < 4 || (h[0] != 'a' && h[0] != 'k') || us == std::string_view::npos || us + 2 != h.size()) {
      throw ParseError("header", "unexpected column \"" + std::string(h) + "\"");
    }
    int id = 0;
    const auto [ptr, ec] = std::from_chars(h.data() + 1, h.data() + us, id);
    if (ec != std::errc() || ptr != h.data() + us) throw ParseError("header", "bad column \"" + std::string(h) + "\"");
    (h[0] == 'a' ? agents : keypoints) = std::max(h[0] == 'a' ? agents : keypoints, id + 1);
    const char* axis = std::strchr(kAxes, h[us + 1]);
    if (!axis || !*axis) throw ParseError("header", "bad axis in \"" + std::string(h) + "\"");
    dim = std::max(dim, static_cast<int>(axis - kAxes) + 1);
  }
  if (agents == 0) throw ParseError("header", "no agent columns");
  if (dim < 2) throw ParseError("header", "missing column a0_y");
  const auto expected = trajectory_columns(dim, agents, keypoints);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size() || header[i] != expected[i]) throw ParseError("header", "missing column " + expected[i]);
  }
  if (header.size() != expected.size()) throw ParseError("header", "unexpected extra columns");

  Trajectory traj;
  traj.dim = dim;
  traj.agents = agents;
  traj.keypoints = keypoints;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = "row " + std::to_string(li + 1);
    const auto cells = split(lines[li]);
    if (cells.size() != expected.size()) {
      throw ParseError(where, "expected " + std::to_string(expected.size()) + " fields, found " +
                                  std::to_string(cells.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell(cells[c]);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ParseError(where, "bad number in column " + expected[c]);
      }
      values[c] = v;
    }
    traj.t.push_back(values[0]);
    traj.rows.emplace_back(values.begin() + 1, values.end());
  }
  return traj;
}

std::string render_svg(const Trajectory& traj, View view) {
  const int ax = 0;
  const int ay = view == View::kXY ? 1 : 2;
  if (traj.dim <= ay) throw Error("trajectory has no " + std::string(1, kAxes[ay]) + " axis");
  constexpr double kSize = 480.0, kPad = 40.0, kLegend = 140.0;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

  double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
  bool first = true;
  auto extend = [&](double x, double y) {
    if (first) {
      lo_x = hi_x = x;
      lo_y = hi_y = y;
      first = false;
    }
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  for (std::size_t r = 0; r < traj.rows.size(); ++r) {
    for (int j = 0; j < traj.agents; ++j) extend(traj.agent(r, j, ax), traj.agent(r, j, ay));
    for (int p = 0; p < traj.keypoints; ++p) extend(traj.keypoint(r, p, ax), traj.keypoint(r, p, ay));
  }
  // Square data window so both axes share a scale.
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6}) * 1.1;
  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  auto px = [&](double x) { return kPad + (x - cx + span / 2) / span * kSize; };
  auto py = [&](double y) { return kPad + kSize - (y - cy + span / 2) / span * kSize; };
  auto f = [](double v) { return fmt(v, "%.2f"); };

  std::ostringstream o;
  const double width = kSize + 2 * kPad + kLegend, height = kSize + 2 * kPad;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f(width) << "\" height=\"" << f(height)
    << "\" viewBox=\"0 0 " << f(width) << " " << f(height) << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << f(width) << "\" height=\"" << f(height) << "\" fill=\"white\"/>\n";
  o << "<rect x=\"" << f(kPad) << "\" y=\"" << f(kPad) << "\" width=\"" << f(kSize) << "\" height=\"" << f(kSize)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << f(kPad + kSize / 2) << "\" y=\"" << f(height - 10) << "\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"12\">" << kAxes[ax] << " (m)</text>\n";
  o << "<text x=\"12\" y=\"" << f(kPad + kSize / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"12\">" << kAxes[ay] << " (m)</text>\n";
  for (int j = 0; j < traj.agents; ++j) {
    if (traj.rows.empty()) break;
    o << "<polyline class=\"agent\" fill=\"none\" stroke=\"" << palette[j % 8] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 0; r < traj.rows.size(); ++r) {
      o << (r ? " " : "") << f(px(traj.agent(r, j, ax))) << "," << f(py(traj.agent(r, j, ay)));
    }
    o << "\"/>\n";
  }
  if (!traj.rows.empty()) {
    const std::size_t last = traj.rows.size() - 1;
    for (int p = 0; p < traj.keypoints; ++p) {
      o << "<circle class=\"keypoint-start\" cx=\"" << f(px(traj.keypoint(0, p, ax))) << "\" cy=\""
        << f(py(traj.keypoint(0, p, ay))) << "\" r=\"4\" fill=\"none\" stroke=\"gray\"/>\n";
      o << "<rect class=\"keypoint-end\" x=\"" << f(px(traj.keypoint(last, p, ax)) - 4) << "\" y=\""
        << f(py(traj.keypoint(last, p, ay)) - 4) << "\" width=\"8\" height=\"8\" fill=\"gray\"/>\n";
    }
  }
  const double lx = kPad * 1.5 + kSize;
  double ly = kPad + 10;
  for (int j = 0; j < traj.agents; ++j, ly += 18) {
    o << "<line x1=\"" << f(lx) << "\" y1=\"" << f(ly) << "\" x2=\"" << f(lx + 20) << "\" y2=\"" << f(ly)
      << "\" stroke=\"" << palette[j % 8] << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << f(lx + 26) << "\" y=\"" << f(ly + 4) << "\" font-family=\"sans-serif\" font-size=\"12\">agent "
      << j << "</text>\n";
  }
  if (traj.keypoints > 0) {
    o << "<circle cx=\"" << f(lx + 10) << "\" cy=\"" << f(ly) << "\" r=\"4\" fill=\"none\" stroke=\"gray\"/>\n";
    o << "<text x=\"" << f(lx + 26) << "\" y=\"" << f(ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\">keypoint start</text>\n";
    ly += 18;
    o << "<rect x=\"" << f(lx + 6) << "\" y=\"" << f(ly - 4) << "\" width=\"8\" height=\"8\" fill=\"gray\"/>\n";
    o << "<text x=\"" << f(lx + 26) << "\" y=\"" << f(ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\">keypoint end</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Bench.

std::vector<BenchSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.scenario, r.method);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
  };
  std::vector<BenchSummary> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    BenchSummary s;
    s.scenario = key.first;
    s.method = key.second;
    s.trials = static_cast<int>(g.size());
    std::vector<double> mx, av, len, bt, cy;
    for (const auto* r : g) {
      s.success_rate += r->success ? 1.0 : 0.0;
      mx.push_back(r->max_time_s);
      av.push_back(r->avg_time_s);
      len.push_back(r->total_length_m);
      bt.push_back(r->backtracks);
      cy.push_back(r->cycles);
    }
    s.success_rate /= static_cast<double>(g.size());
    stats(mx, s.max_time_mean, s.max_time_std);
    stats(av, s.avg_time_mean, s.avg_time_std);
    stats(len, s.length_mean, s.length_std);
    stats(bt, s.backtracks_mean, s.backtracks_std);
    stats(cy, s.cycles_mean, s.cycles_std);
    out.push_back(s);
  }
  return out;
}

BenchResult run_bench(const std::filesystem::path& suite, const BenchOptions& options) {
  if (!std::filesystem::is_directory(suite)) throw IoError(suite.string() + " is not a directory");
  if (options.trials < 0) throw Error("trials must be non-negative");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(suite)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scn") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  BenchResult result;
  struct Job {
    Scenario scenario;
    Method method;
  };
  std::vector<Job> jobs;
  for (const auto& f : files) {
    Scenario s;
    try {
      s = load_scenario(f);
    } catch (const std::exception& e) {
      result.warnings.push_back(f.filename().string() + ": " + e.what());
      continue;
    }
    for (auto method : {Method::kGoc, Method::kBaseline}) {
      for (int t = 0; t < options.trials; ++t) jobs.push_back({reseed(s, static_cast<std::uint64_t>(t)), method});
    }
  }

  int threads = options.threads;
  if (threads <= 0) {
    const char* env = std::getenv("GOC_MPC_THREADS");
    threads = env ? std::max(1, std::atoi(env)) : 1;
  }
  result.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      auto& job = jobs[i];
      job.scenario.params.threads = 1;
      EpisodeOptions opts;
      opts.method = job.method;
      opts.record_trajectory = false;
      EpisodeReport rep;
      try {
        rep = run_episode(job.scenario, opts);
      } catch (const std::exception& e) {
        rep.error = e.what();
      }
      result.rows[i] = MetricsRow::from_report(job.scenario, job.method, rep);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(threads, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  result.summary = summarize(result.rows);
  return result;
}

std::string bench_csv(const BenchResult& r) {
  std::string out;
  if (!r.rows.empty()) {
    out += metrics_header() + "\n";
    for (const auto& row : r.rows) out += metrics_csv_line(row) + "\n";
  }
  for (const auto& w : r.warnings) out += "# warning: " + w + "\n";
  if (!out.empty()) out += "\n";
  out += "# summary\n";
  out += "scenario,method,trials,success_rate,max_time_s_mean,max_time_s_std,avg_time_s_mean,avg_time_s_std,"
         "total_length_m_mean,total_length_m_std,backtracks_mean,backtracks_std,cycles_mean,cycles_std\n";
  for (const auto& s : r.summary) {
    out += s.scenario + "," + s.method + "," + std::to_string(s.trials) + "," + fmt(s.success_rate) + "," +
           fmt(s.max_time_mean) + "," + fmt(s.max_time_std) + "," + fmt(s.avg_time_mean) + "," + fmt(s.avg_time_std) +
           "," + fmt(s.length_mean) + "," + fmt(s.length_std) + "," + fmt(s.backtracks_mean) + "," +
           fmt(s.backtracks_std) + "," + fmt(s.cycles_mean) + "," + fmt(s.cycles_std) + "\n";
  }
  return out;
}

}  // namespace gocmpc
