#include "esp/engine.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace esp {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::http_call: return "http_call";
    case NodeKind::bind_output: return "bind_output";
    case NodeKind::constant: return "constant";
    case NodeKind::service_node: return "service_node";
  }
  return "?";
}

std::string_view to_string(ExecutionStatus s) {
  switch (s) {
    case ExecutionStatus::pending: return "pending";
    case ExecutionStatus::running: return "running";
    case ExecutionStatus::succeeded: return "succeeded";
    case ExecutionStatus::failed: return "failed";
  }
  return "?";
}

std::string_view to_string(FailureCause c) {
  switch (c) {
    case FailureCause::http_status: return "http_status";
    case FailureCause::timeout: return "timeout";
    case FailureCause::bind_failure: return "bind_failure";
    case FailureCause::substitution: return "substitution";
    case FailureCause::no_instance: return "no_instance";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Templates

namespace {

struct Slot {
  std::size_t begin;  // index of '{'
  std::size_t end;    // one past '}'
  std::string name;
  std::optional<std::string> fallback;
};

std::vector<Slot> parse_slots(std::string_view text) {
  std::vector<Slot> slots;
  std::size_t i = 0;
  while ((i = text.find('{', i)) != std::string_view::npos) {
    std::size_t close = text.find('}', i);
    if (close == std::string_view::npos) {
      throw InvalidFlow("unterminated template slot in '" + std::string(text) + "'");
    }
    std::string_view inner = text.substr(i + 1, close - i - 1);
    Slot slot{i, close + 1, {}, std::nullopt};
    if (auto bar = inner.find('|'); bar != std::string_view::npos) {
      slot.name = std::string(inner.substr(0, bar));
      slot.fallback = std::string(inner.substr(bar + 1));
    } else {
      slot.name = std::string(inner);
    }
    slots.push_back(std::move(slot));
    i = close + 1;
  }
  return slots;
}

void collect_json_slots(const json& j, std::vector<std::string>& out) {
  if (j.is_string()) {
    for (auto& s : parse_slots(j.get_ref<const std::string&>())) {
      out.push_back(s.name);
    }
  } else if (j.is_structured()) {
    for (const auto& v : j) collect_json_slots(v, out);
  }
}

std::string percent_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> template_slots(std::string_view text) {
  std::vector<std::string> names;
  for (auto& s : parse_slots(text)) names.push_back(std::move(s.name));
  return names;
}

// ---------------------------------------------------------------------------
// Flow structure

std::vector<std::size_t> topological_order(const Flow& flow) {
  const std::size_t n = flow.nodes.size();
  if (n == 0) throw InvalidFlow("flow '" + flow.flow_id + "' has no nodes");
  auto index_of = [&](const std::string& id) -> std::size_t {
    for (std::size_t i = 0; i < n; ++i) {
      if (flow.nodes[i].node_id == id) return i;
    }
    throw InvalidFlow("flow '" + flow.flow_id + "': dangling wire endpoint '" +
                      id + "'");
  };
  std::set<std::string_view> ids;
  for (const auto& node : flow.nodes) {
    if (!ids.insert(node.node_id).second) {
      throw InvalidFlow("flow '" + flow.flow_id + "': duplicate node id '" +
                        node.node_id + "'");
    }
  }
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& [from, to] : flow.wires) {
    std::size_t a = index_of(from), b = index_of(to);
    out[a].push_back(b);
    ++indegree[b];
  }
  std::size_t sources = std::count(indegree.begin(), indegree.end(), 0u);
  std::size_t sinks = std::count_if(out.begin(), out.end(),
                                    [](const auto& v) { return v.empty(); });

  // Kahn's algorithm, always taking the lowest declared index that is ready.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (std::size_t w : out[v]) {
      if (--indegree[w] == 0) ready.insert(w);
    }
  }
  if (order.size() != n) {
    throw InvalidFlow("flow '" + flow.flow_id + "': wires contain a cycle");
  }
  if (sources != 1 || sinks != 1) {
    throw InvalidFlow("flow '" + flow.flow_id +
                      "': wires must form a DAG with one source and one sink");
  }
  return order;
}

namespace {

void check_flow(const Flow& flow) {
  if (flow.flow_id.empty()) throw InvalidFlow("flow id is empty");
  topological_order(flow);
  std::set<std::string_view> inputs(flow.inputs.begin(), flow.inputs.end());
  if (inputs.size() != flow.inputs.size()) {
    throw InvalidFlow("flow '" + flow.flow_id + "': duplicate input");
  }
  auto need_input = [&](const std::string& name, const FlowNode& node) {
    if (!inputs.contains(name)) {
      throw InvalidFlow("flow '" + flow.flow_id + "', node '" + node.node_id +
                        "': '" + name + "' is not a declared input");
    }
  };
  for (const auto& node : flow.nodes) {
    if (const auto* call = std::get_if<HttpCallNode>(&node.config)) {
      std::vector<std::string> slots = template_slots(call->path);
      if (call->body) collect_json_slots(*call->body, slots);
      for (const auto& s : slots) need_input(s, node);
    } else if (const auto* bind = std::get_if<BindOutputNode>(&node.config)) {
      for (const auto& [field, target] : bind->fields) {
        if (target.empty() || target[0] != '@') need_input(target, node);
      }
    } else if (const auto* constant = std::get_if<ConstantNode>(&node.config)) {
      for (const auto& [target, value] : constant->values) need_input(target, node);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Flow manifest

Flow flow_from_json(const json& j) {
  try {
    Flow flow;
    flow.flow_id = j.at("flow_id").get<std::string>();
    flow.action_reference = j.at("action_reference").get<std::string>();
    flow.inputs = j.at("inputs").get<std::vector<std::string>>();
    for (const auto& n : j.at("nodes")) {
      FlowNode node;
      node.node_id = n.at("id").get<std::string>();
      const std::string kind = n.at("kind").get<std::string>();
      if (kind == "http_call") {
        HttpCallNode call;
        call.method = n.value("method", std::string("GET"));
        call.path = n.at("path").get<std::string>();
        if (n.contains("body")) call.body = n["body"];
        if (n.contains("expect")) call.expected_status = n["expect"].get<std::vector<int>>();
        node.config = std::move(call);
      } else if (kind == "bind_output") {
        BindOutputNode bind;
        for (const auto& [field, target] : n.at("fields").items()) {
          bind.fields.emplace_back(field, target.get<std::string>());
        }
        node.config = std::move(bind);
      } else if (kind == "constant") {
        ConstantNode constant;
        for (const auto& [target, value] : n.at("values").items()) {
          constant.values.emplace_back(target, value.get<std::string>());
        }
        node.config = std::move(constant);
      } else if (kind == "service_node") {
        node.config = ServiceNodeRef{n.at("flow").get<std::string>()};
      } else {
        throw InvalidFlow("unknown node kind '" + kind + "'");
      }
      flow.nodes.push_back(std::move(node));
    }
    if (j.contains("wires")) {
      for (const auto& w : j["wires"]) {
        flow.wires.emplace_back(w.at(0).get<std::string>(), w.at(1).get<std::string>());
      }
    }
    return flow;
  } catch (const json::exception& e) {
    throw InvalidFlow(std::string("malformed flow: ") + e.what());
  }
}

ordered_json flow_to_json(const Flow& flow) {
  ordered_json out;
  out["flow_id"] = flow.flow_id;
  out["action_reference"] = flow.action_reference;
  out["inputs"] = flow.inputs;
  out["nodes"] = ordered_json::array();
  for (const auto& node : flow.nodes) {
    ordered_json n;
    n["id"] = node.node_id;
    n["kind"] = to_string(node.kind());
    std::visit(
        [&](const auto& cfg) {
          using T = std::decay_t<decltype(cfg)>;
          if constexpr (std::is_same_v<T, HttpCallNode>) {
            n["method"] = cfg.method;
            n["path"] = cfg.path;
            if (cfg.body) n["body"] = ordered_json::parse(cfg.body->dump());
            n["expect"] = cfg.expected_status;
          } else if constexpr (std::is_same_v<T, BindOutputNode>) {
            n["fields"] = ordered_json::object();
            for (const auto& [f, t] : cfg.fields) n["fields"][f] = t;
          } else if constexpr (std::is_same_v<T, ConstantNode>) {
            n["values"] = ordered_json::object();
            for (const auto& [t, v] : cfg.values) n["values"][t] = v;
          } else {
            n["flow"] = cfg.flow_id;
          }
        },
        node.config);
    out["nodes"].push_back(std::move(n));
  }
  out["wires"] = ordered_json::array();
  for (const auto& [from, to] : flow.wires) out["wires"].push_back({from, to});
  return out;
}

std::vector<Flow> flow_manifest_from_json(const json& j) {
  if (!j.is_object() || !j.contains("flows") || !j["flows"].is_array()) {
    throw InvalidFlow("flow manifest needs a \"flows\" array");
  }
  std::vector<Flow> flows;
  for (const auto& f : j["flows"]) flows.push_back(flow_from_json(f));
  return flows;
}

ordered_json flow_manifest_to_json(const std::vector<Flow>& flows) {
  ordered_json out;
  out["flows"] = ordered_json::array();
  for (const auto& f : flows) out["flows"].push_back(flow_to_json(f));
  return out;
}

// ---------------------------------------------------------------------------
// Flow store

std::string FlowStore::register_flow(Flow flow, const RegistrySnapshot& snapshot) {
  check_flow(flow);
  const bool tagged = std::any_of(
      snapshot.descriptions.begin(), snapshot.descriptions.end(),
      [&](const auto& d) { return d.action_reference == flow.action_reference; });
  if (!tagged) {
    throw UnknownActionReference("no description with action reference '" +
                                 flow.action_reference + "'");
  }
  std::lock_guard lock(mu_);
  for (const auto& f : flows_) {
    if (f.flow_id == flow.flow_id) {
      throw InvalidFlow("flow '" + flow.flow_id + "' already registered");
    }
  }
  for (const auto& node : flow.nodes) {
    if (const auto* ref = std::get_if<ServiceNodeRef>(&node.config)) {
      auto known = std::any_of(flows_.begin(), flows_.end(), [&](const auto& f) {
        return f.flow_id == ref->flow_id;
      });
      if (!known) {
        throw InvalidFlow("flow '" + flow.flow_id +
                          "' references unknown flow '" + ref->flow_id + "'");
      }
    }
  }
  flows_.push_back(std::move(flow));
  return flows_.back().flow_id;
}

std::optional<Flow> FlowStore::find(std::string_view flow_id) const {
  std::lock_guard lock(mu_);
  for (const auto& f : flows_) {
    if (f.flow_id == flow_id) return f;
  }
  return std::nullopt;
}

std::optional<Flow> FlowStore::preferred_for(std::string_view action_reference) const {
  std::lock_guard lock(mu_);
  for (const auto& f : flows_) {
    if (f.action_reference == action_reference) return f;
  }
  return std::nullopt;
}

std::vector<Flow> FlowStore::all() const {
  std::lock_guard lock(mu_);
  return flows_;
}

// ---------------------------------------------------------------------------
// Compilation

MetaFlow compile(const CompositionResult& composition,
                 const RegistrySnapshot& snapshot, const FlowStore& flows) {
  MetaFlow mf;
  mf.composition = composition;
  for (const auto& step : composition.steps) {
    const ServiceDescription* desc = snapshot.find(step.name);
    if (desc == nullptr) throw UnknownDescription(step.name);
    std::optional<Flow> flow = flows.preferred_for(desc->action_reference);
    if (!flow) throw MissingFlow(step.name);
    if (flow->inputs.size() != step.params.size()) {
      throw InvalidFlow("flow '" + flow->flow_id + "' takes " +
                        std::to_string(flow->inputs.size()) + " inputs, step '" +
                        step.name + "' has " + std::to_string(step.params.size()) +
                        " params");
    }
    Stage stage;
    stage.description_name = step.name;
    for (std::size_t i = 0; i < step.params.size(); ++i) {
      stage.binding.emplace_back(flow->inputs[i], step.params[i]);
    }
    stage.flow = std::move(*flow);
    mf.stages.push_back(std::move(stage));
  }
  return mf;
}

std::vector<ObjectDecl> bind(std::vector<ObjectDecl> env,
                             std::string_view object_name,
                             std::string_view value) {
  auto it = std::find_if(env.begin(), env.end(),
                         [&](const auto& o) { return o.name == object_name; });
  if (it == env.end()) {
    throw UnknownObject("unknown object '" + std::string(object_name) + "'");
  }
  if (!it->value.empty() && it->value != value) {
    throw ConflictingBind("object '" + it->name + "' already bound to '" +
                          it->value + "', refusing '" + std::string(value) + "'");
  }
  it->value = std::string(value);
  return env;
}

// ---------------------------------------------------------------------------
// Records

ordered_json to_json(const StepResult& step) {
  ordered_json out;
  out["index"] = step.index;
  out["action"] = step.action;
  out["instance_id"] = step.instance_id;
  out["started_at"] = to_epoch_ms(step.started);
  out["finished_at"] = to_epoch_ms(step.finished);
  out["http_status"] = step.http_status;
  out["response_excerpt"] = step.response_excerpt;
  out["response"] = ordered_json::parse(step.response.dump());
  out["bindings"] = ordered_json::object();
  for (const auto& [obj, value] : step.bindings) out["bindings"][obj] = value;
  if (step.failure) {
    out["failure"] = {{"cause", to_string(step.failure->cause)},
                      {"message", step.failure->message}};
  } else {
    out["failure"] = nullptr;
  }
  return out;
}

ordered_json to_json(const ExecutionRecord& record) {
  ordered_json out;
  out["request_id"] = record.request_id;
  out["status"] = to_string(record.status);
  out["steps"] = ordered_json::array();
  for (const auto& s : record.steps) out["steps"].push_back(to_json(s));
  out["environment_final"] = environment_to_json(record.environment_final);
  return out;
}

// ---------------------------------------------------------------------------
// Executor

namespace {

struct StepAbort {
  FailureCause cause;
  std::string message;
};

using Binding = std::vector<std::pair<std::string, std::string>>;

const std::string* object_for(const Binding& binding, std::string_view input) {
  for (const auto& [in, obj] : binding) {
    if (in == input) return &obj;
  }
  return nullptr;
}

std::string substitute(std::string_view text, const Binding& binding,
                       const std::vector<ObjectDecl>& env, bool encode) {
  std::string out;
  std::size_t pos = 0;
  for (const Slot& slot : parse_slots(text)) {
    out.append(text.substr(pos, slot.begin - pos));
    pos = slot.end;
    const std::string* obj = object_for(binding, slot.name);
    const ObjectDecl* decl = obj ? find_object(env, *obj) : nullptr;
    std::string value = decl ? decl->value : std::string();
    if (value.empty()) {
      if (!slot.fallback) {
        throw StepAbort{FailureCause::substitution,
                        "template slot {" + slot.name + "} has no value" +
                            (obj ? " (object '" + *obj + "' unbound)" : "")};
      }
      value = *slot.fallback;
    }
    out += encode ? percent_encode(value) : value;
  }
  out.append(text.substr(pos));
  return out;
}

json substitute_json(const json& j, const Binding& binding,
                     const std::vector<ObjectDecl>& env) {
  if (j.is_string()) {
    return substitute(j.get_ref<const std::string&>(), binding, env, false);
  }
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = substitute_json(v, binding, env);
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(substitute_json(v, binding, env));
    return out;
  }
  return j;
}

class StageRun {
 public:
  StageRun(Registry& registry, const FlowStore& flows, HttpTransport& transport,
           std::chrono::milliseconds timeout, std::vector<ServiceInstance> instances,
           std::vector<ObjectDecl>& env, StepResult& step)
      : registry_(registry),
        flows_(flows),
        transport_(transport),
        timeout_(timeout),
        instances_(std::move(instances)),
        env_(env),
        step_(step) {}

  void run(const Flow& flow, const Binding& binding, int depth = 0) {
    if (depth > 16) {
      throw StepAbort{FailureCause::substitution, "service nodes nested too deep"};
    }
    for (std::size_t idx : topological_order(flow)) {
      const FlowNode& node = flow.nodes[idx];
      std::visit([&](const auto& cfg) { exec(cfg, binding, depth); }, node.config);
    }
  }

 private:
  void exec(const HttpCallNode& call, const Binding& binding, int) {
    HttpRequest request;
    request.method = call.method;
    request.path = substitute(call.path, binding, env_, true);
    if (call.body) request.body = substitute_json(*call.body, binding, env_).dump();

    HttpResult result;
    while (true) {
      const ServiceInstance& inst = instances_[cursor_];
      step_.instance_id = inst.instance_id;
      result = transport_.send(inst.base_url, request, timeout_);
      if (result.failure == TransportFailure::connect) {
        registry_.mark_health(inst.instance_id, Health::unreachable);
        if (!retried_ && cursor_ + 1 < instances_.size()) {
          retried_ = true;
          ++cursor_;
          continue;
        }
        throw StepAbort{FailureCause::timeout,
                        "cannot reach " + inst.base_url + ": " + result.error};
      }
      if (result.failure == TransportFailure::timeout) {
        throw StepAbort{FailureCause::timeout,
                        "no response from " + inst.base_url + ": " + result.error};
      }
      registry_.mark_health(inst.instance_id, Health::healthy);
      break;
    }
    step_.http_status = result.status;
    step_.response_excerpt = result.body.substr(0, 256);
    last_response_ = json::parse(result.body, nullptr, false);
    if (last_response_.is_discarded()) last_response_ = nullptr;
    step_.response = last_response_;
    if (std::find(call.expected_status.begin(), call.expected_status.end(),
                  result.status) == call.expected_status.end()) {
      throw StepAbort{FailureCause::http_status,
                      request.method + " " + request.path + " returned " +
                          std::to_string(result.status)};
    }
  }

  void exec(const BindOutputNode& node, const Binding& binding, int) {
    for (const auto& [field, target] : node.fields) {
      if (!last_response_.is_object() || !last_response_.contains(field) ||
          last_response_[field].is_null()) {
        throw StepAbort{FailureCause::bind_failure,
                        "response has no field '" + field + "'"};
      }
      const json& v = last_response_[field];
      std::string value = v.is_string() ? v.get<std::string>() : v.dump();
      std::string object;
      if (!target.empty() && target[0] == '@') {
        std::string_view type = std::string_view(target).substr(1);
        auto it = std::find_if(env_.begin(), env_.end(), [&](const auto& o) {
          return o.type == type && o.value.empty();
        });
        if (it == env_.end()) continue;
        object = it->name;
      } else {
        const std::string* obj = object_for(binding, target);
        if (obj == nullptr) {
          throw StepAbort{FailureCause::bind_failure,
                          "input '" + target + "' is not bound"};
        }
        object = *obj;
      }
      assign(object, value);
    }
  }

  void exec(const ConstantNode& node, const Binding& binding, int) {
    for (const auto& [target, value] : node.values) {
      const std::string* obj = object_for(binding, target);
      if (obj == nullptr) {
        throw StepAbort{FailureCause::bind_failure,
                        "input '" + target + "' is not bound"};
      }
      assign(*obj, value);
    }
  }

  void exec(const ServiceNodeRef& ref, const Binding& binding, int depth) {
    std::optional<Flow> sub = flows_.find(ref.flow_id);
    if (!sub) {
      throw StepAbort{FailureCause::substitution,
                      "service node references unknown flow '" + ref.flow_id + "'"};
    }
    Binding inner;
    for (const auto& input : sub->inputs) {
      const std::string* obj = object_for(binding, input);
      if (obj == nullptr) {
        throw StepAbort{FailureCause::substitution,
                        "flow '" + ref.flow_id + "' input '" + input + "' unbound"};
      }
      inner.emplace_back(input, *obj);
    }
    run(*sub, inner, depth + 1);
  }

  void assign(const std::string& object, const std::string& value) {
    try {
      env_ = esp::bind(std::move(env_), object, value);
    } catch (const std::runtime_error& e) {
      throw StepAbort{FailureCause::bind_failure, e.what()};
    }
    step_.bindings.emplace_back(object, value);
  }

  Registry& registry_;
  const FlowStore& flows_;
  HttpTransport& transport_;
  std::chrono::milliseconds timeout_;
  std::vector<ServiceInstance> instances_;
  std::vector<ObjectDecl>& env_;
  StepResult& step_;
  std::size_t cursor_ = 0;
  bool retried_ = false;
  json last_response_;
};

}  // namespace

Executor::Executor(Registry& registry, const FlowStore& flows,
                   HttpTransport& transport, ExecutorOptions options)
    : registry_(registry),
      flows_(flows),
      transport_(transport),
      options_(std::move(options)) {}

ExecutionRecord Executor::execute(const MetaFlow& meta_flow,
                                  std::vector<ObjectDecl> environment,
                                  const std::string& request_id) {
  ExecutionRecord record;
  record.request_id = request_id;
  record.status = ExecutionStatus::running;

  auto emit = [&](const StepResult& step, const char* transition, bool with_result) {
    if (options_.on_event) {
      options_.on_event(StepEvent{request_id, step.index, step.action, transition,
                                  with_result ? &step : nullptr});
    }
  };

  for (std::size_t i = 0; i < meta_flow.stages.size(); ++i) {
    const Stage& stage = meta_flow.stages[i];
    StepResult step;
    step.index = i;
    step.action = stage.description_name;
    step.started = Clock::now();
    emit(step, "started", false);
    try {
      std::vector<ServiceInstance> instances;
      try {
        instances = registry_.resolve_instances(stage.description_name);
      } catch (const RegistryError&) {
      }
      if (instances.empty()) {
        throw StepAbort{FailureCause::no_instance,
                        "no instance available for '" + stage.description_name + "'"};
      }
      StageRun run(registry_, flows_, transport_, options_.step_timeout,
                   std::move(instances), environment, step);
      run.run(stage.flow, stage.binding);
    } catch (const StepAbort& abort) {
      step.failure = StepFailure{abort.cause, abort.message};
    }
    step.finished = Clock::now();
    record.steps.push_back(std::move(step));
    const StepResult& done = record.steps.back();
    if (done.failure) {
      emit(done, "failed", true);
      record.status = ExecutionStatus::failed;
      record.environment_final = std::move(environment);
      return record;
    }
    emit(done, "succeeded", true);
  }
  record.status = ExecutionStatus::succeeded;
  record.environment_final = std::move(environment);
  return record;
}

}  // namespace esp
