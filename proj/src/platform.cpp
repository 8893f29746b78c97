#include "esp/platform.hpp"

#include <algorithm>

namespace esp {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::received: return "received";
    case Phase::composed: return "composed";
    case Phase::unsatisfiable: return "unsatisfiable";
    case Phase::executing: return "executing";
    case Phase::done: return "done";
    case Phase::failed: return "failed";
  }
  return "?";
}

bool transition_allowed(Phase from, Phase to) {
  switch (from) {
    case Phase::received:
      return to == Phase::composed || to == Phase::unsatisfiable;
    case Phase::composed:
      return to == Phase::executing;
    case Phase::executing:
      return to == Phase::done || to == Phase::failed;
    default:
      return false;
  }
}

ordered_json to_json(const RequestLifecycle& lc) {
  ordered_json out;
  out["request_id"] = lc.envelope.request_id;
  out["source"] = to_string(lc.envelope.source);
  out["phase"] = to_string(lc.phase);
  out["history"] = ordered_json::array();
  for (Phase p : lc.history) out["history"].push_back(to_string(p));
  out["request"] = request_to_json(lc.envelope.formal);
  out["goal"] = render_goal(lc.envelope.formal.goal);
  out["composition"] =
      lc.composition ? composition_to_json(*lc.composition) : ordered_json(nullptr);
  if (lc.unsatisfiable) {
    ordered_json missing = ordered_json::array();
    for (const auto& lit : lc.unsatisfiable->unreachable) {
      missing.push_back(render_literal(lit));
    }
    out["unsatisfiable"] = {{"unreachable", missing}};
  } else {
    out["unsatisfiable"] = nullptr;
  }
  out["execution"] = lc.execution ? to_json(*lc.execution) : ordered_json(nullptr);
  return out;
}

Platform::Platform(Registry& registry, FlowStore& flows, HttpTransport& transport,
                   PlatformOptions options)
    : registry_(registry),
      flows_(flows),
      transport_(transport),
      options_(std::move(options)),
      handler_(registry.domain_ptr(), options_.mapping) {}

Platform::~Platform() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
}

std::string Platform::submit_document(std::string_view document) {
  return store(handler_.accept_explicit(document));
}

std::string Platform::submit_selection(const ConfiguratorSelection& selection) {
  return store(handler_.configurator_to_request(selection));
}

std::string Platform::store(RequestEnvelope envelope) {
  std::shared_ptr<const RegistrySnapshot> snapshot = registry_.list_descriptions();
  PlanOutcome outcome = plan(envelope.formal, *snapshot, options_.planner);

  Entry entry;
  entry.lifecycle.envelope = std::move(envelope);
  entry.lifecycle.history.push_back(Phase::received);
  if (auto* comp = std::get_if<CompositionResult>(&outcome)) {
    entry.lifecycle.composition = std::move(*comp);
    advance_locked(entry, Phase::composed);
  } else {
    entry.lifecycle.unsatisfiable = std::get<Unsatisfiable>(std::move(outcome));
    advance_locked(entry, Phase::unsatisfiable);
  }
  std::string id = entry.lifecycle.envelope.request_id;
  std::lock_guard lock(mu_);
  requests_.emplace(id, std::move(entry));
  changed_.notify_all();
  return id;
}

Platform::Entry& Platform::entry_locked(const std::string& id) {
  auto it = requests_.find(id);
  if (it == requests_.end()) throw UnknownRequest(id);
  return it->second;
}

const Platform::Entry& Platform::entry_locked(const std::string& id) const {
  auto it = requests_.find(id);
  if (it == requests_.end()) throw UnknownRequest(id);
  return it->second;
}

void Platform::advance_locked(Entry& entry, Phase to) {
  RequestLifecycle& lc = entry.lifecycle;
  if (!transition_allowed(lc.phase, to)) {
    throw WrongPhase(lc.envelope.request_id, lc.phase);
  }
  lc.phase = to;
  lc.history.push_back(to);
  entry.events.push_back({{"type", "phase"}, {"phase", to_string(to)}});
}

void Platform::execute(const std::string& request_id) {
  std::unique_lock lock(mu_);
  Entry& entry = entry_locked(request_id);
  if (entry.lifecycle.phase != Phase::composed) {
    throw WrongPhase(request_id, entry.lifecycle.phase);
  }
  MetaFlow meta_flow =
      compile(*entry.lifecycle.composition, *registry_.list_descriptions(), flows_);
  std::vector<ObjectDecl> env = entry.lifecycle.composition->environment;
  advance_locked(entry, Phase::executing);
  changed_.notify_all();
  workers_.emplace_back(&Platform::run, this, request_id, std::move(meta_flow),
                        std::move(env));
}

void Platform::run(std::string request_id, MetaFlow meta_flow,
                   std::vector<ObjectDecl> env) {
  ExecutorOptions exec_options;
  exec_options.step_timeout = options_.step_timeout;
  exec_options.on_event = [&](const StepEvent& ev) {
    ordered_json event{{"type", "step"},
                       {"index", ev.index},
                       {"action", ev.action},
                       {"transition", ev.transition}};
    if (ev.result) event["result"] = to_json(*ev.result);
    {
      std::lock_guard lock(mu_);
      entry_locked(request_id).events.push_back(std::move(event));
      changed_.notify_all();
    }
    if (options_.on_event) options_.on_event(ev);
  };
  Executor executor(registry_, flows_, transport_, std::move(exec_options));
  ExecutionRecord record = executor.execute(meta_flow, std::move(env), request_id);

  std::lock_guard lock(mu_);
  Entry& entry = entry_locked(request_id);
  Phase next = record.status == ExecutionStatus::succeeded ? Phase::done : Phase::failed;
  entry.lifecycle.execution = std::move(record);
  advance_locked(entry, next);
  changed_.notify_all();
}

RequestLifecycle Platform::status(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  return entry_locked(request_id).lifecycle;
}

std::vector<std::string> Platform::request_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, entry] : requests_) ids.push_back(id);
  return ids;
}

RequestLifecycle Platform::wait(const std::string& request_id,
                                std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  changed_.wait_for(lock, timeout, [&] {
    return entry_locked(request_id).lifecycle.phase != Phase::executing;
  });
  return entry_locked(request_id).lifecycle;
}

std::vector<ordered_json> Platform::events(const std::string& request_id,
                                           std::size_t from,
                                           std::chrono::milliseconds timeout,
                                           bool* finished) const {
  std::unique_lock lock(mu_);
  auto terminal = [](Phase p) {
    return p == Phase::done || p == Phase::failed || p == Phase::unsatisfiable;
  };
  changed_.wait_for(lock, timeout, [&] {
    const Entry& e = entry_locked(request_id);
    return e.events.size() > from || terminal(e.lifecycle.phase);
  });
  const Entry& e = entry_locked(request_id);
  std::vector<ordered_json> out;
  for (std::size_t i = from; i < e.events.size(); ++i) out.push_back(e.events[i]);
  if (finished) *finished = terminal(e.lifecycle.phase);
  return out;
}

}  // namespace esp
