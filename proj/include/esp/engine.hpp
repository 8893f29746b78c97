#pragma once

// Execution engine: declarative flows tagged with action references, meta-flow
// compilation from a composition, and sequential execution against service
// instances over HTTP.

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "esp/composer.hpp"
#include "esp/domain.hpp"
#include "esp/registry.hpp"

namespace esp {

// ---------------------------------------------------------------------------
// Flows

/// Template slots are `{input}` or `{input|default}`; the default applies
/// when the bound object's value is still empty.
struct HttpCallNode {
  std::string method = "GET";
  std::string path;
  std::optional<json> body;  // string leaves are templates
  std::vector<int> expected_status{200, 201};
};

/// Copies fields of the most recent HTTP response into environment objects.
/// A target is a flow input name, or "@type" for the first environment object
/// of that type whose value is still empty (skipped if there is none).
struct BindOutputNode {
  std::vector<std::pair<std::string, std::string>> fields;  // field -> target
};

/// Binds literal values to the objects behind flow inputs.
struct ConstantNode {
  std::vector<std::pair<std::string, std::string>> values;  // input -> value
};

/// Runs another registered flow with the same input binding.
struct ServiceNodeRef {
  std::string flow_id;
};

enum class NodeKind { http_call, bind_output, constant, service_node };

std::string_view to_string(NodeKind kind);

struct FlowNode {
  std::string node_id;
  std::variant<HttpCallNode, BindOutputNode, ConstantNode, ServiceNodeRef> config;

  NodeKind kind() const { return static_cast<NodeKind>(config.index()); }
};

struct Flow {
  std::string flow_id;
  std::string action_reference;
  std::vector<std::string> inputs;
  std::vector<FlowNode> nodes;
  std::vector<std::pair<std::string, std::string>> wires;  // from -> to
};

class InvalidFlow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownActionReference : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFlow : public std::runtime_error {
 public:
  explicit MissingFlow(const std::string& action)
      : std::runtime_error("no flow tagged for action '" + action + "'"),
        action_(action) {}
  const std::string& action() const { return action_; }

 private:
  std::string action_;
};

/// Node indices in execution order. Throws InvalidFlow unless the wires form
/// a DAG with one source and one sink. Ties go to declaration order.
std::vector<std::size_t> topological_order(const Flow& flow);

/// Slot names referenced by a template string, in order of appearance.
std::vector<std::string> template_slots(std::string_view text);

Flow flow_from_json(const json& j);
ordered_json flow_to_json(const Flow& flow);
std::vector<Flow> flow_manifest_from_json(const json& j);
ordered_json flow_manifest_to_json(const std::vector<Flow>& flows);

/// Flows by id; several flows may share an action reference, the first
/// registered one is preferred.
class FlowStore {
 public:
  /// Checks flow invariants and that some description in `snapshot` carries
  /// the flow's action reference.
  std::string register_flow(Flow flow, const RegistrySnapshot& snapshot);

  std::optional<Flow> find(std::string_view flow_id) const;
  std::optional<Flow> preferred_for(std::string_view action_reference) const;
  std::vector<Flow> all() const;

 private:
  mutable std::mutex mu_;
  std::vector<Flow> flows_;
};

// ---------------------------------------------------------------------------
// Meta-flows

struct Stage {
  std::string description_name;
  Flow flow;
  std::vector<std::pair<std::string, std::string>> binding;  // input -> object
};

struct MetaFlow {
  CompositionResult composition;
  std::vector<Stage> stages;
};

/// One stage per composition step, in order. Throws MissingFlow or
/// UnknownDescription.
MetaFlow compile(const CompositionResult& composition,
                 const RegistrySnapshot& snapshot, const FlowStore& flows);

class UnknownObject : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictingBind : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sets an object's value. Rebinding the same value is a no-op.
[[nodiscard]] std::vector<ObjectDecl> bind(std::vector<ObjectDecl> env,
                                           std::string_view object_name,
                                           std::string_view value);

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string method;
  std::string path;
  std::string body;  // JSON or empty
};

enum class TransportFailure { none, connect, timeout };

struct HttpResult {
  TransportFailure failure = TransportFailure::none;
  int status = 0;
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult send(const std::string& base_url, const HttpRequest& request,
                          std::chrono::milliseconds timeout) = 0;
};

/// Blocking HTTP/1.1 client.
class HttpClientTransport : public HttpTransport {
 public:
  HttpResult send(const std::string& base_url, const HttpRequest& request,
                  std::chrono::milliseconds timeout) override;
};

// ---------------------------------------------------------------------------
// Execution

enum class ExecutionStatus { pending, running, succeeded, failed };
enum class FailureCause { http_status, timeout, bind_failure, substitution,
                          no_instance };

std::string_view to_string(ExecutionStatus s);
std::string_view to_string(FailureCause c);

struct StepFailure {
  FailureCause cause;
  std::string message;
};

struct StepResult {
  std::size_t index = 0;
  std::string action;
  std::string instance_id;
  Clock::time_point started{};
  Clock::time_point finished{};
  int http_status = 0;  // of the last HTTP call in the stage
  std::string response_excerpt;
  json response;  // parsed body of the last HTTP call, null if none/non-JSON
  std::vector<std::pair<std::string, std::string>> bindings;  // object -> value
  std::optional<StepFailure> failure;
};

struct ExecutionRecord {
  std::string request_id;
  ExecutionStatus status = ExecutionStatus::pending;
  std::vector<StepResult> steps;
  std::vector<ObjectDecl> environment_final;
};

ordered_json to_json(const StepResult& step);
ordered_json to_json(const ExecutionRecord& record);

struct StepEvent {
  std::string request_id;
  std::size_t index;
  std::string action;
  std::string transition;  // "started", "succeeded", "failed"
  const StepResult* result;  // null for "started"
};

struct ExecutorOptions {
  std::chrono::milliseconds step_timeout{5000};
  std::function<void(const StepEvent&)> on_event;
};

/// Runs stages strictly in order and stops at the first failure; nothing is
/// rolled back. Instance health in the registry is updated as calls succeed
/// or fail to connect.
class Executor {
 public:
  Executor(Registry& registry, const FlowStore& flows, HttpTransport& transport,
           ExecutorOptions options = {});

  ExecutionRecord execute(const MetaFlow& meta_flow,
                          std::vector<ObjectDecl> environment,
                          const std::string& request_id = {});

 private:
  Registry& registry_;
  const FlowStore& flows_;
  HttpTransport& transport_;
  ExecutorOptions options_;
};

}  // namespace esp
