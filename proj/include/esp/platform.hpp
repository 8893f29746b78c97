#pragma once

// Platform facade: request intake, eager composition, asynchronous execution
// and the HTTP surface consumed by the UI.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "esp/composer.hpp"
#include "esp/engine.hpp"
#include "esp/registry.hpp"
#include "esp/requirements.hpp"

namespace esp {

enum class Phase { received, composed, unsatisfiable, executing, done, failed };

std::string_view to_string(Phase p);

/// received -> composed | unsatisfiable; composed -> executing;
/// executing -> done | failed.
bool transition_allowed(Phase from, Phase to);

struct RequestLifecycle {
  RequestEnvelope envelope;
  std::optional<CompositionResult> composition;
  std::optional<Unsatisfiable> unsatisfiable;
  std::optional<ExecutionRecord> execution;
  Phase phase = Phase::received;
  std::vector<Phase> history;
};

ordered_json to_json(const RequestLifecycle& lifecycle);

class WrongPhase : public std::runtime_error {
 public:
  WrongPhase(const std::string& request_id, Phase phase)
      : std::runtime_error("request '" + request_id + "' is " +
                           std::string(to_string(phase))),
        phase_(phase) {}
  Phase phase() const { return phase_; }

 private:
  Phase phase_;
};

class UnknownRequest : public std::runtime_error {
 public:
  explicit UnknownRequest(const std::string& id)
      : std::runtime_error("unknown request '" + id + "'") {}
};

struct PlatformOptions {
  PlannerOptions planner;
  std::chrono::milliseconds step_timeout{5000};
  FeatureMapping mapping = FeatureMapping::defaults();
  std::function<void(const StepEvent&)> on_event;  // runs on executor threads
};

class Platform {
 public:
  Platform(Registry& registry, FlowStore& flows, HttpTransport& transport,
           PlatformOptions options = {});
  ~Platform();

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Formalizes and composes against the current registry snapshot. Invalid
  /// input throws and stores nothing.
  std::string submit_document(std::string_view document);
  std::string submit_selection(const ConfiguratorSelection& selection);

  /// Compiles synchronously (MissingFlow surfaces here) and runs the
  /// meta-flow on a background thread.
  void execute(const std::string& request_id);

  RequestLifecycle status(const std::string& request_id) const;
  std::vector<std::string> request_ids() const;

  /// Blocks until the request leaves `executing` or the timeout elapses.
  RequestLifecycle wait(const std::string& request_id,
                        std::chrono::milliseconds timeout) const;

  /// Step events from index `from` on; blocks up to `timeout` when none are
  /// pending. `finished` is set once no further events can arrive.
  std::vector<ordered_json> events(const std::string& request_id, std::size_t from,
                                   std::chrono::milliseconds timeout,
                                   bool* finished = nullptr) const;

  Registry& registry() { return registry_; }
  FlowStore& flows() { return flows_; }

 private:
  struct Entry {
    RequestLifecycle lifecycle;
    std::vector<ordered_json> events;
  };

  std::string store(RequestEnvelope envelope);
  Entry& entry_locked(const std::string& id);
  const Entry& entry_locked(const std::string& id) const;
  void advance_locked(Entry& entry, Phase to);
  void run(std::string request_id, MetaFlow meta_flow, std::vector<ObjectDecl> env);

  Registry& registry_;
  FlowStore& flows_;
  HttpTransport& transport_;
  PlatformOptions options_;
  RequirementsHandler handler_;

  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::map<std::string, Entry> requests_;
  std::vector<std::thread> workers_;
};

struct ServerOptions {
  std::string simulator_url;  // proxied under GET /lot; empty disables it
  std::string ui_dir;         // served under /ui when set
};

/// HTTP surface over a Platform.
class PlatformServer {
 public:
  PlatformServer(Platform& platform, ServerOptions options = {});
  ~PlatformServer();

  PlatformServer(const PlatformServer&) = delete;
  PlatformServer& operator=(const PlatformServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocking.
  bool listen(const std::string& host, int port);
  void stop();

  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

}  // namespace esp
