#pragma once

// In-process wiring of the seed scenario: registry, flows, parking simulator
// and platform, plus the scripted demo run.

#include <chrono>
#include <cstdint>
#include <memory>
#include <ostream>

#include "esp/engine.hpp"
#include "esp/parking.hpp"
#include "esp/platform.hpp"
#include "esp/registry.hpp"

namespace esp {

struct ScenarioOptions {
  std::uint64_t lot_seed = 0;
  std::chrono::milliseconds step_timeout{5000};
  std::function<void(const StepEvent&)> on_event;
};

/// Seed domain, six descriptions with one instance each on a local simulator
/// bound to an ephemeral port, and the seed flows.
class Scenario {
 public:
  explicit Scenario(ScenarioOptions options = {});
  ~Scenario();

  std::shared_ptr<const DomainModel> domain;
  Registry registry;
  FlowStore flows;
  parking::ParkingLot lot;
  parking::ParkingServer simulator;
  HttpClientTransport transport;
  std::unique_ptr<Platform> platform;
};

struct DemoReport {
  std::string request_id;
  FormalRequest request;
  CompositionResult composition;
  CompositionResult published;
  bool same_steps = false;        // step multiset equals the published one
  PlanCheck published_check;      // published order replayed
  std::chrono::microseconds compose_time{};
  RequestLifecycle lifecycle;     // after execution
  parking::LotState lot_after;
};

/// Submits the demo request, composes, executes against the scenario's
/// simulator and optionally prints both listings and a run summary.
DemoReport run_demo(Scenario& scenario, std::ostream* out = nullptr);

}  // namespace esp
