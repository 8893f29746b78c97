#include "esp/demo.hpp"

#include <algorithm>

#include "esp/seed.hpp"

namespace esp {

Scenario::Scenario(ScenarioOptions options)
    : domain(std::make_shared<const DomainModel>(seed::domain())),
      registry(domain),
      lot(options.lot_seed),
      simulator(lot) {
  simulator.start("127.0.0.1", 0);
  registry.load_manifest(seed::services());
  for (auto& inst : seed::instances(simulator.base_url())) {
    registry.register_instance(std::move(inst));
  }
  auto snapshot = registry.list_descriptions();
  for (auto& flow : seed::flows()) flows.register_flow(std::move(flow), *snapshot);
  PlatformOptions popts;
  popts.step_timeout = options.step_timeout;
  popts.on_event = std::move(options.on_event);
  platform = std::make_unique<Platform>(registry, flows, transport, std::move(popts));
}

Scenario::~Scenario() {
  platform.reset();
  simulator.stop();
}

namespace {

std::vector<CompositionStep> sorted_steps(std::vector<CompositionStep> steps) {
  std::sort(steps.begin(), steps.end());
  return steps;
}

}  // namespace

DemoReport run_demo(Scenario& scenario, std::ostream* out) {
  DemoReport report;
  report.request = seed::demo_request();
  report.published = seed::demo_composition();

  const std::string document{seed::demo_request_document()};
  auto t0 = std::chrono::steady_clock::now();
  report.request_id = scenario.platform->submit_document(document);
  report.compose_time = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::steady_clock::now() - t0);

  RequestLifecycle lc = scenario.platform->status(report.request_id);
  if (out) {
    *out << "Formalized user request\n"
         << format_listing(request_to_json(lc.envelope.formal)) << "\n\n";
  }
  if (!lc.composition) {
    if (out) *out << "composition failed: request is unsatisfiable\n";
    report.lifecycle = std::move(lc);
    return report;
  }
  report.composition = *lc.composition;
  report.same_steps = sorted_steps(report.composition.steps) ==
                      sorted_steps(report.published.steps);
  report.published_check = validate_plan(report.published, report.request,
                                         *scenario.registry.list_descriptions());
  if (out) {
    *out << "Composition result\n"
         << format_listing(composition_to_json(report.composition)) << "\n\n"
         << "composed in " << report.compose_time.count() << " us; "
         << (report.same_steps ? "same steps as" : "DIFFERENT steps from")
         << " the published composition; published order "
         << (report.published_check.valid ? "valid" : "INVALID: " + report.published_check.reason)
         << "\n\n";
  }

  scenario.platform->execute(report.request_id);
  report.lifecycle =
      scenario.platform->wait(report.request_id, std::chrono::seconds(30));
  report.lot_after = scenario.lot.get_state();

  if (out && report.lifecycle.execution) {
    const ExecutionRecord& rec = *report.lifecycle.execution;
    *out << "Execution " << to_string(rec.status) << "\n";
    for (const auto& step : rec.steps) {
      *out << "  [" << step.index << "] " << step.action << " via "
           << step.instance_id << " -> " << step.http_status;
      for (const auto& [obj, value] : step.bindings) *out << "  " << obj << "=" << value;
      if (step.failure) {
        *out << "  FAILED (" << to_string(step.failure->cause) << "): "
             << step.failure->message;
      }
      if (step.response.is_object() && step.response.contains("directions")) {
        for (const auto& d : step.response["directions"]) {
          *out << "\n      " << d.get<std::string>();
        }
      }
      *out << "\n";
    }
    *out << "\nFinal environment\n"
         << format_listing(ordered_json{{"environment",
                                         environment_to_json(rec.environment_final)}})
         << "\n";
  }
  return report;
}

}  // namespace esp
