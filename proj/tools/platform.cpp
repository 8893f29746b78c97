// platform: run the service platform, the parking simulator, the scripted
// demo, or a one-shot composition.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "esp/composer.hpp"
#include "esp/demo.hpp"
#include "esp/engine.hpp"
#include "esp/parking.hpp"
#include "esp/platform.hpp"
#include "esp/registry.hpp"
#include "esp/seed.hpp"

namespace {

using esp::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path + " is not valid JSON");
  return j;
}

bool is_url(const std::string& s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

esp::RegistrySnapshot fetch_snapshot(const std::string& endpoint) {
  esp::HttpClientTransport transport;
  esp::HttpResult r = transport.send(endpoint, {"GET", "/registry/descriptions", ""},
                                     std::chrono::seconds(5));
  if (r.failure != esp::TransportFailure::none || r.status != 200) {
    throw std::runtime_error("cannot read registry at " + endpoint + ": " +
                             (r.error.empty() ? std::to_string(r.status) : r.error));
  }
  return esp::snapshot_from_json(json::parse(r.body));
}

int cmd_serve(const std::string& domain_path, const std::string& services_path,
              const std::string& flows_path, const std::string& host, int port,
              const std::string& journal, std::string simulator_url,
              const std::string& ui_dir, int step_timeout_ms) {
  auto domain = std::make_shared<const esp::DomainModel>(
      esp::DomainModel::from_json(read_json(domain_path)));
  std::optional<std::filesystem::path> journal_path;
  if (!journal.empty()) journal_path = journal;
  esp::Registry registry(domain, journal_path);

  std::unique_ptr<esp::parking::ParkingLot> lot;
  std::unique_ptr<esp::parking::ParkingServer> simulator;
  if (simulator_url.empty()) {
    lot = std::make_unique<esp::parking::ParkingLot>();
    simulator = std::make_unique<esp::parking::ParkingServer>(*lot);
    simulator->start("127.0.0.1", 0);
    simulator_url = simulator->base_url();
    std::cerr << "embedded simulator at " << simulator_url << "\n";
  }

  esp::ServiceManifest manifest =
      esp::service_manifest_from_json(read_json(services_path));
  auto existing = registry.list_descriptions();
  for (auto& d : manifest.descriptions) {
    if (existing->find(d.name) == nullptr) registry.register_description(std::move(d));
  }
  for (auto& i : manifest.instances) registry.register_instance(std::move(i));
  auto seeded = registry.list_descriptions();
  for (const auto& d : seeded->descriptions) {
    if (registry.resolve_instances(d.name).empty()) {
      esp::ServiceInstance inst;
      inst.description_name = d.name;
      inst.base_url = simulator_url;
      registry.register_instance(std::move(inst));
    }
  }

  esp::FlowStore flows;
  auto snapshot = registry.list_descriptions();
  for (auto& f : esp::flow_manifest_from_json(read_json(flows_path))) {
    flows.register_flow(std::move(f), *snapshot);
  }

  esp::HttpClientTransport transport;
  esp::PlatformOptions options;
  options.step_timeout = std::chrono::milliseconds(step_timeout_ms);
  esp::Platform platform(registry, flows, transport, options);
  esp::PlatformServer server(platform, {simulator_url, ui_dir});
  std::cerr << "platform listening on http://" << host << ":" << port << "\n";
  return server.listen(host, port) ? 0 : 1;
}

int cmd_simulator(const std::string& host, int port, std::uint64_t seed) {
  esp::parking::ParkingLot lot(seed);
  esp::parking::ParkingServer server(lot);
  std::cerr << "parking simulator on http://" << host << ":" << port << "\n";
  return server.listen(host, port) ? 0 : 1;
}

int cmd_demo(std::uint64_t seed) {
  esp::ScenarioOptions options;
  options.lot_seed = seed;
  esp::Scenario scenario(options);
  esp::DemoReport report = esp::run_demo(scenario, &std::cout);
  bool ok = report.same_steps && report.published_check.valid &&
            report.lifecycle.phase == esp::Phase::done;
  return ok ? 0 : 1;
}

int cmd_plan(const std::string& request_path, const std::string& registry_arg,
             const std::string& domain_path) {
  auto domain = std::make_shared<const esp::DomainModel>(
      domain_path.empty() ? esp::seed::domain()
                          : esp::DomainModel::from_json(read_json(domain_path)));
  esp::RegistrySnapshot snapshot;
  if (is_url(registry_arg)) {
    snapshot = fetch_snapshot(registry_arg);
  } else {
    esp::Registry registry(domain);
    registry.load_manifest(esp::service_manifest_from_json(read_json(registry_arg)));
    snapshot = *registry.list_descriptions();
  }

  esp::FormalRequest request = esp::request_from_json(read_json(request_path));
  if (auto report = esp::validate_request(request, *domain); !report.empty()) {
    for (const auto& v : report) {
      std::cerr << esp::to_string(v.kind) << " at " << v.location << ": " << v.detail
                << "\n";
    }
    return 2;
  }
  esp::PlanOutcome outcome = esp::plan(request, snapshot);
  if (auto* comp = std::get_if<esp::CompositionResult>(&outcome)) {
    std::cout << esp::format_listing(esp::composition_to_json(*comp)) << "\n";
    return 0;
  }
  std::cerr << "unsatisfiable; unreachable conjuncts:";
  for (const auto& lit : std::get<esp::Unsatisfiable>(outcome).unreachable) {
    std::cerr << " " << esp::render_literal(lit);
  }
  std::cerr << "\n";
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emergent software service platform"};
  app.require_subcommand(1);

  std::string domain_path, services_path, flows_path, journal, simulator_url, ui_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  int step_timeout_ms = 5000;
  auto* serve = app.add_subcommand("serve", "Run the platform HTTP API");
  serve->add_option("--domain", domain_path, "Domain manifest")->required();
  serve->add_option("--services", services_path, "Service manifest")->required();
  serve->add_option("--flows", flows_path, "Flow manifest")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--journal", journal, "Registry journal file");
  serve->add_option("--simulator", simulator_url,
                    "Parking simulator base URL (default: embedded)");
  serve->add_option("--ui-dir", ui_dir, "Static UI directory served under /ui");
  serve->add_option("--step-timeout-ms", step_timeout_ms, "Per-step timeout");

  std::uint64_t seed = 0;
  int sim_port = 8090;
  auto* sim = app.add_subcommand("simulator", "Run the parking lot simulator");
  sim->add_option("--host", host, "Bind address");
  sim->add_option("--port", sim_port, "Port");
  sim->add_option("--seed", seed, "Lot seed");

  auto* demo = app.add_subcommand("demo", "Run the parking scenario end to end");
  demo->add_option("--seed", seed, "Lot seed");

  std::string request_path, registry_arg;
  auto* plan = app.add_subcommand("plan", "Compose a request and print the result");
  plan->add_option("--request", request_path, "Request document")->required();
  plan->add_option("--registry", registry_arg, "Platform URL or service manifest")
      ->required();
  plan->add_option("--domain", domain_path, "Domain manifest (default: seed domain)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      return cmd_serve(domain_path, services_path, flows_path, host, port, journal,
                       simulator_url, ui_dir, step_timeout_ms);
    }
    if (*sim) return cmd_simulator(host, sim_port, seed);
    if (*demo) return cmd_demo(seed);
    if (*plan) return cmd_plan(request_path, registry_arg, domain_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
