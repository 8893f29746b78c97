#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "esp/demo.hpp"
#include "esp/seed.hpp"
#include "httplib.h"

using namespace esp;
using namespace std::chrono_literals;

namespace {

ConfiguratorSelection selection(std::set<Feature> features) {
  ConfiguratorSelection s;
  s.row_id = "row-1";
  s.features = std::move(features);
  s.max_parking_time = 90;
  s.operator_id = "op-3";
  return s;
}

// Reachability in the transition graph.
bool reachable(Phase from, Phase to) {
  if (from == to) return true;
  for (Phase next : {Phase::received, Phase::composed, Phase::unsatisfiable,
                     Phase::executing, Phase::done, Phase::failed}) {
    if (transition_allowed(from, next) && reachable(next, to)) return true;
  }
  return false;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("transition graph") {
  CHECK(transition_allowed(Phase::received, Phase::composed));
  CHECK(transition_allowed(Phase::received, Phase::unsatisfiable));
  CHECK(transition_allowed(Phase::composed, Phase::executing));
  CHECK(transition_allowed(Phase::executing, Phase::done));
  CHECK(transition_allowed(Phase::executing, Phase::failed));
  CHECK_FALSE(transition_allowed(Phase::unsatisfiable, Phase::executing));
  CHECK_FALSE(transition_allowed(Phase::done, Phase::executing));
  CHECK_FALSE(transition_allowed(Phase::composed, Phase::done));
}

TEST_CASE("published request composes eagerly") {
  Scenario sc;
  std::string id = sc.platform->submit_document(seed::demo_request_document());
  RequestLifecycle lc = sc.platform->status(id);
  CHECK(lc.phase == Phase::composed);
  CHECK(lc.history == std::vector<Phase>{Phase::received, Phase::composed});
  REQUIRE(lc.composition.has_value());
  CHECK(lc.composition->steps.size() == 4);
  CHECK(lc.envelope.source == RequestSource::explicit_request);
  ordered_json j = to_json(lc);
  CHECK(j["goal"] == "(and (tirepressurecheck r1) (bookeparking p1 r1 m1) (navigation p1))");
  CHECK(j["composition"]["composition"].size() == 4);
  CHECK(j["unsatisfiable"].is_null());
  CHECK(j["execution"].is_null());
}

TEST_CASE("rejected input stores nothing") {
  Scenario sc;
  CHECK_THROWS_AS(sc.platform->submit_document(""), RequestParseError);
  CHECK_THROWS_AS(
      sc.platform->submit_document(R"j({"environment":[],"init":[],"goal":"(and)"})j"),
      RequestValidationError);
  CHECK_THROWS_AS(sc.platform->submit_selection(selection({Feature::charging})),
                  InvalidSelection);
  CHECK(sc.platform->request_ids().empty());
}

TEST_CASE("unsatisfiable requests cannot execute") {
  Scenario sc;
  REQUIRE(sc.registry.remove_description("book-carwash"));
  std::string id = sc.platform->submit_selection(
      selection({Feature::carwash, Feature::booking}));
  RequestLifecycle lc = sc.platform->status(id);
  CHECK(lc.phase == Phase::unsatisfiable);
  REQUIRE(lc.unsatisfiable.has_value());
  CHECK(to_json(lc)["unsatisfiable"]["unreachable"] == ordered_json::array({"(carwash r1)"}));
  try {
    sc.platform->execute(id);
    FAIL("expected WrongPhase");
  } catch (const WrongPhase& e) {
    CHECK(e.phase() == Phase::unsatisfiable);
  }
}

TEST_CASE("unknown request ids") {
  Scenario sc;
  CHECK_THROWS_AS(sc.platform->status("req-nope"), UnknownRequest);
  CHECK_THROWS_AS(sc.platform->execute("req-nope"), UnknownRequest);
  CHECK_THROWS_AS(sc.platform->events("req-nope", 0, 0ms), UnknownRequest);
}

TEST_CASE("execution runs to done and fills the environment") {
  Scenario sc;
  std::string id = sc.platform->submit_selection(
      selection({Feature::tirepressure, Feature::booking, Feature::navigation}));
  sc.platform->execute(id);
  CHECK_THROWS_AS(sc.platform->execute(id), WrongPhase);
  RequestLifecycle lc = sc.platform->wait(id, 10s);
  REQUIRE(lc.phase == Phase::done);
  CHECK(lc.history == std::vector<Phase>{Phase::received, Phase::composed,
                                         Phase::executing, Phase::done});
  REQUIRE(lc.execution.has_value());
  CHECK(lc.execution->status == ExecutionStatus::succeeded);
  const ObjectDecl* r1 = find_object(lc.execution->environment_final, "r1");
  REQUIRE(r1 != nullptr);
  CHECK(r1->value.rfind("RSV-", 0) == 0);
  auto lot = sc.lot.get_state();
  REQUIRE(lot.reservations.size() == 1);
  CHECK(lot.reservations[0].operator_id == "op-3");
  CHECK(lot.reservations[0].max_minutes == 90);

  bool finished = false;
  auto events = sc.platform->events(id, 0, 0ms, &finished);
  CHECK(finished);
  std::vector<std::string> kinds;
  for (const auto& e : events) {
    kinds.push_back(e["type"] == "phase" ? e["phase"].get<std::string>()
                                         : e["transition"].get<std::string>());
  }
  CHECK(kinds == std::vector<std::string>{"composed", "executing", "started", "succeeded",
                                          "started", "succeeded", "started", "succeeded",
                                          "started", "succeeded", "done"});
}

TEST_CASE("missing flow surfaces at execute and leaves the request composed") {
  Scenario sc;
  FlowStore empty;
  Platform p(sc.registry, empty, sc.transport);
  std::string id = p.submit_document(seed::demo_request_document());
  CHECK_THROWS_AS(p.execute(id), MissingFlow);
  CHECK(p.status(id).phase == Phase::composed);
}

TEST_CASE("property: lifecycles are monotone under concurrent polling") {
  Scenario sc;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    auto fs = i % 3 == 0 ? std::set<Feature>{Feature::carwash, Feature::booking}
                         : std::set<Feature>{Feature::booking, Feature::navigation};
    ids.push_back(sc.platform->submit_selection(selection(fs)));
  }
  std::atomic<bool> stop{false};
  std::vector<std::vector<Phase>> observed(ids.size());
  std::vector<std::thread> pollers;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    pollers.emplace_back([&, i] {
      while (!stop) {
        RequestLifecycle lc = sc.platform->status(ids[i]);
        if (observed[i].empty() || observed[i].back() != lc.phase) {
          observed[i].push_back(lc.phase);
        }
        for (std::size_t k = 1; k < lc.history.size(); ++k) {
          CHECK(transition_allowed(lc.history[k - 1], lc.history[k]));
        }
      }
    });
  }
  std::vector<std::thread> runners;
  for (const auto& id : ids) {
    runners.emplace_back([&, id] { sc.platform->execute(id); });
  }
  for (auto& t : runners) t.join();
  for (const auto& id : ids) sc.platform->wait(id, 10s);
  stop = true;
  for (auto& t : pollers) t.join();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    REQUIRE_FALSE(observed[i].empty());
    for (std::size_t k = 1; k < observed[i].size(); ++k) {
      CHECK(reachable(observed[i][k - 1], observed[i][k]));
    }
    Phase last = sc.platform->status(ids[i]).phase;
    CHECK((last == Phase::done || last == Phase::failed));
  }
  // Concurrent runs compete for the "any" spot but never double book.
  auto lot = sc.lot.get_state();
  std::set<std::string> spots;
  for (const auto& r : lot.reservations) CHECK(spots.insert(r.spot_id).second);
}

TEST_CASE("http surface") {
  Scenario sc;
  PlatformServer server(*sc.platform, ServerOptions{sc.simulator.base_url(), ""});
  int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);

  auto res = cli.Post("/requests", std::string(seed::demo_request_document()),
                      "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  json body = json::parse(res->body);
  CHECK(body["phase"] == "composed");
  const std::string doc_id = body["request_id"];

  res = cli.Post("/requests",
                 R"j({"row_id":"r","features":["booking","navigation"],
                      "max_parking_time":45,"operator":"web"})j",
                 "application/vnd.esp.selection+json");
  CHECK(res->status == 201);
  body = json::parse(res->body);
  CHECK(body["source"] == "configurator");
  CHECK(body["goal"] == "(and (bookeparking p1 r1 m1) (navigation p1))");

  res = cli.Post("/requests", "{", "application/json");
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "ParseError");
  res = cli.Post("/requests", R"j({"environment":[],"init":[],"goal":"(navigation p9)"})j",
                 "application/json");
  CHECK(res->status == 422);
  body = json::parse(res->body);
  CHECK(body["error"] == "ValidationError");
  CHECK(body["details"][0]["kind"] == "UnknownObject");
  res = cli.Post("/requests", R"j({"features":["charging"],"max_parking_time":5,"operator":"o"})j",
                 "application/vnd.esp.selection+json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["error"] == "InvalidSelection");

  res = cli.Get("/requests");
  CHECK(json::parse(res->body)["requests"].size() == 2);
  CHECK(cli.Get("/requests/req-nope")->status == 404);
  CHECK(cli.Post("/requests/req-nope/execute")->status == 404);

  res = cli.Post("/requests/" + doc_id + "/execute");
  CHECK(res->status == 202);
  CHECK(cli.Post("/requests/" + doc_id + "/execute")->status == 409);

  std::string stream;
  res = cli.Get("/requests/" + doc_id + "/events",
                [&](const char* data, std::size_t n) {
                  stream.append(data, n);
                  return true;
                });
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").rfind("text/event-stream", 0) == 0);
  CHECK(stream.find("event: phase\ndata: {\"type\":\"phase\",\"phase\":\"composed\"}") == 0);
  CHECK(stream.find("\"transition\":\"succeeded\"") != std::string::npos);
  CHECK(stream.find("\"phase\":\"done\"") != std::string::npos);

  res = cli.Get("/requests/" + doc_id);
  body = json::parse(res->body);
  CHECK(body["phase"] == "done");
  CHECK(body["execution"]["steps"].size() == 4);
  CHECK(body["execution"]["steps"][3]["response"]["directions"].size() > 0);

  res = cli.Get("/lot");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["reservations"].size() == 1);

  res = cli.Get("/registry/descriptions");
  body = json::parse(res->body);
  CHECK(body["descriptions"].size() == 6);
  CHECK(cli.Delete("/registry/descriptions/book-carwash")->status == 200);
  CHECK(cli.Delete("/registry/descriptions/book-carwash")->status == 404);
  CHECK(cli.Get("/registry/descriptions/book-carwash/instances")->status == 404);
  const ServiceDescription* carwash = nullptr;
  auto manifest = seed::services();
  for (const auto& d : manifest.descriptions) {
    if (d.name == "book-carwash") carwash = &d;
  }
  REQUIRE(carwash != nullptr);
  std::string desc_body = description_to_json(*carwash).dump();
  CHECK(cli.Put("/registry/descriptions", desc_body, "application/json")->status == 201);
  CHECK(cli.Put("/registry/descriptions", desc_body, "application/json")->status == 409);
  CHECK(cli.Put("/registry/descriptions", "{}", "application/json")->status == 400);
  res = cli.Put("/registry/instances",
                json({{"description", "book-carwash"},
                      {"base_url", sc.simulator.base_url()}}).dump(),
                "application/json");
  CHECK(res->status == 201);
  res = cli.Get("/registry/descriptions/book-carwash/instances");
  CHECK(json::parse(res->body)["instances"].size() == 1);
  res = cli.Put("/registry/instances",
                R"j({"description":"ghost","base_url":"http://x"})j", "application/json");
  CHECK(res->status == 404);

  res = cli.Get("/flows");
  CHECK(json::parse(res->body)["flows"].size() == 6);
  ordered_json extra = flow_to_json(seed::flows()[5]);
  extra["flow_id"] = "carwash-v2";
  CHECK(cli.Put("/flows", extra.dump(), "application/json")->status == 201);
  CHECK(cli.Put("/flows", extra.dump(), "application/json")->status == 422);
  extra["flow_id"] = "ghost-flow";
  extra["action_reference"] = "ghost";
  res = cli.Put("/flows", extra.dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["error"] == "UnknownActionReference");

  server.stop();
}

TEST_CASE("shipped data files match the embedded seed") {
  const std::string dir = ESP_DATA_DIR;
  CHECK(json::parse(read_file(dir + "/domain.json")) == json::parse(seed::domain_document()));
  CHECK(json::parse(read_file(dir + "/services.json")) ==
        json::parse(seed::services_document()));
  CHECK(json::parse(read_file(dir + "/flows.json")) == json::parse(seed::flows_document()));
  CHECK(json::parse(read_file(dir + "/demo_request.json")) ==
        json::parse(seed::demo_request_document()));
  CHECK(json::parse(read_file(dir + "/demo_composition.json")) ==
        json::parse(seed::demo_composition_document()));
}
