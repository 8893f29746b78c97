// Acceptance gate: one PASS/FAIL line per primary criterion.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "esp/demo.hpp"
#include "esp/seed.hpp"
#include "support.hpp"

using namespace esp;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  Outcome done(std::string detail) const {
    return {pass_, pass_ ? std::move(detail) : failures_};
  }

 private:
  bool pass_ = true;
  std::string failures_;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

Outcome listing_reproduction() {
  Check c;
  auto t0 = Clock::now();
  double in_process = 0;
  {
    Scenario sc;
    DemoReport r = run_demo(sc);
    in_process = seconds_since(t0);
    c.expect(r.same_steps, "step multiset differs from the published composition");
    c.expect(r.published_check.valid, "published order rejected: " + r.published_check.reason);
    c.expect(r.composition.environment == r.published.environment, "environment differs");
  }
  c.expect(in_process < 1.0, "in-process demo took " + fmt(in_process) + " s");

  auto t1 = Clock::now();
  int rc = std::system(ESP_PLATFORM_BIN " demo > /dev/null 2>&1");
  double cli = seconds_since(t1);
  c.expect(rc == 0, "`platform demo` exited with " + std::to_string(rc));
  c.expect(cli < 1.0, "`platform demo` took " + fmt(cli) + " s");
  return c.done("4 published steps, published order valid, in-process " + fmt(in_process) +
                " s, `platform demo` " + fmt(cli) + " s");
}

Outcome planner_vs_oracle() {
  Check c;
  std::mt19937 rng(8675309);
  int satisfiable = 0, unsatisfiable = 0;
  auto t0 = Clock::now();
  for (int i = 0; i < 200; ++i) {
    auto inst = esp::testing::random_instance(rng);
    auto snap = inst.registry->list_descriptions();
    esp::testing::Oracle oracle(*snap, inst.request);
    auto best = oracle.solve(6);
    PlanOutcome outcome = plan(inst.request, *snap);
    const auto* comp = std::get_if<CompositionResult>(&outcome);
    const std::string tag = "instance " + std::to_string(i);
    if (best) {
      ++satisfiable;
      if (comp == nullptr) {
        c.expect(false, tag + ": plan() unsatisfiable, oracle found length " +
                            std::to_string(best->size()));
        continue;
      }
      c.expect(comp->steps.size() == best->size(),
               tag + ": plan length " + std::to_string(comp->steps.size()) +
                   " vs oracle " + std::to_string(best->size()));
      c.expect(validate_plan(*comp, inst.request, *snap).valid, tag + ": plan invalid");
    } else {
      ++unsatisfiable;
      c.expect(comp == nullptr, tag + ": plan() found " +
                                    (comp ? std::to_string(comp->steps.size()) : "") +
                                    " steps, oracle found none up to 6");
    }
  }
  double secs = seconds_since(t0);
  c.expect(secs < 30.0, "took " + fmt(secs) + " s");
  return c.done(std::to_string(satisfiable) + " satisfiable with optimal length, " +
                std::to_string(unsatisfiable) + " unsatisfiable agreed, " + fmt(secs) + " s");
}

Outcome emergence() {
  Check c;
  Scenario sc;
  ConfiguratorSelection sel;
  sel.row_id = "row-1";
  sel.features = {Feature::carwash, Feature::booking};
  sel.max_parking_time = 60;
  sel.operator_id = "op-e";
  RequirementsHandler handler(sc.domain);
  const std::string document = request_to_json(handler.formalize(sel)).dump();

  ServiceDescription carwash;
  for (const auto& d : seed::services().descriptions) {
    if (d.name == "book-carwash") carwash = d;
  }
  sc.registry.remove_description("book-carwash");
  std::string first = sc.platform->submit_document(document);
  RequestLifecycle lc = sc.platform->status(first);
  c.expect(lc.phase == Phase::unsatisfiable, "expected unsatisfiable before registration");
  c.expect(lc.unsatisfiable && lc.unsatisfiable->unreachable ==
                                   std::vector<Literal>{{"carwash", {"r1"}}},
           "unreachable conjuncts should be exactly (carwash r1)");

  sc.registry.register_description(carwash);
  ServiceInstance inst;
  inst.description_name = "book-carwash";
  inst.base_url = sc.simulator.base_url();
  sc.registry.register_instance(inst);

  std::string second = sc.platform->submit_document(document);
  lc = sc.platform->status(second);
  c.expect(lc.phase == Phase::composed, "identical request did not compose after registration");
  if (lc.phase == Phase::composed) {
    sc.platform->execute(second);
    lc = sc.platform->wait(second, 10s);
    c.expect(lc.phase == Phase::done, "execution ended in " + std::string(to_string(lc.phase)));
    auto lot = sc.lot.get_state();
    bool washed = false;
    for (const auto& s : lot.spots) {
      washed |= s.booked_services.contains(parking::ServiceKind::carwash);
    }
    c.expect(washed, "no spot has carwash booked");
  }
  return c.done("Unsatisfiable{(carwash r1)} before, composed with " +
                std::to_string(lc.composition ? lc.composition->steps.size() : 0) +
                " steps and executed to done after runtime registration");
}

Outcome end_to_end() {
  Check c;
  Scenario sc;
  DemoReport r = run_demo(sc);
  c.expect(r.lifecycle.phase == Phase::done, "phase " + std::string(to_string(r.lifecycle.phase)));
  c.expect(r.lot_after.reservations.size() == 1,
           std::to_string(r.lot_after.reservations.size()) + " reservations");
  std::string r1, spot;
  std::size_t directions = 0;
  if (r.lifecycle.execution) {
    const auto& rec = *r.lifecycle.execution;
    if (const auto* o = find_object(rec.environment_final, "r1")) r1 = o->value;
    if (const auto* o = find_object(rec.environment_final, "p1")) spot = o->value;
    for (const auto& s : rec.steps) {
      if (s.action == "get_parking-navigation-parkingid" && s.response.contains("directions")) {
        directions = s.response["directions"].size();
      }
    }
  }
  c.expect(r1.rfind("RSV-", 0) == 0, "r1 = '" + r1 + "'");
  bool tire = false;
  for (const auto& s : r.lot_after.spots) {
    if (s.spot_id == spot) tire = s.booked_services.contains(parking::ServiceKind::tirepressure);
  }
  c.expect(tire, "tirepressure not booked on spot '" + spot + "'");
  c.expect(directions > 0, "empty navigation directions");
  return c.done("1 reservation, r1=" + r1 + ", tirepressure booked on " + spot + ", " +
                std::to_string(directions) + " direction step(s)");
}

Outcome no_double_booking() {
  Check c;
  parking::ParkingLot lot;
  int violations = 0;
  for (int round = 0; round < 20; ++round) {
    lot.reset(round);
    std::atomic<int> ok{0}, taken{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 200; ++t) {
      threads.emplace_back([&, t] {
        try {
          lot.book_spot("B2", "op-" + std::to_string(t), 30);
          ++ok;
        } catch (const parking::ParkingError& e) {
          if (e.kind() == parking::ParkingErrorKind::spot_taken) ++taken;
        }
      });
    }
    for (auto& th : threads) th.join();
    if (ok != 1 || taken != 199 || lot.get_state().reservations.size() != 1) ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " of 20 rounds violated");
  return c.done("20 rounds x 200 threads: 1 success and 199 SpotTaken each");
}

std::vector<std::string> key_paths(const ordered_json& j, const std::string& prefix = "") {
  std::vector<std::string> out;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      out.push_back(prefix + "/" + k);
      for (auto& p : key_paths(v, prefix + "/" + k)) out.push_back(std::move(p));
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      for (auto& p : key_paths(j[i], prefix + "/" + std::to_string(i))) {
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

Outcome round_trip() {
  Check c;
  std::mt19937 rng(1000);
  const DomainModel& domain = *esp::testing::seed_domain();
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    auto gc = esp::testing::random_goal(rng);
    std::string text = i % 2 == 0 ? render_goal(gc.goal) : esp::testing::noisy_render(gc.goal, rng);
    try {
      GoalFormula back = parse_goal(text, gc.environment, domain);
      if (!(back == gc.goal) || render_goal(back) != render_goal(gc.goal)) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  c.expect(failures == 0, std::to_string(failures) + " of 1000 goals failed to round-trip");

  ordered_json request_listing = ordered_json::parse(seed::demo_request_document());
  ordered_json request_wire = request_to_json(seed::demo_request());
  c.expect(key_paths(request_wire) == key_paths(request_listing),
           "request keys differ from the listing");
  c.expect(request_wire == request_listing, "request values differ from the listing");
  ordered_json comp_listing = ordered_json::parse(seed::demo_composition_document());
  ordered_json comp_wire = composition_to_json(seed::demo_composition());
  c.expect(key_paths(comp_wire) == key_paths(comp_listing),
           "composition keys differ from the listing");
  c.expect(comp_wire == comp_listing, "composition values differ from the listing");
  return c.done("1000 fuzzed goals round-trip; request and composition match the listings key-for-key (" +
                std::to_string(key_paths(request_wire).size() + key_paths(comp_wire).size()) +
                " key paths)");
}

Outcome failure_semantics() {
  Check c;
  Scenario* self = nullptr;
  ScenarioOptions opts;
  opts.step_timeout = 1000ms;
  opts.on_event = [&](const StepEvent& ev) {
    if (ev.index == 0 && ev.transition == "succeeded") self->simulator.stop();
  };
  Scenario sc(opts);
  self = &sc;
  std::string id = sc.platform->submit_document(seed::demo_request_document());
  sc.platform->execute(id);
  RequestLifecycle lc = sc.platform->wait(id, 10s);
  c.expect(lc.phase == Phase::failed, "phase " + std::string(to_string(lc.phase)));
  std::size_t failed = 0, steps = 0;
  std::string cause, failed_action;
  if (lc.execution) {
    steps = lc.execution->steps.size();
    for (const auto& s : lc.execution->steps) {
      if (s.failure) {
        ++failed;
        cause = to_string(s.failure->cause);
        failed_action = s.action;
      }
    }
    c.expect(lc.execution->status == ExecutionStatus::failed, "record status not failed");
  }
  c.expect(failed == 1, std::to_string(failed) + " failed steps");
  c.expect(steps == 2, std::to_string(steps) + " steps ran, expected 2");
  bool unreachable = false;
  if (!failed_action.empty()) {
    for (const auto& inst : sc.registry.resolve_instances(failed_action)) {
      unreachable |= inst.health == Health::unreachable;
    }
  }
  c.expect(unreachable, "instance of '" + failed_action + "' not marked unreachable");
  auto lot = sc.lot.get_state();
  c.expect(lot.reservations.empty(), "lot changed after the simulator was stopped");
  return c.done("failed at step 1 (" + failed_action + ", cause " + cause +
                "), no later steps, instance unreachable, nothing rolled back");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"listing reproduction", listing_reproduction},
      {"planner vs oracle", planner_vs_oracle},
      {"emergence", emergence},
      {"end-to-end state change", end_to_end},
      {"no double booking", no_double_booking},
      {"round-trip and wire fidelity", round_trip},
      {"failure semantics", failure_semantics},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
