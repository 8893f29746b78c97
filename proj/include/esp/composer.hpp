#pragma once

// Service composition as forward state-space planning over ground service
// actions. Breadth-first, so returned compositions have minimal length.

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "esp/domain.hpp"
#include "esp/registry.hpp"

namespace esp {

struct GroundAction {
  std::string description_name;
  std::vector<std::string> binding;  // one object per description param
  std::vector<Literal> pre;          // sorted, unique
  std::vector<Literal> add;
  std::vector<Literal> del;
};

struct PlanningState {
  std::set<Literal> facts;

  bool operator==(const PlanningState&) const = default;
};

struct CompositionStep {
  std::string name;
  std::vector<std::string> params;

  bool operator==(const CompositionStep&) const = default;
  auto operator<=>(const CompositionStep&) const = default;
};

struct CompositionResult {
  std::vector<CompositionStep> steps;
  std::vector<ObjectDecl> environment;

  bool operator==(const CompositionResult&) const = default;
};

/// Goal conjuncts that no reachable state contains. When each conjunct is
/// reachable on its own but never jointly, all conjuncts are listed.
struct Unsatisfiable {
  std::vector<Literal> unreachable;
};

using PlanOutcome = std::variant<CompositionResult, Unsatisfiable>;

struct PlannerOptions {
  std::size_t node_budget = 1'000'000;
};

class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(std::size_t budget)
      : std::runtime_error("search frontier exceeded node budget of " +
                           std::to_string(budget) + " states"),
        budget_(budget) {}
  std::size_t budget() const { return budget_; }

 private:
  std::size_t budget_;
};

class NotApplicable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownDescription : public std::runtime_error {
 public:
  explicit UnknownDescription(const std::string& name)
      : std::runtime_error("unknown description '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Substitutes `binding` into the description's literal templates.
GroundAction instantiate(const ServiceDescription& desc,
                         std::span<const std::string> binding);

/// Every type-respecting assignment of environment objects to each
/// description's parameters. Ordered by description registration order, then
/// lexicographically by binding tuple.
std::vector<GroundAction> ground(const RegistrySnapshot& snapshot,
                                 std::span<const ObjectDecl> env);

bool applicable(const PlanningState& s, const GroundAction& a);

/// (s \ del) ∪ add. Throws NotApplicable when a precondition is unmet.
PlanningState apply(const PlanningState& s, const GroundAction& a);

/// Minimal-length composition. Among minimal plans, returns the one whose
/// sequence of ground() indices is lexicographically smallest.
PlanOutcome plan(const FormalRequest& request, const RegistrySnapshot& snapshot,
                 const PlannerOptions& options = {});

struct PlanCheck {
  bool valid = false;
  std::vector<PlanningState> trace;  // trace[0] = init, trace[i+1] after step i
  std::optional<std::size_t> failed_step;  // 0-based; nullopt if goal failed
  std::string reason;
};

/// Replays a composition from the request's init state. Throws
/// UnknownDescription when a step names an unregistered description.
PlanCheck validate_plan(const CompositionResult& composition,
                        const FormalRequest& request,
                        const RegistrySnapshot& snapshot);

/// {"composition": [{"name","params"}...], "environment": [...]}.
ordered_json composition_to_json(const CompositionResult& composition);
CompositionResult composition_from_json(const json& document);

}  // namespace esp
