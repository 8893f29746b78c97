#pragma once

// Domain vocabulary: object types, predicate schemas, literals, goal formulas
// and the formal request that feeds the composer.

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace esp {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// True for tokens of the form `[a-z][a-z0-9_-]*`.
bool is_identifier(std::string_view s);

struct PredicateSchema {
  std::string name;
  std::vector<std::string> param_types;

  bool operator==(const PredicateSchema&) const = default;
};

struct ObjectDecl {
  std::string name;
  std::string type;
  std::string value;  // opaque; empty until bound

  bool operator==(const ObjectDecl&) const = default;
};

/// A predicate applied to object names (ground) or parameter variables.
struct Literal {
  std::string predicate;
  std::vector<std::string> args;

  auto operator<=>(const Literal&) const = default;
  bool operator==(const Literal&) const = default;
};

struct GoalFormula {
  std::vector<Literal> conjuncts;

  bool operator==(const GoalFormula&) const = default;
};

class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed vocabulary: every predicate parameter references a declared type.
class DomainModel {
 public:
  DomainModel(std::vector<std::string> types,
              std::vector<PredicateSchema> predicates);

  bool has_type(std::string_view name) const;
  const PredicateSchema* find_predicate(std::string_view name) const;

  const std::vector<std::string>& types() const { return types_; }
  const std::vector<PredicateSchema>& predicates() const {
    return predicates_;
  }

  static DomainModel from_json(const json& manifest);
  ordered_json to_json() const;

 private:
  std::vector<std::string> types_;
  std::vector<PredicateSchema> predicates_;
};

struct FormalRequest {
  std::vector<ObjectDecl> environment;
  std::vector<Literal> init;
  GoalFormula goal;

  bool operator==(const FormalRequest&) const = default;
};

const ObjectDecl* find_object(std::span<const ObjectDecl> env,
                              std::string_view name);

// ---------------------------------------------------------------------------
// Goal language

enum class GoalErrorKind {
  syntax,
  unknown_predicate,
  unknown_object,
  arity_mismatch,
  type_mismatch,
};

std::string_view to_string(GoalErrorKind kind);

/// Raised by the goal parser. `position` is a byte offset into the source.
class GoalError : public std::runtime_error {
 public:
  GoalError(GoalErrorKind kind, std::string token, std::size_t position,
            const std::string& message);

  GoalErrorKind kind() const { return kind_; }
  const std::string& token() const { return token_; }
  std::size_t position() const { return position_; }

 private:
  GoalErrorKind kind_;
  std::string token_;
  std::size_t position_;
};

/// Reads `(and atom+)`, `(and)` or a single atom without typechecking.
/// `(and)` yields an empty list; callers decide whether that is legal.
std::vector<Literal> read_goal_atoms(std::string_view text);

/// Reads exactly one atom, e.g. "(parkingavailable p1)".
Literal read_atom(std::string_view text);

/// Parses and typechecks a goal against the environment and domain.
GoalFormula parse_goal(std::string_view text, std::span<const ObjectDecl> env,
                       const DomainModel& domain);

std::string render_literal(const Literal& literal);
std::string render_goal(const GoalFormula& goal);

// ---------------------------------------------------------------------------
// Typechecking shared by requests and service descriptions

struct TypeIssue {
  GoalErrorKind kind;
  std::string token;
  std::string detail;
};

/// Checks arity and per-position type equality. `type_of` maps an argument
/// (object or variable name) to its declared type, or nullopt if unknown.
template <typename TypeOf>
std::optional<TypeIssue> typecheck_literal(const Literal& literal,
                                           const DomainModel& domain,
                                           TypeOf&& type_of) {
  const PredicateSchema* schema = domain.find_predicate(literal.predicate);
  if (schema == nullptr) {
    return TypeIssue{GoalErrorKind::unknown_predicate, literal.predicate,
                     "unknown predicate '" + literal.predicate + "'"};
  }
  if (schema->param_types.size() != literal.args.size()) {
    return TypeIssue{GoalErrorKind::arity_mismatch, literal.predicate,
                     "'" + literal.predicate + "' expects " +
                         std::to_string(schema->param_types.size()) +
                         " arguments, got " +
                         std::to_string(literal.args.size())};
  }
  for (std::size_t i = 0; i < literal.args.size(); ++i) {
    std::optional<std::string> type = type_of(literal.args[i]);
    if (!type) {
      return TypeIssue{GoalErrorKind::unknown_object, literal.args[i],
                       "unknown object '" + literal.args[i] + "'"};
    }
    if (*type != schema->param_types[i]) {
      return TypeIssue{GoalErrorKind::type_mismatch, literal.args[i],
                       "argument " + std::to_string(i + 1) + " of '" +
                           literal.predicate + "' must be " +
                           schema->param_types[i] + ", '" + literal.args[i] +
                           "' is " + *type};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Request validation

enum class ViolationKind {
  syntax,
  invalid_name,
  duplicate_object,
  unknown_type,
  empty_goal,
  unknown_predicate,
  unknown_object,
  arity_mismatch,
  type_mismatch,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string location;  // e.g. "environment[2]", "goal[0]", "init[1]"
  std::string detail;
};

using ValidationReport = std::vector<Violation>;

/// Total: reports every broken invariant as data, never throws.
ValidationReport validate_request(const FormalRequest& request,
                                  const DomainModel& domain);

// ---------------------------------------------------------------------------
// Wire format

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ordered_json environment_to_json(std::span<const ObjectDecl> env);
std::vector<ObjectDecl> environment_from_json(const json& array);

/// {"environment": [...], "init": [...], "goal": "..."} in that key order.
ordered_json request_to_json(const FormalRequest& request);

/// Throws WireError for shape problems and GoalError for atom syntax.
FormalRequest request_from_json(const json& document);

/// Compact layout used for the printed listings: one array element per line,
/// objects inline as {"k":v, "k":v}.
std::string format_listing(const ordered_json& document);

}  // namespace esp
