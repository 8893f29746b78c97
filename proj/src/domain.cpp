#include "esp/domain.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace esp {

bool is_identifier(std::string_view s) {
  if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  return std::all_of(s.begin() + 1, s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

DomainModel::DomainModel(std::vector<std::string> types,
                         std::vector<PredicateSchema> predicates)
    : types_(std::move(types)), predicates_(std::move(predicates)) {
  std::set<std::string_view> seen;
  for (const auto& t : types_) {
    if (!is_identifier(t)) throw DomainError("invalid type name '" + t + "'");
    if (!seen.insert(t).second)
      throw DomainError("duplicate type '" + t + "'");
  }
  std::set<std::string_view> names;
  for (const auto& p : predicates_) {
    if (!is_identifier(p.name))
      throw DomainError("invalid predicate name '" + p.name + "'");
    if (!names.insert(p.name).second)
      throw DomainError("duplicate predicate '" + p.name + "'");
    for (const auto& t : p.param_types) {
      if (!has_type(t)) {
        throw DomainError("predicate '" + p.name +
                          "' references undeclared type '" + t + "'");
      }
    }
  }
}

bool DomainModel::has_type(std::string_view name) const {
  return std::find(types_.begin(), types_.end(), name) != types_.end();
}

const PredicateSchema* DomainModel::find_predicate(std::string_view name) const {
  auto it = std::find_if(predicates_.begin(), predicates_.end(),
                         [&](const auto& p) { return p.name == name; });
  return it == predicates_.end() ? nullptr : &*it;
}

DomainModel DomainModel::from_json(const json& manifest) {
  try {
    std::vector<std::string> types =
        manifest.at("types").get<std::vector<std::string>>();
    std::vector<PredicateSchema> predicates;
    for (const auto& p : manifest.at("predicates")) {
      predicates.push_back(
          {p.at("name").get<std::string>(),
           p.at("params").get<std::vector<std::string>>()});
    }
    return DomainModel(std::move(types), std::move(predicates));
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed domain manifest: ") + e.what());
  }
}

ordered_json DomainModel::to_json() const {
  ordered_json out;
  out["types"] = types_;
  out["predicates"] = ordered_json::array();
  for (const auto& p : predicates_) {
    out["predicates"].push_back({{"name", p.name}, {"params", p.param_types}});
  }
  return out;
}

const ObjectDecl* find_object(std::span<const ObjectDecl> env,
                              std::string_view name) {
  auto it = std::find_if(env.begin(), env.end(),
                         [&](const auto& o) { return o.name == name; });
  return it == env.end() ? nullptr : &*it;
}

// ---------------------------------------------------------------------------

std::string_view to_string(GoalErrorKind kind) {
  switch (kind) {
    case GoalErrorKind::syntax: return "SyntaxError";
    case GoalErrorKind::unknown_predicate: return "UnknownPredicate";
    case GoalErrorKind::unknown_object: return "UnknownObject";
    case GoalErrorKind::arity_mismatch: return "ArityMismatch";
    case GoalErrorKind::type_mismatch: return "TypeMismatch";
  }
  return "?";
}

GoalError::GoalError(GoalErrorKind kind, std::string token,
                     std::size_t position, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " at " +
                         std::to_string(position) + ": " + message),
      kind_(kind),
      token_(std::move(token)),
      position_(position) {}

namespace {

struct Token {
  std::string text;
  std::size_t position;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(' || c == ')') {
      tokens.push_back({std::string(1, c), i});
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size() && text[i] != '(' && text[i] != ')' &&
             !std::isspace(static_cast<unsigned char>(text[i]))) {
        ++i;
      }
      tokens.push_back({std::string(text.substr(start, i - start)), start});
    }
  }
  return tokens;
}

class AtomReader {
 public:
  explicit AtomReader(std::string_view text)
      : text_(text), tokens_(tokenize(text)) {}

  bool at_end() const { return pos_ >= tokens_.size(); }
  const Token* peek(std::size_t ahead = 0) const {
    return pos_ + ahead < tokens_.size() ? &tokens_[pos_ + ahead] : nullptr;
  }

  [[noreturn]] void fail(const std::string& message) const {
    if (at_end()) {
      throw GoalError(GoalErrorKind::syntax, "", text_.size(),
                      message + " (at end of input)");
    }
    throw GoalError(GoalErrorKind::syntax, tokens_[pos_].text,
                    tokens_[pos_].position,
                    message + ", found '" + tokens_[pos_].text + "'");
  }

  void expect(std::string_view t) {
    if (at_end() || tokens_[pos_].text != t) fail("expected '" + std::string(t) + "'");
    ++pos_;
  }

  bool is_symbol(const Token* t) const {
    return t != nullptr && t->text != "(" && t->text != ")";
  }

  Literal atom() {
    expect("(");
    const Token* name = peek();
    if (!is_symbol(name)) fail("expected predicate name");
    Literal lit{name->text, {}};
    ++pos_;
    while (!at_end() && is_symbol(peek())) {
      lit.args.push_back(peek()->text);
      ++pos_;
    }
    expect(")");
    return lit;
  }

 private:
  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

struct PositionedAtoms {
  std::vector<Literal> atoms;
  std::vector<std::size_t> starts;
};

PositionedAtoms read_positioned(std::string_view text) {
  AtomReader reader(text);
  if (reader.at_end()) reader.fail("empty goal");
  PositionedAtoms out;
  auto take = [&] {
    out.starts.push_back(reader.peek()->position);
    out.atoms.push_back(reader.atom());
  };
  const Token* second = reader.peek(1);
  if (second != nullptr && second->text == "and") {
    reader.expect("(");
    reader.expect("and");
    while (!reader.at_end() && reader.peek()->text == "(") take();
    reader.expect(")");
  } else {
    take();
  }
  if (!reader.at_end()) reader.fail("trailing input");
  return out;
}

}  // namespace

std::vector<Literal> read_goal_atoms(std::string_view text) {
  return read_positioned(text).atoms;
}

Literal read_atom(std::string_view text) {
  AtomReader reader(text);
  Literal lit = reader.atom();
  if (!reader.at_end()) reader.fail("trailing input");
  return lit;
}

GoalFormula parse_goal(std::string_view text, std::span<const ObjectDecl> env,
                       const DomainModel& domain) {
  auto [atoms, starts] = read_positioned(text);
  if (atoms.empty()) {
    throw GoalError(GoalErrorKind::syntax, ")", text.rfind(')'),
                    "conjunction needs at least one atom");
  }
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    auto issue = typecheck_literal(
        atoms[i], domain,
        [&](const std::string& arg) -> std::optional<std::string> {
          const ObjectDecl* o = find_object(env, arg);
          if (o == nullptr) return std::nullopt;
          return o->type;
        });
    if (issue) {
      // Point at the offending token inside the conjunct.
      std::size_t pos = starts[i];
      auto found = text.find(issue->token, pos + 1);
      if (found != std::string_view::npos) pos = found;
      throw GoalError(issue->kind, issue->token, pos, issue->detail);
    }
  }
  return GoalFormula{std::move(atoms)};
}

std::string render_literal(const Literal& literal) {
  std::string out = "(" + literal.predicate;
  for (const auto& a : literal.args) out += " " + a;
  out += ")";
  return out;
}

std::string render_goal(const GoalFormula& goal) {
  std::string out = "(and";
  for (const auto& c : goal.conjuncts) out += " " + render_literal(c);
  out += ")";
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::syntax: return "SyntaxError";
    case ViolationKind::invalid_name: return "InvalidName";
    case ViolationKind::duplicate_object: return "DuplicateObject";
    case ViolationKind::unknown_type: return "UnknownType";
    case ViolationKind::empty_goal: return "EmptyGoal";
    case ViolationKind::unknown_predicate: return "UnknownPredicate";
    case ViolationKind::unknown_object: return "UnknownObject";
    case ViolationKind::arity_mismatch: return "ArityMismatch";
    case ViolationKind::type_mismatch: return "TypeMismatch";
  }
  return "?";
}

namespace {

ViolationKind violation_for(GoalErrorKind kind) {
  switch (kind) {
    case GoalErrorKind::unknown_predicate: return ViolationKind::unknown_predicate;
    case GoalErrorKind::unknown_object: return ViolationKind::unknown_object;
    case GoalErrorKind::arity_mismatch: return ViolationKind::arity_mismatch;
    case GoalErrorKind::type_mismatch: return ViolationKind::type_mismatch;
    case GoalErrorKind::syntax: break;
  }
  return ViolationKind::syntax;
}

}  // namespace

ValidationReport validate_request(const FormalRequest& request,
                                  const DomainModel& domain) {
  ValidationReport report;
  std::set<std::string_view> names;
  for (std::size_t i = 0; i < request.environment.size(); ++i) {
    const ObjectDecl& o = request.environment[i];
    std::string where = "environment[" + std::to_string(i) + "]";
    if (!is_identifier(o.name)) {
      report.push_back({ViolationKind::invalid_name, where,
                        "invalid object name '" + o.name + "'"});
    }
    if (!names.insert(o.name).second) {
      report.push_back({ViolationKind::duplicate_object, where,
                        "duplicate object '" + o.name + "'"});
    }
    if (!domain.has_type(o.type)) {
      report.push_back({ViolationKind::unknown_type, where,
                        "unknown type '" + o.type + "'"});
    }
  }

  auto type_of = [&](const std::string& arg) -> std::optional<std::string> {
    const ObjectDecl* o = find_object(request.environment, arg);
    if (o == nullptr) return std::nullopt;
    return o->type;
  };
  auto check = [&](const std::vector<Literal>& literals, std::string_view what) {
    for (std::size_t i = 0; i < literals.size(); ++i) {
      if (auto issue = typecheck_literal(literals[i], domain, type_of)) {
        report.push_back({violation_for(issue->kind),
                          std::string(what) + "[" + std::to_string(i) + "]",
                          issue->detail});
      }
    }
  };
  check(request.init, "init");
  if (request.goal.conjuncts.empty()) {
    report.push_back(
        {ViolationKind::empty_goal, "goal", "goal has no conjuncts"});
  }
  check(request.goal.conjuncts, "goal");
  return report;
}

// ---------------------------------------------------------------------------

ordered_json environment_to_json(std::span<const ObjectDecl> env) {
  ordered_json out = ordered_json::array();
  for (const auto& o : env) {
    ordered_json entry;
    entry["value"] = o.value;
    entry["type"] = o.type;
    entry["name"] = o.name;
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<ObjectDecl> environment_from_json(const json& array) {
  if (!array.is_array()) throw WireError("\"environment\" must be an array");
  std::vector<ObjectDecl> env;
  for (const auto& entry : array) {
    if (!entry.is_object() || entry.size() != 3 || !entry.contains("value") ||
        !entry.contains("type") || !entry.contains("name")) {
      throw WireError(
          "environment entries must have exactly the keys value, type, name");
    }
    if (!entry["value"].is_string() || !entry["type"].is_string() ||
        !entry["name"].is_string()) {
      throw WireError("environment entry fields must be strings");
    }
    env.push_back({entry["name"].get<std::string>(),
                   entry["type"].get<std::string>(),
                   entry["value"].get<std::string>()});
  }
  return env;
}

ordered_json request_to_json(const FormalRequest& request) {
  ordered_json out;
  out["environment"] = environment_to_json(request.environment);
  out["init"] = ordered_json::array();
  for (const auto& lit : request.init) out["init"].push_back(render_literal(lit));
  out["goal"] = render_goal(request.goal);
  return out;
}

FormalRequest request_from_json(const json& document) {
  if (!document.is_object() || document.size() != 3 ||
      !document.contains("environment") || !document.contains("init") ||
      !document.contains("goal")) {
    throw WireError(
        "request must have exactly the keys environment, init, goal");
  }
  FormalRequest request;
  request.environment = environment_from_json(document["environment"]);
  const json& init = document["init"];
  if (!init.is_array()) throw WireError("\"init\" must be an array");
  for (const auto& atom : init) {
    if (!atom.is_string()) throw WireError("init entries must be strings");
    request.init.push_back(read_atom(atom.get<std::string>()));
  }
  if (!document["goal"].is_string()) throw WireError("\"goal\" must be a string");
  request.goal.conjuncts = read_goal_atoms(document["goal"].get<std::string>());
  return request;
}

namespace {

std::string inline_value(const ordered_json& value) {
  if (value.is_object()) {
    std::string out = "{";
    bool first = true;
    for (const auto& [k, v] : value.items()) {
      if (!first) out += ", ";
      first = false;
      out += ordered_json(k).dump() + ":" + inline_value(v);
    }
    return out + "}";
  }
  if (value.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (i > 0) out += ", ";
      out += inline_value(value[i]);
    }
    return out + "]";
  }
  return value.dump();
}

}  // namespace

std::string format_listing(const ordered_json& document) {
  if (!document.is_object()) return inline_value(document);
  std::string out = "{";
  bool first = true;
  for (const auto& [key, value] : document.items()) {
    if (!first) out += ",\n";
    first = false;
    out += ordered_json(key).dump() + ": ";
    if (value.is_array() && !value.empty() && value[0].is_object()) {
      out += "[\n";
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i > 0) out += ",\n";
        out += " " + inline_value(value[i]);
      }
      out += "]";
    } else {
      out += inline_value(value);
    }
  }
  return out + "}";
}

}  // namespace esp
