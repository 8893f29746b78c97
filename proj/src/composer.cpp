#include "esp/composer.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <unordered_set>

namespace esp {

namespace {

std::vector<Literal> substitute(const std::vector<Literal>& templates,
                                const ServiceDescription& desc,
                                std::span<const std::string> binding) {
  std::vector<Literal> out;
  out.reserve(templates.size());
  for (const auto& t : templates) {
    Literal lit{t.predicate, {}};
    for (const auto& arg : t.args) {
      auto it = std::find_if(desc.params.begin(), desc.params.end(),
                             [&](const auto& p) { return p.variable == arg; });
      lit.args.push_back(it == desc.params.end()
                             ? arg
                             : binding[it - desc.params.begin()]);
    }
    out.push_back(std::move(lit));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

GroundAction instantiate(const ServiceDescription& desc,
                         std::span<const std::string> binding) {
  if (binding.size() != desc.params.size()) {
    throw std::invalid_argument("binding for '" + desc.name + "' needs " +
                                std::to_string(desc.params.size()) +
                                " objects");
  }
  GroundAction a;
  a.description_name = desc.name;
  a.binding.assign(binding.begin(), binding.end());
  a.pre = substitute(desc.preconditions, desc, binding);
  a.add = substitute(desc.add_effects, desc, binding);
  a.del = substitute(desc.delete_effects, desc, binding);
  return a;
}

std::vector<GroundAction> ground(const RegistrySnapshot& snapshot,
                                 std::span<const ObjectDecl> env) {
  std::map<std::string, std::vector<std::string>> by_type;
  for (const auto& o : env) by_type[o.type].push_back(o.name);
  for (auto& [type, names] : by_type) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
  }

  std::vector<GroundAction> actions;
  for (const auto& desc : snapshot.descriptions) {
    std::vector<const std::vector<std::string>*> domains;
    bool empty = false;
    for (const auto& p : desc.params) {
      auto it = by_type.find(p.type);
      if (it == by_type.end()) {
        empty = true;
        break;
      }
      domains.push_back(&it->second);
    }
    if (empty) continue;

    // Odometer over per-parameter candidates; rightmost digit fastest, which
    // enumerates binding tuples in lexicographic order.
    std::vector<std::size_t> digits(domains.size(), 0);
    std::vector<std::string> binding(domains.size());
    while (true) {
      for (std::size_t i = 0; i < digits.size(); ++i) {
        binding[i] = (*domains[i])[digits[i]];
      }
      actions.push_back(instantiate(desc, binding));
      bool carry = true;
      for (std::size_t i = digits.size(); i > 0 && carry; --i) {
        if (++digits[i - 1] < domains[i - 1]->size()) {
          carry = false;
        } else {
          digits[i - 1] = 0;
        }
      }
      if (carry) break;
    }
  }
  return actions;
}

bool applicable(const PlanningState& s, const GroundAction& a) {
  return std::all_of(a.pre.begin(), a.pre.end(),
                     [&](const Literal& l) { return s.facts.contains(l); });
}

PlanningState apply(const PlanningState& s, const GroundAction& a) {
  if (!applicable(s, a)) {
    std::string missing;
    for (const auto& l : a.pre) {
      if (!s.facts.contains(l)) {
        missing = render_literal(l);
        break;
      }
    }
    throw NotApplicable("'" + a.description_name + "' not applicable: " +
                        missing + " does not hold");
  }
  PlanningState next = s;
  for (const auto& l : a.del) next.facts.erase(l);
  for (const auto& l : a.add) next.facts.insert(l);
  return next;
}

// ---------------------------------------------------------------------------
// Planner internals: atoms are interned and states become bitsets.

namespace {

using Bits = std::vector<std::uint64_t>;

struct BitsHash {
  std::size_t operator()(const Bits& b) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t w : b) {
      h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

class AtomTable {
 public:
  std::uint32_t intern(const Literal& l) {
    auto [it, inserted] = index_.try_emplace(l, atoms_.size());
    if (inserted) atoms_.push_back(l);
    return it->second;
  }
  std::size_t size() const { return atoms_.size(); }
  const Literal& at(std::uint32_t i) const { return atoms_[i]; }

 private:
  std::map<Literal, std::uint32_t> index_;
  std::vector<Literal> atoms_;
};

struct CompiledAction {
  Bits pre;
  Bits add;
  Bits del_mask;  // complement of del
};

Bits make_bits(std::size_t words, const std::vector<std::uint32_t>& atoms) {
  Bits b(words, 0);
  for (auto a : atoms) b[a / 64] |= std::uint64_t{1} << (a % 64);
  return b;
}

bool subset(const Bits& a, const Bits& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] & ~b[i]) != 0) return false;
  }
  return true;
}

bool test_bit(const Bits& b, std::uint32_t i) {
  return (b[i / 64] >> (i % 64)) & 1u;
}

struct Node {
  Bits state;
  std::int64_t parent;
  std::uint32_t action;
};

}  // namespace

PlanOutcome plan(const FormalRequest& request, const RegistrySnapshot& snapshot,
                 const PlannerOptions& options) {
  std::vector<GroundAction> actions = ground(snapshot, request.environment);

  AtomTable atoms;
  std::vector<std::uint32_t> init_ids, goal_ids;
  for (const auto& l : request.init) init_ids.push_back(atoms.intern(l));
  for (const auto& l : request.goal.conjuncts) goal_ids.push_back(atoms.intern(l));
  std::vector<std::array<std::vector<std::uint32_t>, 3>> ids(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    for (const auto& l : actions[i].pre) ids[i][0].push_back(atoms.intern(l));
    for (const auto& l : actions[i].add) ids[i][1].push_back(atoms.intern(l));
    for (const auto& l : actions[i].del) ids[i][2].push_back(atoms.intern(l));
  }
  const std::size_t words = std::max<std::size_t>(1, (atoms.size() + 63) / 64);
  std::vector<CompiledAction> compiled(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    compiled[i].pre = make_bits(words, ids[i][0]);
    compiled[i].add = make_bits(words, ids[i][1]);
    compiled[i].del_mask = make_bits(words, ids[i][2]);
    for (auto& w : compiled[i].del_mask) w = ~w;
  }
  const Bits goal = make_bits(words, goal_ids);

  auto result_from = [&](const std::vector<Node>& nodes, std::int64_t leaf) {
    CompositionResult out;
    out.environment = request.environment;
    for (std::int64_t n = leaf; nodes[n].parent >= 0; n = nodes[n].parent) {
      const GroundAction& a = actions[nodes[n].action];
      out.steps.push_back({a.description_name, a.binding});
    }
    std::reverse(out.steps.begin(), out.steps.end());
    return out;
  };

  std::vector<Node> nodes;
  std::unordered_set<Bits, BitsHash> visited;
  nodes.push_back({make_bits(words, init_ids), -1, 0});
  visited.insert(nodes[0].state);
  if (subset(goal, nodes[0].state)) return result_from(nodes, 0);

  // FIFO over node indices; children are generated in action-index order,
  // so the first goal state generated carries the lexicographically smallest
  // minimal-length action sequence.
  for (std::size_t head = 0; head < nodes.size(); ++head) {
    for (std::uint32_t ai = 0; ai < compiled.size(); ++ai) {
      const CompiledAction& a = compiled[ai];
      const Bits& s = nodes[head].state;
      if (!subset(a.pre, s)) continue;
      Bits next(words);
      for (std::size_t w = 0; w < words; ++w) {
        next[w] = (s[w] & a.del_mask[w]) | a.add[w];
      }
      if (!visited.insert(next).second) continue;
      if (nodes.size() >= options.node_budget) {
        throw BudgetExceeded(options.node_budget);
      }
      nodes.push_back({std::move(next), static_cast<std::int64_t>(head), ai});
      if (subset(goal, nodes.back().state)) {
        return result_from(nodes, static_cast<std::int64_t>(nodes.size() - 1));
      }
    }
  }

  // Search exhausted: `nodes` holds every reachable state.
  Unsatisfiable unsat;
  for (std::size_t g = 0; g < goal_ids.size(); ++g) {
    bool reached = std::any_of(nodes.begin(), nodes.end(), [&](const Node& n) {
      return test_bit(n.state, goal_ids[g]);
    });
    if (!reached) unsat.unreachable.push_back(request.goal.conjuncts[g]);
  }
  if (unsat.unreachable.empty()) unsat.unreachable = request.goal.conjuncts;
  return unsat;
}

PlanCheck validate_plan(const CompositionResult& composition,
                        const FormalRequest& request,
                        const RegistrySnapshot& snapshot) {
  PlanCheck check;
  PlanningState state;
  state.facts.insert(request.init.begin(), request.init.end());
  check.trace.push_back(state);

  for (std::size_t i = 0; i < composition.steps.size(); ++i) {
    const CompositionStep& step = composition.steps[i];
    const ServiceDescription* desc = snapshot.find(step.name);
    if (desc == nullptr) throw UnknownDescription(step.name);
    auto fail = [&](std::string reason) {
      check.failed_step = i;
      check.reason = "step " + std::to_string(i) + " (" + step.name +
                     "): " + std::move(reason);
      return check;
    };
    if (step.params.size() != desc->params.size()) {
      return fail("expects " + std::to_string(desc->params.size()) +
                  " params, got " + std::to_string(step.params.size()));
    }
    for (std::size_t p = 0; p < step.params.size(); ++p) {
      const ObjectDecl* o = find_object(request.environment, step.params[p]);
      if (o == nullptr) return fail("unknown object '" + step.params[p] + "'");
      if (o->type != desc->params[p].type) {
        return fail("'" + step.params[p] + "' is " + o->type + ", expected " +
                    desc->params[p].type);
      }
    }
    GroundAction a = instantiate(*desc, step.params);
    for (const auto& l : a.pre) {
      if (!state.facts.contains(l)) {
        return fail("precondition " + render_literal(l) + " unmet");
      }
    }
    state = apply(state, a);
    check.trace.push_back(state);
  }
  for (const auto& g : request.goal.conjuncts) {
    if (!state.facts.contains(g)) {
      check.reason = "goal conjunct " + render_literal(g) + " not reached";
      return check;
    }
  }
  check.valid = true;
  return check;
}

ordered_json composition_to_json(const CompositionResult& composition) {
  ordered_json out;
  out["composition"] = ordered_json::array();
  for (const auto& s : composition.steps) {
    ordered_json step;
    step["name"] = s.name;
    step["params"] = s.params;
    out["composition"].push_back(std::move(step));
  }
  out["environment"] = environment_to_json(composition.environment);
  return out;
}

CompositionResult composition_from_json(const json& document) {
  if (!document.is_object() || !document.contains("composition") ||
      !document.contains("environment") || !document["composition"].is_array()) {
    throw WireError("composition must have keys composition, environment");
  }
  CompositionResult out;
  for (const auto& s : document["composition"]) {
    if (!s.is_object() || !s.contains("name") || !s.contains("params")) {
      throw WireError("composition steps need name and params");
    }
    try {
      out.steps.push_back({s["name"].get<std::string>(),
                           s["params"].get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw WireError(std::string("malformed composition step: ") + e.what());
    }
  }
  out.environment = environment_from_json(document["environment"]);
  return out;
}

}  // namespace esp
