#pragma once

// Shared test helpers: seed fixtures, an independent brute-force planner and
// random instance generators.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "esp/composer.hpp"
#include "esp/domain.hpp"
#include "esp/registry.hpp"
#include "esp/seed.hpp"

namespace esp::testing {

inline std::shared_ptr<const DomainModel> seed_domain() {
  static auto domain = std::make_shared<const DomainModel>(seed::domain());
  return domain;
}

inline std::unique_ptr<Registry> seeded_registry() {
  auto r = std::make_unique<Registry>(seed_domain());
  r->load_manifest(seed::services());
  return r;
}

inline std::vector<ObjectDecl> demo_environment() {
  return {{"p1", "parkingid", ""},
          {"b1", "operatorid", ""},
          {"r1", "reservationnr", ""},
          {"m1", "maxparkingtime", ""},
          {"g1", "bookedservice", ""}};
}

inline Literal lit(std::string pred, std::vector<std::string> args) {
  return Literal{std::move(pred), std::move(args)};
}

// ---------------------------------------------------------------------------
// Brute-force oracle. Grounds descriptions on its own and enumerates every
// action sequence by iterative deepening, trying actions in index order.

struct OracleAction {
  std::string name;
  std::vector<std::string> params;
  std::uint64_t pre = 0, add = 0, del = 0;
};

class Oracle {
 public:
  Oracle(const RegistrySnapshot& snapshot, const FormalRequest& request) {
    for (const auto& desc : snapshot.descriptions) {
      std::vector<std::vector<std::string>> candidates;
      for (const auto& p : desc.params) {
        std::vector<std::string> names;
        for (const auto& o : request.environment) {
          if (o.type == p.type) names.push_back(o.name);
        }
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        candidates.push_back(std::move(names));
      }
      std::vector<std::string> binding;
      enumerate(desc, candidates, binding);
    }
    for (const auto& l : request.init) init_ |= bit(l);
    for (const auto& l : request.goal.conjuncts) goal_ |= bit(l);
  }

  const std::vector<OracleAction>& actions() const { return actions_; }

  /// Shortest sequence (action indices) of length <= max_len reaching the
  /// goal; among those, the lexicographically smallest.
  std::optional<std::vector<std::size_t>> solve(std::size_t max_len) const {
    std::vector<std::size_t> path;
    for (std::size_t depth = 0; depth <= max_len; ++depth) {
      if (dfs(init_, depth, path)) return path;
    }
    return std::nullopt;
  }

  /// Final state mask after replaying `steps`, or nullopt if a precondition
  /// fails or a step names an unknown ground action.
  std::optional<std::uint64_t> replay(const std::vector<CompositionStep>& steps) const {
    std::uint64_t s = init_;
    for (const auto& step : steps) {
      auto it = std::find_if(actions_.begin(), actions_.end(), [&](const auto& a) {
        return a.name == step.name && a.params == step.params;
      });
      if (it == actions_.end() || (it->pre & ~s) != 0) return std::nullopt;
      s = (s & ~it->del) | it->add;
    }
    return s;
  }

  bool satisfies_goal(std::uint64_t s) const { return (goal_ & ~s) == 0; }

  std::size_t index_of(const CompositionStep& step) const {
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      if (actions_[i].name == step.name && actions_[i].params == step.params) return i;
    }
    return actions_.size();
  }

 private:
  std::uint64_t bit(const Literal& l) {
    std::string key = l.predicate;
    for (const auto& a : l.args) key += " " + a;
    auto [it, fresh] = atoms_.emplace(key, atoms_.size());
    if (it->second >= 64) throw std::runtime_error("oracle supports 64 atoms");
    return std::uint64_t{1} << it->second;
  }

  std::uint64_t mask(const ServiceDescription& desc,
                     const std::vector<Literal>& templates,
                     const std::vector<std::string>& binding) {
    std::uint64_t m = 0;
    for (const auto& t : templates) {
      Literal g{t.predicate, {}};
      for (const auto& a : t.args) {
        std::string v = a;
        for (std::size_t i = 0; i < desc.params.size(); ++i) {
          if (desc.params[i].variable == a) v = binding[i];
        }
        g.args.push_back(v);
      }
      m |= bit(g);
    }
    return m;
  }

  void enumerate(const ServiceDescription& desc,
                 const std::vector<std::vector<std::string>>& candidates,
                 std::vector<std::string>& binding) {
    if (binding.size() == candidates.size()) {
      OracleAction a;
      a.name = desc.name;
      a.params = binding;
      a.pre = mask(desc, desc.preconditions, binding);
      a.add = mask(desc, desc.add_effects, binding);
      a.del = mask(desc, desc.delete_effects, binding);
      actions_.push_back(std::move(a));
      return;
    }
    for (const auto& name : candidates[binding.size()]) {
      binding.push_back(name);
      enumerate(desc, candidates, binding);
      binding.pop_back();
    }
  }

  bool dfs(std::uint64_t s, std::size_t remaining, std::vector<std::size_t>& path) const {
    if (remaining == 0) return satisfies_goal(s);
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      const auto& a = actions_[i];
      if ((a.pre & ~s) != 0) continue;
      path.push_back(i);
      if (dfs((s & ~a.del) | a.add, remaining - 1, path)) return true;
      path.pop_back();
    }
    return false;
  }

  std::map<std::string, std::size_t> atoms_;
  std::vector<OracleAction> actions_;
  std::uint64_t init_ = 0, goal_ = 0;
};

// ---------------------------------------------------------------------------
// Random planning instances over the seed predicates.

struct Instance {
  std::unique_ptr<Registry> registry;
  FormalRequest request;
};

inline const std::vector<std::string>& seed_types_used() {
  static const std::vector<std::string> types{"parkingid", "reservationnr",
                                              "maxparkingtime", "operatorid"};
  return types;
}

/// Literals over `vars` (variable -> type) that typecheck against the seed
/// domain.
inline std::vector<Literal> candidate_literals(
    const DomainModel& domain,
    const std::vector<std::pair<std::string, std::string>>& vars) {
  std::vector<Literal> out;
  for (const auto& pred : domain.predicates()) {
    std::vector<std::vector<std::string>> options;
    for (const auto& t : pred.param_types) {
      std::vector<std::string> names;
      for (const auto& [v, vt] : vars) {
        if (vt == t) names.push_back(v);
      }
      options.push_back(names);
    }
    std::vector<std::string> args;
    auto rec = [&](auto&& self, std::size_t i) -> void {
      if (i == options.size()) {
        out.push_back({pred.name, args});
        return;
      }
      for (const auto& n : options[i]) {
        args.push_back(n);
        self(self, i + 1);
        args.pop_back();
      }
    };
    rec(rec, 0);
  }
  return out;
}

template <typename Rng>
std::vector<Literal> sample(const std::vector<Literal>& pool, std::size_t k, Rng& rng) {
  std::vector<Literal> copy = pool;
  std::shuffle(copy.begin(), copy.end(), rng);
  copy.resize(std::min(k, copy.size()));
  std::sort(copy.begin(), copy.end());
  return copy;
}

/// Up to 5 objects, up to 8 ground actions, 1-4 goal conjuncts. Mixes seed
/// descriptions with synthetic ones that carry delete effects.
template <typename Rng>
Instance random_instance(Rng& rng) {
  const DomainModel& domain = *seed_domain();
  const auto seed_descs = seed::services().descriptions;
  std::uniform_int_distribution<int> coin(0, 1);

  while (true) {
    Instance inst;
    inst.registry = std::make_unique<Registry>(seed_domain());

    // Objects: at most 5, names distinct, one type at a time.
    std::vector<ObjectDecl> env;
    std::uniform_int_distribution<int> total_dist(1, 5);
    int total = total_dist(rng);
    std::uniform_int_distribution<std::size_t> type_pick(0, seed_types_used().size() - 1);
    std::map<std::string, int> counts;
    for (int i = 0; i < total; ++i) {
      const std::string& type = seed_types_used()[type_pick(rng)];
      int n = ++counts[type];
      env.push_back({std::string(1, type[0]) + std::to_string(n), type, ""});
    }
    inst.request.environment = env;

    // Descriptions: a random subset of the seed six plus 0-2 synthetic ones.
    for (const auto& d : seed_descs) {
      if (coin(rng)) inst.registry->register_description(d);
    }
    std::uniform_int_distribution<int> synth_count(0, 2);
    int synth = synth_count(rng);
    for (int k = 0; k < synth; ++k) {
      ServiceDescription d;
      d.name = "synthetic-" + std::to_string(k);
      std::uniform_int_distribution<int> nparams(1, 3);
      int np = nparams(rng);
      std::vector<std::pair<std::string, std::string>> vars;
      for (int i = 0; i < np; ++i) {
        std::string type = seed_types_used()[type_pick(rng) % 3];
        std::string var = "v" + std::to_string(i);
        d.params.push_back({var, type});
        vars.emplace_back(var, type);
      }
      auto pool = candidate_literals(domain, vars);
      if (pool.empty()) continue;
      std::uniform_int_distribution<std::size_t> small(0, 2);
      d.preconditions = sample(pool, small(rng), rng);
      d.add_effects = sample(pool, 1 + small(rng) % 2, rng);
      d.delete_effects = sample(pool, small(rng) % 2, rng);
      d.action_reference = d.name;
      inst.registry->register_description(std::move(d));
    }

    auto snapshot = inst.registry->list_descriptions();
    Oracle probe(*snapshot, inst.request);
    if (probe.actions().empty() || probe.actions().size() > 8) continue;

    std::vector<std::pair<std::string, std::string>> objs;
    for (const auto& o : env) objs.emplace_back(o.name, o.type);
    auto ground_atoms = candidate_literals(domain, objs);
    if (ground_atoms.empty()) continue;
    // Half the goals draw only from relaxed-reachable atoms (delete effects
    // ignored), which keeps satisfiable instances common.
    std::uniform_int_distribution<int> init_chance(0, 3);
    if (init_chance(rng) == 0) inst.request.init = sample(ground_atoms, 1, rng);
    std::set<Literal> reached(inst.request.init.begin(), inst.request.init.end());
    const auto grounded = ground(*snapshot, env);
    for (bool grew = true; grew;) {
      grew = false;
      for (const auto& a : grounded) {
        if (!std::all_of(a.pre.begin(), a.pre.end(),
                         [&](const auto& l) { return reached.contains(l); })) {
          continue;
        }
        for (const auto& l : a.add) grew |= reached.insert(l).second;
      }
    }
    std::vector<Literal> produced(reached.begin(), reached.end());
    const auto& goal_pool = coin(rng) && !produced.empty() ? produced : ground_atoms;
    std::uniform_int_distribution<std::size_t> goal_size(1, 4);
    inst.request.goal.conjuncts = sample(goal_pool, goal_size(rng), rng);
    std::shuffle(inst.request.goal.conjuncts.begin(), inst.request.goal.conjuncts.end(), rng);
    return inst;
  }
}

// ---------------------------------------------------------------------------
// Random goals over random environments for parser round trips.

template <typename Rng>
std::string random_identifier(Rng& rng) {
  static const std::string first = "abcdefghijklmnopqrstuvwxyz";
  static const std::string rest = "abcdefghijklmnopqrstuvwxyz0123456789_-";
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::uniform_int_distribution<std::size_t> f(0, first.size() - 1);
  std::uniform_int_distribution<std::size_t> r(0, rest.size() - 1);
  std::string s(1, first[f(rng)]);
  for (std::size_t n = len(rng); s.size() < n;) s += rest[r(rng)];
  return s;
}

struct GoalCase {
  std::vector<ObjectDecl> environment;
  GoalFormula goal;
};

template <typename Rng>
GoalCase random_goal(Rng& rng) {
  const DomainModel& domain = *seed_domain();
  GoalCase c;
  std::uniform_int_distribution<int> per_type(1, 3);
  for (const auto& type : domain.types()) {
    int n = per_type(rng);
    for (int i = 0; i < n; ++i) {
      std::string name;
      do {
        name = random_identifier(rng);
      } while (find_object(c.environment, name) != nullptr || name == "and");
      c.environment.push_back({name, type, ""});
    }
  }
  std::uniform_int_distribution<std::size_t> n_conj(1, 6);
  std::uniform_int_distribution<std::size_t> pred_pick(0, domain.predicates().size() - 1);
  std::size_t n = n_conj(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pred = domain.predicates()[pred_pick(rng)];
    Literal l{pred.name, {}};
    for (const auto& t : pred.param_types) {
      std::vector<const ObjectDecl*> of_type;
      for (const auto& o : c.environment) {
        if (o.type == t) of_type.push_back(&o);
      }
      std::uniform_int_distribution<std::size_t> pick(0, of_type.size() - 1);
      l.args.push_back(of_type[pick(rng)]->name);
    }
    c.goal.conjuncts.push_back(std::move(l));
  }
  return c;
}

/// Re-renders a goal with random whitespace between tokens.
template <typename Rng>
std::string noisy_render(const GoalFormula& goal, Rng& rng) {
  static const std::vector<std::string> spaces{" ", "  ", "\n", "\t", " \n "};
  std::uniform_int_distribution<std::size_t> pick(0, spaces.size() - 1);
  auto ws = [&] { return spaces[pick(rng)]; };
  std::string s = "(" + ws() + "and";
  for (const auto& l : goal.conjuncts) {
    s += ws() + "(" + l.predicate;
    for (const auto& a : l.args) s += ws() + a;
    s += ")";
  }
  return s + ws() + ")";
}

}  // namespace esp::testing
