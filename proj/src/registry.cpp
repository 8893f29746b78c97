#include "esp/registry.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>
#include <set>

namespace esp {

std::int64_t to_epoch_ms(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             t.time_since_epoch())
      .count();
}

Clock::time_point from_epoch_ms(std::int64_t ms) {
  return Clock::time_point(std::chrono::milliseconds(ms));
}

std::string_view to_string(Health h) {
  switch (h) {
    case Health::unknown: return "unknown";
    case Health::healthy: return "healthy";
    case Health::unreachable: return "unreachable";
  }
  return "unknown";
}

Health health_from_string(std::string_view s) {
  if (s == "healthy") return Health::healthy;
  if (s == "unreachable") return Health::unreachable;
  return Health::unknown;
}

const ServiceDescription* RegistrySnapshot::find(std::string_view name) const {
  auto it = std::find_if(descriptions.begin(), descriptions.end(),
                         [&](const auto& d) { return d.name == name; });
  return it == descriptions.end() ? nullptr : &*it;
}

std::vector<std::string> typecheck_description(const ServiceDescription& desc,
                                               const DomainModel& domain) {
  std::vector<std::string> problems;
  if (!is_identifier(desc.name)) {
    problems.push_back("name: invalid identifier '" + desc.name + "'");
  }
  if (desc.action_reference.empty()) {
    problems.push_back("action_reference: empty");
  }
  std::set<std::string_view> vars;
  for (std::size_t i = 0; i < desc.params.size(); ++i) {
    const Parameter& p = desc.params[i];
    std::string where = "params[" + std::to_string(i) + "]: ";
    if (!is_identifier(p.variable)) {
      problems.push_back(where + "invalid variable '" + p.variable + "'");
    }
    if (!vars.insert(p.variable).second) {
      problems.push_back(where + "duplicate variable '" + p.variable + "'");
    }
    if (!domain.has_type(p.type)) {
      problems.push_back(where + "unknown type '" + p.type + "'");
    }
  }
  auto type_of = [&](const std::string& var) -> std::optional<std::string> {
    for (const auto& p : desc.params) {
      if (p.variable == var) return p.type;
    }
    return std::nullopt;
  };
  auto check = [&](const std::vector<Literal>& lits, std::string_view field) {
    for (std::size_t i = 0; i < lits.size(); ++i) {
      if (auto issue = typecheck_literal(lits[i], domain, type_of)) {
        std::string detail = issue->detail;
        if (issue->kind == GoalErrorKind::unknown_object) {
          detail = "undeclared variable '" + issue->token + "'";
        }
        problems.push_back(std::string(field) + "[" + std::to_string(i) +
                           "]: " + detail);
      }
    }
  };
  check(desc.preconditions, "preconditions");
  check(desc.add_effects, "add_effects");
  check(desc.delete_effects, "delete_effects");
  return problems;
}

bool is_valid_base_url(std::string_view url) {
  static const std::regex pattern(
      R"(^https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/[A-Za-z0-9._~/\-]*)?$)");
  return std::regex_match(url.begin(), url.end(), pattern);
}

// ---------------------------------------------------------------------------

namespace {

ordered_json literals_to_json(const std::vector<Literal>& lits) {
  ordered_json out = ordered_json::array();
  for (const auto& l : lits) out.push_back(render_literal(l));
  return out;
}

std::vector<Literal> literals_from_json(const json& j, std::string_view key) {
  std::vector<Literal> out;
  if (!j.contains(key)) return out;
  for (const auto& s : j.at(key)) out.push_back(read_atom(s.get<std::string>()));
  return out;
}

}  // namespace

ordered_json description_to_json(const ServiceDescription& desc) {
  ordered_json out;
  out["name"] = desc.name;
  out["params"] = ordered_json::array();
  for (const auto& p : desc.params) {
    out["params"].push_back({{"var", p.variable}, {"type", p.type}});
  }
  out["preconditions"] = literals_to_json(desc.preconditions);
  out["add_effects"] = literals_to_json(desc.add_effects);
  out["delete_effects"] = literals_to_json(desc.delete_effects);
  out["action_reference"] = desc.action_reference;
  return out;
}

ServiceDescription description_from_json(const json& j) {
  try {
    ServiceDescription desc;
    desc.name = j.at("name").get<std::string>();
    for (const auto& p : j.at("params")) {
      desc.params.push_back(
          {p.at("var").get<std::string>(), p.at("type").get<std::string>()});
    }
    desc.preconditions = literals_from_json(j, "preconditions");
    desc.add_effects = literals_from_json(j, "add_effects");
    desc.delete_effects = literals_from_json(j, "delete_effects");
    desc.action_reference = j.value("action_reference", desc.name);
    return desc;
  } catch (const json::exception& e) {
    throw RegistryError(RegistryErrorKind::malformed,
                        std::string("malformed description: ") + e.what());
  } catch (const GoalError& e) {
    throw RegistryError(RegistryErrorKind::malformed,
                        std::string("malformed description literal: ") +
                            e.what());
  }
}

ordered_json instance_to_json(const ServiceInstance& inst) {
  ordered_json out;
  out["instance_id"] = inst.instance_id;
  out["description"] = inst.description_name;
  out["base_url"] = inst.base_url;
  out["health"] = std::string(to_string(inst.health));
  out["registered_at"] = to_epoch_ms(inst.registered_at);
  return out;
}

ServiceInstance instance_from_json(const json& j) {
  try {
    ServiceInstance inst;
    inst.description_name = j.at("description").get<std::string>();
    inst.base_url = j.at("base_url").get<std::string>();
    inst.instance_id = j.value("instance_id", std::string());
    inst.health = health_from_string(j.value("health", std::string("unknown")));
    if (j.contains("registered_at")) {
      inst.registered_at = from_epoch_ms(j["registered_at"].get<std::int64_t>());
    }
    return inst;
  } catch (const json::exception& e) {
    throw RegistryError(RegistryErrorKind::malformed,
                        std::string("malformed instance: ") + e.what());
  }
}

ordered_json snapshot_to_json(const RegistrySnapshot& snapshot) {
  ordered_json out;
  out["version"] = snapshot.version;
  out["descriptions"] = ordered_json::array();
  for (const auto& d : snapshot.descriptions) {
    out["descriptions"].push_back(description_to_json(d));
  }
  out["instances"] = ordered_json::array();
  for (const auto& i : snapshot.instances) {
    out["instances"].push_back(instance_to_json(i));
  }
  return out;
}

RegistrySnapshot snapshot_from_json(const json& j) {
  RegistrySnapshot snapshot;
  snapshot.version = j.value("version", std::uint64_t{0});
  for (const auto& d : j.at("descriptions")) {
    snapshot.descriptions.push_back(description_from_json(d));
  }
  if (j.contains("instances")) {
    for (const auto& i : j["instances"]) {
      snapshot.instances.push_back(instance_from_json(i));
    }
  }
  return snapshot;
}

ServiceManifest service_manifest_from_json(const json& j) {
  ServiceManifest m;
  if (!j.is_object() || !j.contains("descriptions")) {
    throw RegistryError(RegistryErrorKind::malformed,
                        "service manifest needs a \"descriptions\" array");
  }
  for (const auto& d : j["descriptions"]) {
    m.descriptions.push_back(description_from_json(d));
  }
  if (j.contains("instances")) {
    for (const auto& i : j["instances"]) {
      m.instances.push_back(instance_from_json(i));
    }
  }
  return m;
}

ordered_json service_manifest_to_json(const ServiceManifest& manifest) {
  ordered_json out;
  out["descriptions"] = ordered_json::array();
  for (const auto& d : manifest.descriptions) {
    out["descriptions"].push_back(description_to_json(d));
  }
  out["instances"] = ordered_json::array();
  for (const auto& i : manifest.instances) {
    ordered_json entry;
    entry["description"] = i.description_name;
    entry["base_url"] = i.base_url;
    out["instances"].push_back(std::move(entry));
  }
  return out;
}

// ---------------------------------------------------------------------------

Registry::Registry(std::shared_ptr<const DomainModel> domain,
                   std::optional<std::filesystem::path> journal)
    : domain_(std::move(domain)) {
  if (journal) {
    if (std::filesystem::exists(*journal)) replay(*journal);
    journal_.emplace(*journal, std::ios::app);
    if (!*journal_) {
      throw std::runtime_error("cannot open registry journal " +
                               journal->string());
    }
  }
}

void Registry::replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::parse_error&) {
      // A torn final write is tolerated; anything earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw RegistryError(RegistryErrorKind::malformed,
                          "corrupt journal line " + std::to_string(lineno));
    }
    const std::string op = entry.value("op", "");
    if (op == "put_description") {
      put_description_locked(description_from_json(entry.at("description")));
    } else if (op == "put_instance") {
      put_instance_locked(instance_from_json(entry.at("instance")));
    } else if (op == "remove_description") {
      remove_description_locked(entry.at("name").get<std::string>());
    }
  }
}

void Registry::journal_locked(const ordered_json& entry) {
  if (!journal_) return;
  *journal_ << entry.dump() << '\n';
  journal_->flush();
}

void Registry::mutated_locked() {
  ++version_;
  cached_.reset();
}

std::string Registry::put_description_locked(ServiceDescription desc) {
  for (const auto& d : descriptions_) {
    if (d.name == desc.name) {
      throw RegistryError(RegistryErrorKind::duplicate_name,
                          "description '" + desc.name + "' already registered");
    }
  }
  if (desc.action_reference.empty()) desc.action_reference = desc.name;
  auto problems = typecheck_description(desc, *domain_);
  if (!problems.empty()) {
    std::string message = "description '" + desc.name + "' does not typecheck:";
    for (const auto& p : problems) message += "\n  " + p;
    throw RegistryError(RegistryErrorKind::typecheck_failure, message);
  }
  descriptions_.push_back(std::move(desc));
  mutated_locked();
  return descriptions_.back().name;
}

std::string Registry::put_instance_locked(ServiceInstance inst) {
  auto described = std::any_of(
      descriptions_.begin(), descriptions_.end(),
      [&](const auto& d) { return d.name == inst.description_name; });
  if (!described) {
    throw RegistryError(RegistryErrorKind::unknown_description,
                        "unknown description '" + inst.description_name + "'");
  }
  if (!is_valid_base_url(inst.base_url)) {
    throw RegistryError(RegistryErrorKind::invalid_instance,
                        "invalid base_url '" + inst.base_url + "'");
  }
  if (inst.instance_id.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "inst-%04llu",
                  static_cast<unsigned long long>(next_instance_++));
    inst.instance_id = buf;
  } else {
    unsigned long long n = 0;
    if (std::sscanf(inst.instance_id.c_str(), "inst-%llu", &n) == 1 &&
        n >= next_instance_) {
      next_instance_ = n + 1;
    }
  }
  for (const auto& i : instances_) {
    if (i.instance_id == inst.instance_id) {
      throw RegistryError(RegistryErrorKind::invalid_instance,
                          "duplicate instance id '" + inst.instance_id + "'");
    }
  }
  inst.health = Health::unknown;
  if (inst.registered_at == Clock::time_point{}) inst.registered_at = Clock::now();
  instances_.push_back(std::move(inst));
  mutated_locked();
  return instances_.back().instance_id;
}

bool Registry::remove_description_locked(std::string_view name) {
  auto it = std::find_if(descriptions_.begin(), descriptions_.end(),
                         [&](const auto& d) { return d.name == name; });
  if (it == descriptions_.end()) return false;
  descriptions_.erase(it);
  std::erase_if(instances_,
                [&](const auto& i) { return i.description_name == name; });
  mutated_locked();
  return true;
}

std::string Registry::register_description(ServiceDescription desc) {
  std::lock_guard lock(mu_);
  std::string name = put_description_locked(std::move(desc));
  ordered_json entry;
  entry["op"] = "put_description";
  entry["description"] = description_to_json(descriptions_.back());
  journal_locked(entry);
  return name;
}

std::string Registry::register_instance(ServiceInstance inst) {
  std::lock_guard lock(mu_);
  std::string id = put_instance_locked(std::move(inst));
  ordered_json entry;
  entry["op"] = "put_instance";
  entry["instance"] = instance_to_json(instances_.back());
  journal_locked(entry);
  return id;
}

bool Registry::remove_description(std::string_view name) {
  std::lock_guard lock(mu_);
  if (!remove_description_locked(name)) return false;
  ordered_json entry;
  entry["op"] = "remove_description";
  entry["name"] = name;
  journal_locked(entry);
  return true;
}

std::shared_ptr<const RegistrySnapshot> Registry::list_descriptions() const {
  std::lock_guard lock(mu_);
  if (!cached_) {
    auto snapshot = std::make_shared<RegistrySnapshot>();
    snapshot->descriptions = descriptions_;
    snapshot->instances = instances_;
    snapshot->version = version_;
    cached_ = std::move(snapshot);
  }
  return cached_;
}

std::vector<ServiceInstance> Registry::resolve_instances(
    std::string_view name) const {
  std::lock_guard lock(mu_);
  auto described = std::any_of(descriptions_.begin(), descriptions_.end(),
                               [&](const auto& d) { return d.name == name; });
  if (!described) {
    throw RegistryError(RegistryErrorKind::unknown_description,
                        "unknown description '" + std::string(name) + "'");
  }
  std::vector<ServiceInstance> out;
  for (const auto& i : instances_) {
    if (i.description_name == name) out.push_back(i);
  }
  auto rank = [](Health h) {
    switch (h) {
      case Health::healthy: return 0;
      case Health::unknown: return 1;
      case Health::unreachable: return 2;
    }
    return 3;
  };
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return std::pair(rank(a.health), a.instance_id) <
           std::pair(rank(b.health), b.instance_id);
  });
  return out;
}

bool Registry::mark_health(std::string_view instance_id, Health health) {
  std::lock_guard lock(mu_);
  for (auto& i : instances_) {
    if (i.instance_id == instance_id) {
      if (i.health != health) {
        i.health = health;
        mutated_locked();
      }
      return true;
    }
  }
  return false;
}

void Registry::load_manifest(const ServiceManifest& manifest) {
  for (const auto& d : manifest.descriptions) register_description(d);
  for (const auto& i : manifest.instances) register_instance(i);
}

std::uint64_t Registry::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

}  // namespace esp
