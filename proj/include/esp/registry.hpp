#pragma once

// Service registry: service descriptions (typed STRIPS-style interfaces) and
// the deployed instances that implement them.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esp/domain.hpp"

namespace esp {

using Clock = std::chrono::system_clock;

std::int64_t to_epoch_ms(Clock::time_point t);
Clock::time_point from_epoch_ms(std::int64_t ms);

struct Parameter {
  std::string variable;
  std::string type;

  bool operator==(const Parameter&) const = default;
};

struct ServiceDescription {
  std::string name;
  std::vector<Parameter> params;
  std::vector<Literal> preconditions;
  std::vector<Literal> add_effects;
  std::vector<Literal> delete_effects;
  std::string action_reference;  // tag of the flow(s) implementing it

  bool operator==(const ServiceDescription&) const = default;
};

enum class Health { unknown, healthy, unreachable };

std::string_view to_string(Health h);
Health health_from_string(std::string_view s);

struct ServiceInstance {
  std::string description_name;
  std::string base_url;
  std::string instance_id;  // assigned by the registry when empty
  Health health = Health::unknown;
  Clock::time_point registered_at{};
};

/// Immutable copy of registry contents at one version.
struct RegistrySnapshot {
  std::vector<ServiceDescription> descriptions;  // registration order
  std::vector<ServiceInstance> instances;
  std::uint64_t version = 0;

  const ServiceDescription* find(std::string_view name) const;
};

enum class RegistryErrorKind {
  duplicate_name,
  typecheck_failure,
  unknown_description,
  invalid_instance,
  malformed,
};

class RegistryError : public std::runtime_error {
 public:
  RegistryError(RegistryErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  RegistryErrorKind kind() const { return kind_; }

 private:
  RegistryErrorKind kind_;
};

/// Lists every typing problem of a description with its location, e.g.
/// "preconditions[0]: unknown object 'q'". Empty when well-typed.
std::vector<std::string> typecheck_description(const ServiceDescription& desc,
                                               const DomainModel& domain);

bool is_valid_base_url(std::string_view url);

ordered_json description_to_json(const ServiceDescription& desc);
ServiceDescription description_from_json(const json& j);
ordered_json instance_to_json(const ServiceInstance& inst);
ServiceInstance instance_from_json(const json& j);
ordered_json snapshot_to_json(const RegistrySnapshot& snapshot);
RegistrySnapshot snapshot_from_json(const json& j);

struct ServiceManifest {
  std::vector<ServiceDescription> descriptions;
  std::vector<ServiceInstance> instances;
};

ServiceManifest service_manifest_from_json(const json& j);
ordered_json service_manifest_to_json(const ServiceManifest& manifest);

/// Thread-safe registry. All mutations are serialized and bump the version;
/// optionally journaled to an append-only JSON-lines file that is replayed on
/// construction.
class Registry {
 public:
  explicit Registry(std::shared_ptr<const DomainModel> domain,
                    std::optional<std::filesystem::path> journal = {});

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  std::string register_description(ServiceDescription desc);
  std::string register_instance(ServiceInstance inst);
  bool remove_description(std::string_view name);

  std::shared_ptr<const RegistrySnapshot> list_descriptions() const;

  /// Healthy first, then unknown, then unreachable; ties by instance_id.
  std::vector<ServiceInstance> resolve_instances(std::string_view name) const;

  /// Records a health observation. Returns false for unknown instance ids.
  bool mark_health(std::string_view instance_id, Health health);

  void load_manifest(const ServiceManifest& manifest);

  std::uint64_t version() const;
  const DomainModel& domain() const { return *domain_; }
  std::shared_ptr<const DomainModel> domain_ptr() const { return domain_; }

 private:
  std::string put_description_locked(ServiceDescription desc);
  std::string put_instance_locked(ServiceInstance inst);
  bool remove_description_locked(std::string_view name);
  void journal_locked(const ordered_json& entry);
  void replay(const std::filesystem::path& path);
  void mutated_locked();

  std::shared_ptr<const DomainModel> domain_;
  mutable std::mutex mu_;
  std::vector<ServiceDescription> descriptions_;
  std::vector<ServiceInstance> instances_;
  std::uint64_t version_ = 0;
  std::uint64_t next_instance_ = 1;
  mutable std::shared_ptr<const RegistrySnapshot> cached_;
  std::optional<std::ofstream> journal_;
};

}  // namespace esp
