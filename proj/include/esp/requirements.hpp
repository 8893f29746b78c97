#pragma once

// Requirements handler: turns configurator selections or explicit request
// documents into validated formal requests.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esp/domain.hpp"
#include "esp/registry.hpp"

namespace esp {

enum class Feature { tirepressure, charging, carwash, booking, navigation };

std::string_view to_string(Feature f);
std::optional<Feature> feature_from_string(std::string_view s);

struct ConfiguratorSelection {
  std::string row_id;
  std::optional<std::string> spot_preference;
  std::set<Feature> features;
  int max_parking_time = 0;  // minutes
  std::string operator_id;
};

ConfiguratorSelection selection_from_json(const json& j);
ordered_json selection_to_json(const ConfiguratorSelection& sel);

enum class RequestSource { configurator, explicit_request };

std::string_view to_string(RequestSource s);

struct RequestEnvelope {
  std::string request_id;
  FormalRequest formal;
  RequestSource source = RequestSource::explicit_request;
  Clock::time_point created_at{};
};

ordered_json envelope_to_json(const RequestEnvelope& envelope);

/// One row of the feature -> goal table. Each goal argument is the request's
/// environment object of the listed type.
struct FeatureGoal {
  Feature feature;
  std::string predicate;
  std::vector<std::string> arg_types;
};

/// Data-driven mapping from configurator features to goal conjuncts. Row
/// order is the conjunct order of generated goals.
struct FeatureMapping {
  std::vector<FeatureGoal> rows;
  /// Environment objects emitted for every configurator request, in order.
  /// `source` names the selection field copied into the value: "spot",
  /// "operator", "max_parking_time", or empty for none.
  struct Object {
    std::string name;
    std::string type;
    std::string source;
  };
  std::vector<Object> objects;

  static FeatureMapping defaults();
  static FeatureMapping from_json(const json& j);
};

class InvalidSelection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RequestParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RequestValidationError : public std::runtime_error {
 public:
  explicit RequestValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Implicit (sensor-driven) elicitation. Only the interface exists; no
/// recognizer ships with the platform.
class ImplicitRequirementSource {
 public:
  virtual ~ImplicitRequirementSource() = default;
  virtual std::optional<FormalRequest> observe(const json& sensor_sample) = 0;
};

class RequirementsHandler {
 public:
  explicit RequirementsHandler(std::shared_ptr<const DomainModel> domain,
                               FeatureMapping mapping = FeatureMapping::defaults());

  /// Deterministic apart from request_id and created_at.
  RequestEnvelope configurator_to_request(const ConfiguratorSelection& sel);

  /// Parses the wire format and validates it.
  RequestEnvelope accept_explicit(std::string_view document);

  /// Formal request built from a selection, without an envelope.
  FormalRequest formalize(const ConfiguratorSelection& sel) const;

  const FeatureMapping& mapping() const { return mapping_; }

 private:
  std::string next_request_id();

  std::shared_ptr<const DomainModel> domain_;
  FeatureMapping mapping_;
  std::atomic<std::uint64_t> counter_{0};
};

/// Throws InvalidSelection with the reason when an invariant is broken.
void check_selection(const ConfiguratorSelection& sel);

}  // namespace esp
