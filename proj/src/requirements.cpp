#include "esp/requirements.hpp"

#include <algorithm>
#include <cstdio>

namespace esp {

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::tirepressure: return "tirepressure";
    case Feature::charging: return "charging";
    case Feature::carwash: return "carwash";
    case Feature::booking: return "booking";
    case Feature::navigation: return "navigation";
  }
  return "?";
}

std::optional<Feature> feature_from_string(std::string_view s) {
  for (Feature f : {Feature::tirepressure, Feature::charging, Feature::carwash,
                    Feature::booking, Feature::navigation}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::string_view to_string(RequestSource s) {
  return s == RequestSource::configurator ? "configurator" : "explicit";
}

ConfiguratorSelection selection_from_json(const json& j) {
  ConfiguratorSelection sel;
  try {
    sel.row_id = j.value("row_id", std::string());
    if (j.contains("spot_preference") && j["spot_preference"].is_string() &&
        !j["spot_preference"].get<std::string>().empty()) {
      sel.spot_preference = j["spot_preference"].get<std::string>();
    }
    for (const auto& f : j.at("features")) {
      auto feature = feature_from_string(f.get<std::string>());
      if (!feature) {
        throw InvalidSelection("unknown feature '" + f.get<std::string>() + "'");
      }
      sel.features.insert(*feature);
    }
    sel.max_parking_time = j.value("max_parking_time", 0);
    sel.operator_id = j.value("operator", std::string());
  } catch (const json::exception& e) {
    throw InvalidSelection(std::string("malformed selection: ") + e.what());
  }
  return sel;
}

ordered_json selection_to_json(const ConfiguratorSelection& sel) {
  ordered_json out;
  out["row_id"] = sel.row_id;
  out["spot_preference"] = sel.spot_preference ? ordered_json(*sel.spot_preference)
                                               : ordered_json(nullptr);
  out["features"] = ordered_json::array();
  for (Feature f : sel.features) out["features"].push_back(to_string(f));
  out["max_parking_time"] = sel.max_parking_time;
  out["operator"] = sel.operator_id;
  return out;
}

ordered_json envelope_to_json(const RequestEnvelope& envelope) {
  ordered_json out;
  out["request_id"] = envelope.request_id;
  out["source"] = to_string(envelope.source);
  out["created_at"] = to_epoch_ms(envelope.created_at);
  out["request"] = request_to_json(envelope.formal);
  return out;
}

FeatureMapping FeatureMapping::defaults() {
  FeatureMapping m;
  m.rows = {
      {Feature::tirepressure, "tirepressurecheck", {"reservationnr"}},
      {Feature::charging, "charging", {"reservationnr"}},
      {Feature::carwash, "carwash", {"reservationnr"}},
      {Feature::booking,
       "bookeparking",
       {"parkingid", "reservationnr", "maxparkingtime"}},
      {Feature::navigation, "navigation", {"parkingid"}},
  };
  m.objects = {
      {"p1", "parkingid", "spot"},
      {"b1", "operatorid", "operator"},
      {"r1", "reservationnr", ""},
      {"m1", "maxparkingtime", "max_parking_time"},
      {"g1", "bookedservice", ""},
  };
  return m;
}

FeatureMapping FeatureMapping::from_json(const json& j) {
  FeatureMapping m;
  try {
    for (const auto& row : j.at("rows")) {
      auto f = feature_from_string(row.at("feature").get<std::string>());
      if (!f) throw InvalidSelection("unknown feature in mapping");
      m.rows.push_back({*f, row.at("predicate").get<std::string>(),
                        row.at("args").get<std::vector<std::string>>()});
    }
    for (const auto& o : j.at("objects")) {
      m.objects.push_back({o.at("name").get<std::string>(),
                           o.at("type").get<std::string>(),
                           o.value("source", std::string())});
    }
  } catch (const json::exception& e) {
    throw InvalidSelection(std::string("malformed feature mapping: ") + e.what());
  }
  return m;
}

RequestValidationError::RequestValidationError(ValidationReport report)
    : std::runtime_error([&] {
        std::string msg = "request failed validation:";
        for (const auto& v : report) {
          msg += "\n  " + std::string(to_string(v.kind)) + " at " + v.location +
                 ": " + v.detail;
        }
        return msg;
      }()),
      report_(std::move(report)) {}

void check_selection(const ConfiguratorSelection& sel) {
  if (sel.features.empty()) throw InvalidSelection("no feature selected");
  for (Feature f : sel.features) {
    if (f != Feature::booking && !sel.features.contains(Feature::booking)) {
      throw InvalidSelection("feature '" + std::string(to_string(f)) +
                             "' requires booking");
    }
  }
  if (sel.max_parking_time <= 0) {
    throw InvalidSelection("max_parking_time must be positive");
  }
  if (sel.operator_id.empty()) throw InvalidSelection("operator missing");
}

RequirementsHandler::RequirementsHandler(
    std::shared_ptr<const DomainModel> domain, FeatureMapping mapping)
    : domain_(std::move(domain)), mapping_(std::move(mapping)) {}

std::string RequirementsHandler::next_request_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "req-%06llu",
                static_cast<unsigned long long>(++counter_));
  return buf;
}

FormalRequest RequirementsHandler::formalize(
    const ConfiguratorSelection& sel) const {
  check_selection(sel);
  FormalRequest req;
  for (const auto& o : mapping_.objects) {
    std::string value;
    if (o.source == "spot") {
      value = sel.spot_preference.value_or("");
    } else if (o.source == "operator") {
      value = sel.operator_id;
    } else if (o.source == "max_parking_time") {
      value = std::to_string(sel.max_parking_time);
    }
    req.environment.push_back({o.name, o.type, value});
  }
  for (const auto& row : mapping_.rows) {
    if (!sel.features.contains(row.feature)) continue;
    Literal lit{row.predicate, {}};
    for (const auto& type : row.arg_types) {
      auto it = std::find_if(req.environment.begin(), req.environment.end(),
                             [&](const auto& o) { return o.type == type; });
      if (it == req.environment.end()) {
        throw InvalidSelection("mapping references type '" + type +
                               "' with no environment object");
      }
      lit.args.push_back(it->name);
    }
    req.goal.conjuncts.push_back(std::move(lit));
  }
  if (auto report = validate_request(req, *domain_); !report.empty()) {
    throw RequestValidationError(std::move(report));
  }
  return req;
}

RequestEnvelope RequirementsHandler::configurator_to_request(
    const ConfiguratorSelection& sel) {
  RequestEnvelope env;
  env.formal = formalize(sel);
  env.request_id = next_request_id();
  env.source = RequestSource::configurator;
  env.created_at = Clock::now();
  return env;
}

RequestEnvelope RequirementsHandler::accept_explicit(std::string_view document) {
  json doc = json::parse(document.begin(), document.end(), nullptr, false);
  if (doc.is_discarded()) throw RequestParseError("request is not valid JSON");
  FormalRequest formal;
  try {
    formal = request_from_json(doc);
  } catch (const WireError& e) {
    throw RequestParseError(e.what());
  } catch (const GoalError& e) {
    throw RequestValidationError(
        {{ViolationKind::syntax, "goal", e.what()}});
  }
  if (auto report = validate_request(formal, *domain_); !report.empty()) {
    throw RequestValidationError(std::move(report));
  }
  RequestEnvelope env;
  env.formal = std::move(formal);
  env.request_id = next_request_id();
  env.source = RequestSource::explicit_request;
  env.created_at = Clock::now();
  return env;
}

}  // namespace esp
