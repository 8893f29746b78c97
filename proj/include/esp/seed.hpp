#pragma once

// Built-in parking scenario: domain, service manifest, flows and the demo
// request/composition documents. The same documents ship under data/.

#include <string>
#include <string_view>

#include "esp/composer.hpp"
#include "esp/domain.hpp"
#include "esp/engine.hpp"
#include "esp/registry.hpp"

namespace esp::seed {

std::string_view domain_document();
std::string_view services_document();
std::string_view flows_document();
std::string_view demo_request_document();
std::string_view demo_composition_document();

DomainModel domain();
ServiceManifest services();
std::vector<Flow> flows();
FormalRequest demo_request();
CompositionResult demo_composition();

/// One instance per seed description, all pointing at `base_url`.
std::vector<ServiceInstance> instances(const std::string& base_url);

}  // namespace esp::seed
