#include "esp/platform.hpp"

#include "httplib.h"

namespace esp {

namespace {

constexpr const char* kSelectionType = "application/vnd.esp.selection+json";

void reply(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view kind,
                 const std::string& message, ordered_json extra = nullptr) {
  ordered_json body{{"error", kind}, {"message", message}};
  if (!extra.is_null()) body["details"] = std::move(extra);
  reply(res, status, body);
}

int registry_status(RegistryErrorKind kind) {
  switch (kind) {
    case RegistryErrorKind::duplicate_name: return 409;
    case RegistryErrorKind::unknown_description: return 404;
    case RegistryErrorKind::typecheck_failure:
    case RegistryErrorKind::invalid_instance: return 422;
    case RegistryErrorKind::malformed: return 400;
  }
  return 400;
}

std::string_view registry_kind(RegistryErrorKind kind) {
  switch (kind) {
    case RegistryErrorKind::duplicate_name: return "DuplicateName";
    case RegistryErrorKind::unknown_description: return "UnknownDescription";
    case RegistryErrorKind::typecheck_failure: return "TypecheckFailure";
    case RegistryErrorKind::invalid_instance: return "InvalidInstance";
    case RegistryErrorKind::malformed: return "Malformed";
  }
  return "RegistryError";
}

json parse_json(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw RequestParseError("body is not valid JSON");
  return j;
}

// Maps library exceptions onto HTTP errors.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const RequestValidationError& e) {
    ordered_json report = ordered_json::array();
    for (const auto& v : e.report()) {
      report.push_back({{"kind", to_string(v.kind)},
                        {"location", v.location},
                        {"detail", v.detail}});
    }
    reply_error(res, 422, "ValidationError", e.what(), std::move(report));
  } catch (const RequestParseError& e) {
    reply_error(res, 400, "ParseError", e.what());
  } catch (const InvalidSelection& e) {
    reply_error(res, 422, "InvalidSelection", e.what());
  } catch (const UnknownRequest& e) {
    reply_error(res, 404, "UnknownRequest", e.what());
  } catch (const WrongPhase& e) {
    reply_error(res, 409, "WrongPhase", e.what());
  } catch (const MissingFlow& e) {
    reply_error(res, 422, "MissingFlow", e.what());
  } catch (const UnknownDescription& e) {
    reply_error(res, 422, "UnknownDescription", e.what());
  } catch (const BudgetExceeded& e) {
    reply_error(res, 503, "BudgetExceeded", e.what());
  } catch (const RegistryError& e) {
    reply_error(res, registry_status(e.kind()), registry_kind(e.kind()), e.what());
  } catch (const InvalidFlow& e) {
    reply_error(res, 422, "InvalidFlow", e.what());
  } catch (const UnknownActionReference& e) {
    reply_error(res, 422, "UnknownActionReference", e.what());
  }
}

}  // namespace

struct PlatformServer::Impl {
  Impl(Platform& platform, ServerOptions options)
      : platform(platform), options(std::move(options)) {
    routes();
  }

  void routes() {
    server.Post("/requests", [this](const httplib::Request& req,
                                    httplib::Response& res) {
      guarded(res, [&] {
        std::string id;
        if (req.get_header_value("Content-Type").rfind(kSelectionType, 0) == 0) {
          id = platform.submit_selection(selection_from_json(parse_json(req.body)));
        } else {
          id = platform.submit_document(req.body);
        }
        reply(res, 201, to_json(platform.status(id)));
      });
    });
    server.Get("/requests", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"requests", platform.request_ids()}});
    });
    server.Post(R"(/requests/([^/]+)/execute)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const std::string id = req.matches[1].str();
                    platform.execute(id);
                    reply(res, 202, to_json(platform.status(id)));
                  });
                });
    server.Get(R"(/requests/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   reply(res, 200, to_json(platform.status(req.matches[1].str())));
                 });
               });
    server.Get(R"(/requests/([^/]+)/events)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const std::string id = req.matches[1].str();
                   platform.status(id);  // 404 before the stream opens
                   auto sent = std::make_shared<std::size_t>(0);
                   res.set_chunked_content_provider(
                       "text/event-stream",
                       [this, id, sent](std::size_t, httplib::DataSink& sink) {
                         bool finished = false;
                         auto batch = platform.events(
                             id, *sent, std::chrono::milliseconds(500), &finished);
                         for (const auto& ev : batch) {
                           std::string frame = "event: " +
                                               ev["type"].get<std::string>() +
                                               "\ndata: " + ev.dump() + "\n\n";
                           if (!sink.write(frame.data(), frame.size())) return false;
                         }
                         *sent += batch.size();
                         if (finished && batch.empty()) {
                           sink.done();
                           return true;
                         }
                         return sink.is_writable();
                       });
                 });
               });

    server.Get("/registry/descriptions",
               [this](const httplib::Request&, httplib::Response& res) {
                 reply(res, 200, snapshot_to_json(*platform.registry().list_descriptions()));
               });
    server.Put("/registry/descriptions",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   std::string name = platform.registry().register_description(
                       description_from_json(parse_json(req.body)));
                   reply(res, 201, {{"name", name},
                                    {"version", platform.registry().version()}});
                 });
               });
    server.Delete(R"(/registry/descriptions/([^/]+))",
                  [this](const httplib::Request& req, httplib::Response& res) {
                    const std::string name = req.matches[1].str();
                    if (platform.registry().remove_description(name)) {
                      reply(res, 200, {{"removed", name},
                                       {"version", platform.registry().version()}});
                    } else {
                      reply_error(res, 404, "UnknownDescription",
                                  "unknown description '" + name + "'");
                    }
                  });
    server.Get(R"(/registry/descriptions/([^/]+)/instances)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   ordered_json out = ordered_json::array();
                   for (const auto& inst :
                        platform.registry().resolve_instances(req.matches[1].str())) {
                     out.push_back(instance_to_json(inst));
                   }
                   reply(res, 200, {{"instances", out}});
                 });
               });
    server.Put("/registry/instances",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   std::string id = platform.registry().register_instance(
                       instance_from_json(parse_json(req.body)));
                   reply(res, 201, {{"instance_id", id},
                                    {"version", platform.registry().version()}});
                 });
               });
    server.Get("/flows", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, flow_manifest_to_json(platform.flows().all()));
    });
    server.Put("/flows", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string id = platform.flows().register_flow(
            flow_from_json(parse_json(req.body)),
            *platform.registry().list_descriptions());
        reply(res, 201, {{"flow_id", id}});
      });
    });

    server.Get("/lot", [this](const httplib::Request&, httplib::Response& res) {
      if (options.simulator_url.empty()) {
        reply_error(res, 503, "NoSimulator", "no simulator configured");
        return;
      }
      HttpResult r = transport.send(options.simulator_url, {"GET", "/lot", ""},
                                    std::chrono::milliseconds(2000));
      if (r.failure != TransportFailure::none) {
        reply_error(res, 502, "SimulatorUnreachable", r.error);
        return;
      }
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });

    if (!options.ui_dir.empty()) server.set_mount_point("/ui", options.ui_dir);
  }

  Platform& platform;
  ServerOptions options;
  HttpClientTransport transport;
  httplib::Server server;
};

PlatformServer::PlatformServer(Platform& platform, ServerOptions options)
    : impl_(std::make_unique<Impl>(platform, std::move(options))) {}

PlatformServer::~PlatformServer() { stop(); }

int PlatformServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw std::runtime_error("cannot bind platform server");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

bool PlatformServer::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  return impl_->server.listen(host, port);
}

void PlatformServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string PlatformServer::base_url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace esp
