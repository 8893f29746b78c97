#include "esp/parking.hpp"

#include "httplib.h"

namespace esp::parking {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const ParkingError& e) {
  reply(res, e.http_status(),
        {{"error", to_string(e.kind())}, {"message", e.what()}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ParkingError(ParkingErrorKind::bad_request, "body must be a JSON object");
  }
  return body;
}

// Accepts 120 or "120".
int minutes_field(const json& body, const char* key, int fallback) {
  if (!body.contains(key)) return fallback;
  const json& v = body[key];
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    try {
      std::size_t used = 0;
      int n = std::stoi(s, &used);
      if (used == s.size()) return n;
    } catch (const std::exception&) {
    }
  }
  throw ParkingError(ParkingErrorKind::invalid_duration,
                     std::string(key) + " must be an integer");
}

std::string string_field(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string()) return {};
  return body[key].get<std::string>();
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ParkingError& e) {
    reply_error(res, e);
  }
}

}  // namespace

struct ParkingServer::Impl {
  explicit Impl(ParkingLot& lot) : lot(lot) { routes(); }

  void routes() {
    server.Get(R"(/parking/([^/]+)/e-available)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   Availability a = lot.check_availability(
                       req.matches[1].str(), req.get_param_value("operator"));
                   reply(res, 200,
                         {{"available", a.available},
                          {"spot_id", a.spot_id ? json(*a.spot_id) : json(nullptr)}});
                 });
               });
    server.Post(R"(/parking/([^/]+)/book)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    json body = parse_body(req);
                    Reservation r = lot.book_spot(
                        req.matches[1].str(), string_field(body, "operator_id"),
                        minutes_field(body, "max_minutes", 0));
                    reply(res, 201, to_json(r));
                  });
                });
    server.Post(R"(/parking/([^/]+)/services/([^/]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    auto kind = service_kind_from_string(req.matches[2].str());
                    if (!kind) {
                      throw ParkingError(ParkingErrorKind::bad_request,
                                         "unknown service kind '" +
                                             req.matches[2].str() + "'");
                    }
                    json body = parse_body(req);
                    Confirmation c = lot.book_feature(
                        *kind, req.matches[1].str(),
                        string_field(body, "reservation_nr"),
                        minutes_field(body, "max_minutes", 1));
                    reply(res, 200,
                          {{"confirmation", c.token},
                           {"spot_id", c.spot_id},
                           {"reservation_nr", c.reservation_nr},
                           {"service", to_string(c.kind)}});
                  });
                });
    server.Get(R"(/parking/([^/]+)/navigation)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   auto steps = lot.navigation(req.matches[1].str());
                   reply(res, 200,
                         {{"spot_id", req.matches[1].str()}, {"directions", steps}});
                 });
               });
    server.Get("/lot", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, to_json(lot.get_state()));
    });
    server.Post("/lot/reset",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    json body = parse_body(req);
                    std::uint64_t seed = 0;
                    if (body.contains("seed") && body["seed"].is_number_unsigned()) {
                      seed = body["seed"].get<std::uint64_t>();
                    }
                    reply(res, 200, to_json(lot.reset(seed)));
                  });
                });
  }

  ParkingLot& lot;
  httplib::Server server;
};

ParkingServer::ParkingServer(ParkingLot& lot)
    : impl_(std::make_unique<Impl>(lot)) {}

ParkingServer::~ParkingServer() { stop(); }

int ParkingServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw std::runtime_error("cannot bind parking server");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ParkingServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

bool ParkingServer::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  return impl_->server.listen(host, port);
}

std::string ParkingServer::base_url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace esp::parking
