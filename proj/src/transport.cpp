#include "esp/engine.hpp"

#include "httplib.h"

namespace esp {

namespace {

// Splits "http://host:port/prefix" into the scheme-host-port part and a path
// prefix without trailing slash.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  std::size_t scheme = base_url.find("://");
  std::size_t start = scheme == std::string::npos ? 0 : scheme + 3;
  std::size_t slash = base_url.find('/', start);
  if (slash == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, slash), prefix};
}

}  // namespace

HttpResult HttpClientTransport::send(const std::string& base_url,
                                     const HttpRequest& request,
                                     std::chrono::milliseconds timeout) {
  auto [origin, prefix] = split_base_url(base_url);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_keep_alive(false);

  const std::string path = prefix + request.path;
  const char* content_type = "application/json";
  httplib::Result res{nullptr, httplib::Error::Unknown};
  if (request.method == "GET") {
    res = client.Get(path);
  } else if (request.method == "POST") {
    res = client.Post(path, request.body, content_type);
  } else if (request.method == "PUT") {
    res = client.Put(path, request.body, content_type);
  } else if (request.method == "DELETE") {
    res = client.Delete(path, request.body, content_type);
  } else {
    return {TransportFailure::connect, 0, "", "unsupported method " + request.method};
  }

  HttpResult out;
  if (!res) {
    const httplib::Error err = res.error();
    out.error = httplib::to_string(err);
    switch (err) {
      case httplib::Error::Connection:
      case httplib::Error::ConnectionTimeout:
      case httplib::Error::BindIPAddress:
      case httplib::Error::SSLConnection:
        out.failure = TransportFailure::connect;
        break;
      default:
        out.failure = TransportFailure::timeout;
        break;
    }
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace esp
