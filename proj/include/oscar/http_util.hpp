#pragma once

// Small helpers shared by the HTTP clients: endpoint URL splitting and a
// configured httplib::Client.

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>

#include "oscar/errors.hpp"

namespace oscar::http {

struct Endpoint {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/something" without trailing slash
};

/// Splits "http://host:port/prefix" into origin and path prefix.
inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw BackendError("endpoint URL needs a scheme (http://...): '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) ep.path_prefix = url.substr(path_start);
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

inline std::unique_ptr<httplib::Client> make_client(const Endpoint& ep,
                                                    std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(ep.origin);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client->set_connection_timeout(sec.count(), usec.count());
  client->set_read_timeout(sec.count(), usec.count());
  client->set_write_timeout(sec.count(), usec.count());
  return client;
}

/// POSTs a JSON body and returns the parsed response body.
/// Transport failures and non-2xx statuses become BackendError.
inline std::string post_json(httplib::Client& client, const Endpoint& ep, const std::string& path,
                             const std::string& body) {
  auto res = client.Post(ep.path_prefix + path, body, "application/json");
  if (!res)
    throw BackendError("POST " + ep.origin + ep.path_prefix + path + " failed (" +
                       httplib::to_string(res.error()) +
                       "); check that the service is running and retry");
  if (res->status < 200 || res->status >= 300)
    throw BackendError("POST " + ep.origin + ep.path_prefix + path + " returned HTTP " +
                       std::to_string(res->status) + "; retry later or check the service log");
  return res->body;
}

}  // namespace oscar::http
