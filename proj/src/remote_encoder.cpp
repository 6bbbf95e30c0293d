#include "triage/remote_encoder.hpp"

#include <chrono>

#include "httplib.h"
#include "json.hpp"

namespace triage {
namespace {

using json = nlohmann::json;
using Kind = RemoteEncoderError::Kind;

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme_end == std::string_view::npos || (scheme != "http" && scheme != "https")) {
    throw InvalidArgument("remote encoder endpoint must be an http URL: " +
                          std::string(url));
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_begin == std::string_view::npos) {
    e.scheme_host_port = std::string(url);
    e.path = "/";
  } else {
    e.scheme_host_port = std::string(url.substr(0, path_begin));
    e.path = std::string(url.substr(path_begin));
  }
  return e;
}

}  // namespace

std::vector<Embedding> remote_encode(std::string_view endpoint,
                                     std::span<const std::string> texts,
                                     int timeout_ms) {
  const Endpoint ep = parse_endpoint(endpoint);
  httplib::Client client(ep.scheme_host_port);
  const auto timeout = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const json request = {{"texts", json(std::vector<std::string>(
                                      texts.begin(), texts.end()))}};
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(ep.path, request.dump(), "application/json");
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= timeout * 9 / 10)) {
      throw RemoteEncoderError(Kind::timeout,
                               "remote encoder timed out after " +
                                   std::to_string(timeout_ms) + " ms");
    }
    throw RemoteEncoderError(Kind::transport,
                             "remote encoder request failed: " +
                                 httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw RemoteEncoderError(Kind::http_status,
                             "remote encoder returned HTTP " +
                                 std::to_string(res->status),
                             res->status);
  }

  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw RemoteEncoderError(Kind::malformed,
                             std::string("remote encoder body is not JSON: ") +
                                 e.what());
  }
  const auto it = body.find("vectors");
  if (!body.is_object() || it == body.end() || !it->is_array()) {
    throw RemoteEncoderError(Kind::malformed,
                             "remote encoder response lacks a 'vectors' array");
  }
  if (it->size() != texts.size()) {
    throw RemoteEncoderError(Kind::malformed,
                             "remote encoder returned " +
                                 std::to_string(it->size()) + " vectors for " +
                                 std::to_string(texts.size()) + " texts");
  }
  std::vector<Embedding> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_array()) {
      throw RemoteEncoderError(Kind::malformed, "vector entry is not an array");
    }
    Embedding e;
    e.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) {
        throw RemoteEncoderError(Kind::malformed, "vector entry is not numeric");
      }
      e.push_back(x.get<float>());
    }
    if (!out.empty() && e.size() != out.front().size()) {
      throw RemoteEncoderError(Kind::dimension_mismatch,
                               "remote encoder returned vectors of length " +
                                   std::to_string(out.front().size()) +
                                   " and " + std::to_string(e.size()));
    }
    normalize(e);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace triage
