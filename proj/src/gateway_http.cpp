#include <algorithm>
#include <cctype>
#include <chrono>

#include <httplib.h>

#include "wap/gateway.hpp"

namespace wap::gateway {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

void fetch_origin(HttpExchange& ex, Millis timeout) {
  const HttpUrl url = parse_http_url(ex.url);
  httplib::Client client(url.host, url.port);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  client.set_keep_alive(false);

  httplib::Headers headers;
  std::string content_type;
  for (const auto& [name, value] : ex.request_headers) {
    if (iequals(name, "Host")) continue;
    if (iequals(name, "Content-Type")) {
      content_type = value;
      continue;
    }
    headers.emplace(name, value);
  }

  const auto started = std::chrono::steady_clock::now();
  httplib::Result result =
      ex.method == "POST"
          ? client.Post(url.target, headers, reinterpret_cast<const char*>(ex.request_body.data()),
                        ex.request_body.size(),
                        content_type.empty() ? "application/octet-stream" : content_type)
          : client.Get(url.target, headers);
  if (!result) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const httplib::Error err = result.error();
    // A connect that never completes is an unreachable origin; a read that
    // runs out the clock is a slow one.
    if (err == httplib::Error::Read && elapsed >= timeout * 9 / 10)
      throw Error(Errc::OriginTimeout, url.host + ": no response within " +
                                           std::to_string(timeout.count()) + " ms");
    throw Error(Errc::OriginUnreachable, url.host + ":" + std::to_string(url.port) + ": " +
                                             httplib::to_string(err));
  }
  ex.status = result->status;
  ex.response_headers.clear();
  for (const auto& [name, value] : result->headers) ex.response_headers.emplace_back(name, value);
  ex.response_body = to_bytes(result->body);
}

}  // namespace wap::gateway
