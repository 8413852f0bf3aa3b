#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "callforge/eval.hpp"

namespace callforge {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string &url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public ModelTransport {
 public:
  explicit HttpTransport(const ModelConfig &cfg) : endpoint_(split_endpoint(cfg.endpoint)), timeout_(cfg.request_timeout) {
    if (const char *key = std::getenv(cfg.api_key_env.c_str()); key && *key) token_ = key;
  }

  HttpReply post(const std::string &body) override {
    httplib::Client client(endpoint_.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    HttpReply reply;
    auto res = client.Post(endpoint_.path, headers, body, "application/json");
    if (!res) {
      reply.error = "connection failed: " + httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    if (res->has_header("Retry-After")) {
      try {
        reply.retry_after_s = std::stod(res->get_header_value("Retry-After"));
      } catch (const std::exception &) {
      }
    }
    return reply;
  }

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
  std::string token_;
};

}  // namespace

std::unique_ptr<ModelTransport> make_http_transport(const ModelConfig &cfg) {
  return std::make_unique<HttpTransport>(cfg);
}

}  // namespace callforge
