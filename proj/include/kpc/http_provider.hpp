#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kpc/llm.hpp"

namespace kpc {

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
  bool timed_out = false;
  std::string transport_error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

// cpp-httplib backed transport (HTTPS via OpenSSL).
std::unique_ptr<HttpTransport> make_httplib_transport();

// Chat-completion client for OpenAI-compatible and Anthropic endpoints.
//
// Transient failures (429, 408, 5xx, transport errors) are retried with
// exponential backoff (1 s, 2 s, 4 s, ... capped at 30 s) up to
// max_retries. Every attempt first takes a grant from the shared limiter.
class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
                   std::shared_ptr<RateLimiter> limiter, Clock& clock = SystemClock::instance());

  Completion complete(std::string_view system, std::span<const Message> turns,
                      const RequestTag& tag) override;
  std::string name() const override;

  // Exposed for tests.
  HttpRequest build_request(std::string_view system, std::span<const Message> turns,
                            const std::string& api_key) const;
  Completion parse_response(const std::string& body) const;

 private:
  ProviderConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Clock& clock_;
};

}  // namespace kpc
