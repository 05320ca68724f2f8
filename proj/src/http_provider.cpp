#include "kpc/http_provider.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cstdlib>

#include "kpc/errors.hpp"

namespace kpc {

using json = nlohmann::json;

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    // split "scheme://host[:port]/path"
    const auto scheme_end = request.url.find("://");
    const auto path_start =
        request.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = request.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    HttpResponse out;
    auto res = client.Post(path, headers, request.body, "application/json");
    if (!res) {
      const auto err = res.error();
      out.timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                      err == httplib::Error::ConnectionTimeout;
      out.transport_error = httplib::to_string(err);
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }
};

bool is_retryable_status(int status) { return status == 429 || status == 408 || status >= 500; }

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport() {
  return std::make_unique<HttplibTransport>();
}

HttpChatProvider::HttpChatProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
                                   std::shared_ptr<RateLimiter> limiter, Clock& clock)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      clock_(clock) {
  config_.validate();
  if (config_.kind == ProviderKind::Mock) throw ConfigError("HttpChatProvider needs a live provider kind");
}

std::string HttpChatProvider::name() const {
  return std::string(to_string(config_.kind)) + ":" + config_.model_name;
}

HttpRequest HttpChatProvider::build_request(std::string_view system, std::span<const Message> turns,
                                            const std::string& api_key) const {
  HttpRequest req;
  req.timeout = std::chrono::milliseconds(static_cast<long long>(config_.timeout_s * 1000));
  std::string base = config_.base_url;
  while (base.ends_with('/')) base.pop_back();

  json messages = json::array();
  json body = {{"model", config_.model_name},
               {"temperature", config_.temperature},
               {"max_tokens", config_.max_tokens}};
  if (config_.kind == ProviderKind::Anthropic) {
    req.url = base + "/messages";
    req.headers = {{"x-api-key", api_key}, {"anthropic-version", "2023-06-01"}};
    body["system"] = std::string(system);
  } else {
    req.url = base + "/chat/completions";
    req.headers = {{"Authorization", "Bearer " + api_key}};
    messages.push_back({{"role", "system"}, {"content", std::string(system)}});
  }
  for (const auto& m : turns) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  body["messages"] = std::move(messages);
  req.body = body.dump(-1, ' ', false, json::error_handler_t::replace);
  return req;
}

Completion HttpChatProvider::parse_response(const std::string& body) const {
  Completion out;
  try {
    const auto doc = json::parse(body);
    if (config_.kind == ProviderKind::Anthropic) {
      for (const auto& block : doc.at("content")) {
        if (block.value("type", "") == "text") out.text += block.at("text").get<std::string>();
      }
      if (doc.contains("usage")) {
        out.usage.input_tokens = doc["usage"].value("input_tokens", 0ULL);
        out.usage.output_tokens = doc["usage"].value("output_tokens", 0ULL);
      }
    } else {
      out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      if (doc.contains("usage")) {
        out.usage.input_tokens = doc["usage"].value("prompt_tokens", 0ULL);
        out.usage.output_tokens = doc["usage"].value("completion_tokens", 0ULL);
      }
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unexpected response body: ") + e.what());
  }
  return out;
}

Completion HttpChatProvider::complete(std::string_view system, std::span<const Message> turns,
                                      const RequestTag&) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("environment variable " + config_.api_key_env + " is not set");
  }
  const HttpRequest request = build_request(system, turns, key);

  HttpResponse last;
  for (int attempt = 0;; ++attempt) {
    if (limiter_) limiter_->acquire();
    const auto start = clock_.now();
    last = transport_->post(request);
    const auto elapsed = clock_.now() - start;

    if (last.status >= 200 && last.status < 300) {
      auto out = parse_response(last.body);
      out.latency_ms = static_cast<double>(elapsed.count());
      return out;
    }
    if (last.status == 401 || last.status == 403) {
      throw AuthError("provider rejected credentials (" + std::to_string(last.status) + "): " + last.body);
    }
    const bool retryable = last.status == 0 || is_retryable_status(last.status);
    if (!retryable) {
      throw ProviderError("provider returned " + std::to_string(last.status) + ": " + last.body);
    }
    if (attempt >= config_.max_retries) break;
    const auto backoff = std::min<long long>(1000LL << std::min(attempt, 5), 30'000);
    clock_.sleep_for(Clock::Millis(backoff));
  }

  const auto tries = std::to_string(config_.max_retries + 1);
  if (last.status == 429) throw RateLimitExhaustedError("still rate limited after " + tries + " attempts");
  if (last.status == 0 && last.timed_out) throw TimeoutError("timed out after " + tries + " attempts");
  if (last.status == 0) throw ProviderError("transport error: " + last.transport_error);
  throw ProviderError("provider returned " + std::to_string(last.status) + " after " + tries +
                      " attempts: " + last.body);
}

}  // namespace kpc
