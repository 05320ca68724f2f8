#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kpc {

enum class Role { User, Assistant };

struct Message {
  Role role;
  std::string content;
};

struct Usage {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;

  Usage& operator+=(const Usage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
};

// Which step of the chain a request belongs to. The mock keys its script on
// (source id, stage).
enum class Stage { Chain1, Chain2, Combined };

std::string_view to_string(Stage s);
std::string_view to_string(Role r);

struct RequestTag {
  std::string source_id;
  Stage stage = Stage::Chain1;
};

struct Completion {
  std::string text;
  Usage usage;
  double latency_ms = 0.0;
};

// One request/response pair as persisted to transcript.jsonl.
struct ChatExchange {
  RequestTag tag;
  std::string system;
  std::vector<Message> turns;  // request turns; alternates starting with user
  std::string response;
  Usage usage;
  double latency_ms = 0.0;

  // JSON line; the system prompt is recorded by hash and length only.
  nlohmann::json to_json() const;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  // Implementations must be safe to call from several threads at once.
  virtual Completion complete(std::string_view system, std::span<const Message> turns,
                              const RequestTag& tag) = 0;

  virtual std::string name() const = 0;
};

enum class ProviderKind { Mock, OpenAI, Anthropic };

std::string_view to_string(ProviderKind k);
ProviderKind provider_kind_from_string(std::string_view s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Mock;
  std::string base_url;
  std::string model_name;
  std::string api_key_env;
  double temperature = 0.0;
  int max_tokens = 4096;
  double timeout_s = 60.0;
  int max_retries = 3;
  int requests_per_minute = 50;

  // Throws ConfigError when temperature < 0, timeout <= 0 or other fields are
  // out of range.
  void validate() const;

  nlohmann::json to_json() const;
  static ProviderConfig from_json(const nlohmann::json& j);
  // Defaults for the named provider, e.g. "openai", "anthropic", "deepseek".
  static ProviderConfig preset(std::string_view name);
};

// Rough deterministic token count: runs of alphanumerics (and UTF-8 bytes)
// count as one token, every other non-space byte as one.
std::uint64_t estimate_tokens(std::string_view text);

// JSON payload of the last <tag>...</tag> region that parses, with code
// fences stripped. Falls back to the last balanced JSON object anywhere in the
// response. Throws NoAnswerError when nothing parses.
std::string extract_tagged_json(std::string_view response, std::string_view tag);

// ------------------------------------------------------------------ clocks

class Clock {
 public:
  using Millis = std::chrono::milliseconds;
  virtual ~Clock() = default;
  virtual Millis now() = 0;
  virtual void sleep_for(Millis d) = 0;
};

class SystemClock final : public Clock {
 public:
  Millis now() override;
  void sleep_for(Millis d) override;
  static SystemClock& instance();
};

// Time only moves when someone sleeps. Thread-safe.
class VirtualClock final : public Clock {
 public:
  Millis now() override;
  void sleep_for(Millis d) override;

 private:
  std::mutex mu_;
  Millis now_{0};
};

// Sliding-window limiter: at most `per_minute` grants in any 60 s window.
// acquire() blocks (on the given clock) until a grant is available; grants
// are serialized across threads.
class RateLimiter {
 public:
  RateLimiter(int per_minute, Clock& clock);

  // Returns the time of the grant.
  Clock::Millis acquire();

 private:
  int per_minute_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Clock::Millis> grants_;
};

}  // namespace kpc
