#include "kpc/llm.hpp"

#include <cctype>
#include <optional>
#include <thread>

#include "kpc/errors.hpp"
#include "kpc/io.hpp"

namespace kpc {

using json = nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Chain1: return "chain1";
    case Stage::Chain2: return "chain2";
    case Stage::Combined: return "combined";
  }
  return "?";
}

std::string_view to_string(Role r) { return r == Role::User ? "user" : "assistant"; }

std::string_view to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::Mock: return "mock";
    case ProviderKind::OpenAI: return "openai";
    case ProviderKind::Anthropic: return "anthropic";
  }
  return "?";
}

ProviderKind provider_kind_from_string(std::string_view s) {
  if (s == "mock") return ProviderKind::Mock;
  if (s == "openai") return ProviderKind::OpenAI;
  if (s == "anthropic") return ProviderKind::Anthropic;
  throw ConfigError("unknown provider kind '" + std::string(s) + "'");
}

json ChatExchange::to_json() const {
  json turns_json = json::array();
  for (const auto& m : turns) turns_json.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"source_id", tag.source_id},
          {"stage", to_string(tag.stage)},
          {"system_sha256", sha256_hex(system)},
          {"system_chars", system.size()},
          {"turns", std::move(turns_json)},
          {"response", response},
          {"usage", {{"input_tokens", usage.input_tokens}, {"output_tokens", usage.output_tokens}}},
          {"latency_ms", latency_ms}};
}

// ------------------------------------------------------------ provider config

void ProviderConfig::validate() const {
  if (temperature < 0) throw ConfigError("temperature must be >= 0");
  if (timeout_s <= 0) throw ConfigError("timeout must be > 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (requests_per_minute <= 0) throw ConfigError("requests_per_minute must be positive");
  if (kind != ProviderKind::Mock) {
    if (base_url.empty()) throw ConfigError("base_url is required for live providers");
    if (model_name.empty()) throw ConfigError("model_name is required for live providers");
    if (api_key_env.empty()) throw ConfigError("api_key_env is required for live providers");
  }
}

json ProviderConfig::to_json() const {
  return {{"kind", to_string(kind)},         {"base_url", base_url},
          {"model_name", model_name},        {"api_key_env", api_key_env},
          {"temperature", temperature},      {"max_tokens", max_tokens},
          {"timeout_s", timeout_s},          {"max_retries", max_retries},
          {"requests_per_minute", requests_per_minute}};
}

ProviderConfig ProviderConfig::from_json(const json& j) {
  ProviderConfig c;
  if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
  try {
    if (j.contains("kind")) c.kind = provider_kind_from_string(j.at("kind").get<std::string>());
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model_name", c.model_name);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  c.validate();
  return c;
}

ProviderConfig ProviderConfig::preset(std::string_view name) {
  ProviderConfig c;
  if (name == "mock") return c;
  if (name == "openai") {
    c.kind = ProviderKind::OpenAI;
    c.base_url = "https://api.openai.com/v1";
    c.model_name = "gpt-4-turbo";
    c.api_key_env = "OPENAI_API_KEY";
  } else if (name == "deepseek") {
    c.kind = ProviderKind::OpenAI;
    c.base_url = "https://api.deepseek.com/v1";
    c.model_name = "deepseek-chat";
    c.api_key_env = "DEEPSEEK_API_KEY";
  } else if (name == "anthropic") {
    c.kind = ProviderKind::Anthropic;
    c.base_url = "https://api.anthropic.com/v1";
    c.model_name = "claude-3-5-sonnet-20240620";
    c.api_key_env = "ANTHROPIC_API_KEY";
  } else {
    throw ConfigError("unknown provider preset '" + std::string(name) + "'");
  }
  return c;
}

// ------------------------------------------------------------ tokens

std::uint64_t estimate_tokens(std::string_view text) {
  std::uint64_t count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool word = std::isalnum(c) || c >= 0x80 || c == '_';
    if (word) {
      if (!in_word) ++count;
      in_word = true;
      continue;
    }
    in_word = false;
    if (!std::isspace(c)) ++count;
  }
  return count;
}

// ------------------------------------------------------------ extraction

namespace {

std::string_view trim_view(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string_view strip_fences(std::string_view s) {
  s = trim_view(s);
  if (s.starts_with("```")) {
    const auto nl = s.find('\n');
    s = nl == std::string_view::npos ? std::string_view{} : s.substr(nl + 1);
  }
  s = trim_view(s);
  if (s.ends_with("```")) s.remove_suffix(3);
  return trim_view(s);
}

bool parses(std::string_view s) { return !s.empty() && json::accept(s); }

// End (exclusive) of the brace-balanced object starting at `open`, honouring
// JSON string escapes. nullopt when unbalanced.
std::optional<std::size_t> match_object(std::string_view s, std::size_t open) {
  int level = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++level;
    } else if (c == '}') {
      if (--level == 0) return i + 1;
    }
  }
  return std::nullopt;
}

std::optional<std::string_view> last_json_object(std::string_view s) {
  std::optional<std::string_view> found;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] != '{') {
      ++i;
      continue;
    }
    const auto end = match_object(s, i);
    if (end && parses(s.substr(i, *end - i))) {
      found = s.substr(i, *end - i);
      i = *end;
    } else {
      ++i;
    }
  }
  return found;
}

}  // namespace

std::string extract_tagged_json(std::string_view response, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";

  std::vector<std::string_view> regions;
  for (std::size_t pos = response.find(open); pos != std::string_view::npos;) {
    const auto start = pos + open.size();
    const auto end = response.find(close, start);
    if (end == std::string_view::npos) break;
    regions.push_back(response.substr(start, end - start));
    pos = response.find(open, end + close.size());
  }

  for (auto it = regions.rbegin(); it != regions.rend(); ++it) {
    const auto body = strip_fences(*it);
    if (parses(body)) return std::string(body);
    // e.g. a <Rule> block copied in front of the JSON
    if (const auto obj = last_json_object(*it)) return std::string(*obj);
  }
  if (const auto obj = last_json_object(response)) return std::string(*obj);
  throw NoAnswerError("no parseable JSON answer for <" + std::string(tag) + ">");
}

// ------------------------------------------------------------ clocks / limiter

Clock::Millis SystemClock::now() {
  return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(Millis d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

SystemClock& SystemClock::instance() {
  static SystemClock clock;
  return clock;
}

Clock::Millis VirtualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_for(Millis d) {
  std::lock_guard lock(mu_);
  if (d.count() > 0) now_ += d;
}

RateLimiter::RateLimiter(int per_minute, Clock& clock) : per_minute_(per_minute), clock_(clock) {
  if (per_minute_ <= 0) throw ConfigError("requests_per_minute must be positive");
}

Clock::Millis RateLimiter::acquire() {
  constexpr Clock::Millis kWindow{60'000};
  std::lock_guard lock(mu_);
  auto now = clock_.now();
  while (!grants_.empty() && grants_.front() <= now - kWindow) grants_.pop_front();
  if (static_cast<int>(grants_.size()) >= per_minute_) {
    clock_.sleep_for(grants_.front() + kWindow - now);
    now = clock_.now();
    while (!grants_.empty() && grants_.front() <= now - kWindow) grants_.pop_front();
  }
  grants_.push_back(now);
  return now;
}

}  // namespace kpc
