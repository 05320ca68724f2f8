#include "kpc/prompting.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "kpc/errors.hpp"
#include "kpc/io.hpp"
#include "kpc/semantic_model.hpp"

namespace kpc {

namespace detail {
// generated from templates/*.txt
extern const char* const kDefaultSystemTemplate;
extern const char* const kDefaultChain1Template;
extern const char* const kDefaultChain2Template;
extern const char* const kDefaultCombinedTemplate;
}  // namespace detail

namespace {

constexpr std::string_view kExamplesOpen = "<Examples>";
constexpr std::string_view kExamplesClose = "</Examples>";

struct PlaceholderHit {
  std::size_t begin;
  std::size_t end;
  std::string name;
};

bool is_name_char(char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; }

std::vector<PlaceholderHit> scan(std::string_view text) {
  std::vector<PlaceholderHit> hits;
  for (auto pos = text.find("{$"); pos != std::string_view::npos; pos = text.find("{$", pos + 1)) {
    auto i = pos + 2;
    while (i < text.size() && is_name_char(text[i])) ++i;
    if (i < text.size() && text[i] == '}' && i > pos + 2) {
      hits.push_back({pos, i + 1, std::string(text.substr(pos + 2, i - pos - 2))});
    }
  }
  return hits;
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

void check_placeholders(std::string_view text, const std::string& where,
                        const std::set<std::string>& required, const std::set<std::string>& optional) {
  std::set<std::string> seen;
  for (const auto& hit : scan(text)) {
    if (!required.contains(hit.name) && !optional.contains(hit.name)) {
      throw TemplateError(where + ": unknown placeholder {$" + hit.name + "}");
    }
    seen.insert(hit.name);
  }
  for (const auto& name : required) {
    if (!seen.contains(name)) throw TemplateError(where + ": missing placeholder {$" + name + "}");
  }
}

struct SystemParts {
  std::string_view head;   // up to and including <Examples>
  std::string_view block;  // repeated per example
  std::string_view tail;   // from </Examples>
};

SystemParts split_system(std::string_view tmpl) {
  if (count_of(tmpl, kExamplesOpen) != 1 || count_of(tmpl, kExamplesClose) != 1) {
    throw TemplateError("system template needs exactly one <Examples>...</Examples> region");
  }
  const auto open = tmpl.find(kExamplesOpen) + kExamplesOpen.size();
  const auto close = tmpl.find(kExamplesClose);
  if (close < open) throw TemplateError("system template: </Examples> before <Examples>");
  return {tmpl.substr(0, open), tmpl.substr(open, close - open), tmpl.substr(close)};
}

void require_json(std::string_view text, const std::string& what) {
  if (!nlohmann::json::accept(text)) throw TemplateError(what + " is not valid JSON");
}

}  // namespace

std::vector<std::string> placeholders_in(std::string_view text) {
  std::vector<std::string> out;
  for (auto& hit : scan(text)) out.push_back(std::move(hit.name));
  return out;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t cursor = 0;
  for (const auto& hit : scan(tmpl)) {
    const auto it = values.find(hit.name);
    if (it == values.end()) throw TemplateError("no value for placeholder {$" + hit.name + "}");
    out.append(tmpl.substr(cursor, hit.begin - cursor));
    out.append(it->second);
    cursor = hit.end;
  }
  out.append(tmpl.substr(cursor));
  return out;
}

void PromptTemplate::validate() const {
  const auto parts = split_system(system_template);
  std::string outside(parts.head);
  outside += parts.tail;
  check_placeholders(outside, "system template", {"ONTOLOGY"}, {});
  if (count_of(outside, "<Ontology>") != 1) {
    throw TemplateError("system template needs exactly one <Ontology> section");
  }
  check_placeholders(parts.block, "example block", {"TABLE", "STEP1", "STEP2"}, {"RULE1", "RULE2"});
  check_placeholders(chain1_template, "chain1 template", {"TABLE"}, {});
  check_placeholders(chain2_template, "chain2 template", {"STEP1"}, {});
  check_placeholders(combined_template, "combined template", {"TABLE"}, {});
}

std::string PromptTemplate::fingerprint() const {
  return sha256_hex(system_template + '\0' + chain1_template + '\0' + chain2_template + '\0' +
                    combined_template);
}

PromptTemplate PromptTemplate::defaults() {
  return {detail::kDefaultSystemTemplate, detail::kDefaultChain1Template,
          detail::kDefaultChain2Template, detail::kDefaultCombinedTemplate};
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& dir) {
  PromptTemplate t{read_file(dir / "system.txt"), read_file(dir / "chain1.txt"),
                   read_file(dir / "chain2.txt"), read_file(dir / "combined.txt")};
  t.validate();
  return t;
}

Rules Rules::load(const std::filesystem::path& dir) {
  return {read_file(dir / "step1.txt"), read_file(dir / "step2.txt")};
}

std::string build_system_prompt(const PromptTemplate& tmpl, std::string_view onto_json,
                                std::span<const ExampleBlock> examples, const Rules& rules) {
  if (examples.empty()) throw EmptyExamplesError("system prompt needs at least one example");
  tmpl.validate();
  require_json(onto_json, "ontology");

  const auto parts = split_system(tmpl.system_template);
  const std::map<std::string, std::string> head_values{{"ONTOLOGY", std::string(onto_json)}};

  std::string out = substitute(parts.head, head_values);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto label = "example " + std::to_string(i + 1);
    require_json(ex.table.text, label + " table");
    require_json(ex.step1_json, label + " step1");
    require_json(ex.step2_json, label + " step2");
    out += substitute(parts.block, {{"TABLE", ex.table.text},
                                    {"STEP1", ex.step1_json},
                                    {"STEP2", ex.step2_json},
                                    {"RULE1", rules.step1},
                                    {"RULE2", rules.step2}});
  }
  out += substitute(parts.tail, head_values);
  return out;
}

std::string build_chain1_prompt(const PromptTemplate& tmpl, const SerializedTable& table) {
  if (table.text.empty()) throw TemplateError("serialized table is empty");
  return substitute(tmpl.chain1_template, {{"TABLE", table.text}});
}

std::string build_chain2_prompt(const PromptTemplate& tmpl, std::string_view step1_answer) {
  try {
    parse_labels(step1_answer);
  } catch (const Error& e) {
    throw Step1ParseError(std::string("Step1 answer rejected: ") + e.what());
  }
  return substitute(tmpl.chain2_template, {{"STEP1", std::string(step1_answer)}});
}

std::string build_combined_prompt(const PromptTemplate& tmpl, const SerializedTable& table) {
  if (table.text.empty()) throw TemplateError("serialized table is empty");
  return substitute(tmpl.combined_template, {{"TABLE", table.text}});
}

PromptBundle make_prompt_bundle(const PromptTemplate& tmpl, std::string system_prompt,
                                const SerializedTable& table) {
  return {std::move(system_prompt), build_chain1_prompt(tmpl, table),
          [tmpl](std::string_view step1) { return build_chain2_prompt(tmpl, step1); }};
}

}  // namespace kpc
