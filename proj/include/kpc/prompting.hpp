#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kpc/ingest.hpp"

namespace kpc {

// Placeholders are written {$NAME}. Known names:
//   ONTOLOGY              system template, outside <Examples>
//   TABLE, STEP1, STEP2   example block (inside <Examples>), chain prompts
//   RULE1, RULE2          example block, optional
//
// The system template holds exactly one <Examples>...</Examples> region; the
// text between the tags is the example block, repeated once per known source.
struct PromptTemplate {
  std::string system_template;
  std::string chain1_template;    // needs {$TABLE}
  std::string chain2_template;    // needs {$STEP1}
  std::string combined_template;  // needs {$TABLE}; single-prompt variant

  // Throws TemplateError on a missing or unknown placeholder or a malformed
  // <Examples> region.
  void validate() const;

  // SHA-256 over all four templates, recorded in run metadata.
  std::string fingerprint() const;

  // Templates shipped with the project (templates/*.txt, compiled in).
  static PromptTemplate defaults();
  // Reads system.txt, chain1.txt, chain2.txt and combined.txt from `dir`.
  static PromptTemplate load(const std::filesystem::path& dir);
};

// Expert-written text placed in the <Rule> block of each step.
struct Rules {
  std::string step1;
  std::string step2;

  static Rules load(const std::filesystem::path& dir);  // step1.txt, step2.txt
};

struct ExampleBlock {
  SerializedTable table;
  std::string step1_json;
  std::string step2_json;
};

// Every {$NAME} in `text`, in order of appearance (duplicates kept).
std::vector<std::string> placeholders_in(std::string_view text);

// Single left-to-right pass; substituted values are never rescanned. Throws
// TemplateError for a placeholder with no value.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Throws EmptyExamplesError for no examples and TemplateError when the
// ontology or an example answer is not JSON.
std::string build_system_prompt(const PromptTemplate& tmpl, std::string_view onto_json,
                                std::span<const ExampleBlock> examples, const Rules& rules);

std::string build_chain1_prompt(const PromptTemplate& tmpl, const SerializedTable& table);

// Throws Step1ParseError unless `step1_answer` is a {"semantic_triples": ...}
// object.
std::string build_chain2_prompt(const PromptTemplate& tmpl, std::string_view step1_answer);

std::string build_combined_prompt(const PromptTemplate& tmpl, const SerializedTable& table);

struct PromptBundle {
  std::string system_prompt;
  std::string chain1_prompt;
  std::function<std::string(std::string_view)> chain2_prompt;
};

PromptBundle make_prompt_bundle(const PromptTemplate& tmpl, std::string system_prompt,
                                const SerializedTable& table);

}  // namespace kpc
