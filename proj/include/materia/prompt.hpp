#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "materia/corpus.hpp"

namespace materia {

inline constexpr std::string_view kSegmentTextPlaceholder = "SEGMENT_TEXT";

/// Structured extraction prompt: role responsibilities, requirements, and the
/// output grammar, rendered in that order. Blocks reference `{NAME}`
/// placeholders (uppercase); literal braces are written `{{` and `}}`.
struct PromptTemplate {
    std::string template_id;
    std::string role_block;
    std::string requirements_block;
    std::string format_block;
    std::set<std::string> placeholders;

    bool operator==(const PromptTemplate&) const = default;
};

struct AnswerStep {
    std::string instruction;
    bool concluding = false;

    bool operator==(const AnswerStep&) const = default;
};

/// System prompt profile for answering: expert persona, an ordered answer
/// structure that ends in a conclusion, and explicit prohibitions.
struct EnhancedPromptProfile {
    std::string profile_id;
    std::string expert_role;
    std::vector<AnswerStep> answer_structure;
    std::vector<std::string> boundary_conditions;

    bool operator==(const EnhancedPromptProfile&) const = default;
};

struct Issue {
    std::string invariant;  // short machine-readable name
    std::string location;   // e.g. "requirements_block:12"
    std::string message;

    bool operator==(const Issue&) const = default;
};

std::vector<Issue> validate_template(const PromptTemplate& tmpl);
std::vector<Issue> validate_profile(const EnhancedPromptProfile& profile);

/// Substitutes `values` into the template. SEGMENT_TEXT is bound to the
/// segment text; other placeholders come from `values`.
std::string render_extraction_prompt(const PromptTemplate& tmpl, const TextSegment& segment,
                                     const std::map<std::string, std::string>& values = {});

std::string render_enhanced_system_prompt(const EnhancedPromptProfile& profile);

/// Placeholder names referenced by a block, in order of appearance.
std::vector<std::string> referenced_placeholders(std::string_view block);

PromptTemplate template_from_json_text(std::string_view json_text);
std::string template_to_json_text(const PromptTemplate& tmpl);
PromptTemplate load_template(const std::filesystem::path& path);

EnhancedPromptProfile profile_from_json_text(std::string_view json_text);
std::string profile_to_json_text(const EnhancedPromptProfile& profile);
EnhancedPromptProfile load_profile(const std::filesystem::path& path);

/// Finds `<dir>/<id>.json` or, failing that, the template in `dir` whose
/// template_id matches.
PromptTemplate find_template(const std::filesystem::path& dir, std::string_view template_id);

struct TemplateFileReport {
    std::filesystem::path path;
    std::string kind;  // "extraction" or "enhanced-system"
    std::vector<Issue> issues;
};

/// Validates every *.json file in the directory.
std::vector<TemplateFileReport> validate_template_dir(const std::filesystem::path& dir);

}  // namespace materia
