#include "materia/prompt.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <regex>

#include "materia/error.hpp"
#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum class TokenKind { Literal, Placeholder, StrayBrace };

struct Token {
    TokenKind kind;
    std::string text;  // literal text or placeholder name
    std::size_t line;  // 1-based
};

bool is_name_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

bool is_valid_name(std::string_view name) {
    if (name.empty() || !(name[0] >= 'A' && name[0] <= 'Z')) return false;
    return std::all_of(name.begin(), name.end(),
                       [](char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; });
}

std::vector<Token> tokenize(std::string_view block) {
    std::vector<Token> tokens;
    std::string literal;
    std::size_t line = 1;
    std::size_t literal_line = 1;
    auto flush = [&] {
        if (!literal.empty()) tokens.push_back({TokenKind::Literal, std::move(literal), literal_line});
        literal.clear();
        literal_line = line;
    };
    for (std::size_t i = 0; i < block.size(); ++i) {
        const char c = block[i];
        if (c == '{') {
            if (i + 1 < block.size() && block[i + 1] == '{') {
                literal.push_back('{');
                ++i;
                continue;
            }
            std::size_t j = i + 1;
            while (j < block.size() && is_name_char(block[j])) ++j;
            if (j > i + 1 && j < block.size() && block[j] == '}') {
                flush();
                tokens.push_back({TokenKind::Placeholder, std::string(block.substr(i + 1, j - i - 1)), line});
                i = j;
                literal_line = line;
                continue;
            }
            flush();
            tokens.push_back({TokenKind::StrayBrace, "{", line});
            continue;
        }
        if (c == '}') {
            if (i + 1 < block.size() && block[i + 1] == '}') {
                literal.push_back('}');
                ++i;
                continue;
            }
            flush();
            tokens.push_back({TokenKind::StrayBrace, "}", line});
            continue;
        }
        if (literal.empty()) literal_line = line;
        literal.push_back(c);
        if (c == '\n') ++line;
    }
    flush();
    return tokens;
}

struct NamedBlock {
    std::string_view name;
    const std::string& text;
};

std::vector<NamedBlock> blocks_of(const PromptTemplate& t) {
    return {{"role_block", t.role_block}, {"requirements_block", t.requirements_block}, {"format_block", t.format_block}};
}

const std::regex& question_marker_re() {
    static const std::regex re(R"((^|\n)Q(\d+|<i>|\{\{i\}\}|n)\s*:)");
    return re;
}
const std::regex& answer_marker_re() {
    static const std::regex re(R"((^|\n)A(\d+|<i>|\{\{i\}\}|n)\s*:)");
    return re;
}

}  // namespace

std::vector<std::string> referenced_placeholders(std::string_view block) {
    std::vector<std::string> names;
    for (auto& tok : tokenize(block)) {
        if (tok.kind == TokenKind::Placeholder) names.push_back(std::move(tok.text));
    }
    return names;
}

std::vector<Issue> validate_template(const PromptTemplate& tmpl) {
    std::vector<Issue> issues;
    if (is_blank(tmpl.template_id)) {
        issues.push_back({"template_id_present", "template_id", "template_id is empty"});
    }

    std::set<std::string> referenced;
    for (const auto& [name, text] : blocks_of(tmpl)) {
        if (name != "format_block" && is_blank(text)) {
            issues.push_back({"block_present", std::string(name), std::string(name) + " is empty"});
        }
        for (const auto& tok : tokenize(text)) {
            const std::string loc = std::string(name) + ":" + std::to_string(tok.line);
            if (tok.kind == TokenKind::StrayBrace) {
                issues.push_back({"balanced_braces", loc, "unescaped '" + tok.text + "'; write '" + tok.text + tok.text + "' for a literal brace"});
            } else if (tok.kind == TokenKind::Placeholder) {
                referenced.insert(tok.text);
                if (!tmpl.placeholders.count(tok.text)) {
                    issues.push_back({"placeholder_declared", loc, "{" + tok.text + "} is referenced but not declared in placeholders"});
                }
            }
        }
    }

    for (const auto& name : tmpl.placeholders) {
        if (!is_valid_name(name)) {
            issues.push_back({"placeholder_name", "placeholders", "'" + name + "' is not an uppercase placeholder name"});
        }
        if (!referenced.count(name)) {
            issues.push_back({"placeholder_referenced", "placeholders", "'" + name + "' is declared but no block references it"});
        }
    }
    if (!tmpl.placeholders.count(std::string(kSegmentTextPlaceholder)) &&
        !referenced.count(std::string(kSegmentTextPlaceholder))) {
        issues.push_back({"segment_text_required", "placeholders", "SEGMENT_TEXT must be declared and referenced"});
    }

    if (is_blank(tmpl.format_block)) {
        issues.push_back({"format_grammar", "format_block", "format_block is empty; output grammar is unparseable"});
    } else if (!std::regex_search(tmpl.format_block, question_marker_re()) ||
               !std::regex_search(tmpl.format_block, answer_marker_re())) {
        issues.push_back({"format_grammar", "format_block", "format_block does not describe the Q<i>:/A<i>: line grammar"});
    }
    return issues;
}

std::vector<Issue> validate_profile(const EnhancedPromptProfile& profile) {
    std::vector<Issue> issues;
    if (is_blank(profile.expert_role)) {
        issues.push_back({"expert_role_present", "expert_role", "expert_role is empty"});
    }
    if (profile.answer_structure.empty()) {
        issues.push_back({"answer_structure_present", "answer_structure", "answer_structure is empty"});
    } else if (!profile.answer_structure.back().concluding) {
        issues.push_back({"conclusion_last", "answer_structure", "the last answer step must be the concluding step"});
    }
    for (std::size_t i = 0; i < profile.answer_structure.size(); ++i) {
        if (is_blank(profile.answer_structure[i].instruction)) {
            issues.push_back({"step_present", "answer_structure[" + std::to_string(i) + "]", "empty step"});
        }
    }
    for (std::size_t i = 0; i < profile.boundary_conditions.size(); ++i) {
        if (is_blank(profile.boundary_conditions[i])) {
            issues.push_back({"condition_present", "boundary_conditions[" + std::to_string(i) + "]", "empty condition"});
        }
    }
    return issues;
}

std::string render_extraction_prompt(const PromptTemplate& tmpl, const TextSegment& segment,
                                     const std::map<std::string, std::string>& values) {
    if (is_blank(segment.text)) throw Error(ErrorCode::InvalidRequest, "cannot render a prompt for an empty segment");

    std::string out;
    bool first = true;
    for (const auto& [name, text] : blocks_of(tmpl)) {
        if (!first) out += "\n\n";
        first = false;
        for (const auto& tok : tokenize(text)) {
            switch (tok.kind) {
                case TokenKind::Literal:
                case TokenKind::StrayBrace:
                    out += tok.text;
                    break;
                case TokenKind::Placeholder: {
                    if (!tmpl.placeholders.count(tok.text)) {
                        throw Error(ErrorCode::MissingPlaceholder, "template '" + tmpl.template_id + "' references undeclared {" +
                                                                       tok.text + "} in " + std::string(name));
                    }
                    if (tok.text == kSegmentTextPlaceholder) {
                        out += segment.text;
                    } else if (auto it = values.find(tok.text); it != values.end()) {
                        out += it->second;
                    } else {
                        throw Error(ErrorCode::UnsubstitutedPlaceholder,
                                    "no value for {" + tok.text + "} in template '" + tmpl.template_id + "'");
                    }
                    break;
                }
            }
        }
    }
    return out;
}

std::string render_enhanced_system_prompt(const EnhancedPromptProfile& profile) {
    if (auto issues = validate_profile(profile); !issues.empty()) {
        throw Error(ErrorCode::TemplateInvalid, "invalid profile: " + issues.front().message);
    }
    std::string out(trim(profile.expert_role));
    out += "\n\nStructure every answer in these steps, in order:";
    for (std::size_t i = 0; i < profile.answer_structure.size(); ++i) {
        out += "\n" + std::to_string(i + 1) + ". ";
        out += trim(profile.answer_structure[i].instruction);
    }
    if (!profile.boundary_conditions.empty()) {
        out += "\n\nProhibitions:";
        for (const auto& cond : profile.boundary_conditions) {
            out += "\n- ";
            out += trim(cond);
        }
    }
    return out;
}

PromptTemplate template_from_json_text(std::string_view json_text) {
    try {
        const auto j = nlohmann::json::parse(json_text);
        PromptTemplate t;
        t.template_id = j.at("template_id").get<std::string>();
        t.role_block = j.at("role_block").get<std::string>();
        t.requirements_block = j.at("requirements_block").get<std::string>();
        t.format_block = j.at("format_block").get<std::string>();
        for (const auto& p : j.at("placeholders")) t.placeholders.insert(p.get<std::string>());
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TemplateInvalid, std::string("malformed template file: ") + e.what());
    }
}

std::string template_to_json_text(const PromptTemplate& tmpl) {
    ojson j;
    j["template_id"] = tmpl.template_id;
    j["role_block"] = tmpl.role_block;
    j["requirements_block"] = tmpl.requirements_block;
    j["format_block"] = tmpl.format_block;
    j["placeholders"] = ojson::array();
    for (const auto& p : tmpl.placeholders) j["placeholders"].push_back(p);
    return j.dump(2) + "\n";
}

PromptTemplate load_template(const fs::path& path) { return template_from_json_text(read_file(path)); }

EnhancedPromptProfile profile_from_json_text(std::string_view json_text) {
    try {
        const auto j = nlohmann::json::parse(json_text);
        EnhancedPromptProfile p;
        p.profile_id = j.value("profile_id", "");
        p.expert_role = j.at("expert_role").get<std::string>();
        for (const auto& s : j.at("answer_structure")) {
            p.answer_structure.push_back({s.at("instruction").get<std::string>(), s.value("concluding", false)});
        }
        if (j.contains("boundary_conditions")) {
            for (const auto& c : j["boundary_conditions"]) p.boundary_conditions.push_back(c.get<std::string>());
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TemplateInvalid, std::string("malformed profile file: ") + e.what());
    }
}

std::string profile_to_json_text(const EnhancedPromptProfile& profile) {
    ojson j;
    j["profile_id"] = profile.profile_id;
    j["expert_role"] = profile.expert_role;
    j["answer_structure"] = ojson::array();
    for (const auto& s : profile.answer_structure) {
        j["answer_structure"].push_back({{"instruction", s.instruction}, {"concluding", s.concluding}});
    }
    j["boundary_conditions"] = profile.boundary_conditions;
    return j.dump(2) + "\n";
}

EnhancedPromptProfile load_profile(const fs::path& path) { return profile_from_json_text(read_file(path)); }

PromptTemplate find_template(const fs::path& dir, std::string_view template_id) {
    const fs::path direct = dir / (std::string(template_id) + ".json");
    if (fs::exists(direct)) return load_template(direct);
    std::error_code ec;
    if (fs::is_directory(dir, ec)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            auto j = nlohmann::json::parse(read_file(entry.path()), nullptr, false);
            if (j.is_object() && j.value("template_id", "") == template_id) return load_template(entry.path());
        }
    }
    throw Error(ErrorCode::TemplateInvalid, "template '" + std::string(template_id) + "' not found in " + dir.string());
}

std::vector<TemplateFileReport> validate_template_dir(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoError, "template directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<TemplateFileReport> reports;
    for (const auto& file : files) {
        TemplateFileReport r{file, "extraction", {}};
        const std::string text = read_file(file);
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            r.kind = "unknown";
            r.issues.push_back({"json_syntax", file.filename().string(), "file is not a JSON object"});
        } else if (j.contains("expert_role")) {
            r.kind = "enhanced-system";
            try {
                r.issues = validate_profile(profile_from_json_text(text));
            } catch (const Error& e) {
                r.issues.push_back({"schema", file.filename().string(), e.what()});
            }
        } else {
            try {
                r.issues = validate_template(template_from_json_text(text));
            } catch (const Error& e) {
                r.issues.push_back({"schema", file.filename().string(), e.what()});
            }
        }
        reports.push_back(std::move(r));
    }
    return reports;
}

}  // namespace materia
