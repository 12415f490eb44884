#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/fake_server.hpp"
#include "materia/error.hpp"
#include "materia/prompt.hpp"
#include "materia/text.hpp"

using namespace materia;
using materia::testing::source_dir;
using materia::testing::TempDir;

namespace {

PromptTemplate simple_template() {
    PromptTemplate t;
    t.template_id = "t1";
    t.role_block = "You are a materials researcher.";
    t.requirements_block = "Generate {QA_COUNT} QA pairs from:\n{SEGMENT_TEXT}";
    t.format_block = "Output format:\nQ1: <question>\nA1: <answer>";
    t.placeholders = {"QA_COUNT", "SEGMENT_TEXT"};
    return t;
}

TextSegment seg(std::string text) {
    TextSegment s;
    s.doc_id = "d";
    s.text = std::move(text);
    s.char_end = s.text.size();
    return s;
}

EnhancedPromptProfile profile() {
    EnhancedPromptProfile p;
    p.profile_id = "p";
    p.expert_role = "You are an expert in alloys.";
    p.answer_structure = {{"Name the system."}, {"Explain the mechanism."}, {"Conclude briefly.", true}};
    p.boundary_conditions = {"Do not invent data."};
    return p;
}

}  // namespace

TEST_CASE("render substitutes the segment verbatim and keeps block order") {
    const std::string text = "LiFePO4 cathodes {offer} stable cycling.";
    const auto out = render_extraction_prompt(simple_template(), seg(text), {{"QA_COUNT", "3"}});
    const auto role = out.find("You are");
    const auto req = out.find("Generate 3 QA pairs");
    const auto fmt = out.find("Output format:");
    CHECK(out.find(text) != std::string::npos);
    CHECK(role < req);
    CHECK(req < fmt);
    CHECK(out.find("{QA_COUNT}") == std::string::npos);
}

TEST_CASE("rendering twice is identical and different segments differ") {
    const auto t = simple_template();
    const auto a = render_extraction_prompt(t, seg("alpha"), {{"QA_COUNT", "3"}});
    CHECK(a == render_extraction_prompt(t, seg("alpha"), {{"QA_COUNT", "3"}}));
    CHECK(a != render_extraction_prompt(t, seg("alphb"), {{"QA_COUNT", "3"}}));
}

TEST_CASE("undeclared placeholder is MissingPlaceholder") {
    auto t = simple_template();
    t.placeholders.erase("QA_COUNT");
    try {
        render_extraction_prompt(t, seg("x"), {{"QA_COUNT", "3"}});
        FAIL("expected MissingPlaceholder");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingPlaceholder);
    }
}

TEST_CASE("declared placeholder with no value is UnsubstitutedPlaceholder") {
    try {
        render_extraction_prompt(simple_template(), seg("x"));
        FAIL("expected UnsubstitutedPlaceholder");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsubstitutedPlaceholder);
    }
}

TEST_CASE("escaped braces render literally") {
    auto t = simple_template();
    t.format_block = "Q1: {{json}}\nA1: ok";
    const auto out = render_extraction_prompt(t, seg("x"), {{"QA_COUNT", "1"}});
    CHECK(out.find("Q1: {json}") != std::string::npos);
}

TEST_CASE("validate_template") {
    CHECK(validate_template(load_template(source_dir() / "templates/extraction-default.json")).empty());

    SUBCASE("declared but unreferenced SEGMENT_TEXT is one issue") {
        auto t = simple_template();
        t.requirements_block = "Generate {QA_COUNT} QA pairs.";
        const auto issues = validate_template(t);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].invariant == "placeholder_referenced");
    }
    SUBCASE("empty format block is one issue") {
        auto t = simple_template();
        t.format_block = "";
        const auto issues = validate_template(t);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].invariant == "format_grammar");
    }
    SUBCASE("undeclared reference names its line") {
        auto t = simple_template();
        t.requirements_block = "line one\n{OTHER}\n{SEGMENT_TEXT} {QA_COUNT}";
        const auto issues = validate_template(t);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].invariant == "placeholder_declared");
        CHECK(issues[0].location == "requirements_block:2");
    }
    SUBCASE("stray brace") {
        auto t = simple_template();
        t.role_block = "You are { a researcher.";
        const auto issues = validate_template(t);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].invariant == "balanced_braces");
    }
}

TEST_CASE("enhanced system prompt") {
    SUBCASE("role first, numbered steps, conclusion last, then prohibitions") {
        const auto out = render_enhanced_system_prompt(profile());
        CHECK(out.rfind("You are an expert in alloys.", 0) == 0);
        const auto s1 = out.find("1. Name the system.");
        const auto s3 = out.find("3. Conclude briefly.");
        const auto pro = out.find("Prohibitions:");
        CHECK(s1 < s3);
        CHECK(s3 < pro);
        CHECK(out.find("- Do not invent data.") > pro);
        CHECK(out == render_enhanced_system_prompt(profile()));
    }
    SUBCASE("no boundary conditions omits the prohibitions section") {
        auto p = profile();
        p.boundary_conditions.clear();
        const auto out = render_enhanced_system_prompt(p);
        CHECK(out.find("Prohibitions") == std::string::npos);
        const auto last_line = out.substr(out.rfind('\n') + 1);
        CHECK(last_line == "3. Conclude briefly.");
    }
    SUBCASE("shipped profile ends with its concluding step") {
        const auto p = load_profile(source_dir() / "templates/enhanced-system-default.json");
        CHECK(validate_profile(p).empty());
        CHECK(p.answer_structure.back().concluding);
        const auto out = render_enhanced_system_prompt(p);
        const auto pro = out.find("\n\nProhibitions:");
        const auto body = out.substr(0, pro);
        CHECK(body.substr(body.rfind('\n') + 1).find(p.answer_structure.back().instruction) != std::string::npos);
    }
    SUBCASE("conclusion not last is invalid") {
        auto p = profile();
        p.answer_structure.back().concluding = false;
        CHECK(validate_profile(p).size() == 1);
        CHECK_THROWS_AS(render_enhanced_system_prompt(p), Error);
    }
}

TEST_CASE("template and profile files round-trip") {
    const auto t = simple_template();
    CHECK(template_from_json_text(template_to_json_text(t)) == t);
    const auto p = profile();
    CHECK(profile_from_json_text(profile_to_json_text(p)) == p);
}

TEST_CASE("template directory") {
    const auto reports = validate_template_dir(source_dir() / "templates");
    REQUIRE(reports.size() == 2);
    for (const auto& r : reports) CHECK(r.issues.empty());
    CHECK(find_template(source_dir() / "templates", "extraction-default").template_id == "extraction-default");

    TempDir dir("prompt");
    write_file_atomic(dir / "renamed.json", template_to_json_text(simple_template()));
    CHECK(find_template(dir.path(), "t1") == simple_template());
}
