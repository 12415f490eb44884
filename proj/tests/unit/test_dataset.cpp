#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "../support/fake_server.hpp"
#include "materia/dataset.hpp"
#include "materia/text.hpp"

using namespace materia;
using materia::testing::source_dir;
using materia::testing::TempDir;

namespace {

const std::string kEmptyLiteral =
    R"({"messages": [{"role": "user", "content": ""}, {"role": "assistant", "content": ""}]})";

QAPair pair(std::string q, std::string a, ReviewState state = ReviewState::Accepted) {
    QAPair p;
    p.qa_id = "id-" + q;
    p.question = std::move(q);
    p.answer = std::move(a);
    p.review_state = state;
    return p;
}

std::string random_text(SplitMix64& rng) {
    static const std::vector<std::string> pieces = {"a", "Z", " ", "\"", "\\", "\n", "\t", "/", "é", "中", "🔋", "\x01", "{", "}", ",", ":"};
    std::string s;
    const auto n = rng.below(20);
    for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
    return s;
}

void expect_code(ErrorCode code, const std::function<void()>& fn) {
    try {
        fn();
        FAIL("expected " << to_string(code));
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

}  // namespace

TEST_CASE("empty-content record serializes to the literal") {
    CHECK(serialize_record(make_record("", "")) == kEmptyLiteral);
    CHECK(parse_record(kEmptyLiteral) == make_record("", ""));
}

TEST_CASE("serialization matches the spacing convention for arbitrary content") {
    SplitMix64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto q = random_text(rng);
        const auto a = random_text(rng);
        const std::string expected = R"({"messages": [{"role": "user", "content": )" + nlohmann::json(q).dump() +
                                     R"(}, {"role": "assistant", "content": )" + nlohmann::json(a).dump() + "}]}";
        CHECK(serialize_record(make_record(q, a)) == expected);
    }
}

TEST_CASE("to_instruction_record") {
    const auto r = to_instruction_record(pair("What is LiFePO4?", "A cathode material..."));
    CHECK(serialize_record(r) ==
          R"({"messages": [{"role": "user", "content": "What is LiFePO4?"}, {"role": "assistant", "content": "A cathode material..."}]})");

    auto edited = pair("orig q", "orig a", ReviewState::Edited);
    edited.edited_answer = "better a";
    const auto e = to_instruction_record(edited);
    CHECK(e.question() == "orig q");
    CHECK(e.answer() == "better a");

    expect_code(ErrorCode::NotReviewed, [] { to_instruction_record(pair("q", "a", ReviewState::Rejected)); });
    expect_code(ErrorCode::NotReviewed, [] { to_instruction_record(pair("q", "a", ReviewState::Pending)); });
}

TEST_CASE("write then read 1000 random records") {
    TempDir dir("dataset");
    SplitMix64 rng(5);
    std::vector<InstructionRecord> records;
    for (int i = 0; i < 1000; ++i) records.push_back(make_record(random_text(rng), random_text(rng)));
    CHECK(write_jsonl(records, dir / "d.jsonl") == 1000);
    CHECK(read_jsonl(dir / "d.jsonl") == records);
    const auto bytes = read_file(dir / "d.jsonl");
    CHECK(std::count(bytes.begin(), bytes.end(), '\n') == 1000);
    CHECK(bytes.rfind("\xEF\xBB\xBF", 0) != 0);
}

TEST_CASE("schema errors name the line") {
    TempDir dir("dataset");
    const std::string three =
        R"({"messages": [{"role": "user", "content": "q"}, {"role": "assistant", "content": "a"}, {"role": "user", "content": "x"}]})";
    write_file_atomic(dir / "bad.jsonl", kEmptyLiteral + "\n" + three + "\n");
    try {
        read_jsonl(dir / "bad.jsonl");
        FAIL("expected SchemaError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaError);
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    expect_code(ErrorCode::SchemaError, [] { parse_record(R"({"messages": [{"role": "assistant", "content": "a"}, {"role": "user", "content": "q"}]})"); });
    expect_code(ErrorCode::SchemaError, [] { parse_record(R"({"messages": [], "extra": 1})"); });
    expect_code(ErrorCode::SchemaError, [] { parse_record("not json"); });
}

TEST_CASE("dedupe") {
    SUBCASE("byte-identical records collapse") {
        const auto [kept, report] = dedupe({make_record("q", "a"), make_record("q", "a")}, DedupePolicy::Exact);
        CHECK(kept.size() == 1);
        REQUIRE(report.groups.size() == 1);
        CHECK(report.groups[0].kept_index == 0);
        CHECK(report.groups[0].duplicates == std::vector<std::size_t>{1});
    }
    SUBCASE("normalized question collapses across answers") {
        // Hand-applied rule: lowercase, fold whitespace, drop terminal punctuation.
        CHECK(normalize_question("What  is X?") == "what is x");
        CHECK(normalize_question("what is x") == "what is x");
        const std::vector<InstructionRecord> in = {make_record("What is X?", "one"), make_record("what is x", "two"),
                                                   make_record("What is Y?", "three")};
        const auto [kept, report] = dedupe(in, DedupePolicy::Normalized);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].answer() == "one");
        CHECK(kept[1].question() == "What is Y?");
        CHECK(dedupe(in, DedupePolicy::Exact).first.size() == 3);
    }
    SUBCASE("idempotent") {
        std::vector<InstructionRecord> in;
        SplitMix64 rng(3);
        for (int i = 0; i < 200; ++i) in.push_back(make_record(std::string(1, static_cast<char>('a' + rng.below(5))) + "?", "x"));
        const auto once = dedupe(in, DedupePolicy::Normalized).first;
        const auto twice = dedupe(once, DedupePolicy::Normalized).first;
        CHECK(once == twice);
        CHECK(once.size() == 5);
    }
}

TEST_CASE("tagging with the shipped taxonomy") {
    const auto tax = load_taxonomy(source_dir() / "data/taxonomy.json");
    CHECK(tax.labels.size() == 11);
    CHECK(tax.labels.back() == "unknown");

    // cathode + electrolyte: two energy hits, nothing else matches.
    CHECK(tag_domain(pair("Which cathode is used?", "One paired with a liquid electrolyte."), tax) == "energy materials");
    CHECK(tag_domain(pair("Why is the sky blue?", "Rayleigh scattering."), tax) == "unknown");
    // one energy hit (battery), one ceramic hit (zirconia): earlier label wins.
    CHECK(tag_domain(pair("battery housing", "zirconia"), tax) == "energy materials");
    CHECK(tag_domain(pair("zirconia", "battery"), tax) == "energy materials");
    // case-insensitive substring hits
    CHECK(tag_text("GRAPHENE and nanotube", "", tax) == "nanomaterials");
}

TEST_CASE("taxonomy validation") {
    CHECK_THROWS_AS(taxonomy_from_json_text(R"({"labels": ["a", "a", "unknown"], "keyword_rules": {}})"), Error);
    CHECK_THROWS_AS(taxonomy_from_json_text(R"({"labels": ["a"], "keyword_rules": {}})"), Error);
    CHECK_THROWS_AS(taxonomy_from_json_text(R"({"labels": ["a", "unknown"], "keyword_rules": {"unknown": ["x"]}})"), Error);
    CHECK_THROWS_AS(taxonomy_from_json_text(R"({"labels": ["a", "unknown"], "keyword_rules": {"b": ["x"]}})"), Error);
}

TEST_CASE("distribution") {
    const auto tax = load_taxonomy(source_dir() / "data/taxonomy.json");
    std::vector<std::string> labels = {"energy materials", "alloy materials", "energy materials", "unknown",
                                       "alloy materials", "energy materials"};
    const auto d = distribution_of_labels(labels, tax);
    CHECK(d.count("energy materials") == 3);
    CHECK(d.count("alloy materials") == 2);
    CHECK(d.count("unknown") == 1);
    CHECK(d.total == 6);
    std::size_t sum = 0;
    for (const auto& [l, c] : d.counts) sum += c;
    CHECK(sum == d.total);

    std::reverse(labels.begin(), labels.end());
    CHECK(distribution_of_labels(labels, tax) == d);

    const auto empty = distribution_of_labels({}, tax);
    CHECK(empty.total == 0);
    CHECK(empty.counts.size() == tax.labels.size());
    for (const auto& [l, c] : empty.counts) CHECK(c == 0);

    CHECK(distribution_from_json_text(distribution_to_json_text(d)) == d);

    std::vector<QAPair> tagged;
    for (const auto& l : labels) {
        auto p = pair("q", "a");
        p.domain = l;
        tagged.push_back(p);
    }
    CHECK(compute_distribution(tagged, tax) == d);
}

TEST_CASE("emit_train_config") {
    TempDir dir("dataset");
    write_jsonl({make_record("q", "a"), make_record("q2", "a2")}, dir / "d.jsonl");

    const auto cfg = emit_train_config(dir / "d.jsonl", {}, dir / "train.json");
    CHECK(cfg.learning_rate == 1e-5);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.base_model == "glm4-9b");
    CHECK(train_config_from_json_text(read_file(dir / "train.json")) == cfg);
    const auto j = nlohmann::json::parse(read_file(dir / "train.json"));
    for (const auto& [k, v] : j.items()) CHECK(!v.is_structured());

    TrainConfigOverrides o;
    o.epochs = 1;
    const auto one = emit_train_config(dir / "d.jsonl", o, dir / "train1.json");
    CHECK(one.learning_rate == 1e-5);
    CHECK(one.batch_size == 4);
    CHECK(one.epochs == 1);

    std::string lines;
    for (int i = 1; i <= 10; ++i) lines += (i == 7 ? std::string("{\"messages\": 3}") : serialize_record(make_record("q", "a"))) + "\n";
    write_file_atomic(dir / "bad.jsonl", lines);
    try {
        emit_train_config(dir / "bad.jsonl", {}, dir / "train2.json");
        FAIL("expected DatasetInvalid");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DatasetInvalid);
        CHECK(std::string(e.what()).find(":7:") != std::string::npos);
    }
    CHECK(!std::filesystem::exists(dir / "train2.json"));
}

TEST_CASE("split is seeded and partitions the records") {
    std::vector<InstructionRecord> records;
    for (int i = 0; i < 100; ++i) records.push_back(make_record("q" + std::to_string(i), "a"));
    const auto [train, val] = split_records(records, 0.2, 9);
    CHECK(train.size() == 80);
    CHECK(val.size() == 20);
    const auto again = split_records(records, 0.2, 9);
    CHECK(again.second == val);
    CHECK(split_records(records, 0.2, 10).second != val);
    CHECK_THROWS_AS(split_records(records, 1.0, 0), Error);
}
