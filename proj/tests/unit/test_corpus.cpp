#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "../support/fake_server.hpp"
#include "materia/corpus.hpp"
#include "materia/error.hpp"
#include "materia/text.hpp"

using namespace materia;
using materia::testing::TempDir;

namespace {

Document doc_of(std::string body) {
    Document d;
    d.doc_id = "d1";
    d.body = std::move(body);
    return d;
}

void write(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

std::string ascii_body(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + i % 26));
    return s;
}

std::vector<std::pair<std::size_t, std::size_t>> spans(const std::vector<TextSegment>& segs) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& s : segs) out.emplace_back(s.char_start, s.char_end);
    return out;
}

}  // namespace

TEST_CASE("hard cut spans follow the window arithmetic") {
    SegmentationPolicy p{400, 50, BoundaryRule::HardCut};
    const auto segs = segment(doc_of(ascii_body(1000)), p);
    // step = max - overlap; next start = previous end - overlap
    std::vector<std::pair<std::size_t, std::size_t>> expected;
    std::size_t start = 0;
    while (true) {
        const std::size_t end = std::min<std::size_t>(start + 400, 1000);
        expected.emplace_back(start, end);
        if (end == 1000) break;
        start = end - 50;
    }
    CHECK(spans(segs) == expected);
    CHECK(expected.size() == 3);
    for (std::size_t i = 0; i < segs.size(); ++i) CHECK(segs[i].segment_index == i);
}

TEST_CASE("short document yields one segment") {
    const auto segs = segment(doc_of(ascii_body(100)), SegmentationPolicy{400, 50, BoundaryRule::PreferParagraphEnd});
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].char_start == 0);
    CHECK(segs[0].char_end == 100);
    CHECK(segs[0].text == ascii_body(100));
}

TEST_CASE("zero overlap tiles the body") {
    const std::string body = ascii_body(1234);
    const auto segs = segment(doc_of(body), SegmentationPolicy{100, 0, BoundaryRule::HardCut});
    std::size_t cursor = 0;
    std::string joined;
    for (const auto& s : segs) {
        CHECK(s.char_start == cursor);
        cursor = s.char_end;
        joined += s.text;
    }
    CHECK(cursor == body.size());
    CHECK(joined == body);
}

TEST_CASE("offsets count codepoints") {
    std::string body;
    for (int i = 0; i < 30; ++i) body += "é";
    const auto segs = segment(doc_of(body), SegmentationPolicy{10, 2, BoundaryRule::HardCut});
    REQUIRE(!segs.empty());
    CHECK(segs[0].char_end == 10);
    CHECK(segs[0].text.size() == 20);
    CHECK(segs.back().char_end == 30);
}

TEST_CASE("sentence preference moves the cut back to a sentence end") {
    const std::string body = std::string(70, 'x') + ". " + std::string(60, 'y');
    const auto segs = segment(doc_of(body), SegmentationPolicy{80, 0, BoundaryRule::PreferSentenceEnd});
    REQUIRE(segs.size() >= 2);
    CHECK(segs[0].char_end == 71);
}

TEST_CASE("paragraph preference cuts after a blank line") {
    const std::string body = std::string(65, 'x') + "\n\n" + std::string(100, 'y');
    const auto segs = segment(doc_of(body), SegmentationPolicy{80, 10, BoundaryRule::PreferParagraphEnd});
    REQUIRE(segs.size() >= 2);
    CHECK(segs[0].char_end == 67);
    CHECK(segs[1].char_start == 57);
}

TEST_CASE("segmentation is deterministic") {
    const auto d = doc_of("Alpha beta. Gamma delta.\n\nEpsilon zeta eta. Theta iota kappa lambda mu.");
    SegmentationPolicy p{20, 5, BoundaryRule::PreferSentenceEnd};
    CHECK(segment(d, p) == segment(d, p));
}

TEST_CASE("segment count never falls as max_chars shrinks under hard cut") {
    const auto d = doc_of(ascii_body(2000));
    std::size_t prev = 0;
    for (std::size_t max = 1000; max > 20; max -= 7) {
        const auto n = segment(d, SegmentationPolicy{max, 20, BoundaryRule::HardCut}).size();
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("policy validation") {
    CHECK_THROWS_AS(SegmentationPolicy({0, 0, BoundaryRule::HardCut}).validate(), Error);
    CHECK_THROWS_AS(SegmentationPolicy({10, 10, BoundaryRule::HardCut}).validate(), Error);
    CHECK_NOTHROW(SegmentationPolicy({10, 9, BoundaryRule::HardCut}).validate());
    CHECK(boundary_rule_from_string("hard_cut") == BoundaryRule::HardCut);
    CHECK(to_string(BoundaryRule::PreferParagraphEnd) == "prefer_paragraph_end");
}

TEST_CASE("load_document") {
    TempDir dir("corpus");
    SUBCASE("same file twice gives identical documents") {
        write(dir / "paper1.txt", "Perovskite solar cells convert light.\r\nSecond line.\r\n");
        const auto a = load_document(dir / "paper1.txt");
        const auto b = load_document(dir / "paper1.txt");
        CHECK(a == b);
        CHECK(a.body.find('\r') == std::string::npos);
        CHECK(!a.doc_id.empty());
    }
    SUBCASE("zero-byte file is EmptyDocument") {
        write(dir / "empty.txt", "");
        try {
            load_document(dir / "empty.txt");
            FAIL("expected EmptyDocument");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyDocument);
        }
    }
    SUBCASE("whitespace-only file is EmptyDocument") {
        write(dir / "blank.txt", "  \n\t\n");
        CHECK_THROWS_AS(load_document(dir / "blank.txt"), Error);
    }
    SUBCASE("invalid UTF-8 is EncodingError") {
        write(dir / "bad.txt", std::string("abc\xff\xfe", 5));
        try {
            load_document(dir / "bad.txt");
            FAIL("expected EncodingError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EncodingError);
        }
    }
    SUBCASE("missing file is IoError") {
        try {
            load_document(dir / "nope.txt");
            FAIL("expected IoError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IoError);
        }
    }
}

TEST_CASE("load_corpus reads sidecars and sorts by path") {
    TempDir dir("corpus");
    write(dir / "b.md", "# Title B\n\nBody b.");
    write(dir / "a.txt", "Body a.");
    write(dir / "a.meta.json", R"({"title": "Doc A", "domain_hint": "alloy materials"})");
    write(dir / "ignored.pdf", "binary");
    const auto docs = load_corpus(dir.path());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].title == "Doc A");
    CHECK(docs[0].domain_hint == std::optional<std::string>("alloy materials"));
    CHECK(docs[0].doc_id != docs[1].doc_id);
}

TEST_CASE("segments round-trip through jsonl") {
    TempDir dir("corpus");
    const auto segs = segment(doc_of("Line one.\nLine \"two\" é.\n" + ascii_body(300)), SegmentationPolicy{120, 10, BoundaryRule::PreferSentenceEnd});
    write_segments_jsonl(segs, dir / "s.jsonl");
    CHECK(read_segments_jsonl(dir / "s.jsonl") == segs);
}
