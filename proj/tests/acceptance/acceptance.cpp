#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "../support/demo_project.hpp"
#include "../support/fake_server.hpp"
#include "cli.hpp"
#include "materia/corpus.hpp"
#include "materia/dataset.hpp"
#include "materia/eval.hpp"
#include "materia/extraction.hpp"
#include "materia/gateway.hpp"
#include "materia/providers.hpp"
#include "materia/review.hpp"
#include "materia/review_api.hpp"
#include "materia/text.hpp"

using namespace materia;
using materia::testing::FakeChatServer;
using materia::testing::source_dir;
using materia::testing::TempDir;
using json = nlohmann::json;
using WallClock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

double seconds_since(WallClock::time_point t0) { return std::chrono::duration<double>(WallClock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

Verdict cosine_oracle() {
    Verdict o;
    const auto t0 = WallClock::now();
    SplitMix64 rng(20240601);
    double worst = 0, worst_scale = 0;
    for (int t = 0; t < 10000 && o.pass; ++t) {
        const std::size_t dim = 2 + rng.below(4095);
        std::vector<double> x(dim), y(dim);
        const double mx = std::ldexp(1.0, static_cast<int>(rng.below(41)) - 20);
        const double my = std::ldexp(1.0, static_cast<int>(rng.below(41)) - 20);
        for (std::size_t i = 0; i < dim; ++i) {
            x[i] = (rng.unit() * 2 - 1) * mx;
            y[i] = (t % 3 == 0 ? x[i] / mx * my + (rng.unit() - 0.5) * 1e-3 * my : (rng.unit() * 2 - 1) * my);
        }
        long double dot = 0, xx = 0, yy = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            dot += static_cast<long double>(x[i]) * y[i];
            xx += static_cast<long double>(x[i]) * x[i];
            yy += static_cast<long double>(y[i]) * y[i];
        }
        const long double oracle = dot / (sqrtl(xx) * sqrtl(yy));
        const double c = cosine(x, y);
        const double err = static_cast<double>(fabsl(static_cast<long double>(c) - oracle));
        worst = std::max(worst, err);
        o.require(err <= 1e-12, "oracle deviation " + fmt("%.3g", err) + " at dim " + std::to_string(dim));
        o.require(c == cosine(y, x), "asymmetric at dim " + std::to_string(dim));
        const double a = std::ldexp(0.5 + rng.unit(), static_cast<int>(rng.below(21)) - 10);
        std::vector<double> ax(x);
        for (auto& v : ax) v *= a;
        const double ds = std::fabs(cosine(ax, y) - c);
        worst_scale = std::max(worst_scale, ds);
        o.require(ds <= 1e-12, "scale deviation " + fmt("%.3g", ds));
    }
    const double secs = seconds_since(t0);
    o.require(secs < 10.0, "took " + fmt("%.2f", secs) + " s");
    if (o.pass) {
        o.detail = "10000 pairs, max |err| " + fmt("%.2e", worst) + ", max scale drift " + fmt("%.2e", worst_scale) + ", " +
                   fmt("%.2f", secs) + " s";
    }
    return o;
}

Verdict self_similarity() {
    Verdict o;
    const auto t0 = WallClock::now();
    MockEmbeddingProvider provider(0);
    Embedder embedder(provider);
    const std::vector<BenchmarkItem> bench = {
        {"q1", "What limits creep in nickel superalloys?", "Coherent gamma prime precipitates pin dislocations and slow creep."},
        {"q2", "Why is LiFePO4 a stable cathode?", "Its olivine framework and strong P-O bonds hold oxygen during cycling."},
        {"q3", "How does zirconia toughen?", "Stress-induced tetragonal to monoclinic transformation closes cracks."},
    };
    ModelAnswers answers;
    for (const auto& b : bench) answers["model-a"][b.question_id] = b.answer + " Extra words.";
    const auto report = score_models(bench, answers, embedder);
    const auto table = render_report(report, ReportFormat::TextTable);
    std::istringstream in(table);
    std::string line;
    bool found = false;
    while (std::getline(in, line)) {
        if (line.rfind(std::string(kBenchmarkRow), 0) != 0) continue;
        found = true;
        std::istringstream cells(line.substr(kBenchmarkRow.size()));
        int n = 0;
        for (std::string c; cells >> c; ++n) o.require(c == "1.0000", "benchmark row cell " + c);
        o.require(n == 3, "benchmark row has " + std::to_string(n) + " cells");
    }
    o.require(found, "no benchmark row in the table");
    SplitMix64 rng(3);
    for (int i = 0; i < 200; ++i) {
        std::string text = "answer " + std::to_string(rng.next());
        const auto v = embedder.embed(text);
        o.require(fmt("%.4f", cosine(v, v)) == "1.0000", "self cosine of '" + text + "'");
    }
    const double secs = seconds_since(t0);
    o.require(secs < 1.0, "took " + fmt("%.3f", secs) + " s");
    if (o.pass) o.detail = "benchmark row renders 1.0000 in every column, " + fmt("%.3f", secs) + " s";
    return o;
}

Verdict table_fixture() {
    Verdict o;
    const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
        {"Benchmark Answer", {"1.0000", "1.0000", "1.0000"}},
        {"ChatGPT-3.5", {"0.8688", "0.9250", "0.9165"}},
        {"Qwen", {"0.8938", "0.9296", "0.8784"}},
        {"Ernie Bot", {"0.8884", "0.9102", "0.8206"}},
        {"ChatGLM", {"0.8978", "0.9052", "0.8998"}},
        {"Polymetis", {"0.9157*", "0.9342*", "0.9254*"}},
    };
    const auto report = parse_report_json(read_file(source_dir() / "data/similarity_fixture.json"));
    const auto table = render_report(report, ReportFormat::TextTable);
    std::istringstream in(table);
    std::string line;
    std::getline(in, line);
    o.require(line.find("Question 1") != std::string::npos && line.find("Question 3") != std::string::npos, "header: " + line);
    for (const auto& [row, cells] : expected) {
        std::getline(in, line);
        o.require(line.rfind(row + " ", 0) == 0, "row order: expected " + row + ", got " + line);
        std::istringstream cs(line.substr(row.size()));
        std::vector<std::string> got;
        for (std::string c; cs >> c;) got.push_back(c);
        o.require(got == cells, "cells of " + row);
    }
    const auto back = parse_report_json(render_report(report, ReportFormat::Json));
    const auto marks = max_marks(back);
    for (std::size_t q = 0; q < 3; ++q) {
        for (std::size_t m = 0; m < back.models.size(); ++m) {
            o.require(marks[m][q] == (back.models[m] == "Polymetis"), "mark at " + back.models[m]);
        }
    }
    if (o.pass) o.detail = "6x3 cells match to 4 decimals; Polymetis marked 0.9157, 0.9342, 0.9254";
    return o;
}

std::string random_content(SplitMix64& rng) {
    static const std::vector<std::string> pieces = {"a", "Q", "1", " ", "\"", "\\", "\n", "\r", "\t", "/", "é", "中", "🔋",
                                                    "\x01", "\x1f", "{", "}", ",", ":", " ", "<", "&"};
    std::string s;
    const auto n = rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
    return s;
}

Verdict record_format() {
    Verdict o;
    const std::string literal = R"({"messages": [{"role": "user", "content": ""}, {"role": "assistant", "content": ""}]})";
    o.require(serialize_record(make_record("", "")) == literal, "empty record: " + serialize_record(make_record("", "")));
    TempDir dir("acceptance-records");
    SplitMix64 rng(77);
    std::vector<InstructionRecord> records;
    for (int i = 0; i < 10000; ++i) records.push_back(make_record(random_content(rng), random_content(rng)));
    write_jsonl(records, dir / "r.jsonl");
    const auto back = read_jsonl(dir / "r.jsonl");
    o.require(back == records, "read after write differs");
    std::size_t individually = 0;
    for (const auto& r : records) individually += parse_record(serialize_record(r)) == r;
    o.require(individually == records.size(), "per-record round-trip failed");
    if (o.pass) o.detail = "literal matches byte for byte; 10000 random records round-trip";
    return o;
}

std::string random_body(SplitMix64& rng) {
    static const std::vector<std::string> words = {"alloy", "Q", "A", "1:", "grain", "é", "中文", "x=3", "(ii)", "Qwen:", "A.",
                                                   "\"quoted\"", "50%", "Q12", "answer", "µm", "LiFePO4", "?"};
    const auto lines = 1 + rng.below(3);
    std::string s;
    for (std::uint64_t l = 0; l < lines; ++l) {
        if (l) s += "\n";
        std::string line;
        const auto n = 1 + rng.below(6);
        for (std::uint64_t w = 0; w < n; ++w) line += (w ? " " : "") + words[rng.below(words.size())];
        // No line may open like a marker: Q or A followed by a digit.
        if ((line[0] == 'Q' || line[0] == 'A') && line.size() > 1 && std::isdigit(static_cast<unsigned char>(line[1]))) {
            line = "so " + line;
        }
        s += line;
    }
    return s;
}

Verdict parser_round_trip() {
    Verdict o;
    SplitMix64 rng(99);
    for (int t = 0; t < 10000 && o.pass; ++t) {
        std::vector<QAText> list;
        const auto n = 1 + rng.below(12);
        for (std::uint64_t i = 0; i < n; ++i) list.push_back({random_body(rng), random_body(rng)});
        std::vector<QAText> parsed;
        try {
            parsed = parse_qa_output(serialize_qa(list), list.size());
        } catch (const std::exception& e) {
            o.require(false, std::string("parse threw: ") + e.what());
            break;
        }
        o.require(parsed == list, "round-trip mismatch at list " + std::to_string(t));
    }
    auto kind_of = [](const std::string& raw) -> std::optional<FormatViolation> {
        try {
            parse_qa_output(raw);
        } catch (const FormatError& e) {
            return e.kind();
        }
        return std::nullopt;
    };
    const std::vector<std::pair<std::string, FormatViolation>> malformed = {
        {"A1: answer with no question", FormatViolation::MissingQuestionMarker},
        {"Q1: question never answered", FormatViolation::MissingAnswerMarker},
        {"no markers at all", FormatViolation::NoMarkers},
        {"Q1: x\nA2: y", FormatViolation::IndexGap},
        {"Q1: x\nA1: y\nQ3: z\nA3: w", FormatViolation::IndexGap},
        {"Q1: x\nA1: y\nQ1: z\nA1: w", FormatViolation::IndexGap},
        {"Q1:\nA1: y", FormatViolation::EmptyField},
        {"Q1: x\nA1:   ", FormatViolation::EmptyField},
    };
    for (const auto& [raw, kind] : malformed) {
        const auto got = kind_of(raw);
        o.require(got == kind, "kind for '" + raw + "': " + (got ? std::string(to_string(*got)) : "none"));
    }
    try {
        parse_qa_output("Q1: x\nA1: y", 2);
        o.require(false, "count mismatch not raised");
    } catch (const FormatError& e) {
        o.require(e.kind() == FormatViolation::CountMismatch, "count mismatch kind");
    }
    if (o.pass) o.detail = "10000 lists round-trip; missing marker, index gap, empty field and count kinds raised";
    return o;
}

std::string random_document(SplitMix64& rng) {
    static const std::vector<std::string> pieces = {"word", "alloy", "é", "中", "🔋", " ", " ", ". ", "? ", "\n", "\n\n", "x", "42"};
    std::string s;
    const auto n = 1 + rng.below(1200);
    for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
    if (is_blank(s)) s += "z";
    return s;
}

Verdict segmentation_invariants() {
    Verdict o;
    SplitMix64 rng(4242);
    const BoundaryRule rules[] = {BoundaryRule::HardCut, BoundaryRule::PreferSentenceEnd, BoundaryRule::PreferParagraphEnd};
    std::size_t total_segments = 0;
    for (int t = 0; t < 1000 && o.pass; ++t) {
        Document d;
        d.doc_id = "doc" + std::to_string(t);
        d.body = random_document(rng);
        SegmentationPolicy p;
        p.max_chars = 1 + rng.below(t % 4 == 0 ? 20 : 700);
        p.overlap_chars = rng.below(p.max_chars);
        p.boundary_rule = rules[rng.below(3)];
        const auto cps = decode_utf8(d.body);
        const auto offs = codepoint_offsets(d.body);
        const auto segs = segment(d, p);
        const std::string ctx = " (doc " + std::to_string(t) + ", max " + std::to_string(p.max_chars) + ", overlap " +
                                std::to_string(p.overlap_chars) + ", " + std::string(to_string(p.boundary_rule)) + ")";
        total_segments += segs.size();
        o.require(!segs.empty(), "no segments" + ctx);
        if (segs.empty()) break;
        o.require(segs.front().char_start == 0, "coverage start" + ctx);
        o.require(segs.back().char_end == cps.size(), "coverage end" + ctx);
        std::string rebuilt;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const auto& s = segs[i];
            o.require(s.segment_index == i, "index" + ctx);
            o.require(s.doc_id == d.doc_id, "doc id" + ctx);
            o.require(s.char_start < s.char_end, "empty span" + ctx);
            o.require(s.char_end - s.char_start <= p.max_chars, "span exceeds max" + ctx);
            o.require(s.char_end <= cps.size(), "span past end" + ctx);
            if (!o.pass) break;
            o.require(s.text == d.body.substr(offs[s.char_start], offs[s.char_end] - offs[s.char_start]), "text slice" + ctx);
            if (i > 0) {
                const auto& prev = segs[i - 1];
                o.require(s.char_start > prev.char_start, "ordering" + ctx);
                o.require(s.char_start <= prev.char_end, "gap" + ctx);
                o.require(prev.char_end - s.char_start == p.overlap_chars, "overlap" + ctx);
                const auto drop = offs[s.char_start + std::min(p.overlap_chars, s.char_end - s.char_start)] - offs[s.char_start];
                rebuilt += s.text.substr(drop);
            } else {
                rebuilt += s.text;
            }
        }
        o.require(rebuilt == d.body, "reconstruction" + ctx);
        o.require(segment(d, p) == segs, "determinism" + ctx);
    }
    if (o.pass) o.detail = "1000 documents, " + std::to_string(total_segments) + " segments; coverage, ordering, overlap, reconstruction hold";
    return o;
}

Verdict end_to_end() {
    Verdict o;
    TempDir dir("acceptance-pipeline");
    const auto cfg = materia::testing::write_demo_config(dir.path());
    const auto t0 = WallClock::now();
    std::ostringstream out, err;
    const int code = cli::run({"pipeline", "run", "--config", cfg.string(), "--provider", "mock", "--auto-accept"}, out, err);
    const double secs = seconds_since(t0);
    o.require(code == 0, "exit " + std::to_string(code) + ": " + err.str());
    if (!o.pass) return o;
    const auto outdir = dir / "out";
    std::vector<InstructionRecord> records;
    try {
        records = read_jsonl(outdir / "dataset.jsonl");
    } catch (const std::exception& e) {
        o.require(false, std::string("dataset invalid: ") + e.what());
        return o;
    }
    o.require(records.size() >= 40, "only " + std::to_string(records.size()) + " records");
    const auto stats = json::parse(read_file(outdir / "dataset.stats.json"));
    std::size_t sum = 0;
    for (const auto& [label, count] : stats.at("counts").items()) sum += count.get<std::size_t>();
    o.require(sum == records.size(), "stats sum " + std::to_string(sum) + " vs " + std::to_string(records.size()) + " records");
    o.require(stats.at("total").get<std::size_t>() == records.size(), "stats total");
    const auto train = json::parse(read_file(outdir / "train_config.json"));
    o.require(train.at("learning_rate").get<double>() == 1e-5, "learning_rate " + train.at("learning_rate").dump());
    o.require(train.at("batch_size").get<int>() == 4, "batch_size " + train.at("batch_size").dump());
    o.require(train.at("epochs").get<int>() == 3, "epochs " + train.at("epochs").dump());
    o.require(secs < 60.0, "took " + fmt("%.2f", secs) + " s");
    if (o.pass) {
        o.detail = std::to_string(records.size()) + " valid records, stats sum " + std::to_string(sum) +
                   ", learning_rate=1e-5 batch_size=4 epochs=3, " + fmt("%.2f", secs) + " s";
    }
    return o;
}

Verdict gateway_discipline() {
    Verdict o;
    GatewayPolicy p;
    p.max_concurrent = 3;
    p.requests_per_minute = 100000;
    p.max_retries = 3;
    p.backoff_base_ms = 100;

    FakeChatServer server(std::chrono::milliseconds(30));
    HttpChatProvider http(ProviderConfig{"fake", server.url(), "fake-model", "", "openai"}, "k", 5000);
    {
        Gateway gw(p, std::make_shared<SimulatedClock>());
        std::vector<ChatRequest> reqs(24);
        for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].user = "request " + std::to_string(i);
        const auto items = gw.complete_batch(reqs, http);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < items.size(); ++i) ok += items[i].index == i && std::holds_alternative<CompletionResult>(items[i].outcome);
        o.require(ok == reqs.size(), "batch results " + std::to_string(ok));
        o.require(server.peak() <= p.max_concurrent, "peak in-flight " + std::to_string(server.peak()));
    }
    const int peak = server.peak();

    auto clock = std::make_shared<SimulatedClock>();
    GatewayPolicy limited = p;
    limited.requests_per_minute = 12;
    limited.max_concurrent = 4;
    Gateway lgw(limited, clock);
    MockChatProvider mock(1);
    std::vector<ChatRequest> reqs(60);
    for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].user = "r" + std::to_string(i);
    lgw.complete_batch(reqs, mock);
    const auto grants = lgw.limiter().grants();
    std::size_t worst = 0;
    for (std::size_t j = 0; j < grants.size(); ++j) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < grants.size(); ++i) n += grants[i] > grants[j] - 60000 && grants[i] <= grants[j];
        worst = std::max(worst, n);
    }
    o.require(grants.size() == reqs.size(), "grants " + std::to_string(grants.size()));
    o.require(worst <= 12, "window holds " + std::to_string(worst) + " dispatches");

    int retries_seen = -1;
    {
        FakeChatServer scripted;
        scripted.script({{429, "slow"}, {429, "slow"}, {200, "fine"}});
        HttpChatProvider sp(ProviderConfig{"fake", scripted.url(), "m", "", "openai"}, "k", 5000);
        Gateway gw(p, std::make_shared<SimulatedClock>());
        ChatRequest r;
        r.user = "hi";
        try {
            const auto res = gw.complete(r, sp);
            retries_seen = res.retries;
            o.require(res.text == "fine", "text " + res.text);
        } catch (const std::exception& e) {
            o.require(false, std::string("429 script failed: ") + e.what());
        }
        o.require(retries_seen == 2, "retries " + std::to_string(retries_seen));
    }
    if (o.pass) {
        o.detail = "peak in-flight " + std::to_string(peak) + " <= 3; max 60 s window " + std::to_string(worst) +
                   " <= 12 rpm; 429,429,200 succeeded after " + std::to_string(retries_seen) + " retries";
    }
    return o;
}

Verdict blindness() {
    Verdict o;
    ReviewStore store(":memory:");
    store.set_time_source([n = 0]() mutable { return "2026-01-01T00:00:00." + std::to_string(1000 + n++) + "Z"; });
    const auto taxonomy = load_taxonomy(source_dir() / "data/taxonomy.json");
    ReviewApi api(store, taxonomy);
    ReviewServer server(api);
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    httplib::Client client("127.0.0.1", port);
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);

    SplitMix64 rng(8080);
    std::vector<QAPair> pairs;
    for (int i = 0; i < 40; ++i) {
        QAPair p;
        p.qa_id = "qa" + std::to_string(i);
        p.question = "Question " + std::to_string(i) + " about alloy creep?";
        p.answer = "Answer " + std::to_string(i) + ".";
        p.doc_id = "d";
        p.segment_index = static_cast<std::size_t>(i);
        p.template_id = "t";
        p.provider_id = "provider-secret";
        p.model_name = "modelname-secret";
        pairs.push_back(p);
    }
    store.enqueue(pairs);

    std::set<std::string> model_ids;
    std::vector<std::string> session_ids;
    std::vector<std::string> payloads;
    auto keep = [&](const httplib::Result& res) {
        if (res) payloads.push_back(res->body);
        return res ? res->status : -1;
    };
    for (int s = 0; s < 25; ++s) {
        json answers = json::object();
        const auto n = 2 + rng.below(7);
        for (std::uint64_t m = 0; m < n; ++m) {
            const std::string id = "mdl" + std::to_string(rng.next() % 1000000007);
            model_ids.insert(id);
            answers[id] = "Composite answer text number " + std::to_string(m);
        }
        json body = {{"question", "Blind question " + std::to_string(s)}, {"model_answers", answers}, {"seed", rng.below(1000)}};
        auto res = client.Post("/api/sessions", body.dump(), "application/json");
        o.require(keep(res) == 201, "create session status");
        if (res && res->status == 201) session_ids.push_back(json::parse(res->body)["session_id"]);
    }
    const char* decisions[] = {"accept", "edit", "reject", "bogus"};
    for (int t = 0; t < 1500; ++t) {
        const auto& sid = session_ids[rng.below(session_ids.size())];
        switch (rng.below(9)) {
            case 0: keep(client.Get("/api/sessions/" + sid)); break;
            case 1: keep(client.Get("/api/sessions")); break;
            case 2: keep(client.Get("/api/sessions?status=open")); break;
            case 3: {
                const int status = keep(client.Get("/api/sessions/" + sid + "/unmask"));
                o.require(status == 409, "unmask on an open session returned " + std::to_string(status));
                break;
            }
            case 4: keep(client.Get("/api/review/queue?state=all&limit=" + std::to_string(rng.below(60)) + "&offset=" + std::to_string(rng.below(40)))); break;
            case 5: keep(client.Get("/api/stats")); break;
            case 6: {
                json d = {{"qa_id", "qa" + std::to_string(rng.below(45))}, {"decision", decisions[rng.below(4)]}, {"reviewer_id", "rev"}};
                if (rng.below(2)) d["edited_answer"] = "Edited " + std::to_string(t);
                keep(client.Post("/api/review/decide", d.dump(), "application/json"));
                break;
            }
            case 7: keep(client.Get("/api/sessions/" + sid + "/" + (rng.below(2) ? "nope" : "finalize"))); break;
            default: keep(client.Post("/api/sessions/" + sid + "/finalize", "{\"composed_answer\": \"\"}", "application/json")); break;
        }
    }
    std::size_t leaks = 0;
    for (const auto& p : payloads) {
        for (const auto& id : model_ids) leaks += p.find(id) != std::string::npos;
        leaks += p.find("provider-secret") != std::string::npos || p.find("modelname-secret") != std::string::npos;
    }
    o.require(leaks == 0, std::to_string(leaks) + " payloads leaked a model id");

    std::size_t unmasked = 0;
    for (const auto& sid : session_ids) {
        auto res = client.Post("/api/sessions/" + sid + "/finalize", R"({"composed_answer": "Benchmark composed by the panel."})",
                               "application/json");
        o.require(res && res->status == 200, "finalize " + sid);
        res = client.Get("/api/sessions/" + sid + "/unmask");
        o.require(res && res->status == 200, "unmask after finalize " + sid);
        if (res && res->status == 200) {
            const auto mapping = json::parse(res->body)["mapping"];
            const auto view = store.session(sid);
            o.require(view && mapping.size() == view->entries.size(), "mapping size");
            for (const auto& m : mapping) o.require(model_ids.count(m["model_id"].get<std::string>()) == 1, "unknown model in mapping");
            ++unmasked;
        }
    }
    server.stop();

    ReviewStore replayed(":memory:");
    replayed.replay(store.event_log());
    const bool identical = replayed.snapshot() == store.snapshot();
    o.require(identical, "replayed snapshot differs");
    if (o.pass) {
        o.detail = std::to_string(payloads.size()) + " fuzzed payloads over " + std::to_string(session_ids.size()) +
                   " open sessions with no model id; " + std::to_string(unmasked) + " unmasked only after finalize; replay identical (" +
                   std::to_string(store.snapshot().size()) + " bytes)";
    }
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"cosine oracle equivalence", cosine_oracle},
        {"benchmark self-similarity", self_similarity},
        {"similarity table fixture", table_fixture},
        {"bit-exact record format", record_format},
        {"parser round-trip", parser_round_trip},
        {"segmentation coverage", segmentation_invariants},
        {"end-to-end offline pipeline", end_to_end},
        {"gateway discipline", gateway_discipline},
        {"blindness property", blindness},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
