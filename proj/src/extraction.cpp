#include "materia/extraction.hpp"

#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(ReviewState state) noexcept {
    switch (state) {
        case ReviewState::Pending: return "pending";
        case ReviewState::Accepted: return "accepted";
        case ReviewState::Edited: return "edited";
        case ReviewState::Rejected: return "rejected";
    }
    return "pending";
}

ReviewState review_state_from_string(std::string_view name) {
    if (name == "pending") return ReviewState::Pending;
    if (name == "accepted") return ReviewState::Accepted;
    if (name == "edited") return ReviewState::Edited;
    if (name == "rejected") return ReviewState::Rejected;
    throw Error(ErrorCode::SchemaError, "unknown review state '" + std::string(name) + "'");
}

std::string_view to_string(FormatViolation kind) noexcept {
    switch (kind) {
        case FormatViolation::NoMarkers: return "no_markers";
        case FormatViolation::MissingQuestionMarker: return "missing_q_marker";
        case FormatViolation::MissingAnswerMarker: return "missing_a_marker";
        case FormatViolation::IndexGap: return "index_gap";
        case FormatViolation::EmptyField: return "empty_field";
        case FormatViolation::TrailingGarbage: return "trailing_garbage";
        case FormatViolation::CountMismatch: return "count_mismatch";
    }
    return "unknown";
}

std::string make_qa_id(std::string_view doc_id, std::size_t segment_index, std::string_view template_id,
                       std::size_t ordinal) {
    std::string key(doc_id);
    key += '\x1f';
    key += std::to_string(segment_index);
    key += '\x1f';
    key += template_id;
    key += '\x1f';
    key += std::to_string(ordinal);
    return "qa-" + sha256_hex(key).substr(0, 20);
}

// ---------------------------------------------------------------------------
// Q<i>:/A<i>: grammar

namespace {

enum class LineKind { Plain, Marker, Garbled };

struct LineScan {
    LineKind kind = LineKind::Plain;
    char letter = 0;
    std::size_t index = 0;
    std::string_view body;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

LineScan scan_line(std::string_view line) {
    LineScan s;
    if (line.size() < 2 || (line[0] != 'Q' && line[0] != 'A') || !is_digit(line[1])) return s;
    std::size_t i = 1;
    while (i < line.size() && is_digit(line[i])) ++i;
    const std::string_view digits = line.substr(1, i - 1);
    std::size_t j = i;
    while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
    std::size_t colon_len = 0;
    if (j < line.size() && line[j] == ':') {
        colon_len = 1;
    } else if (line.substr(j, 3) == "\xEF\xBC\x9A") {  // fullwidth colon
        colon_len = 3;
    }
    if (colon_len > 0) {
        s.kind = LineKind::Marker;
        s.letter = line[0];
        s.index = digits.size() > 9 ? static_cast<std::size_t>(-1) : std::stoul(std::string(digits));
        s.body = line.substr(j + colon_len);
        return s;
    }
    // "Q3." / "A2)" / a bare "Q4": a marker missing its colon.
    if (j == line.size() || line[i] == '.' || line[i] == ')' || line[i] == ']') s.kind = LineKind::Garbled;
    return s;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto nl = raw.find('\n', start);
        if (nl == std::string_view::npos) nl = raw.size();
        auto line = raw.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = nl + 1;
    }
    return lines;
}

std::string join_body(const std::vector<std::string_view>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += '\n';
        out += parts[i];
    }
    return std::string(trim(out));
}

}  // namespace

std::vector<QAText> parse_qa_output(std::string_view raw, std::optional<std::size_t> expected_count) {
    const auto lines = split_lines(raw);

    bool any_marker = false;
    for (auto l : lines) {
        if (scan_line(l).kind == LineKind::Marker) {
            any_marker = true;
            break;
        }
    }
    if (!any_marker) throw FormatError(FormatViolation::NoMarkers, 0, "output contains no Q<i>:/A<i>: markers");

    enum class State { None, InQuestion, InAnswer } state = State::None;
    std::vector<QAText> pairs;
    std::vector<std::string_view> q_parts;
    std::vector<std::string_view> a_parts;
    std::size_t q_line = 0;
    std::size_t a_line = 0;
    std::size_t q_index = 0;
    std::string question;

    auto close_answer = [&] {
        std::string answer = join_body(a_parts);
        if (answer.empty()) throw FormatError(FormatViolation::EmptyField, a_line, "A" + std::to_string(q_index) + " is empty");
        pairs.push_back({std::move(question), std::move(answer)});
        question.clear();
        a_parts.clear();
    };

    for (std::size_t n = 0; n < lines.size(); ++n) {
        const std::size_t line_no = n + 1;
        const auto scan = scan_line(lines[n]);
        if (scan.kind == LineKind::Garbled) {
            throw FormatError(FormatViolation::TrailingGarbage, line_no, "malformed marker '" + std::string(lines[n].substr(0, 16)) + "'");
        }
        if (scan.kind == LineKind::Plain) {
            switch (state) {
                case State::None:
                    if (!is_blank(lines[n])) {
                        throw FormatError(FormatViolation::MissingQuestionMarker, line_no, "text before the first Q1: marker");
                    }
                    break;
                case State::InQuestion: q_parts.push_back(lines[n]); break;
                case State::InAnswer: a_parts.push_back(lines[n]); break;
            }
            continue;
        }
        if (scan.letter == 'Q') {
            if (state == State::InQuestion) {
                throw FormatError(FormatViolation::MissingAnswerMarker, q_line, "Q" + std::to_string(q_index) + " has no A" + std::to_string(q_index));
            }
            if (state == State::InAnswer) close_answer();
            const std::size_t expected = pairs.size() + 1;
            if (scan.index != expected) {
                throw FormatError(FormatViolation::IndexGap, line_no,
                                  "expected Q" + std::to_string(expected) + ", found Q" + std::to_string(scan.index));
            }
            state = State::InQuestion;
            q_index = scan.index;
            q_line = line_no;
            q_parts.assign({scan.body});
        } else {
            if (state != State::InQuestion) {
                throw FormatError(FormatViolation::MissingQuestionMarker, line_no,
                                  "A" + std::to_string(scan.index) + " has no open question");
            }
            if (scan.index != q_index) {
                throw FormatError(FormatViolation::IndexGap, line_no,
                                  "A" + std::to_string(scan.index) + " answers Q" + std::to_string(q_index));
            }
            question = join_body(q_parts);
            if (question.empty()) throw FormatError(FormatViolation::EmptyField, q_line, "Q" + std::to_string(q_index) + " is empty");
            state = State::InAnswer;
            a_line = line_no;
            a_parts.assign({scan.body});
        }
    }
    if (state == State::InQuestion) {
        throw FormatError(FormatViolation::MissingAnswerMarker, q_line, "Q" + std::to_string(q_index) + " has no A" + std::to_string(q_index));
    }
    if (state == State::InAnswer) close_answer();

    if (expected_count && pairs.size() != *expected_count) {
        throw FormatError(FormatViolation::CountMismatch, 0,
                          "expected " + std::to_string(*expected_count) + " pairs, found " + std::to_string(pairs.size()));
    }
    return pairs;
}

std::string serialize_qa(const std::vector<QAText>& pairs) {
    std::string out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto idx = std::to_string(i + 1);
        if (i) out += '\n';
        out += "Q" + idx + ": " + pairs[i].question + "\n";
        out += "A" + idx + ": " + pairs[i].answer;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Extraction

ChatRequest make_extraction_request(const std::string& prompt, const ExtractionOptions& options) {
    ChatRequest r;
    r.system = options.system_prompt;
    r.user = prompt;
    r.temperature = options.temperature;
    r.max_tokens = options.max_tokens;
    r.model_name = options.model_name;
    return r;
}

std::map<std::string, std::string> extraction_values(const TextSegment& segment, const ExtractionOptions& options) {
    return {{"QA_COUNT", std::to_string(options.qa_count)},
            {"DOC_ID", segment.doc_id},
            {"SEGMENT_INDEX", std::to_string(segment.segment_index)}};
}

namespace {

ExtractionTriple make_triple(const TextSegment& segment, const PromptTemplate& tmpl, const std::string& prompt,
                             const CompletionResult& result, const std::vector<QAText>& parsed, int repairs) {
    ExtractionTriple t;
    t.prompt = prompt;
    t.source_text = segment.text;
    t.doc_id = segment.doc_id;
    t.segment_index = segment.segment_index;
    t.template_id = tmpl.template_id;
    t.provider_id = result.provider_id;
    t.model_name = result.model_name;
    t.repair_retries = repairs;
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        QAPair p;
        p.qa_id = make_qa_id(segment.doc_id, segment.segment_index, tmpl.template_id, i);
        p.question = parsed[i].question;
        p.answer = parsed[i].answer;
        p.doc_id = segment.doc_id;
        p.segment_index = segment.segment_index;
        p.template_id = tmpl.template_id;
        p.provider_id = result.provider_id;
        p.model_name = result.model_name;
        t.qa_pairs.push_back(std::move(p));
    }
    return t;
}

using SegmentKey = std::tuple<std::string, std::size_t, std::string>;

}  // namespace

ExtractionTriple extract_qa(const TextSegment& segment, const PromptTemplate& tmpl, ChatProvider& provider,
                            Gateway& gateway, const ExtractionOptions& options) {
    if (auto issues = validate_template(tmpl); !issues.empty()) {
        throw Error(ErrorCode::TemplateInvalid, "template '" + tmpl.template_id + "' is invalid: " + issues.front().message);
    }
    const std::string prompt = render_extraction_prompt(tmpl, segment, extraction_values(segment, options));

    auto first = gateway.complete(make_extraction_request(prompt, options), provider);
    try {
        return make_triple(segment, tmpl, prompt, first, parse_qa_output(first.text, options.qa_count), 0);
    } catch (const FormatError&) {
    }
    auto second = gateway.complete(make_extraction_request(prompt + std::string(kRepairSuffix), options), provider);
    try {
        return make_triple(segment, tmpl, prompt, second, parse_qa_output(second.text, options.qa_count), 1);
    } catch (const FormatError& e) {
        throw Error(ErrorCode::ExtractionFailed, "segment " + segment.doc_id + "#" + std::to_string(segment.segment_index) +
                                                     " still malformed after repair: " + e.what());
    }
}

std::size_t FormatComplianceReport::segments_with_violations() const {
    std::set<std::pair<std::string, std::size_t>> segs;
    for (const auto& v : violations) segs.emplace(v.doc_id, v.segment_index);
    return segs.size();
}

ExtractionReport run_extraction_job(const std::vector<TextSegment>& segments, const PromptTemplate& tmpl,
                                    ChatProvider& provider, Gateway& gateway, const fs::path& checkpoint_path,
                                    const ExtractionOptions& options) {
    if (auto issues = validate_template(tmpl); !issues.empty()) {
        throw Error(ErrorCode::TemplateInvalid, "template '" + tmpl.template_id + "' is invalid: " + issues.front().message);
    }

    ExtractionReport report;
    report.segments_total = segments.size();

    std::set<SegmentKey> done;
    for (const auto& t : read_checkpoint(checkpoint_path)) done.emplace(t.doc_id, t.segment_index, t.template_id);

    std::vector<const TextSegment*> pending;
    for (const auto& s : segments) {
        if (done.emplace(s.doc_id, s.segment_index, tmpl.template_id).second) {
            pending.push_back(&s);
        } else {
            ++report.skipped;
        }
    }
    report.attempted = pending.size();
    if (pending.empty()) return report;

    std::error_code ec;
    if (checkpoint_path.has_parent_path()) fs::create_directories(checkpoint_path.parent_path(), ec);
    std::ofstream out(checkpoint_path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot open checkpoint " + checkpoint_path.string());

    std::vector<std::string> prompts;
    std::vector<ChatRequest> requests;
    prompts.reserve(pending.size());
    for (const auto* s : pending) {
        prompts.push_back(render_extraction_prompt(tmpl, *s, extraction_values(*s, options)));
        requests.push_back(make_extraction_request(prompts.back(), options));
    }

    auto commit = [&](std::size_t i, const CompletionResult& result, const std::vector<QAText>& parsed, int repairs) {
        const auto triple = make_triple(*pending[i], tmpl, prompts[i], result, parsed, repairs);
        out << triple_to_json_line(triple) << '\n';
        out.flush();
        ++report.succeeded;
        report.qa_pairs += triple.qa_pairs.size();
        if (repairs) ++report.repaired;
    };
    auto tally = [&](const Failure& f) {
        ++report.failed;
        ++report.error_tallies[std::string(to_string(f.code))];
    };

    std::vector<std::size_t> to_repair;
    gateway.complete_batch(requests, provider, [&](const BatchItem& item) {
        if (const auto* f = std::get_if<Failure>(&item.outcome)) {
            tally(*f);
            return;
        }
        const auto& result = std::get<CompletionResult>(item.outcome);
        ++report.compliance.total_outputs;
        try {
            auto parsed = parse_qa_output(result.text, options.qa_count);
            ++report.compliance.compliant;
            commit(item.index, result, parsed, 0);
        } catch (const FormatError& e) {
            report.compliance.violations.push_back(
                {pending[item.index]->doc_id, pending[item.index]->segment_index, e.kind(), e.line(), 0});
            to_repair.push_back(item.index);
        }
    });

    if (!to_repair.empty()) {
        std::sort(to_repair.begin(), to_repair.end());
        std::vector<ChatRequest> repairs;
        for (auto i : to_repair) repairs.push_back(make_extraction_request(prompts[i] + std::string(kRepairSuffix), options));
        gateway.complete_batch(repairs, provider, [&](const BatchItem& item) {
            const std::size_t i = to_repair[item.index];
            if (const auto* f = std::get_if<Failure>(&item.outcome)) {
                tally(*f);
                return;
            }
            const auto& result = std::get<CompletionResult>(item.outcome);
            try {
                commit(i, result, parse_qa_output(result.text, options.qa_count), 1);
            } catch (const FormatError& e) {
                report.compliance.violations.push_back({pending[i]->doc_id, pending[i]->segment_index, e.kind(), e.line(), 1});
                tally(Failure{ErrorCode::ExtractionFailed, e.what(), 0});
            }
        });
    }

    if (report.attempted > 0 && report.succeeded == 0) {
        std::string detail;
        for (const auto& [code, n] : report.error_tallies) detail += " " + code + "=" + std::to_string(n);
        throw Error(ErrorCode::JobFailed, "all " + std::to_string(report.attempted) + " segments failed:" + detail);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoint

std::string triple_to_json_line(const ExtractionTriple& triple) {
    ojson j;
    j["prompt"] = triple.prompt;
    j["source_ref"] = {{"doc_id", triple.doc_id}, {"segment_index", triple.segment_index}};
    j["qa"] = ojson::array();
    for (const auto& p : triple.qa_pairs) j["qa"].push_back({{"question", p.question}, {"answer", p.answer}});
    j["template_id"] = triple.template_id;
    j["provider_id"] = triple.provider_id;
    return j.dump();
}

ExtractionTriple triple_from_json_line(std::string_view line) {
    const auto j = nlohmann::json::parse(line);
    ExtractionTriple t;
    t.prompt = j.at("prompt").get<std::string>();
    t.doc_id = j.at("source_ref").at("doc_id").get<std::string>();
    t.segment_index = j.at("source_ref").at("segment_index").get<std::size_t>();
    t.template_id = j.at("template_id").get<std::string>();
    t.provider_id = j.at("provider_id").get<std::string>();
    const auto& qa = j.at("qa");
    for (std::size_t i = 0; i < qa.size(); ++i) {
        QAPair p;
        p.qa_id = make_qa_id(t.doc_id, t.segment_index, t.template_id, i);
        p.question = qa[i].at("question").get<std::string>();
        p.answer = qa[i].at("answer").get<std::string>();
        p.doc_id = t.doc_id;
        p.segment_index = t.segment_index;
        p.template_id = t.template_id;
        p.provider_id = t.provider_id;
        t.qa_pairs.push_back(std::move(p));
    }
    return t;
}

std::vector<ExtractionTriple> read_checkpoint(const fs::path& path) {
    std::vector<ExtractionTriple> out;
    std::error_code ec;
    if (!fs::exists(path, ec)) return out;
    const std::string data = read_file(path);

    std::size_t start = 0;
    std::size_t line_no = 0;
    std::size_t good_end = 0;
    while (start < data.size()) {
        ++line_no;
        const auto nl = data.find('\n', start);
        const bool terminated = nl != std::string::npos;
        const std::string_view line(data.data() + start, (terminated ? nl : data.size()) - start);
        if (!is_blank(line)) {
            try {
                out.push_back(triple_from_json_line(line));
            } catch (const nlohmann::json::exception& e) {
                if (!terminated) break;  // torn tail from an interrupted append
                throw Error(ErrorCode::SchemaError,
                            path.string() + ":" + std::to_string(line_no) + ": bad checkpoint record: " + e.what());
            }
        }
        if (!terminated) {
            // Complete record missing only its newline: keep it, and terminate it
            // so the next append starts on a fresh line.
            std::ofstream fix(path, std::ios::binary | std::ios::app);
            fix << '\n';
            good_end = data.size() + 1;
            break;
        }
        start = nl + 1;
        good_end = start;
    }
    if (good_end < data.size()) fs::resize_file(path, good_end, ec);
    return out;
}

std::vector<QAPair> pairs_from_triples(const std::vector<ExtractionTriple>& triples) {
    std::vector<QAPair> out;
    for (const auto& t : triples) out.insert(out.end(), t.qa_pairs.begin(), t.qa_pairs.end());
    return out;
}

}  // namespace materia
