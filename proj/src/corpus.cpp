#include "materia/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "materia/error.hpp"
#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(BoundaryRule rule) noexcept {
    switch (rule) {
        case BoundaryRule::HardCut: return "hard_cut";
        case BoundaryRule::PreferSentenceEnd: return "prefer_sentence_end";
        case BoundaryRule::PreferParagraphEnd: return "prefer_paragraph_end";
    }
    return "hard_cut";
}

BoundaryRule boundary_rule_from_string(std::string_view name) {
    if (name == "hard_cut") return BoundaryRule::HardCut;
    if (name == "prefer_sentence_end") return BoundaryRule::PreferSentenceEnd;
    if (name == "prefer_paragraph_end") return BoundaryRule::PreferParagraphEnd;
    throw Error(ErrorCode::ConfigError, "unknown boundary_rule '" + std::string(name) + "'");
}

void SegmentationPolicy::validate() const {
    if (max_chars == 0) throw Error(ErrorCode::ConfigError, "max_chars must be positive");
    if (overlap_chars >= max_chars) {
        throw Error(ErrorCode::ConfigError, "overlap_chars must be smaller than max_chars");
    }
}

namespace {

std::string normalize_newlines(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
        } else {
            out.push_back(raw[i]);
        }
    }
    return out;
}

std::string_view strip_bom(std::string_view s) {
    if (s.size() >= 3 && s.substr(0, 3) == "\xEF\xBB\xBF") return s.substr(3);
    return s;
}

bool is_space_cp(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x3000;
}

bool is_sentence_terminal(char32_t c) {
    return c == U'.' || c == U'!' || c == U'?' || c == 0x3002 /* 。 */ || c == 0xFF01 /* ！ */ ||
           c == 0xFF1F /* ？ */;
}

// A cut at p splits [.., p) | [p, ..).
bool is_sentence_cut(const std::u32string& cps, std::size_t p) {
    if (p == 0 || p > cps.size()) return false;
    const char32_t prev = cps[p - 1];
    if (!is_sentence_terminal(prev)) return false;
    // CJK terminals need no trailing space.
    if (prev >= 0x3000) return true;
    return p == cps.size() || is_space_cp(cps[p]);
}

bool is_paragraph_cut(const std::u32string& cps, std::size_t p) {
    return p >= 2 && p <= cps.size() && cps[p - 1] == U'\n' && cps[p - 2] == U'\n';
}

template <typename Pred>
std::optional<std::size_t> scan_back(std::size_t hard_end, std::size_t lowest, Pred is_cut) {
    for (std::size_t p = hard_end; p >= lowest && p > 0; --p) {
        if (is_cut(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

Document load_document(const fs::path& source_path, std::optional<std::string> domain_hint,
                       std::optional<std::string> record_as) {
    std::error_code ec;
    if (!fs::is_regular_file(source_path, ec)) {
        throw Error(ErrorCode::IoError, "not a readable file: " + source_path.string());
    }
    const std::string raw = read_file(source_path);
    if (!is_valid_utf8(raw)) {
        throw Error(ErrorCode::EncodingError, "not valid UTF-8: " + source_path.string());
    }
    std::string body = normalize_newlines(strip_bom(raw));
    if (is_blank(body)) {
        throw Error(ErrorCode::EmptyDocument, "document is blank: " + source_path.string());
    }

    Document doc;
    doc.source_path = record_as ? *record_as : source_path.generic_string();
    doc.doc_id = sha256_hex(doc.source_path + '\n' + sha256_hex(body)).substr(0, 16);
    doc.title = source_path.stem().string();
    doc.body = std::move(body);
    doc.domain_hint = std::move(domain_hint);
    return doc;
}

std::vector<Document> load_corpus(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw Error(ErrorCode::IoError, "corpus directory not found: " + root.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(root).generic_string() < b.lexically_relative(root).generic_string();
    });

    std::vector<Document> docs;
    docs.reserve(files.size());
    for (const auto& file : files) {
        std::optional<std::string> title;
        std::optional<std::string> hint;
        auto sidecar = file.parent_path() / (file.stem().string() + ".meta.json");
        if (fs::exists(sidecar)) {
            auto meta = nlohmann::json::parse(read_file(sidecar), nullptr, false);
            if (meta.is_discarded() || !meta.is_object()) {
                throw Error(ErrorCode::IoError, "malformed sidecar " + sidecar.string());
            }
            if (meta.contains("title") && meta["title"].is_string()) title = meta["title"].get<std::string>();
            if (meta.contains("domain_hint") && meta["domain_hint"].is_string()) {
                hint = meta["domain_hint"].get<std::string>();
            }
        }
        auto doc = load_document(file, hint, file.lexically_relative(root).generic_string());
        if (title) doc.title = *title;
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<TextSegment> segment(const Document& document, const SegmentationPolicy& policy) {
    policy.validate();
    const std::u32string cps = decode_utf8(document.body);
    const std::vector<std::size_t> offsets = codepoint_offsets(document.body);
    const std::size_t n = cps.size();
    const std::size_t lookback = std::min<std::size_t>(200, policy.max_chars / 4);

    std::vector<TextSegment> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t hard_end = std::min(n, start + policy.max_chars);
        std::size_t end = hard_end;
        if (hard_end < n && policy.boundary_rule != BoundaryRule::HardCut) {
            // The cut must leave room for the overlap so the next start advances.
            const std::size_t lowest =
                std::max(hard_end >= lookback ? hard_end - lookback : 0, start + policy.overlap_chars + 1);
            std::optional<std::size_t> cut;
            if (policy.boundary_rule == BoundaryRule::PreferParagraphEnd) {
                cut = scan_back(hard_end, lowest, [&](std::size_t p) { return is_paragraph_cut(cps, p); });
            }
            if (!cut) cut = scan_back(hard_end, lowest, [&](std::size_t p) { return is_sentence_cut(cps, p); });
            if (cut) end = *cut;
        }

        TextSegment seg;
        seg.doc_id = document.doc_id;
        seg.segment_index = out.size();
        seg.char_start = start;
        seg.char_end = end;
        seg.text = document.body.substr(offsets[start], offsets[end] - offsets[start]);
        out.push_back(std::move(seg));

        if (end >= n) break;
        start = end - policy.overlap_chars;
    }
    return out;
}

void write_segments_jsonl(const std::vector<TextSegment>& segments, const fs::path& path) {
    std::string buf;
    for (const auto& s : segments) {
        ojson j;
        j["doc_id"] = s.doc_id;
        j["segment_index"] = s.segment_index;
        j["text"] = s.text;
        j["char_start"] = s.char_start;
        j["char_end"] = s.char_end;
        buf += j.dump();
        buf += '\n';
    }
    write_file_atomic(path, buf);
}

std::vector<TextSegment> read_segments_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<TextSegment> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            TextSegment s;
            s.doc_id = j.at("doc_id").get<std::string>();
            s.segment_index = j.at("segment_index").get<std::size_t>();
            s.text = j.at("text").get<std::string>();
            s.char_start = j.at("char_start").get<std::size_t>();
            s.char_end = j.at("char_end").get<std::size_t>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaError,
                        path.string() + ":" + std::to_string(line_no) + ": bad segment record: " + e.what());
        }
    }
    return out;
}

}  // namespace materia
