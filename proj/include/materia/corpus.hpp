#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace materia {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;  // UTF-8, Unix line endings
    std::optional<std::string> domain_hint;
    std::string source_path;

    bool operator==(const Document&) const = default;
};

/// A contiguous slice of a document body. Offsets count Unicode codepoints,
/// end exclusive.
struct TextSegment {
    std::string doc_id;
    std::size_t segment_index = 0;
    std::string text;
    std::size_t char_start = 0;
    std::size_t char_end = 0;

    bool operator==(const TextSegment&) const = default;
};

enum class BoundaryRule { HardCut, PreferSentenceEnd, PreferParagraphEnd };

std::string_view to_string(BoundaryRule rule) noexcept;
BoundaryRule boundary_rule_from_string(std::string_view name);

struct SegmentationPolicy {
    std::size_t max_chars = 3000;
    std::size_t overlap_chars = 200;
    BoundaryRule boundary_rule = BoundaryRule::PreferParagraphEnd;

    /// Throws Error(ConfigError) unless max_chars > 0 and overlap_chars < max_chars.
    void validate() const;
};

/// Reads a UTF-8 text or markdown file. `record_as` overrides the source path
/// stored on the document (and hashed into doc_id); the corpus loader passes
/// the path relative to the corpus root so ids do not depend on where the
/// corpus is checked out.
Document load_document(const std::filesystem::path& source_path,
                       std::optional<std::string> domain_hint = std::nullopt,
                       std::optional<std::string> record_as = std::nullopt);

/// Loads every .txt/.md file under root, sorted by relative path. A sidecar
/// `<stem>.meta.json` may supply {"title", "domain_hint"}.
std::vector<Document> load_corpus(const std::filesystem::path& root);

std::vector<TextSegment> segment(const Document& document, const SegmentationPolicy& policy);

void write_segments_jsonl(const std::vector<TextSegment>& segments, const std::filesystem::path& path);
std::vector<TextSegment> read_segments_jsonl(const std::filesystem::path& path);

}  // namespace materia
