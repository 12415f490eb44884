#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "materia/corpus.hpp"
#include "materia/error.hpp"
#include "materia/gateway.hpp"
#include "materia/prompt.hpp"

namespace materia {

enum class ReviewState { Pending, Accepted, Edited, Rejected };

std::string_view to_string(ReviewState state) noexcept;
ReviewState review_state_from_string(std::string_view name);

struct QAPair {
    std::string qa_id;
    std::string question;
    std::string answer;
    std::string doc_id;
    std::size_t segment_index = 0;
    std::string template_id;
    std::string provider_id;
    std::string model_name;
    std::string domain = "unknown";
    ReviewState review_state = ReviewState::Pending;
    std::optional<std::string> edited_question;
    std::optional<std::string> edited_answer;

    const std::string& final_question() const { return edited_question ? *edited_question : question; }
    const std::string& final_answer() const { return edited_answer ? *edited_answer : answer; }

    bool operator==(const QAPair&) const = default;
};

/// Stable id for the ordinal-th pair extracted from a segment with a template.
std::string make_qa_id(std::string_view doc_id, std::size_t segment_index, std::string_view template_id,
                       std::size_t ordinal);

struct QAText {
    std::string question;
    std::string answer;

    bool operator==(const QAText&) const = default;
};

enum class FormatViolation {
    NoMarkers,              // no Q<i>:/A<i>: marker anywhere
    MissingQuestionMarker,  // an answer with no open question, or text before the first marker
    MissingAnswerMarker,    // a question never answered
    IndexGap,               // indices not 1..n consecutive, duplicated, or A<j> answering Q<i>
    EmptyField,             // question or answer blank after trimming
    TrailingGarbage,        // a line that starts like a marker but is not one ("Q3.", "A2)")
    CountMismatch,          // parsed pair count differs from the requested count
};

std::string_view to_string(FormatViolation kind) noexcept;

class FormatError : public Error {
public:
    FormatError(FormatViolation kind, std::size_t line, const std::string& detail)
        : Error(ErrorCode::FormatError, std::string(to_string(kind)) + " at line " + std::to_string(line) + ": " + detail),
          kind_(kind),
          line_(line) {}

    FormatViolation kind() const noexcept { return kind_; }
    /// 1-based line of the offending input; 0 when the error concerns the whole output.
    std::size_t line() const noexcept { return line_; }

private:
    FormatViolation kind_;
    std::size_t line_;
};

/// Parses the `Q<i>:` / `A<i>:` line grammar. Markers sit at line starts
/// (':' or fullwidth '：'), indices run 1..n, every Q<i> is followed by A<i>,
/// continuation lines belong to the most recent marker, bodies are trimmed.
std::vector<QAText> parse_qa_output(std::string_view raw, std::optional<std::size_t> expected_count = std::nullopt);

/// Inverse of parse_qa_output for well-formed lists.
std::string serialize_qa(const std::vector<QAText>& pairs);

/// The extraction contract: (prompt, text) -> QA.
struct ExtractionTriple {
    std::string prompt;
    std::string source_text;
    std::string doc_id;
    std::size_t segment_index = 0;
    std::string template_id;
    std::string provider_id;
    std::string model_name;
    std::vector<QAPair> qa_pairs;
    int repair_retries = 0;
};

inline constexpr std::string_view kRepairSuffix =
    "\n\nYour previous output violated the format; re-emit strictly in the required Q<i>:/A<i>: format, "
    "with no other text.";

struct ExtractionOptions {
    std::size_t qa_count = 3;
    std::string model_name;
    std::optional<std::string> system_prompt;
    double temperature = 0.7;
    int max_tokens = 2048;
};

ChatRequest make_extraction_request(const std::string& prompt, const ExtractionOptions& options);
std::map<std::string, std::string> extraction_values(const TextSegment& segment, const ExtractionOptions& options);

ExtractionTriple extract_qa(const TextSegment& segment, const PromptTemplate& tmpl, ChatProvider& provider,
                            Gateway& gateway, const ExtractionOptions& options = {});

struct ComplianceViolation {
    std::string doc_id;
    std::size_t segment_index = 0;
    FormatViolation kind{};
    std::size_t line = 0;
    int attempt = 0;  // 0 = first output, 1 = repair output
};

struct FormatComplianceReport {
    std::size_t total_outputs = 0;  // segments that produced at least one output
    std::size_t compliant = 0;      // of those, first output parsed cleanly
    std::vector<ComplianceViolation> violations;

    std::size_t segments_with_violations() const;
};

struct ExtractionReport {
    std::size_t segments_total = 0;
    std::size_t skipped = 0;  // already in the checkpoint
    std::size_t attempted = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::size_t repaired = 0;
    std::size_t qa_pairs = 0;
    FormatComplianceReport compliance;
    std::map<std::string, std::size_t> error_tallies;
};

/// Runs every segment not already checkpointed; appends each successful
/// triple to the checkpoint as soon as it lands. Throws Error(JobFailed) when
/// every attempted segment failed.
ExtractionReport run_extraction_job(const std::vector<TextSegment>& segments, const PromptTemplate& tmpl,
                                    ChatProvider& provider, Gateway& gateway,
                                    const std::filesystem::path& checkpoint_path,
                                    const ExtractionOptions& options = {});

std::string triple_to_json_line(const ExtractionTriple& triple);
ExtractionTriple triple_from_json_line(std::string_view line);

/// Reads a checkpoint. A torn final line (no newline, unparseable) from an
/// interrupted write is ignored; any other malformed line is a SchemaError.
std::vector<ExtractionTriple> read_checkpoint(const std::filesystem::path& path);

/// Rebuilds pending QA pairs from triples (qa ids are derived, not stored).
std::vector<QAPair> pairs_from_triples(const std::vector<ExtractionTriple>& triples);

}  // namespace materia
