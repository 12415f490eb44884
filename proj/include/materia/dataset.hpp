#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "materia/extraction.hpp"

namespace materia {

enum class Role { User, Assistant };

struct Message {
    Role role;
    std::string content;

    bool operator==(const Message&) const = default;
};

/// One training record: a user question followed by the assistant answer.
struct InstructionRecord {
    std::vector<Message> messages;

    const std::string& question() const { return messages.at(0).content; }
    const std::string& answer() const { return messages.at(1).content; }

    bool operator==(const InstructionRecord&) const = default;
};

InstructionRecord make_record(std::string question, std::string answer);

/// Throws Error(NotReviewed) unless the pair is accepted or edited.
InstructionRecord to_instruction_record(const QAPair& qa);

/// Serializes one record as a single line (no newline), with keys in the
/// order messages, role, content and one space after every ':' and ','
/// separating members and elements:
///   {"messages": [{"role": "user", "content": "..."}, {"role": "assistant", "content": "..."}]}
std::string serialize_record(const InstructionRecord& record);

/// Parses and schema-checks one line. Throws Error(SchemaError).
InstructionRecord parse_record(std::string_view line);

std::size_t write_jsonl(const std::vector<InstructionRecord>& records, const std::filesystem::path& path);
std::vector<InstructionRecord> read_jsonl(const std::filesystem::path& path);

enum class DedupePolicy { Exact, Normalized };
DedupePolicy dedupe_policy_from_string(std::string_view name);

struct DuplicateGroup {
    std::size_t kept_index;                // index in the input
    std::vector<std::size_t> duplicates;   // later input indices collapsed into it
};

struct DedupeReport {
    std::size_t input_count = 0;
    std::size_t kept_count = 0;
    std::vector<DuplicateGroup> groups;    // only groups that actually collapsed
};

/// Lowercase (ASCII), fold whitespace runs to one space, strip terminal
/// punctuation. The normalized dedupe key.
std::string normalize_question(std::string_view question);

std::pair<std::vector<InstructionRecord>, DedupeReport> dedupe(const std::vector<InstructionRecord>& records,
                                                                DedupePolicy policy);

inline constexpr std::string_view kUnknownDomain = "unknown";

struct DomainTaxonomy {
    std::vector<std::string> labels;  // ordered; includes "unknown"
    std::map<std::string, std::vector<std::string>> keyword_rules;

    /// Throws Error(ConfigError) on duplicate labels, a missing "unknown", rules
    /// for "unknown", or rules for labels not in the list.
    void validate() const;
};

DomainTaxonomy load_taxonomy(const std::filesystem::path& path);
DomainTaxonomy taxonomy_from_json_text(std::string_view text);

/// Label whose trigger phrases occur most often (case-insensitive substring
/// hits) across question and answer; ties go to the earlier label; no hits
/// gives "unknown".
std::string tag_text(std::string_view question, std::string_view answer, const DomainTaxonomy& taxonomy);
std::string tag_domain(const QAPair& qa, const DomainTaxonomy& taxonomy);

struct DomainDistribution {
    std::vector<std::pair<std::string, std::size_t>> counts;  // taxonomy order
    std::size_t total = 0;

    std::size_t count(std::string_view label) const;
    bool operator==(const DomainDistribution&) const = default;
};

DomainDistribution compute_distribution(const std::vector<QAPair>& tagged, const DomainTaxonomy& taxonomy);
DomainDistribution distribution_of_labels(const std::vector<std::string>& labels, const DomainTaxonomy& taxonomy);

std::string distribution_to_json_text(const DomainDistribution& dist);
DomainDistribution distribution_from_json_text(std::string_view text);

struct TrainRunConfig {
    std::string base_model = "glm4-9b";
    std::string method = "low-rank-adaptation";
    double learning_rate = 1e-5;
    int batch_size = 4;
    int epochs = 3;
    std::string dataset_path;
    std::string output_dir = "runs/lora";

    bool operator==(const TrainRunConfig&) const = default;
};

struct TrainConfigOverrides {
    std::optional<std::string> base_model;
    std::optional<double> learning_rate;
    std::optional<int> batch_size;
    std::optional<int> epochs;
    std::optional<std::string> output_dir;
};

std::string train_config_to_json_text(const TrainRunConfig& config);
TrainRunConfig train_config_from_json_text(std::string_view text);

/// Validates the dataset (Error(DatasetInvalid) naming the first bad line),
/// applies overrides, and writes the flat JSON config to `out_path`.
TrainRunConfig emit_train_config(const std::filesystem::path& dataset_path, const TrainConfigOverrides& overrides,
                                 const std::filesystem::path& out_path);

/// Seeded train/validation split; deterministic for a given seed.
std::pair<std::vector<InstructionRecord>, std::vector<InstructionRecord>> split_records(
    const std::vector<InstructionRecord>& records, double validation_fraction, std::uint64_t seed);

}  // namespace materia
