#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "materia/dataset.hpp"
#include "materia/extraction.hpp"

struct sqlite3;

namespace materia {

enum class Decision { Accept, Edit, Reject };

std::string_view to_string(Decision d) noexcept;
Decision decision_from_string(std::string_view name);

struct ReviewDecision {
    std::string qa_id;
    Decision decision = Decision::Accept;
    std::optional<std::string> edited_question;
    std::optional<std::string> edited_answer;
    std::string reviewer_id;
    std::string decided_at;  // ISO-8601 UTC; stamped by the store when empty

    bool operator==(const ReviewDecision&) const = default;
};

enum class SessionStatus { Open, Finalized };

std::string_view to_string(SessionStatus s) noexcept;
SessionStatus session_status_from_string(std::string_view s);

struct BlindEntry {
    std::string anon_label;
    std::string answer_text;
    std::string hidden_model_id;

    bool operator==(const BlindEntry&) const = default;
};

struct BlindSession {
    std::string session_id;
    std::string question;
    std::vector<BlindEntry> entries;
    SessionStatus status = SessionStatus::Open;
    std::optional<std::string> composed_benchmark;
    std::int64_t shuffle_seed = 0;
    std::string created_at;

    bool operator==(const BlindSession&) const = default;
};

struct BenchmarkAnswer {
    std::string question;
    std::string answer;
    std::string session_id;
    std::string finalized_at;

    bool operator==(const BenchmarkAnswer&) const = default;
};

/// "Answer A", ..., "Answer Z", "Answer AA", ...
std::string anon_label(std::size_t ordinal);

/// Entries for a blind session: answers ordered by model id, then shuffled
/// with a portable seeded Fisher-Yates, then labelled in shuffled order.
std::vector<BlindEntry> blind_entries(const std::map<std::string, std::string>& model_answers, std::int64_t seed);

std::string utc_now_iso8601();

/// Expert-review store over a single SQLite file (WAL). Every mutation is an
/// event appended to a log and applied to materialized tables in the same
/// transaction, so replaying the log into an empty store reproduces it.
/// Thread-safe; all operations are serialized.
class ReviewStore {
public:
    explicit ReviewStore(const std::filesystem::path& path);  // ":memory:" for an in-memory store
    ~ReviewStore();
    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;

    void set_time_source(std::function<std::string()> now);

    /// Persists pending pairs; existing qa_ids are left untouched. `contexts`
    /// maps "doc_id#segment_index" to source text shown to reviewers.
    std::size_t enqueue(const std::vector<QAPair>& pairs, const std::map<std::string, std::string>& contexts = {});

    QAPair decide(ReviewDecision decision);

    std::optional<QAPair> get(std::string_view qa_id) const;
    std::optional<std::string> source_text(std::string_view qa_id) const;
    std::vector<ReviewDecision> history(std::string_view qa_id) const;
    std::vector<QAPair> queue(std::optional<ReviewState> state, std::size_t limit, std::size_t offset = 0) const;
    std::size_t count(std::optional<ReviewState> state) const;
    std::vector<QAPair> all_pairs() const;
    std::map<ReviewState, std::size_t> tallies() const;

    /// Identical inputs (question, seed, answers) return the existing session.
    BlindSession create_blind_session(const std::string& question, const std::map<std::string, std::string>& model_answers,
                                      std::int64_t seed);
    std::optional<BlindSession> session(std::string_view session_id) const;
    std::vector<BlindSession> sessions(std::optional<SessionStatus> status = std::nullopt) const;
    BenchmarkAnswer finalize_benchmark(std::string_view session_id, const std::string& composed_answer);
    /// label -> model id; Error(SessionNotFinalized) while the session is open.
    std::vector<std::pair<std::string, std::string>> unmask(std::string_view session_id) const;
    std::vector<BenchmarkAnswer> benchmarks() const;

    /// Current state of every pair (with decision history), one JSON object per line.
    std::string export_jsonl() const;
    /// Full deterministic state dump: pairs, sessions, benchmarks.
    std::string snapshot() const;
    /// The event log, one JSON object per line.
    std::string event_log() const;
    /// Applies a previously exported event log. Intended for empty stores.
    void replay(std::string_view log);

private:
    void exec(const char* sql);
    void apply_event(const std::string& event_json);
    void append_and_apply(const std::string& event_json);
    std::string now() const;

    sqlite3* db_ = nullptr;
    mutable std::mutex mu_;
    std::function<std::string()> now_;
};

std::string pair_to_json_text(const QAPair& p);
QAPair pair_from_json_text(std::string_view text);
std::string decision_to_json_text(const ReviewDecision& d);
ReviewDecision decision_from_json_text(std::string_view text);

/// Reads a `review export` file back into pairs with their current state.
std::vector<QAPair> read_review_export(const std::filesystem::path& path);

}  // namespace materia
