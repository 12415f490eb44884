#include "materia/review.hpp"

#include <sqlite3.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Decision d) noexcept {
    switch (d) {
        case Decision::Accept: return "accept";
        case Decision::Edit: return "edit";
        case Decision::Reject: return "reject";
    }
    return "accept";
}

Decision decision_from_string(std::string_view name) {
    if (name == "accept") return Decision::Accept;
    if (name == "edit") return Decision::Edit;
    if (name == "reject") return Decision::Reject;
    throw Error(ErrorCode::InvalidRequest, "unknown decision '" + std::string(name) + "'");
}

std::string_view to_string(SessionStatus s) noexcept { return s == SessionStatus::Open ? "open" : "finalized"; }

SessionStatus session_status_from_string(std::string_view s) {
    if (s == "open") return SessionStatus::Open;
    if (s == "finalized") return SessionStatus::Finalized;
    throw Error(ErrorCode::InvalidRequest, "unknown session status '" + std::string(s) + "'");
}

namespace {

template <typename T>
ojson optional_json(const std::optional<T>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

ojson pair_json(const QAPair& p) {
    ojson j;
    j["qa_id"] = p.qa_id;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["doc_id"] = p.doc_id;
    j["segment_index"] = p.segment_index;
    j["template_id"] = p.template_id;
    j["provider_id"] = p.provider_id;
    j["model_name"] = p.model_name;
    j["domain"] = p.domain;
    j["review_state"] = to_string(p.review_state);
    j["edited_question"] = optional_json(p.edited_question);
    j["edited_answer"] = optional_json(p.edited_answer);
    return j;
}

QAPair pair_from_json(const nlohmann::json& j) {
    QAPair p;
    p.qa_id = j.at("qa_id").get<std::string>();
    p.question = j.at("question").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    p.doc_id = j.at("doc_id").get<std::string>();
    p.segment_index = j.at("segment_index").get<std::size_t>();
    p.template_id = j.value("template_id", "");
    p.provider_id = j.value("provider_id", "");
    p.model_name = j.value("model_name", "");
    p.domain = j.value("domain", std::string(kUnknownDomain));
    p.review_state = review_state_from_string(j.value("review_state", "pending"));
    p.edited_question = optional_string(j, "edited_question");
    p.edited_answer = optional_string(j, "edited_answer");
    return p;
}

ojson decision_json(const ReviewDecision& d) {
    ojson j;
    j["qa_id"] = d.qa_id;
    j["decision"] = to_string(d.decision);
    j["edited_question"] = optional_json(d.edited_question);
    j["edited_answer"] = optional_json(d.edited_answer);
    j["reviewer_id"] = d.reviewer_id;
    j["decided_at"] = d.decided_at;
    return j;
}

ReviewDecision decision_from_json(const nlohmann::json& j) {
    ReviewDecision d;
    d.qa_id = j.at("qa_id").get<std::string>();
    d.decision = decision_from_string(j.at("decision").get<std::string>());
    d.edited_question = optional_string(j, "edited_question");
    d.edited_answer = optional_string(j, "edited_answer");
    d.reviewer_id = j.value("reviewer_id", "");
    d.decided_at = j.value("decided_at", "");
    return d;
}

ojson session_json(const BlindSession& s) {
    ojson j;
    j["session_id"] = s.session_id;
    j["question"] = s.question;
    j["entries"] = ojson::array();
    for (const auto& e : s.entries) {
        ojson ej;
        ej["anon_label"] = e.anon_label;
        ej["answer_text"] = e.answer_text;
        ej["hidden_model_id"] = e.hidden_model_id;
        j["entries"].push_back(std::move(ej));
    }
    j["status"] = to_string(s.status);
    j["composed_benchmark"] = optional_json(s.composed_benchmark);
    j["shuffle_seed"] = s.shuffle_seed;
    j["created_at"] = s.created_at;
    return j;
}

BlindSession session_from_json(const nlohmann::json& j) {
    BlindSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    for (const auto& e : j.at("entries")) {
        s.entries.push_back({e.at("anon_label").get<std::string>(), e.at("answer_text").get<std::string>(),
                             e.at("hidden_model_id").get<std::string>()});
    }
    s.status = session_status_from_string(j.at("status").get<std::string>());
    s.composed_benchmark = optional_string(j, "composed_benchmark");
    s.shuffle_seed = j.at("shuffle_seed").get<std::int64_t>();
    s.created_at = j.value("created_at", "");
    return s;
}

ojson benchmark_json(const BenchmarkAnswer& b) {
    ojson j;
    j["session_id"] = b.session_id;
    j["question"] = b.question;
    j["answer"] = b.answer;
    j["finalized_at"] = b.finalized_at;
    return j;
}

BenchmarkAnswer benchmark_from_json(const nlohmann::json& j) {
    return {j.at("question").get<std::string>(), j.at("answer").get<std::string>(), j.at("session_id").get<std::string>(),
            j.value("finalized_at", "")};
}

/// RAII prepared statement.
class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw Error(ErrorCode::StorageError, std::string("prepare failed: ") + sqlite3_errmsg(db));
        }
    }
    ~Stmt() { sqlite3_finalize(stmt_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, std::string_view text) {
        check(sqlite3_bind_text(stmt_, i, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Stmt& bind_null(int i) {
        check(sqlite3_bind_null(stmt_, i));
        return *this;
    }

    /// True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw Error(ErrorCode::StorageError, std::string("step failed: ") + sqlite3_errmsg(db_));
    }

    std::string text(int col) const {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
                 : std::string();
    }
    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) throw Error(ErrorCode::StorageError, std::string("bind failed: ") + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

std::string context_key(const QAPair& p) { return p.doc_id + "#" + std::to_string(p.segment_index); }

}  // namespace

std::string pair_to_json_text(const QAPair& p) { return pair_json(p).dump(); }
QAPair pair_from_json_text(std::string_view text) { return pair_from_json(nlohmann::json::parse(text)); }
std::string decision_to_json_text(const ReviewDecision& d) { return decision_json(d).dump(); }
ReviewDecision decision_from_json_text(std::string_view text) { return decision_from_json(nlohmann::json::parse(text)); }

std::string anon_label(std::size_t ordinal) {
    std::string letters;
    std::size_t n = ordinal + 1;
    while (n > 0) {
        --n;
        letters.insert(letters.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return "Answer " + letters;
}

std::vector<BlindEntry> blind_entries(const std::map<std::string, std::string>& model_answers, std::int64_t seed) {
    std::vector<std::pair<std::string, std::string>> items(model_answers.begin(), model_answers.end());
    SplitMix64 rng(static_cast<std::uint64_t>(seed));
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
    std::vector<BlindEntry> entries;
    for (std::size_t i = 0; i < items.size(); ++i) entries.push_back({anon_label(i), items[i].second, items[i].first});
    return entries;
}

std::string utc_now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------

ReviewStore::ReviewStore(const fs::path& path) : now_(utc_now_iso8601) {
    const std::string p = path.string();
    if (p != ":memory:" && path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    if (sqlite3_open_v2(p.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr) !=
        SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw Error(ErrorCode::StorageError, "cannot open store " + p + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    if (p != ":memory:") exec("PRAGMA journal_mode=WAL;");
    exec("PRAGMA synchronous=NORMAL;");
    exec(R"sql(
        CREATE TABLE IF NOT EXISTS events(seq INTEGER PRIMARY KEY AUTOINCREMENT, body TEXT NOT NULL);
        CREATE TABLE IF NOT EXISTS pairs(qa_id TEXT PRIMARY KEY, enq_seq INTEGER NOT NULL, state TEXT NOT NULL,
                                         body TEXT NOT NULL, source_text TEXT);
        CREATE INDEX IF NOT EXISTS pairs_by_state ON pairs(state, enq_seq);
        CREATE TABLE IF NOT EXISTS decisions(seq INTEGER PRIMARY KEY AUTOINCREMENT, qa_id TEXT NOT NULL, body TEXT NOT NULL);
        CREATE INDEX IF NOT EXISTS decisions_by_qa ON decisions(qa_id, seq);
        CREATE TABLE IF NOT EXISTS sessions(session_id TEXT PRIMARY KEY, ord INTEGER NOT NULL, status TEXT NOT NULL,
                                            body TEXT NOT NULL);
        CREATE TABLE IF NOT EXISTS benchmarks(session_id TEXT PRIMARY KEY, ord INTEGER NOT NULL, body TEXT NOT NULL);
    )sql");
}

ReviewStore::~ReviewStore() {
    if (db_) sqlite3_close(db_);
}

void ReviewStore::set_time_source(std::function<std::string()> now) {
    std::lock_guard lock(mu_);
    now_ = std::move(now);
}

std::string ReviewStore::now() const { return now_(); }

void ReviewStore::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw Error(ErrorCode::StorageError, "sql failed: " + msg);
    }
}

void ReviewStore::append_and_apply(const std::string& event_json) {
    exec("BEGIN IMMEDIATE;");
    try {
        Stmt(db_, "INSERT INTO events(body) VALUES(?)").bind(1, event_json).step();
        apply_event(event_json);
        exec("COMMIT;");
    } catch (...) {
        exec("ROLLBACK;");
        throw;
    }
}

void ReviewStore::apply_event(const std::string& event_json) {
    const auto ev = nlohmann::json::parse(event_json);
    const auto kind = ev.at("kind").get<std::string>();

    if (kind == "enqueue") {
        const auto contexts = ev.contains("contexts") ? ev["contexts"] : nlohmann::json::object();
        for (const auto& pj : ev.at("pairs")) {
            const QAPair p = pair_from_json(pj);
            Stmt st(db_,
                    "INSERT OR IGNORE INTO pairs(qa_id, enq_seq, state, body, source_text) "
                    "VALUES(?, (SELECT COUNT(*) FROM pairs), ?, ?, ?)");
            st.bind(1, p.qa_id).bind(2, to_string(p.review_state)).bind(3, pair_json(p).dump());
            const auto key = context_key(p);
            if (contexts.contains(key)) {
                st.bind(4, contexts[key].get<std::string>());
            } else {
                st.bind_null(4);
            }
            st.step();
        }
    } else if (kind == "decide") {
        const ReviewDecision d = decision_from_json(ev.at("decision"));
        Stmt sel(db_, "SELECT body FROM pairs WHERE qa_id = ?");
        sel.bind(1, d.qa_id);
        if (!sel.step()) throw Error(ErrorCode::UnknownQaId, "unknown qa_id " + d.qa_id);
        QAPair p = pair_from_json_text(sel.text(0));
        p.edited_question.reset();
        p.edited_answer.reset();
        switch (d.decision) {
            case Decision::Accept: p.review_state = ReviewState::Accepted; break;
            case Decision::Reject: p.review_state = ReviewState::Rejected; break;
            case Decision::Edit:
                p.review_state = ReviewState::Edited;
                p.edited_question = d.edited_question;
                p.edited_answer = d.edited_answer;
                break;
        }
        Stmt(db_, "UPDATE pairs SET state = ?, body = ? WHERE qa_id = ?")
            .bind(1, to_string(p.review_state))
            .bind(2, pair_json(p).dump())
            .bind(3, p.qa_id)
            .step();
        Stmt(db_, "INSERT INTO decisions(qa_id, body) VALUES(?, ?)").bind(1, d.qa_id).bind(2, decision_json(d).dump()).step();
    } else if (kind == "session_create") {
        const BlindSession s = session_from_json(ev.at("session"));
        Stmt(db_, "INSERT INTO sessions(session_id, ord, status, body) VALUES(?, (SELECT COUNT(*) FROM sessions), ?, ?)")
            .bind(1, s.session_id)
            .bind(2, to_string(s.status))
            .bind(3, session_json(s).dump())
            .step();
    } else if (kind == "session_finalize") {
        const auto id = ev.at("session_id").get<std::string>();
        Stmt sel(db_, "SELECT body FROM sessions WHERE session_id = ?");
        sel.bind(1, id);
        if (!sel.step()) throw Error(ErrorCode::UnknownSession, "unknown session " + id);
        BlindSession s = session_from_json(nlohmann::json::parse(sel.text(0)));
        s.status = SessionStatus::Finalized;
        s.composed_benchmark = ev.at("composed_answer").get<std::string>();
        Stmt(db_, "UPDATE sessions SET status = ?, body = ? WHERE session_id = ?")
            .bind(1, to_string(s.status))
            .bind(2, session_json(s).dump())
            .bind(3, id)
            .step();
        const BenchmarkAnswer b{s.question, *s.composed_benchmark, id, ev.at("finalized_at").get<std::string>()};
        Stmt(db_, "INSERT INTO benchmarks(session_id, ord, body) VALUES(?, (SELECT COUNT(*) FROM benchmarks), ?)")
            .bind(1, id)
            .bind(2, benchmark_json(b).dump())
            .step();
    } else {
        throw Error(ErrorCode::StorageError, "unknown event kind '" + kind + "'");
    }
}

std::size_t ReviewStore::enqueue(const std::vector<QAPair>& pairs, const std::map<std::string, std::string>& contexts) {
    for (const auto& p : pairs) {
        if (p.review_state != ReviewState::Pending) {
            throw Error(ErrorCode::InvalidState, "pair " + p.qa_id + " is " + std::string(to_string(p.review_state)) +
                                                     "; only pending pairs can be enqueued");
        }
        if (p.qa_id.empty() || is_blank(p.question) || is_blank(p.answer)) {
            throw Error(ErrorCode::InvalidRequest, "pair " + p.qa_id + " lacks an id, question or answer");
        }
    }
    std::lock_guard lock(mu_);
    ojson ev;
    ev["kind"] = "enqueue";
    ev["pairs"] = ojson::array();
    ev["contexts"] = ojson::object();
    std::set<std::string> seen;
    for (const auto& p : pairs) {
        Stmt sel(db_, "SELECT 1 FROM pairs WHERE qa_id = ?");
        sel.bind(1, p.qa_id);
        if (sel.step() || !seen.insert(p.qa_id).second) continue;
        ev["pairs"].push_back(pair_json(p));
        if (auto it = contexts.find(context_key(p)); it != contexts.end()) ev["contexts"][it->first] = it->second;
    }
    const std::size_t added = ev["pairs"].size();
    if (added > 0) append_and_apply(ev.dump());
    return added;
}

QAPair ReviewStore::decide(ReviewDecision decision) {
    if (decision.reviewer_id.empty()) throw Error(ErrorCode::InvalidRequest, "reviewer_id is required");
    const bool has_edit = (decision.edited_question && !is_blank(*decision.edited_question)) ||
                          (decision.edited_answer && !is_blank(*decision.edited_answer));
    if (decision.decision == Decision::Edit && !has_edit) {
        throw Error(ErrorCode::InvalidEdit, "an edit decision needs edited_question or edited_answer");
    }
    if (decision.decision != Decision::Edit && (decision.edited_question || decision.edited_answer)) {
        throw Error(ErrorCode::InvalidEdit, "edited text is only allowed with an edit decision");
    }
    // Blank edited fields mean "unchanged".
    if (decision.edited_question && is_blank(*decision.edited_question)) decision.edited_question.reset();
    if (decision.edited_answer && is_blank(*decision.edited_answer)) decision.edited_answer.reset();

    std::lock_guard lock(mu_);
    {
        Stmt sel(db_, "SELECT 1 FROM pairs WHERE qa_id = ?");
        sel.bind(1, decision.qa_id);
        if (!sel.step()) throw Error(ErrorCode::UnknownQaId, "unknown qa_id " + decision.qa_id);
    }
    if (decision.decided_at.empty()) decision.decided_at = now();
    ojson ev;
    ev["kind"] = "decide";
    ev["decision"] = decision_json(decision);
    append_and_apply(ev.dump());

    Stmt sel(db_, "SELECT body FROM pairs WHERE qa_id = ?");
    sel.bind(1, decision.qa_id);
    sel.step();
    return pair_from_json_text(sel.text(0));
}

std::optional<QAPair> ReviewStore::get(std::string_view qa_id) const {
    std::lock_guard lock(mu_);
    Stmt sel(db_, "SELECT body FROM pairs WHERE qa_id = ?");
    sel.bind(1, qa_id);
    if (!sel.step()) return std::nullopt;
    return pair_from_json_text(sel.text(0));
}

std::optional<std::string> ReviewStore::source_text(std::string_view qa_id) const {
    std::lock_guard lock(mu_);
    Stmt sel(db_, "SELECT source_text FROM pairs WHERE qa_id = ?");
    sel.bind(1, qa_id);
    if (!sel.step() || sel.is_null(0)) return std::nullopt;
    return sel.text(0);
}

std::vector<ReviewDecision> ReviewStore::history(std::string_view qa_id) const {
    std::lock_guard lock(mu_);
    Stmt sel(db_, "SELECT body FROM decisions WHERE qa_id = ? ORDER BY seq");
    sel.bind(1, qa_id);
    std::vector<ReviewDecision> out;
    while (sel.step()) out.push_back(decision_from_json_text(sel.text(0)));
    return out;
}

std::vector<QAPair> ReviewStore::queue(std::optional<ReviewState> state, std::size_t limit, std::size_t offset) const {
    const auto lim = static_cast<std::int64_t>(std::min<std::size_t>(limit, INT64_MAX));
    const auto off = static_cast<std::int64_t>(std::min<std::size_t>(offset, INT64_MAX));
    std::lock_guard lock(mu_);
    std::vector<QAPair> out;
    if (state) {
        Stmt sel(db_, "SELECT body FROM pairs WHERE state = ? ORDER BY enq_seq LIMIT ? OFFSET ?");
        sel.bind(1, to_string(*state)).bind(2, lim).bind(3, off);
        while (sel.step()) out.push_back(pair_from_json_text(sel.text(0)));
    } else {
        Stmt sel(db_, "SELECT body FROM pairs ORDER BY enq_seq LIMIT ? OFFSET ?");
        sel.bind(1, lim).bind(2, off);
        while (sel.step()) out.push_back(pair_from_json_text(sel.text(0)));
    }
    return out;
}

std::size_t ReviewStore::count(std::optional<ReviewState> state) const {
    std::lock_guard lock(mu_);
    if (state) {
        Stmt sel(db_, "SELECT COUNT(*) FROM pairs WHERE state = ?");
        sel.bind(1, to_string(*state));
        sel.step();
        return static_cast<std::size_t>(sel.int64(0));
    }
    Stmt sel(db_, "SELECT COUNT(*) FROM pairs");
    sel.step();
    return static_cast<std::size_t>(sel.int64(0));
}

std::vector<QAPair> ReviewStore::all_pairs() const { return queue(std::nullopt, SIZE_MAX); }

std::map<ReviewState, std::size_t> ReviewStore::tallies() const {
    std::map<ReviewState, std::size_t> out{{ReviewState::Pending, 0}, {ReviewState::Accepted, 0},
                                           {ReviewState::Edited, 0}, {ReviewState::Rejected, 0}};
    std::lock_guard lock(mu_);
    Stmt sel(db_, "SELECT state, COUNT(*) FROM pairs GROUP BY state");
    while (sel.step()) out[review_state_from_string(sel.text(0))] = static_cast<std::size_t>(sel.int64(1));
    return out;
}

BlindSession ReviewStore::create_blind_session(const std::string& question,
                                               const std::map<std::string, std::string>& model_answers, std::int64_t seed) {
    if (model_answers.size() < 2) throw Error(ErrorCode::TooFewAnswers, "a blind session needs at least 2 model answers");
    if (is_blank(question)) throw Error(ErrorCode::InvalidRequest, "question is empty");
    for (const auto& [model, answer] : model_answers) {
        if (model.empty() || is_blank(answer)) throw Error(ErrorCode::InvalidRequest, "every model answer needs an id and text");
    }
    std::string key = question + '\x1f' + std::to_string(seed);
    for (const auto& [model, answer] : model_answers) key += '\x1f' + model + '\x1e' + answer;
    const std::string id = "s-" + sha256_hex(key).substr(0, 12);

    std::lock_guard lock(mu_);
    {
        Stmt sel(db_, "SELECT body FROM sessions WHERE session_id = ?");
        sel.bind(1, id);
        if (sel.step()) return session_from_json(nlohmann::json::parse(sel.text(0)));
    }

    BlindSession s;
    s.session_id = id;
    s.question = question;
    s.entries = blind_entries(model_answers, seed);
    s.shuffle_seed = seed;
    s.created_at = now();

    ojson ev;
    ev["kind"] = "session_create";
    ev["session"] = session_json(s);
    append_and_apply(ev.dump());
    return s;
}

std::optional<BlindSession> ReviewStore::session(std::string_view session_id) const {
    std::lock_guard lock(mu_);
    Stmt sel(db_, "SELECT body FROM sessions WHERE session_id = ?");
    sel.bind(1, session_id);
    if (!sel.step()) return std::nullopt;
    return session_from_json(nlohmann::json::parse(sel.text(0)));
}

std::vector<BlindSession> ReviewStore::sessions(std::optional<SessionStatus> status) const {
    std::lock_guard lock(mu_);
    std::vector<BlindSession> out;
    Stmt sel(db_, "SELECT body FROM sessions ORDER BY ord");
    while (sel.step()) {
        auto s = session_from_json(nlohmann::json::parse(sel.text(0)));
        if (!status || s.status == *status) out.push_back(std::move(s));
    }
    return out;
}

BenchmarkAnswer ReviewStore::finalize_benchmark(std::string_view session_id, const std::string& composed_answer) {
    std::lock_guard lock(mu_);
    {
        Stmt sel(db_, "SELECT status FROM sessions WHERE session_id = ?");
        sel.bind(1, session_id);
        if (!sel.step()) throw Error(ErrorCode::UnknownSession, "unknown session " + std::string(session_id));
        if (sel.text(0) != "open") {
            throw Error(ErrorCode::SessionNotOpen, "session " + std::string(session_id) + " is already finalized");
        }
    }
    if (is_blank(composed_answer)) throw Error(ErrorCode::EmptyAnswer, "composed benchmark answer is empty");

    ojson ev;
    ev["kind"] = "session_finalize";
    ev["session_id"] = session_id;
    ev["composed_answer"] = composed_answer;
    ev["finalized_at"] = now();
    append_and_apply(ev.dump());

    Stmt b(db_, "SELECT body FROM benchmarks WHERE session_id = ?");
    b.bind(1, session_id);
    b.step();
    return benchmark_from_json(nlohmann::json::parse(b.text(0)));
}

std::vector<std::pair<std::string, std::string>> ReviewStore::unmask(std::string_view session_id) const {
    auto s = session(session_id);
    if (!s) throw Error(ErrorCode::UnknownSession, "unknown session " + std::string(session_id));
    if (s->status != SessionStatus::Finalized) {
        throw Error(ErrorCode::SessionNotFinalized, "session " + std::string(session_id) + " is not finalized");
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : s->entries) out.emplace_back(e.anon_label, e.hidden_model_id);
    return out;
}

std::vector<BenchmarkAnswer> ReviewStore::benchmarks() const {
    std::lock_guard lock(mu_);
    std::vector<BenchmarkAnswer> out;
    Stmt sel(db_, "SELECT body FROM benchmarks ORDER BY ord");
    while (sel.step()) out.push_back(benchmark_from_json(nlohmann::json::parse(sel.text(0))));
    return out;
}

std::string ReviewStore::export_jsonl() const {
    std::lock_guard lock(mu_);
    std::string out;
    Stmt sel(db_, "SELECT body FROM pairs ORDER BY enq_seq");
    while (sel.step()) {
        auto j = pair_json(pair_from_json_text(sel.text(0)));
        j["history"] = ojson::array();
        Stmt h(db_, "SELECT body FROM decisions WHERE qa_id = ? ORDER BY seq");
        h.bind(1, j["qa_id"].get<std::string>());
        while (h.step()) j["history"].push_back(decision_json(decision_from_json_text(h.text(0))));
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string ReviewStore::snapshot() const {
    std::string out = export_jsonl();
    std::lock_guard lock(mu_);
    {
        Stmt s(db_, "SELECT body FROM pairs ORDER BY enq_seq");
        while (s.step()) {
            const auto qa_id = pair_from_json_text(s.text(0)).qa_id;
            Stmt c(db_, "SELECT source_text FROM pairs WHERE qa_id = ?");
            c.bind(1, qa_id);
            if (c.step() && !c.is_null(0)) {
                ojson j;
                j["context"] = {{"qa_id", qa_id}, {"source_text", c.text(0)}};
                out += j.dump() + "\n";
            }
        }
    }
    Stmt s(db_, "SELECT body FROM sessions ORDER BY ord");
    while (s.step()) {
        ojson j;
        j["session"] = session_json(session_from_json(nlohmann::json::parse(s.text(0))));
        out += j.dump() + "\n";
    }
    Stmt b(db_, "SELECT body FROM benchmarks ORDER BY ord");
    while (b.step()) {
        ojson j;
        j["benchmark"] = benchmark_json(benchmark_from_json(nlohmann::json::parse(b.text(0))));
        out += j.dump() + "\n";
    }
    return out;
}

std::string ReviewStore::event_log() const {
    std::lock_guard lock(mu_);
    std::string out;
    Stmt sel(db_, "SELECT body FROM events ORDER BY seq");
    while (sel.step()) {
        out += sel.text(0);
        out += '\n';
    }
    return out;
}

void ReviewStore::replay(std::string_view log) {
    std::lock_guard lock(mu_);
    std::size_t start = 0;
    while (start < log.size()) {
        auto nl = log.find('\n', start);
        if (nl == std::string_view::npos) nl = log.size();
        const auto line = log.substr(start, nl - start);
        if (!is_blank(line)) append_and_apply(std::string(line));
        start = nl + 1;
    }
}

std::vector<QAPair> read_review_export(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<QAPair> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (is_blank(line)) continue;
        try {
            out.push_back(pair_from_json_text(line));
        } catch (const std::exception& e) {
            throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace materia
