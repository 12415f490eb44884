#include "materia/review_api.hpp"

#include <httplib.h>

#include <charconv>
#include <nlohmann/json.hpp>

namespace materia {

using ojson = nlohmann::ordered_json;

int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::UnknownQaId:
        case ErrorCode::UnknownSession:
            return 404;
        case ErrorCode::InvalidState:
        case ErrorCode::SessionNotOpen:
        case ErrorCode::SessionNotFinalized:
            return 409;
        case ErrorCode::InvalidRequest:
        case ErrorCode::InvalidEdit:
        case ErrorCode::TooFewAnswers:
        case ErrorCode::EmptyAnswer:
        case ErrorCode::SchemaError:
            return 400;
        default:
            return 500;
    }
}

namespace {

ApiResponse reply(int status, const ojson& j) { return {status, j.dump()}; }

ApiResponse error_reply(int status, std::string_view code, const std::string& message) {
    ojson j;
    j["code"] = code;
    j["message"] = message;
    return reply(status, j);
}

ojson optional_json(const std::optional<std::string>& v) { return v ? ojson(*v) : ojson(nullptr); }

/// Pair as shown to reviewers: no provider or model identifiers.
ojson pair_view(const QAPair& p, const std::optional<std::string>& source) {
    ojson j;
    j["qa_id"] = p.qa_id;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["doc_id"] = p.doc_id;
    j["segment_index"] = p.segment_index;
    j["template_id"] = p.template_id;
    j["domain"] = p.domain;
    j["review_state"] = to_string(p.review_state);
    j["edited_question"] = optional_json(p.edited_question);
    j["edited_answer"] = optional_json(p.edited_answer);
    j["source_text"] = optional_json(source);
    return j;
}

ojson session_view(const BlindSession& s) {
    ojson j;
    j["session_id"] = s.session_id;
    j["question"] = s.question;
    j["status"] = to_string(s.status);
    j["entries"] = ojson::array();
    for (const auto& e : s.entries) {
        ojson ej;
        ej["anon_label"] = e.anon_label;
        ej["answer_text"] = e.answer_text;
        j["entries"].push_back(std::move(ej));
    }
    j["composed_benchmark"] = optional_json(s.composed_benchmark);
    j["shuffle_seed"] = s.shuffle_seed;
    j["created_at"] = s.created_at;
    return j;
}

std::size_t parse_count(const std::map<std::string, std::string>& query, const char* key, std::size_t fallback) {
    auto it = query.find(key);
    if (it == query.end()) return fallback;
    std::size_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::InvalidRequest, std::string(key) + " must be a non-negative integer");
    }
    return v;
}

nlohmann::json parse_body(std::string_view body) {
    try {
        auto j = nlohmann::json::parse(body);
        if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("malformed JSON body: ") + e.what());
    }
}

std::optional<std::string> body_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw Error(ErrorCode::InvalidRequest, std::string(key) + " must be a string");
    return j[key].get<std::string>();
}

std::string required_string(const nlohmann::json& j, const char* key) {
    auto v = body_string(j, key);
    if (!v) throw Error(ErrorCode::InvalidRequest, std::string(key) + " is required");
    return *v;
}

}  // namespace

ReviewApi::ReviewApi(ReviewStore& store, std::optional<DomainTaxonomy> taxonomy, std::string bearer_token)
    : store_(store), taxonomy_(std::move(taxonomy)), token_(std::move(bearer_token)) {}

ApiResponse ReviewApi::handle(std::string_view method, std::string_view path,
                              const std::map<std::string, std::string>& query, std::string_view body,
                              std::string_view authorization) const {
    if (!token_.empty() && authorization != "Bearer " + token_) {
        return error_reply(401, "Unauthorized", "missing or wrong bearer token");
    }
    try {
        if (path == "/api/review/queue") {
            if (method == "GET") return queue(query);
        } else if (path == "/api/review/decide") {
            if (method == "POST") return decide(body);
        } else if (path == "/api/stats") {
            if (method == "GET") return stats();
        } else if (path == "/api/sessions") {
            if (method == "POST") return create_session(body);
            if (method == "GET") return list_sessions(query);
        } else if (path.starts_with("/api/sessions/")) {
            std::string rest(path.substr(std::string_view("/api/sessions/").size()));
            std::string action;
            if (auto slash = rest.find('/'); slash != std::string::npos) {
                action = rest.substr(slash + 1);
                rest.resize(slash);
            }
            if (rest.empty()) return error_reply(404, "NotFound", "no such route");
            if (action.empty() && method == "GET") return get_session(rest);
            if (action == "finalize" && method == "POST") return finalize(rest, body);
            if (action == "unmask" && method == "GET") return unmask(rest);
            if (action.empty() || action == "finalize" || action == "unmask") {
                return error_reply(405, "MethodNotAllowed", std::string(method) + " not allowed here");
            }
            return error_reply(404, "NotFound", "no such route");
        } else {
            return error_reply(404, "NotFound", "no such route " + std::string(path));
        }
        return error_reply(405, "MethodNotAllowed", std::string(method) + " not allowed on " + std::string(path));
    } catch (const Error& e) {
        return error_reply(http_status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return error_reply(500, "InternalError", e.what());
    }
}

ApiResponse ReviewApi::queue(const std::map<std::string, std::string>& query) const {
    std::optional<ReviewState> state = ReviewState::Pending;
    if (auto it = query.find("state"); it != query.end()) {
        if (it->second == "all") {
            state.reset();
        } else {
            try {
                state = review_state_from_string(it->second);
            } catch (const Error&) {
                throw Error(ErrorCode::InvalidRequest, "unknown state '" + it->second + "'");
            }
        }
    }
    const std::size_t limit = parse_count(query, "limit", 50);
    const std::size_t offset = parse_count(query, "offset", 0);

    ojson j;
    j["state"] = state ? ojson(to_string(*state)) : ojson("all");
    j["limit"] = limit;
    j["offset"] = offset;
    j["total"] = store_.count(state);
    j["items"] = ojson::array();
    for (const auto& p : store_.queue(state, limit, offset)) j["items"].push_back(pair_view(p, store_.source_text(p.qa_id)));
    return reply(200, j);
}

ApiResponse ReviewApi::decide(std::string_view body) const {
    const auto j = parse_body(body);
    ReviewDecision d;
    d.qa_id = required_string(j, "qa_id");
    d.decision = decision_from_string(required_string(j, "decision"));
    d.edited_question = body_string(j, "edited_question");
    d.edited_answer = body_string(j, "edited_answer");
    d.reviewer_id = required_string(j, "reviewer_id");

    // A retried POST of the latest decision is acknowledged without appending.
    const auto hist = store_.history(d.qa_id);
    if (!hist.empty()) {
        const auto& last = hist.back();
        auto norm = [](const std::optional<std::string>& v) {
            return v && !is_blank(*v) ? v : std::nullopt;
        };
        if (last.decision == d.decision && last.reviewer_id == d.reviewer_id &&
            norm(last.edited_question) == norm(d.edited_question) && norm(last.edited_answer) == norm(d.edited_answer)) {
            const auto p = store_.get(d.qa_id);
            return reply(200, pair_view(*p, store_.source_text(d.qa_id)));
        }
    }
    const auto p = store_.decide(d);
    return reply(200, pair_view(p, store_.source_text(p.qa_id)));
}

ApiResponse ReviewApi::stats() const {
    std::vector<std::string> labels;
    for (const auto& p : store_.all_pairs()) {
        if (p.review_state != ReviewState::Accepted && p.review_state != ReviewState::Edited) continue;
        if (taxonomy_) {
            labels.push_back(tag_text(p.final_question(), p.final_answer(), *taxonomy_));
        } else {
            labels.push_back(p.domain.empty() ? std::string(kUnknownDomain) : p.domain);
        }
    }
    DomainDistribution dist;
    if (taxonomy_) {
        dist = distribution_of_labels(labels, *taxonomy_);
    } else {
        std::map<std::string, std::size_t> counts;
        for (const auto& l : labels) ++counts[l];
        dist.counts.assign(counts.begin(), counts.end());
        dist.total = labels.size();
    }
    ojson j;
    j["distribution"] = ojson::parse(distribution_to_json_text(dist));
    j["review_states"] = ojson::object();
    for (const auto& [state, n] : store_.tallies()) j["review_states"][std::string(to_string(state))] = n;
    return reply(200, j);
}

ApiResponse ReviewApi::create_session(std::string_view body) const {
    const auto j = parse_body(body);
    const auto question = required_string(j, "question");
    if (!j.contains("model_answers") || !j["model_answers"].is_object()) {
        throw Error(ErrorCode::InvalidRequest, "model_answers must be an object of model id to answer text");
    }
    std::map<std::string, std::string> answers;
    for (const auto& [model, answer] : j["model_answers"].items()) {
        if (!answer.is_string()) throw Error(ErrorCode::InvalidRequest, "every model answer must be a string");
        answers[model] = answer.get<std::string>();
    }
    std::int64_t seed = 0;
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) throw Error(ErrorCode::InvalidRequest, "seed must be an integer");
        seed = j["seed"].get<std::int64_t>();
    }
    return reply(201, session_view(store_.create_blind_session(question, answers, seed)));
}

ApiResponse ReviewApi::list_sessions(const std::map<std::string, std::string>& query) const {
    std::optional<SessionStatus> status;
    if (auto it = query.find("status"); it != query.end()) status = session_status_from_string(it->second);
    ojson j;
    j["sessions"] = ojson::array();
    for (const auto& s : store_.sessions(status)) j["sessions"].push_back(session_view(s));
    return reply(200, j);
}

ApiResponse ReviewApi::get_session(const std::string& id) const {
    auto s = store_.session(id);
    if (!s) throw Error(ErrorCode::UnknownSession, "unknown session " + id);
    return reply(200, session_view(*s));
}

ApiResponse ReviewApi::finalize(const std::string& id, std::string_view body) const {
    const auto j = parse_body(body);
    const auto composed = body_string(j, "composed_answer").value_or("");
    auto s = store_.session(id);
    if (!s) throw Error(ErrorCode::UnknownSession, "unknown session " + id);
    if (s->status == SessionStatus::Finalized && s->composed_benchmark == composed) {
        // Retried finalize with the same text.
        for (const auto& b : store_.benchmarks()) {
            if (b.session_id == id) {
                ojson out;
                out["session_id"] = b.session_id;
                out["question"] = b.question;
                out["answer"] = b.answer;
                out["finalized_at"] = b.finalized_at;
                return reply(200, out);
            }
        }
    }
    const auto b = store_.finalize_benchmark(id, composed);
    ojson out;
    out["session_id"] = b.session_id;
    out["question"] = b.question;
    out["answer"] = b.answer;
    out["finalized_at"] = b.finalized_at;
    return reply(200, out);
}

ApiResponse ReviewApi::unmask(const std::string& id) const {
    ojson j;
    j["session_id"] = id;
    j["mapping"] = ojson::array();
    for (const auto& [label, model] : store_.unmask(id)) {
        ojson m;
        m["anon_label"] = label;
        m["model_id"] = model;
        j["mapping"].push_back(std::move(m));
    }
    return reply(200, j);
}

// ---------------------------------------------------------------------------

ReviewServer::ReviewServer(const ReviewApi& api, std::filesystem::path ui_dir)
    : api_(api), server_(std::make_unique<httplib::Server>()) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query.emplace(k, v);
        const auto r = api_.handle(req.method, req.path, query, req.body, req.get_header_value("Authorization"));
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    server_->set_tcp_nodelay(true);
    server_->Get(R"(/api/.*)", handler);
    server_->Post(R"(/api/.*)", handler);
    server_->Put(R"(/api/.*)", handler);
    server_->Delete(R"(/api/.*)", handler);
    if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) server_->set_mount_point("/ui", ui_dir.string());
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void ReviewServer::serve() { server_->listen_after_bind(); }

void ReviewServer::start() {
    thread_ = std::thread([this] { serve(); });
    server_->wait_until_ready();
}

void ReviewServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace materia
