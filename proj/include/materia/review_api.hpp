#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "materia/dataset.hpp"
#include "materia/review.hpp"

namespace httplib {
class Server;
}

namespace materia {

struct ApiResponse {
    int status = 200;
    std::string body;  // JSON
};

/// HTTP status for a library error: 400 validation, 404 unknown id, 409 state
/// conflicts, 500 otherwise.
int http_status_for(ErrorCode code) noexcept;

/// Transport-independent JSON API over a ReviewStore. Payloads served for
/// sessions never carry model ids; only /unmask does, and only once the
/// session is finalized.
class ReviewApi {
public:
    ReviewApi(ReviewStore& store, std::optional<DomainTaxonomy> taxonomy = std::nullopt, std::string bearer_token = {});

    ApiResponse handle(std::string_view method, std::string_view path, const std::map<std::string, std::string>& query,
                       std::string_view body, std::string_view authorization = {}) const;

    bool requires_auth() const noexcept { return !token_.empty(); }

private:
    ApiResponse queue(const std::map<std::string, std::string>& query) const;
    ApiResponse decide(std::string_view body) const;
    ApiResponse stats() const;
    ApiResponse create_session(std::string_view body) const;
    ApiResponse list_sessions(const std::map<std::string, std::string>& query) const;
    ApiResponse get_session(const std::string& id) const;
    ApiResponse finalize(const std::string& id, std::string_view body) const;
    ApiResponse unmask(const std::string& id) const;

    ReviewStore& store_;
    std::optional<DomainTaxonomy> taxonomy_;
    std::string token_;
};

/// Serves a ReviewApi over HTTP, plus static files from `ui_dir` under /ui
/// when that directory exists.
class ReviewServer {
public:
    ReviewServer(const ReviewApi& api, std::filesystem::path ui_dir = {});
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void serve();
    /// serve() on a background thread.
    void start();
    void stop();

private:
    const ReviewApi& api_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace materia
