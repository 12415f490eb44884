#include "materia/providers.hpp"

#include <httplib.h>

#include <array>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "materia/error.hpp"

namespace materia {

namespace {

constexpr std::array kChatAdapters = {
    ChatAdapter{"openai", "max_tokens"},
    ChatAdapter{"openai-compatible", "max_tokens"},
    ChatAdapter{"openai-reasoning", "max_completion_tokens"},
    ChatAdapter{"zhipu", "max_tokens"},
    ChatAdapter{"dashscope", "max_tokens"},
};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint url lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

const ChatAdapter* find_chat_adapter(std::string_view name) noexcept {
    for (const auto& a : kChatAdapters) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

std::vector<std::string_view> chat_adapter_names() {
    std::vector<std::string_view> names;
    for (const auto& a : kChatAdapters) names.push_back(a.name);
    return names;
}

std::vector<ProviderConfig> load_providers_file(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::ConfigError, path.string() + ": expected a JSON array of providers");
    std::vector<ProviderConfig> out;
    for (const auto& e : j) {
        for (const char* forbidden : {"api_key", "key", "token", "credential", "secret"}) {
            if (e.contains(forbidden)) {
                throw Error(ErrorCode::ConfigError,
                            path.string() + ": credentials must come from environment variables, not '" +
                                std::string(forbidden) + "'");
            }
        }
        try {
            ProviderConfig c;
            c.provider_id = e.at("provider_id").get<std::string>();
            c.endpoint_url = e.value("endpoint_url", "");
            c.model_name = e.value("model_name", "");
            c.credential_env_var = e.value("credential_env_var", "");
            c.adapter = e.value("adapter", "openai");
            out.push_back(std::move(c));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::ConfigError, path.string() + ": " + ex.what());
        }
    }
    return out;
}

std::optional<ProviderConfig> find_provider(const std::vector<ProviderConfig>& configs, std::string_view provider_id) {
    for (const auto& c : configs) {
        if (c.provider_id == provider_id) return c;
    }
    return std::nullopt;
}

HttpResponse post_json(const std::string& url, const std::string& body, const std::string& bearer_token,
                       int timeout_ms) {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    const time_t sec = timeout_ms / 1000;
    const time_t usec = static_cast<time_t>(timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(parts.path, headers, body, "application/json");
    if (!res) throw TransportFailure("request to " + parts.origin + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

std::string build_chat_body(const ChatAdapter& adapter, const ChatRequest& request) {
    nlohmann::ordered_json j;
    j["model"] = request.model_name;
    j["messages"] = nlohmann::ordered_json::array();
    if (request.system) j["messages"].push_back({{"role", "system"}, {"content", *request.system}});
    j["messages"].push_back({{"role", "user"}, {"content", request.user}});
    j["temperature"] = request.temperature;
    j[std::string(adapter.max_tokens_field)] = request.max_tokens;
    return j.dump();
}

ProviderReply parse_chat_response(int status, const std::string& body) {
    ProviderReply reply;
    reply.status = status;
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (status < 200 || status >= 300) {
        if (!j.is_discarded() && j.contains("error")) {
            const auto& err = j["error"];
            reply.error_message = err.is_object() ? err.value("message", err.dump()) : err.dump();
        } else {
            reply.error_message = body.substr(0, 200);
        }
        return reply;
    }
    try {
        if (j.is_discarded()) throw std::runtime_error("response is not JSON");
        const auto& content = j.at("choices").at(0).at("message").at("content");
        reply.text = content.is_string() ? content.get<std::string>() : std::string();
        if (j.contains("usage") && j["usage"].is_object()) {
            const auto& u = j["usage"];
            reply.usage = TokenUsage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0)};
        }
    } catch (const std::exception& e) {
        // A 2xx without the expected shape is a provider fault, not retryable.
        reply.status = 422;
        reply.error_message = std::string("unexpected response shape: ") + e.what();
    }
    return reply;
}

HttpChatProvider::HttpChatProvider(ProviderConfig config, std::string api_key, int timeout_ms)
    : config_(std::move(config)), adapter_(find_chat_adapter(config_.adapter)), api_key_(std::move(api_key)),
      timeout_ms_(timeout_ms) {
    if (!adapter_) throw Error(ErrorCode::ConfigError, "unknown chat adapter '" + config_.adapter + "'");
}

ProviderReply HttpChatProvider::send(const ChatRequest& request) {
    ChatRequest effective = request;
    if (effective.model_name.empty()) effective.model_name = config_.model_name;
    const auto res = post_json(config_.endpoint_url, build_chat_body(*adapter_, effective), api_key_, timeout_ms_);
    return parse_chat_response(res.status, res.body);
}

std::string resolve_api_key(const ProviderConfig& config) {
    std::string key;
    if (!config.credential_env_var.empty()) {
        const char* v = std::getenv(config.credential_env_var.c_str());
        if (!v || !*v) {
            throw Error(ErrorCode::ConfigError, "environment variable " + config.credential_env_var + " is not set for provider " +
                                                    config.provider_id);
        }
        key = v;
    }
    return key;
}

ProviderHandle make_chat_provider(const ProviderConfig& config, std::uint64_t mock_seed, int timeout_ms, int mock_qa_count) {
    if (config.adapter == "mock") {
        return std::make_shared<MockChatProvider>(mock_seed, std::map<std::string, std::string>{}, config.provider_id, mock_qa_count);
    }
    return std::make_shared<HttpChatProvider>(config, resolve_api_key(config), timeout_ms);
}

}  // namespace materia
