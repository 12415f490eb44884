#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "materia/gateway.hpp"

namespace materia {

/// One entry of providers.json. Credentials never live in the file; only the
/// name of the environment variable holding them does.
struct ProviderConfig {
    std::string provider_id;
    std::string endpoint_url;
    std::string model_name;
    std::string credential_env_var;
    std::string adapter;
};

/// Per-adapter field mapping over the chat-completions wire shape.
struct ChatAdapter {
    std::string_view name;
    std::string_view max_tokens_field;
};

const ChatAdapter* find_chat_adapter(std::string_view name) noexcept;
std::vector<std::string_view> chat_adapter_names();

std::vector<ProviderConfig> load_providers_file(const std::filesystem::path& path);
std::optional<ProviderConfig> find_provider(const std::vector<ProviderConfig>& configs, std::string_view provider_id);

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body with bearer auth. Throws TransportFailure when no HTTP
/// response arrives (connect failure, timeout).
HttpResponse post_json(const std::string& url, const std::string& body, const std::string& bearer_token,
                       int timeout_ms);

/// Chat-completions request body and response text extraction, per adapter.
std::string build_chat_body(const ChatAdapter& adapter, const ChatRequest& request);
ProviderReply parse_chat_response(int status, const std::string& body);

class HttpChatProvider final : public ChatProvider {
public:
    HttpChatProvider(ProviderConfig config, std::string api_key, int timeout_ms);

    const std::string& id() const override { return config_.provider_id; }
    ProviderReply send(const ChatRequest& request) override;

    const ProviderConfig& config() const noexcept { return config_; }

private:
    ProviderConfig config_;
    const ChatAdapter* adapter_;
    std::string api_key_;
    int timeout_ms_;
};

/// Value of the provider's credential variable ("" when none is configured).
/// Throws Error(ConfigError) when the variable is named but unset.
std::string resolve_api_key(const ProviderConfig& config);

/// Builds a chat provider from config: adapter "mock" yields MockChatProvider,
/// anything else an HttpChatProvider reading its key from the environment.
ProviderHandle make_chat_provider(const ProviderConfig& config, std::uint64_t mock_seed, int timeout_ms, int mock_qa_count = 3);

}  // namespace materia
