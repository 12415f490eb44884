#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "materia/clock.hpp"
#include "materia/error.hpp"
#include "materia/text.hpp"

namespace materia {

struct ChatRequest {
    std::optional<std::string> system;
    std::string user;
    double temperature = 0.7;
    int max_tokens = 2048;
    std::string model_name;

    /// Throws Error(InvalidRequest) on an empty user message or out-of-range
    /// sampling parameters.
    void validate() const;
};

struct TokenUsage {
    int prompt = 0;
    int completion = 0;
};

struct CompletionResult {
    std::string text;
    std::string provider_id;
    std::string model_name;
    std::int64_t latency_ms = 0;
    std::optional<TokenUsage> token_usage;
    int retries = 0;
};

struct GatewayPolicy {
    int max_concurrent = 4;
    int requests_per_minute = 60;
    int max_retries = 3;
    int backoff_base_ms = 500;
    int max_backoff_ms = 30'000;
    int request_timeout_ms = 120'000;

    void validate() const;
};

/// What a provider hands back for one attempt. Non-2xx statuses are
/// classified by the gateway; network-level failures are thrown as
/// TransportFailure.
struct ProviderReply {
    int status = 200;
    std::string text;
    std::optional<TokenUsage> usage;
    std::string error_message;
};

class TransportFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual const std::string& id() const = 0;
    virtual ProviderReply send(const ChatRequest& request) = 0;
};

using ProviderHandle = std::shared_ptr<ChatProvider>;

/// Sliding 60-second window limiter: a dispatch is granted only while fewer
/// than `requests_per_minute` grants fall in (now - 60s, now].
class RateLimiter {
public:
    RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock);

    void acquire();

    /// Grant timestamps in dispatch order.
    std::vector<std::int64_t> grants() const;

private:
    int limit_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::deque<std::int64_t> window_;
    std::vector<std::int64_t> log_;
};

/// Gateway errors carry how many retries were spent before giving up.
class GatewayError : public Error {
public:
    GatewayError(ErrorCode code, const std::string& message, int retries) : Error(code, message), retries_(retries) {}
    int retries() const noexcept { return retries_; }

private:
    int retries_;
};

struct Failure {
    ErrorCode code;
    std::string message;
    int retries = 0;
};

using Outcome = std::variant<CompletionResult, Failure>;

struct BatchItem {
    std::size_t index;
    Outcome outcome;
};

/// Uniform client over chat-completion providers: rate limiting, bounded
/// in-flight requests, and retries with exponential backoff and full jitter.
/// Shareable across threads.
class Gateway {
public:
    explicit Gateway(GatewayPolicy policy, std::shared_ptr<Clock> clock = nullptr, std::uint64_t jitter_seed = 0x6a09e667f3bcc908ULL);

    CompletionResult complete(const ChatRequest& request, ChatProvider& provider);

    /// Runs every request with at most policy.max_concurrent in flight.
    /// Results come back in request order; `on_item` (if set) sees each
    /// result as soon as it lands, one call at a time.
    std::vector<BatchItem> complete_batch(const std::vector<ChatRequest>& requests, ChatProvider& provider,
                                          const std::function<void(const BatchItem&)>& on_item = {});

    /// Generic attempt loop shared with the embedding client. `attempt` returns
    /// a reply with `status` and `error_message`; it is retried on 408/429/5xx
    /// and TransportFailure.
    template <typename Reply>
    Reply run_with_retries(const std::function<Reply()>& attempt, int& retries);

    const GatewayPolicy& policy() const noexcept { return policy_; }
    Clock& clock() noexcept { return *clock_; }
    const RateLimiter& limiter() const noexcept { return limiter_; }

private:
    enum class Verdict { Success, Retry, Fatal };

    void acquire_slot();
    void release_slot();
    void backoff(int attempt);
    static Verdict classify(int status) noexcept;
    [[noreturn]] static void raise(int status, const std::string& detail, int retries, bool exhausted);

    GatewayPolicy policy_;
    std::shared_ptr<Clock> clock_;
    RateLimiter limiter_;

    std::mutex slot_mu_;
    std::condition_variable slot_cv_;
    int in_flight_ = 0;

    std::mutex jitter_mu_;
    SplitMix64 jitter_;
};

template <typename Reply>
Reply Gateway::run_with_retries(const std::function<Reply()>& attempt, int& retries) {
    retries = 0;
    for (int n = 0;; ++n) {
        limiter_.acquire();
        acquire_slot();
        std::optional<Reply> reply;
        std::string transport_error;
        try {
            reply = attempt();
        } catch (const TransportFailure& e) {
            transport_error = e.what();
        } catch (...) {
            release_slot();
            throw;
        }
        release_slot();

        const bool last = n >= policy_.max_retries;
        if (!reply) {
            if (last) {
                throw GatewayError(ErrorCode::TransportError,
                                   "transport failure after " + std::to_string(retries) + " retries: " + transport_error,
                                   retries);
            }
        } else {
            switch (classify(reply->status)) {
                case Verdict::Success:
                    return std::move(*reply);
                case Verdict::Fatal:
                    raise(reply->status, reply->error_message, retries, false);
                case Verdict::Retry:
                    if (last) raise(reply->status, reply->error_message, retries, true);
                    break;
            }
        }
        ++retries;
        backoff(n);
    }
}

/// Deterministic fingerprint of a request: model, system and user text.
std::string request_fingerprint(const ChatRequest& request);

/// Deterministic offline provider. Scripted fingerprints return their text;
/// anything else gets a reproducible QA-formatted reply derived from the seed
/// and the request.
class MockChatProvider final : public ChatProvider {
public:
    MockChatProvider(std::uint64_t seed, std::map<std::string, std::string> script = {}, std::string provider_id = "mock",
                     int qa_count = 3);

    const std::string& id() const override { return id_; }
    ProviderReply send(const ChatRequest& request) override;

    std::size_t calls() const;

private:
    std::string generate(const ChatRequest& request, const std::string& fingerprint) const;

    std::uint64_t seed_;
    std::map<std::string, std::string> script_;
    std::string id_;
    int qa_count_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

ProviderHandle mock_provider(std::uint64_t seed, std::map<std::string, std::string> script = {});

}  // namespace materia
