#include "materia/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace materia {

namespace {
constexpr std::int64_t kWindowMs = 60'000;
}

void ChatRequest::validate() const {
    if (is_blank(user)) throw Error(ErrorCode::InvalidRequest, "chat request has an empty user message");
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw Error(ErrorCode::InvalidRequest, "temperature must be within [0, 2]");
    }
    if (max_tokens <= 0) throw Error(ErrorCode::InvalidRequest, "max_tokens must be positive");
}

void GatewayPolicy::validate() const {
    if (max_concurrent <= 0) throw Error(ErrorCode::ConfigError, "max_concurrent must be positive");
    if (requests_per_minute <= 0) throw Error(ErrorCode::ConfigError, "requests_per_minute must be positive");
    if (max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be non-negative");
    if (backoff_base_ms <= 0) throw Error(ErrorCode::ConfigError, "backoff_base_ms must be positive");
    if (max_backoff_ms < backoff_base_ms) throw Error(ErrorCode::ConfigError, "max_backoff_ms must be >= backoff_base_ms");
    if (request_timeout_ms <= 0) throw Error(ErrorCode::ConfigError, "request_timeout_ms must be positive");
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock)
    : limit_(requests_per_minute), clock_(std::move(clock)) {}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    while (true) {
        const auto now = clock_->now_ms();
        while (!window_.empty() && window_.front() <= now - kWindowMs) window_.pop_front();
        if (static_cast<int>(window_.size()) < limit_) {
            window_.push_back(now);
            log_.push_back(now);
            return;
        }
        const auto wake = window_.front() + kWindowMs;
        lock.unlock();
        clock_->sleep_until_ms(wake);
        lock.lock();
    }
}

std::vector<std::int64_t> RateLimiter::grants() const {
    std::lock_guard lock(mu_);
    return log_;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(GatewayPolicy policy, std::shared_ptr<Clock> clock, std::uint64_t jitter_seed)
    : policy_(policy),
      clock_(clock ? std::move(clock) : default_clock()),
      limiter_(policy.requests_per_minute, clock_),
      jitter_(jitter_seed) {
    policy_.validate();
}

void Gateway::acquire_slot() {
    std::unique_lock lock(slot_mu_);
    slot_cv_.wait(lock, [&] { return in_flight_ < policy_.max_concurrent; });
    ++in_flight_;
}

void Gateway::release_slot() {
    {
        std::lock_guard lock(slot_mu_);
        --in_flight_;
    }
    slot_cv_.notify_one();
}

void Gateway::backoff(int attempt) {
    // Full jitter: uniform in [0, min(cap, base * 2^attempt)].
    const double ceiling =
        std::min<double>(policy_.max_backoff_ms, std::ldexp(static_cast<double>(policy_.backoff_base_ms), attempt));
    double u;
    {
        std::lock_guard lock(jitter_mu_);
        u = jitter_.unit();
    }
    const auto delay = static_cast<std::int64_t>(u * ceiling);
    clock_->sleep_until_ms(clock_->now_ms() + delay);
}

Gateway::Verdict Gateway::classify(int status) noexcept {
    if (status >= 200 && status < 300) return Verdict::Success;
    if (status == 408 || status == 429 || status >= 500) return Verdict::Retry;
    return Verdict::Fatal;
}

void Gateway::raise(int status, const std::string& detail, int retries, bool exhausted) {
    const std::string suffix = " (HTTP " + std::to_string(status) + ", " + std::to_string(retries) + " retries)" +
                               (detail.empty() ? "" : ": " + detail);
    if (status == 401 || status == 403) throw GatewayError(ErrorCode::AuthError, "authentication rejected" + suffix, retries);
    if (status == 429) throw GatewayError(ErrorCode::RateLimitExhausted, "rate limited" + suffix, retries);
    if (exhausted) throw GatewayError(ErrorCode::ProviderError, "provider kept failing" + suffix, retries);
    throw GatewayError(ErrorCode::ProviderError, "provider rejected the request" + suffix, retries);
}

CompletionResult Gateway::complete(const ChatRequest& request, ChatProvider& provider) {
    request.validate();
    const auto started = clock_->now_ms();
    int retries = 0;
    ProviderReply reply =
        run_with_retries<ProviderReply>([&] { return provider.send(request); }, retries);

    CompletionResult result;
    result.text = std::move(reply.text);
    result.provider_id = provider.id();
    result.model_name = request.model_name;
    result.latency_ms = std::max<std::int64_t>(0, clock_->now_ms() - started);
    result.token_usage = reply.usage;
    result.retries = retries;
    return result;
}

std::vector<BatchItem> Gateway::complete_batch(const std::vector<ChatRequest>& requests, ChatProvider& provider,
                                               const std::function<void(const BatchItem&)>& on_item) {
    std::vector<std::optional<Outcome>> outcomes(requests.size());
    std::atomic<std::size_t> next{0};
    std::mutex report_mu;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            Outcome outcome = Failure{ErrorCode::ProviderError, "not run", 0};
            try {
                outcome = complete(requests[i], provider);
            } catch (const GatewayError& e) {
                outcome = Failure{e.code(), e.what(), e.retries()};
            } catch (const Error& e) {
                outcome = Failure{e.code(), e.what(), 0};
            } catch (const std::exception& e) {
                outcome = Failure{ErrorCode::ProviderError, e.what(), 0};
            }
            std::lock_guard lock(report_mu);
            outcomes[i] = std::move(outcome);
            if (on_item) on_item(BatchItem{i, *outcomes[i]});
        }
    };

    const std::size_t n_workers = std::min<std::size_t>(requests.size(), static_cast<std::size_t>(policy_.max_concurrent));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::vector<BatchItem> items;
    items.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) items.push_back({i, std::move(*outcomes[i])});
    return items;
}

// ---------------------------------------------------------------------------

std::string request_fingerprint(const ChatRequest& request) {
    std::string material = request.model_name;
    material += '\x1f';
    material += request.system.value_or("");
    material += '\x1f';
    material += request.user;
    return sha256_hex(material).substr(0, 32);
}

MockChatProvider::MockChatProvider(std::uint64_t seed, std::map<std::string, std::string> script,
                                   std::string provider_id, int qa_count)
    : seed_(seed), script_(std::move(script)), id_(std::move(provider_id)), qa_count_(qa_count) {}

std::size_t MockChatProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

ProviderReply MockChatProvider::send(const ChatRequest& request) {
    {
        std::lock_guard lock(mu_);
        ++calls_;
    }
    const std::string fp = request_fingerprint(request);
    ProviderReply reply;
    if (auto it = script_.find(fp); it != script_.end()) {
        reply.text = it->second;
    } else {
        reply.text = generate(request, fp);
    }
    reply.usage = TokenUsage{static_cast<int>(request.user.size() / 4), static_cast<int>(reply.text.size() / 4)};
    return reply;
}

namespace {

// The default extraction template fences the segment between <<< and >>>;
// the mock draws its material from there when present.
std::string_view source_region(std::string_view prompt) {
    const auto open = prompt.rfind("<<<");
    if (open == std::string_view::npos) return prompt;
    const auto close = prompt.find(">>>", open + 3);
    if (close == std::string_view::npos) return prompt;
    return prompt.substr(open + 3, close - open - 3);
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\n' || c == '\t' || c == '\r') c = ' ';
        if (c == ' ' && (cur.empty() || cur.back() == ' ')) continue;
        cur.push_back(c);
        const bool terminal = c == '.' || c == '!' || c == '?';
        if (terminal && (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n')) {
            auto s = std::string(trim(cur));
            if (s.size() >= 24) out.push_back(std::move(s));
            cur.clear();
        }
    }
    auto tail = std::string(trim(cur));
    if (tail.size() >= 24) out.push_back(tail + ".");
    return out;
}

std::vector<std::string> content_words(std::string_view sentence) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 6) words.push_back(ascii_lower(cur));
        cur.clear();
    };
    for (char c : sentence) {
        const bool word_char = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
        if (word_char) {
            cur.push_back(c);
        } else {
            flush();
        }
    }
    flush();
    return words;
}

}  // namespace

std::string MockChatProvider::generate(const ChatRequest& request, const std::string& fingerprint) const {
    SplitMix64 rng(seed_ ^ digest_seed(fingerprint));
    auto sentences = split_sentences(source_region(request.user));
    if (sentences.empty()) {
        sentences = {"The sample exhibits stable structural behaviour under the reported conditions.",
                     "Processing parameters strongly influence the measured properties.",
                     "Characterization confirms the expected phase composition."};
    }

    static constexpr std::string_view kQuestionForms[] = {
        "What does the text report about {w}?",
        "How is {w} characterized in this study?",
        "Why is {w} significant according to the text?",
        "What role does {w} play in the described material system?",
        "Which finding is stated regarding {w}?",
    };

    // Draw distinct sentences while they last.
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::string out;
    for (int k = 0; k < qa_count_; ++k) {
        const std::string& sentence = sentences[order[static_cast<std::size_t>(k) % order.size()]];
        auto words = content_words(sentence);
        std::string topic = words.empty() ? "the material" : words[rng.below(words.size())];
        std::string question(kQuestionForms[rng.below(std::size(kQuestionForms))]);
        question.replace(question.find("{w}"), 3, topic);
        if (k > 0) out += '\n';
        out += "Q" + std::to_string(k + 1) + ": " + question + "\n";
        out += "A" + std::to_string(k + 1) + ": " + sentence;
    }
    return out;
}

ProviderHandle mock_provider(std::uint64_t seed, std::map<std::string, std::string> script) {
    return std::make_shared<MockChatProvider>(seed, std::move(script));
}

}  // namespace materia
