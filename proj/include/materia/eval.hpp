#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "materia/gateway.hpp"
#include "materia/providers.hpp"

namespace materia {

struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;
    std::string source_text_hash;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/// Pairwise (tree) sum of a[i]*b[i]. Deterministic for a given length, and
/// symmetric in a and b.
double pairwise_dot(std::span<const double> a, std::span<const double> b);

/// Cosine similarity with pairwise-summed dot product and norms, clamped to
/// [-1, 1]. Throws Error(DimensionMismatch) or Error(ZeroVector).
double cosine(std::span<const double> x, std::span<const double> y);
double cosine(const EmbeddingVector& x, const EmbeddingVector& y);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual const std::string& id() const = 0;
    virtual std::vector<double> embed_text(const std::string& text) = 0;
};

/// Seeded feature hashing of lowercased word tokens and their character
/// trigrams. Deterministic, offline, and close for texts sharing vocabulary.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::uint64_t seed = 0, std::size_t dim = 384, std::string provider_id = "mock-embed");
    const std::string& id() const override { return id_; }
    std::vector<double> embed_text(const std::string& text) override;
    std::size_t calls() const;

private:
    void add_feature(std::vector<double>& v, std::string_view feature, double weight) const;

    std::uint64_t seed_;
    std::size_t dim_;
    std::string id_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

/// Embeddings endpoint speaking the common {model, input} -> data[0].embedding
/// shape, driven through a gateway for rate limiting and retries.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(ProviderConfig config, std::string api_key, std::shared_ptr<Gateway> gateway);
    const std::string& id() const override { return config_.provider_id; }
    std::vector<double> embed_text(const std::string& text) override;

private:
    ProviderConfig config_;
    std::string api_key_;
    std::shared_ptr<Gateway> gateway_;
};

/// adapter "mock" gives MockEmbeddingProvider; anything else HTTP with the key
/// read from the configured environment variable.
std::shared_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config, std::uint64_t mock_seed,
                                                           std::shared_ptr<Gateway> gateway);

/// Embedding front end with a cache keyed by (provider id, sha256(text)):
/// in memory, and on disk under `cache_dir/<provider>/<hash>.json` when a
/// directory is given.
class Embedder {
public:
    explicit Embedder(EmbeddingProvider& provider, std::filesystem::path cache_dir = {});

    /// Throws Error(InvalidRequest) on empty text.
    EmbeddingVector embed(const std::string& text);

    std::size_t provider_calls() const;
    std::size_t cache_hits() const;
    const std::string& provider_id() const { return provider_.id(); }

private:
    EmbeddingProvider& provider_;
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<double>> memo_;
    std::size_t calls_ = 0;
    std::size_t hits_ = 0;
};

inline constexpr std::string_view kBenchmarkRow = "Benchmark Answer";

struct BenchmarkItem {
    std::string question_id;
    std::string question;
    std::string answer;
};

/// model -> question_id -> answer text
using ModelAnswers = std::map<std::string, std::map<std::string, std::string>>;

struct SimilarityReport {
    std::vector<std::string> questions;
    std::vector<std::string> models;  // first row is the benchmark
    std::vector<std::vector<double>> scores;  // [model][question]
    std::string embed_provider;

    /// Throws Error(SchemaError) on shape mismatches or scores outside [-1, 1].
    void validate() const;
    bool operator==(const SimilarityReport&) const = default;
};

/// Scores each model's answer against the benchmark answer of every question.
/// Models appear in `model_order` (default: sorted ids).
/// Throws Error(MissingAnswer) naming the model and question.
SimilarityReport score_models(const std::vector<BenchmarkItem>& benchmarks, const ModelAnswers& answers, Embedder& embedder,
                              std::vector<std::string> model_order = {});

enum class ReportFormat { TextTable, Csv, Json };

ReportFormat report_format_from_string(std::string_view name);
std::string_view to_string(ReportFormat f) noexcept;
std::string_view report_extension(ReportFormat f) noexcept;

/// marks[m][q]: row m holds the maximum of column q among non-benchmark rows
/// (ties at full precision all marked). The benchmark row is never marked.
std::vector<std::vector<bool>> max_marks(const SimilarityReport& report);

std::string render_report(const SimilarityReport& report, ReportFormat format);
SimilarityReport parse_report_json(std::string_view text);

/// bench.jsonl: {question_id, question, answer}
std::vector<BenchmarkItem> read_benchmarks_jsonl(const std::filesystem::path& path);
/// answers.jsonl: {model, question_id, answer}. `order` receives model ids in
/// first-appearance order.
ModelAnswers read_answers_jsonl(const std::filesystem::path& path, std::vector<std::string>* order = nullptr);

}  // namespace materia
