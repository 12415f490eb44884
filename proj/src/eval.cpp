#include "materia/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

double pairwise_dot_range(const double* a, const double* b, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_dot_range(a, b, half) + pairwise_dot_range(a + half, b + half, n - half);
}

}  // namespace

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    return pairwise_dot_range(a.data(), b.data(), a.size());
}

double cosine(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    }
    if (x.empty()) throw Error(ErrorCode::ZeroVector, "empty vector");
    const double sxx = pairwise_dot(x, x);
    const double syy = pairwise_dot(y, y);
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of an all-zero vector");
    if (!std::isfinite(sxx) || !std::isfinite(syy)) throw Error(ErrorCode::InvalidRequest, "vector has non-finite values");
    const double dot = pairwise_dot(x, y);
    // sqrt of the product keeps cosine(v, v) exact; fall back when it leaves the normal range.
    const double prod = sxx * syy;
    const double denom = std::isnormal(prod) ? std::sqrt(prod) : std::sqrt(sxx) * std::sqrt(syy);
    return std::clamp(dot / denom, -1.0, 1.0);
}

double cosine(const EmbeddingVector& x, const EmbeddingVector& y) { return cosine(x.values, y.values); }

// ---------------------------------------------------------------------------

MockEmbeddingProvider::MockEmbeddingProvider(std::uint64_t seed, std::size_t dim, std::string provider_id)
    : seed_(seed), dim_(dim), id_(std::move(provider_id)) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidRequest, "embedding dimension must be positive");
}

void MockEmbeddingProvider::add_feature(std::vector<double>& v, std::string_view feature, double weight) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : feature) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    SplitMix64 mix(h ^ seed_);
    const std::uint64_t r = mix.next();
    const double sign = (r >> 63) ? -1.0 : 1.0;
    v[r % dim_] += sign * weight;
}

std::vector<double> MockEmbeddingProvider::embed_text(const std::string& text) {
    {
        std::lock_guard lock(mu_);
        ++calls_;
    }
    std::vector<double> v(dim_, 0.0);
    const std::string lower = ascii_lower(text);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        add_feature(v, token, 1.0);
        const std::string padded = "#" + token + "#";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add_feature(v, std::string_view(padded).substr(i, 3), 0.5);
        token.clear();
    };
    for (unsigned char c : lower) {
        if (std::isalnum(c) || c >= 0x80) {
            token.push_back(static_cast<char>(c));
        } else {
            flush();
        }
    }
    flush();
    if (std::all_of(v.begin(), v.end(), [](double d) { return d == 0.0; })) add_feature(v, text, 1.0);
    return v;
}

std::size_t MockEmbeddingProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderConfig config, std::string api_key, std::shared_ptr<Gateway> gateway)
    : config_(std::move(config)), api_key_(std::move(api_key)), gateway_(std::move(gateway)) {
    if (!gateway_) throw Error(ErrorCode::InvalidRequest, "embedding provider needs a gateway");
}

namespace {

struct EmbedReply {
    int status = 0;
    std::string error_message;
    std::vector<double> values;
};

}  // namespace

std::vector<double> HttpEmbeddingProvider::embed_text(const std::string& text) {
    ojson body;
    body["model"] = config_.model_name;
    body["input"] = text;
    const std::string payload = body.dump();
    const int timeout = gateway_->policy().request_timeout_ms;
    int retries = 0;
    const auto reply = gateway_->run_with_retries<EmbedReply>(
        [&]() -> EmbedReply {
            const auto res = post_json(config_.endpoint_url, payload, api_key_, timeout);
            EmbedReply r;
            r.status = res.status;
            if (res.status < 200 || res.status >= 300) {
                r.error_message = res.body.substr(0, 300);
                return r;
            }
            try {
                const auto j = nlohmann::json::parse(res.body);
                r.values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
                if (r.values.empty()) throw std::runtime_error("empty embedding");
            } catch (const std::exception& e) {
                r.status = 422;
                r.error_message = std::string("malformed embeddings response: ") + e.what();
            }
            return r;
        },
        retries);
    return reply.values;
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config, std::uint64_t mock_seed,
                                                           std::shared_ptr<Gateway> gateway) {
    if (config.adapter == "mock") return std::make_shared<MockEmbeddingProvider>(mock_seed, 384, config.provider_id);
    return std::make_shared<HttpEmbeddingProvider>(config, resolve_api_key(config), std::move(gateway));
}

// ---------------------------------------------------------------------------

Embedder::Embedder(EmbeddingProvider& provider, fs::path cache_dir) : provider_(provider) {
    if (!cache_dir.empty()) dir_ = cache_dir / provider.id();
}

EmbeddingVector Embedder::embed(const std::string& text) {
    if (text.empty()) throw Error(ErrorCode::InvalidRequest, "cannot embed empty text");
    const std::string hash = sha256_hex(text);
    EmbeddingVector out;
    out.provider_id = provider_.id();
    out.source_text_hash = hash;
    {
        std::lock_guard lock(mu_);
        if (auto it = memo_.find(hash); it != memo_.end()) {
            ++hits_;
            out.values = it->second;
            return out;
        }
        if (!dir_.empty()) {
            const auto file = dir_ / (hash + ".json");
            std::error_code ec;
            if (fs::exists(file, ec)) {
                try {
                    const auto j = nlohmann::json::parse(read_file(file));
                    out.values = j.at("values").get<std::vector<double>>();
                    memo_[hash] = out.values;
                    ++hits_;
                    return out;
                } catch (const std::exception&) {
                    // unreadable cache entry: recompute and overwrite
                }
            }
        }
    }
    auto values = provider_.embed_text(text);
    if (values.empty()) throw Error(ErrorCode::ProviderError, "provider " + provider_.id() + " returned an empty embedding");
    std::lock_guard lock(mu_);
    ++calls_;
    if (!dir_.empty()) {
        ojson j;
        j["provider_id"] = provider_.id();
        j["text_sha256"] = hash;
        j["dim"] = values.size();
        j["values"] = values;
        fs::create_directories(dir_);
        write_file_atomic(dir_ / (hash + ".json"), j.dump());
    }
    memo_[hash] = values;
    out.values = std::move(values);
    return out;
}

std::size_t Embedder::provider_calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::size_t Embedder::cache_hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

// ---------------------------------------------------------------------------

void SimilarityReport::validate() const {
    if (models.size() != scores.size()) throw Error(ErrorCode::SchemaError, "report has a score row count unlike its model count");
    for (std::size_t m = 0; m < scores.size(); ++m) {
        if (scores[m].size() != questions.size()) {
            throw Error(ErrorCode::SchemaError, "report row '" + models[m] + "' has the wrong number of scores");
        }
        for (double s : scores[m]) {
            if (!(s >= -1.0 && s <= 1.0)) throw Error(ErrorCode::SchemaError, "report score outside [-1, 1] in row '" + models[m] + "'");
        }
    }
}

SimilarityReport score_models(const std::vector<BenchmarkItem>& benchmarks, const ModelAnswers& answers, Embedder& embedder,
                              std::vector<std::string> model_order) {
    if (model_order.empty()) {
        for (const auto& [model, _] : answers) model_order.push_back(model);
    }
    for (const auto& model : model_order) {
        auto it = answers.find(model);
        for (const auto& b : benchmarks) {
            if (it == answers.end() || !it->second.contains(b.question_id) || it->second.at(b.question_id).empty()) {
                throw Error(ErrorCode::MissingAnswer, "model '" + model + "' has no answer for question '" + b.question_id + "'");
            }
        }
    }

    SimilarityReport r;
    r.embed_provider = embedder.provider_id();
    r.models.emplace_back(kBenchmarkRow);
    r.models.insert(r.models.end(), model_order.begin(), model_order.end());
    std::vector<EmbeddingVector> bench;
    for (const auto& b : benchmarks) {
        r.questions.push_back(b.question_id);
        bench.push_back(embedder.embed(b.answer));
    }
    r.scores.emplace_back();
    for (const auto& v : bench) r.scores.back().push_back(cosine(v, v));
    for (const auto& model : model_order) {
        r.scores.emplace_back();
        for (std::size_t q = 0; q < benchmarks.size(); ++q) {
            const auto v = embedder.embed(answers.at(model).at(benchmarks[q].question_id));
            r.scores.back().push_back(cosine(v, bench[q]));
        }
    }
    return r;
}

ReportFormat report_format_from_string(std::string_view name) {
    if (name == "text-table") return ReportFormat::TextTable;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw Error(ErrorCode::UsageError, "unknown report format '" + std::string(name) + "' (text-table, csv, json)");
}

std::string_view to_string(ReportFormat f) noexcept {
    switch (f) {
        case ReportFormat::TextTable: return "text-table";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Json: return "json";
    }
    return "text-table";
}

std::string_view report_extension(ReportFormat f) noexcept {
    switch (f) {
        case ReportFormat::TextTable: return "txt";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Json: return "json";
    }
    return "txt";
}

std::vector<std::vector<bool>> max_marks(const SimilarityReport& report) {
    std::vector<std::vector<bool>> marks(report.models.size(), std::vector<bool>(report.questions.size(), false));
    for (std::size_t q = 0; q < report.questions.size(); ++q) {
        double best = -2.0;
        for (std::size_t m = 1; m < report.models.size(); ++m) best = std::max(best, report.scores[m][q]);
        for (std::size_t m = 1; m < report.models.size(); ++m) marks[m][q] = report.scores[m][q] == best;
    }
    return marks;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_report(const SimilarityReport& report, ReportFormat format) {
    report.validate();
    std::string out;
    switch (format) {
        case ReportFormat::TextTable: {
            const auto marks = max_marks(report);
            std::size_t label_w = 5;
            for (const auto& m : report.models) label_w = std::max(label_w, m.size());
            label_w += 2;
            std::vector<std::size_t> col_w;
            for (const auto& q : report.questions) col_w.push_back(std::max<std::size_t>(q.size(), 8) + 2);
            std::string line = pad("Model", label_w);
            for (std::size_t q = 0; q < report.questions.size(); ++q) line += pad(report.questions[q], col_w[q]);
            out += std::string(trim(line)) + "\n";
            bool any_mark = false;
            for (std::size_t m = 0; m < report.models.size(); ++m) {
                line = pad(report.models[m], label_w);
                for (std::size_t q = 0; q < report.questions.size(); ++q) {
                    any_mark = any_mark || marks[m][q];
                    line += pad(fmt("%.4f", report.scores[m][q]) + (marks[m][q] ? "*" : ""), col_w[q]);
                }
                out += std::string(trim(line)) + "\n";
            }
            if (any_mark) out += "\n* highest score among models for the question\n";
            break;
        }
        case ReportFormat::Csv: {
            out += "model";
            for (const auto& q : report.questions) out += "," + csv_field(q);
            out += "\n";
            for (std::size_t m = 0; m < report.models.size(); ++m) {
                out += csv_field(report.models[m]);
                for (double s : report.scores[m]) out += "," + fmt("%.17g", s);
                out += "\n";
            }
            break;
        }
        case ReportFormat::Json: {
            ojson j;
            j["embed_provider"] = report.embed_provider;
            j["questions"] = report.questions;
            j["models"] = report.models;
            j["scores"] = report.scores;
            out = j.dump(2) + "\n";
            break;
        }
    }
    return out;
}

SimilarityReport parse_report_json(std::string_view text) {
    SimilarityReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.embed_provider = j.value("embed_provider", "");
        r.questions = j.at("questions").get<std::vector<std::string>>();
        r.models = j.at("models").get<std::vector<std::string>>();
        r.scores = j.at("scores").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("malformed report: ") + e.what());
    }
    r.validate();
    return r;
}

namespace {

template <typename F>
void for_each_json_line(const fs::path& path, F&& f) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (is_blank(line)) continue;
        try {
            f(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

}  // namespace

std::vector<BenchmarkItem> read_benchmarks_jsonl(const fs::path& path) {
    std::vector<BenchmarkItem> out;
    for_each_json_line(path, [&](const nlohmann::json& j) {
        out.push_back({j.at("question_id").get<std::string>(), j.value("question", ""), j.at("answer").get<std::string>()});
    });
    return out;
}

ModelAnswers read_answers_jsonl(const fs::path& path, std::vector<std::string>* order) {
    ModelAnswers out;
    for_each_json_line(path, [&](const nlohmann::json& j) {
        const auto model = j.at("model").get<std::string>();
        if (order && !out.contains(model)) order->push_back(model);
        out[model][j.at("question_id").get<std::string>()] = j.at("answer").get<std::string>();
    });
    return out;
}

}  // namespace materia
