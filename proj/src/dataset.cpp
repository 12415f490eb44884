#include "materia/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_map>

#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

InstructionRecord make_record(std::string question, std::string answer) {
    return InstructionRecord{{{Role::User, std::move(question)}, {Role::Assistant, std::move(answer)}}};
}

InstructionRecord to_instruction_record(const QAPair& qa) {
    if (qa.review_state != ReviewState::Accepted && qa.review_state != ReviewState::Edited) {
        throw Error(ErrorCode::NotReviewed,
                    "pair " + qa.qa_id + " is " + std::string(to_string(qa.review_state)) + ", not accepted or edited");
    }
    return make_record(qa.final_question(), qa.final_answer());
}

namespace {

std::string json_string(const std::string& s) {
    try {
        return nlohmann::json(s).dump();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("content is not valid UTF-8: ") + e.what());
    }
}

std::string_view role_name(Role r) { return r == Role::User ? "user" : "assistant"; }

}  // namespace

std::string serialize_record(const InstructionRecord& record) {
    std::string out = "{\"messages\": [";
    for (std::size_t i = 0; i < record.messages.size(); ++i) {
        if (i) out += ", ";
        out += "{\"role\": \"";
        out += role_name(record.messages[i].role);
        out += "\", \"content\": ";
        out += json_string(record.messages[i].content);
        out += "}";
    }
    out += "]}";
    return out;
}

InstructionRecord parse_record(std::string_view line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::SchemaError, "not valid JSON");
    if (!j.is_object() || j.size() != 1 || !j.contains("messages")) {
        throw Error(ErrorCode::SchemaError, "record must be an object with the single key \"messages\"");
    }
    const auto& msgs = j["messages"];
    if (!msgs.is_array()) throw Error(ErrorCode::SchemaError, "\"messages\" must be an array");
    if (msgs.size() != 2) {
        throw Error(ErrorCode::SchemaError, "expected 2 messages, found " + std::to_string(msgs.size()));
    }
    static constexpr Role kExpected[] = {Role::User, Role::Assistant};
    InstructionRecord rec;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& m = msgs[i];
        if (!m.is_object() || m.size() != 2 || !m.contains("role") || !m.contains("content")) {
            throw Error(ErrorCode::SchemaError, "message " + std::to_string(i) + " must have exactly \"role\" and \"content\"");
        }
        if (!m["role"].is_string() || !m["content"].is_string()) {
            throw Error(ErrorCode::SchemaError, "message " + std::to_string(i) + " role/content must be strings");
        }
        if (m["role"].get<std::string>() != role_name(kExpected[i])) {
            throw Error(ErrorCode::SchemaError, "message " + std::to_string(i) + " must have role \"" +
                                                    std::string(role_name(kExpected[i])) + "\"");
        }
        rec.messages.push_back({kExpected[i], m["content"].get<std::string>()});
    }
    return rec;
}

std::size_t write_jsonl(const std::vector<InstructionRecord>& records, const fs::path& path) {
    std::string buf;
    for (const auto& r : records) {
        if (r.messages.size() != 2 || r.messages[0].role != Role::User || r.messages[1].role != Role::Assistant) {
            throw Error(ErrorCode::SchemaError, "record must hold a user message followed by an assistant message");
        }
        buf += serialize_record(r);
        buf += '\n';
    }
    write_file_atomic(path, buf);
    return records.size();
}

std::vector<InstructionRecord> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<InstructionRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        try {
            out.push_back(parse_record(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

DedupePolicy dedupe_policy_from_string(std::string_view name) {
    if (name == "exact") return DedupePolicy::Exact;
    if (name == "normalized") return DedupePolicy::Normalized;
    throw Error(ErrorCode::ConfigError, "unknown dedupe policy '" + std::string(name) + "'");
}

std::string normalize_question(std::string_view question) {
    std::string folded;
    bool pending_space = false;
    for (char c : ascii_lower(question)) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !folded.empty();
            continue;
        }
        if (pending_space) folded.push_back(' ');
        pending_space = false;
        folded.push_back(c);
    }
    static constexpr std::string_view kTerminal[] = {".", "?", "!", ";", ":", ",", "\xE2\x80\xA6" /* … */,
                                                     "\xE3\x80\x82" /* 。 */, "\xEF\xBC\x9F" /* ？ */,
                                                     "\xEF\xBC\x81" /* ！ */, "\xEF\xBC\x9B" /* ； */,
                                                     "\xEF\xBC\x9A" /* ： */};
    bool stripped = true;
    while (stripped && !folded.empty()) {
        stripped = false;
        for (auto p : kTerminal) {
            if (folded.size() >= p.size() && std::string_view(folded).substr(folded.size() - p.size()) == p) {
                folded.resize(folded.size() - p.size());
                stripped = true;
            }
        }
        while (!folded.empty() && folded.back() == ' ') {
            folded.pop_back();
            stripped = true;
        }
    }
    return folded;
}

std::pair<std::vector<InstructionRecord>, DedupeReport> dedupe(const std::vector<InstructionRecord>& records,
                                                                DedupePolicy policy) {
    DedupeReport report;
    report.input_count = records.size();
    std::vector<InstructionRecord> kept;
    std::unordered_map<std::string, std::size_t> first_seen;  // key -> group slot
    std::vector<DuplicateGroup> all_groups;

    for (std::size_t i = 0; i < records.size(); ++i) {
        std::string key;
        if (policy == DedupePolicy::Exact) {
            key = records[i].question();
            key += '\0';
            key += records[i].answer();
        } else {
            key = normalize_question(records[i].question());
        }
        auto [it, inserted] = first_seen.emplace(std::move(key), all_groups.size());
        if (inserted) {
            all_groups.push_back({i, {}});
            kept.push_back(records[i]);
        } else {
            all_groups[it->second].duplicates.push_back(i);
        }
    }
    for (auto& g : all_groups) {
        if (!g.duplicates.empty()) report.groups.push_back(std::move(g));
    }
    report.kept_count = kept.size();
    return {std::move(kept), std::move(report)};
}

// ---------------------------------------------------------------------------

void DomainTaxonomy::validate() const {
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw Error(ErrorCode::ConfigError, "taxonomy has an empty label");
        if (!seen.insert(l).second) throw Error(ErrorCode::ConfigError, "taxonomy label '" + l + "' is duplicated");
    }
    if (!seen.count(std::string(kUnknownDomain))) {
        throw Error(ErrorCode::ConfigError, "taxonomy must include the \"unknown\" label");
    }
    for (const auto& [label, phrases] : keyword_rules) {
        if (label == kUnknownDomain) throw Error(ErrorCode::ConfigError, "\"unknown\" must not have keyword rules");
        if (!seen.count(label)) throw Error(ErrorCode::ConfigError, "keyword rules for unlisted label '" + label + "'");
        for (const auto& p : phrases) {
            if (is_blank(p)) throw Error(ErrorCode::ConfigError, "blank trigger phrase under '" + label + "'");
        }
    }
}

DomainTaxonomy taxonomy_from_json_text(std::string_view text) {
    DomainTaxonomy t;
    try {
        const auto j = nlohmann::json::parse(text);
        t.labels = j.at("labels").get<std::vector<std::string>>();
        for (const auto& [label, phrases] : j.at("keyword_rules").items()) {
            t.keyword_rules[label] = phrases.get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("malformed taxonomy: ") + e.what());
    }
    t.validate();
    return t;
}

DomainTaxonomy load_taxonomy(const fs::path& path) { return taxonomy_from_json_text(read_file(path)); }

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

}  // namespace

std::string tag_text(std::string_view question, std::string_view answer, const DomainTaxonomy& taxonomy) {
    std::string haystack = ascii_lower(question);
    haystack += '\n';
    haystack += ascii_lower(answer);

    std::string best(kUnknownDomain);
    std::size_t best_hits = 0;
    for (const auto& label : taxonomy.labels) {
        auto it = taxonomy.keyword_rules.find(label);
        if (it == taxonomy.keyword_rules.end()) continue;
        std::size_t hits = 0;
        for (const auto& phrase : it->second) hits += count_occurrences(haystack, ascii_lower(phrase));
        if (hits > best_hits) {
            best_hits = hits;
            best = label;
        }
    }
    return best;
}

std::string tag_domain(const QAPair& qa, const DomainTaxonomy& taxonomy) {
    return tag_text(qa.final_question(), qa.final_answer(), taxonomy);
}

std::size_t DomainDistribution::count(std::string_view label) const {
    for (const auto& [l, n] : counts) {
        if (l == label) return n;
    }
    return 0;
}

DomainDistribution distribution_of_labels(const std::vector<std::string>& labels, const DomainTaxonomy& taxonomy) {
    DomainDistribution d;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& l : taxonomy.labels) {
        slot.emplace(l, d.counts.size());
        d.counts.emplace_back(l, 0);
    }
    for (const auto& l : labels) {
        auto [it, inserted] = slot.emplace(l, d.counts.size());
        if (inserted) d.counts.emplace_back(l, 0);
        ++d.counts[it->second].second;
    }
    d.total = labels.size();
    return d;
}

DomainDistribution compute_distribution(const std::vector<QAPair>& tagged, const DomainTaxonomy& taxonomy) {
    std::vector<std::string> labels;
    labels.reserve(tagged.size());
    for (const auto& p : tagged) labels.push_back(p.domain);
    return distribution_of_labels(labels, taxonomy);
}

std::string distribution_to_json_text(const DomainDistribution& dist) {
    ojson j;
    j["counts"] = ojson::object();
    for (const auto& [l, n] : dist.counts) j["counts"][l] = n;
    j["total"] = dist.total;
    return j.dump(2) + "\n";
}

DomainDistribution distribution_from_json_text(std::string_view text) {
    DomainDistribution d;
    try {
        const auto j = ojson::parse(text);
        for (const auto& [l, n] : j.at("counts").items()) d.counts.emplace_back(l, n.get<std::size_t>());
        d.total = j.at("total").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("malformed stats file: ") + e.what());
    }
    return d;
}

// ---------------------------------------------------------------------------

std::string train_config_to_json_text(const TrainRunConfig& c) {
    ojson j;
    j["base_model"] = c.base_model;
    j["method"] = c.method;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["dataset_path"] = c.dataset_path;
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

TrainRunConfig train_config_from_json_text(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        TrainRunConfig c;
        c.base_model = j.at("base_model").get<std::string>();
        c.method = j.at("method").get<std::string>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.batch_size = j.at("batch_size").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.dataset_path = j.at("dataset_path").get<std::string>();
        c.output_dir = j.at("output_dir").get<std::string>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("malformed train config: ") + e.what());
    }
}

TrainRunConfig emit_train_config(const fs::path& dataset_path, const TrainConfigOverrides& overrides,
                                 const fs::path& out_path) {
    try {
        (void)read_jsonl(dataset_path);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::SchemaError) throw Error(ErrorCode::DatasetInvalid, e.what());
        throw;
    }
    TrainRunConfig c;
    c.dataset_path = dataset_path.generic_string();
    if (overrides.base_model) c.base_model = *overrides.base_model;
    if (overrides.learning_rate) c.learning_rate = *overrides.learning_rate;
    if (overrides.batch_size) c.batch_size = *overrides.batch_size;
    if (overrides.epochs) c.epochs = *overrides.epochs;
    if (overrides.output_dir) c.output_dir = *overrides.output_dir;
    if (!(c.learning_rate > 0)) throw Error(ErrorCode::ConfigError, "learning_rate must be positive");
    if (c.batch_size <= 0) throw Error(ErrorCode::ConfigError, "batch_size must be positive");
    if (c.epochs <= 0) throw Error(ErrorCode::ConfigError, "epochs must be positive");
    write_file_atomic(out_path, train_config_to_json_text(c));
    return c;
}

std::pair<std::vector<InstructionRecord>, std::vector<InstructionRecord>> split_records(
    const std::vector<InstructionRecord>& records, double validation_fraction, std::uint64_t seed) {
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw Error(ErrorCode::ConfigError, "validation fraction must be in [0, 1)");
    }
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(records.size())));
    std::vector<bool> is_val(records.size(), false);
    for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
    std::pair<std::vector<InstructionRecord>, std::vector<InstructionRecord>> out;
    for (std::size_t i = 0; i < records.size(); ++i) (is_val[i] ? out.second : out.first).push_back(records[i]);
    return out;
}

}  // namespace materia
