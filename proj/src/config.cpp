#include "materia/config.hpp"

#include <charconv>
#include <cmath>

#include "materia/text.hpp"

namespace materia {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(line) + ": " + msg);
}

bool is_bare_key(std::string_view k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
}

/// Strips a trailing comment outside of string literals.
std::string_view strip_comment(std::string_view s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (in_str && s[i] == '\\') {
            ++i;
        } else if (s[i] == '"') {
            in_str = !in_str;
        } else if (s[i] == '#' && !in_str) {
            return s.substr(0, i);
        }
    }
    return s;
}

ConfigValue parse_value(std::string_view v, const std::string& origin, std::size_t line) {
    if (v.empty()) fail(origin, line, "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') fail(origin, line, "unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            char c = v[i];
            if (c == '"') fail(origin, line, "unexpected quote inside string");
            if (c != '\\') {
                out += c;
                continue;
            }
            if (++i + 1 > v.size() - 1) fail(origin, line, "dangling escape");
            switch (v[i]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(origin, line, std::string("unsupported escape \\") + v[i]);
            }
        }
        return out;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    std::string digits;
    for (char c : v) {
        if (c != '_') digits += c;
    }
    const char* b = digits.data();
    const char* e = b + digits.size();
    if (digits.find_first_of(".eE") == std::string::npos) {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(*b == '+' ? b + 1 : b, e, i);
        if (ec == std::errc() && p == e) return i;
    } else {
        double d = 0;
        auto [p, ec] = std::from_chars(*b == '+' ? b + 1 : b, e, d);
        if (ec == std::errc() && p == e && std::isfinite(d)) return d;
    }
    fail(origin, line, "cannot parse value '" + std::string(v) + "'");
}

}  // namespace

ConfigTable parse_config_text(std::string_view text, const std::string& origin) {
    ConfigTable table;
    table[""];
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        const auto line = trim(strip_comment(text.substr(start, nl - start)));
        start = nl + 1;
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(origin, line_no, "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!is_bare_key(section)) fail(origin, line_no, "bad section name '" + section + "'");
            if (table.contains(section)) fail(origin, line_no, "duplicate section [" + section + "]");
            table[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(origin, line_no, "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        if (!is_bare_key(key)) fail(origin, line_no, "bad key '" + key + "'");
        auto& sec = table[section];
        if (sec.contains(key)) fail(origin, line_no, "duplicate key '" + key + "'");
        sec[key] = parse_value(trim(line.substr(eq + 1)), origin, line_no);
    }
    return table;
}

namespace {

class Reader {
public:
    Reader(ConfigTable table, std::string origin) : table_(std::move(table)), origin_(std::move(origin)) {}

    template <typename T>
    std::optional<T> take(const std::string& section, const std::string& key) {
        auto s = table_.find(section);
        if (s == table_.end()) return std::nullopt;
        auto it = s->second.find(key);
        if (it == s->second.end()) return std::nullopt;
        ConfigValue v = it->second;
        s->second.erase(it);
        const std::string where = origin_ + ": " + (section.empty() ? key : section + "." + key);
        if constexpr (std::is_same_v<T, double>) {
            if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
        }
        if (auto* p = std::get_if<T>(&v)) return *p;
        throw Error(ErrorCode::ConfigError, where + " has the wrong type");
    }

    std::optional<std::int64_t> take_nonneg(const std::string& section, const std::string& key) {
        auto v = take<std::int64_t>(section, key);
        if (v && *v < 0) {
            throw Error(ErrorCode::ConfigError, origin_ + ": " + section + "." + key + " must not be negative");
        }
        return v;
    }

    void reject_leftovers() const {
        for (const auto& [section, keys] : table_) {
            if (!keys.empty()) {
                const auto& key = keys.begin()->first;
                throw Error(ErrorCode::ConfigError,
                            origin_ + ": unknown key '" + (section.empty() ? key : section + "." + key) + "'");
            }
        }
    }

private:
    ConfigTable table_;
    std::string origin_;
};

}  // namespace

ProjectConfig project_config_from_text(std::string_view text, const fs::path& base_dir, const std::string& origin) {
    Reader r(parse_config_text(text, origin), origin);
    ProjectConfig c;
    auto path = [&](const char* key, fs::path& field) {
        if (auto v = r.take<std::string>("", key)) field = *v;
        if (field.is_relative()) field = (base_dir / field).lexically_normal();
    };
    path("corpus_dir", c.corpus_dir);
    path("templates_dir", c.templates_dir);
    path("providers_file", c.providers_file);
    path("taxonomy_file", c.taxonomy_file);
    path("store_path", c.store_path);
    path("output_dir", c.output_dir);
    path("cache_dir", c.cache_dir);

    if (auto v = r.take<std::string>("", "template")) c.template_id = *v;
    if (auto v = r.take<std::string>("", "system_profile")) c.system_profile = *v;
    if (auto v = r.take<std::string>("", "provider")) c.provider_id = *v;
    if (auto v = r.take<std::string>("", "embed_provider")) c.embed_provider_id = *v;
    if (auto v = r.take_nonneg("", "qa_count")) c.qa_count = static_cast<std::size_t>(*v);
    if (auto v = r.take_nonneg("", "seed")) c.seed = static_cast<std::uint64_t>(*v);

    if (auto v = r.take_nonneg("segmentation", "max_chars")) c.segmentation.max_chars = static_cast<std::size_t>(*v);
    if (auto v = r.take_nonneg("segmentation", "overlap_chars")) c.segmentation.overlap_chars = static_cast<std::size_t>(*v);
    if (auto v = r.take<std::string>("segmentation", "boundary_rule")) c.segmentation.boundary_rule = boundary_rule_from_string(*v);

    auto gint = [&](const char* key, int& field) {
        if (auto v = r.take<std::int64_t>("gateway", key)) field = static_cast<int>(*v);
    };
    gint("max_concurrent", c.gateway.max_concurrent);
    gint("requests_per_minute", c.gateway.requests_per_minute);
    gint("max_retries", c.gateway.max_retries);
    gint("backoff_base_ms", c.gateway.backoff_base_ms);
    gint("max_backoff_ms", c.gateway.max_backoff_ms);
    gint("request_timeout_ms", c.gateway.request_timeout_ms);

    if (auto v = r.take<std::string>("dataset", "dedupe")) c.dedupe = dedupe_policy_from_string(*v);
    if (auto v = r.take<double>("dataset", "validation_fraction")) c.validation_fraction = *v;
    if (auto v = r.take_nonneg("dataset", "split_seed")) c.split_seed = static_cast<std::uint64_t>(*v);

    if (auto v = r.take<std::string>("train", "base_model")) c.train.base_model = *v;
    if (auto v = r.take<double>("train", "learning_rate")) c.train.learning_rate = *v;
    if (auto v = r.take<std::int64_t>("train", "batch_size")) c.train.batch_size = static_cast<int>(*v);
    if (auto v = r.take<std::int64_t>("train", "epochs")) c.train.epochs = static_cast<int>(*v);
    if (auto v = r.take<std::string>("train", "output_dir")) c.train.output_dir = *v;

    r.reject_leftovers();
    try {
        c.segmentation.validate();
        c.gateway.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, origin + ": " + e.what());
    }
    if (c.qa_count == 0) throw Error(ErrorCode::ConfigError, origin + ": qa_count must be positive");
    if (c.validation_fraction < 0.0 || c.validation_fraction >= 1.0) {
        throw Error(ErrorCode::ConfigError, origin + ": dataset.validation_fraction must be in [0, 1)");
    }
    return c;
}

ProjectConfig load_project_config(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::ConfigError, "config file not found: " + path.string());
    const auto base = fs::absolute(path).parent_path();
    return project_config_from_text(read_file(path), base, path.string());
}

}  // namespace materia
