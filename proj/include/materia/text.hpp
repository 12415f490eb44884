#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace materia {

bool is_valid_utf8(std::string_view bytes) noexcept;

/// Byte offset of every codepoint start in a valid UTF-8 string, plus a final
/// entry equal to text.size(). Entry i is where codepoint i begins.
std::vector<std::size_t> codepoint_offsets(std::string_view text);

/// Decodes valid UTF-8 into codepoints.
std::u32string decode_utf8(std::string_view text);

std::string_view trim(std::string_view s) noexcept;
bool is_blank(std::string_view s) noexcept;

/// ASCII-only lowercase; non-ASCII bytes pass through unchanged.
std::string ascii_lower(std::string_view s);

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// SplitMix64; the project's portable deterministic generator. std::shuffle and
/// the std distributions are implementation-defined, so anything that must be
/// reproducible across platforms draws from here.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, bound), bound > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % bound;
    }

    /// Uniform in [0, 1).
    double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// First 8 bytes of a SHA-256 digest as an integer; used to derive seeds from text.
std::uint64_t digest_seed(std::string_view bytes);

}  // namespace materia
