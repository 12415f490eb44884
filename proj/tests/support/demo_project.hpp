#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "fake_server.hpp"

namespace materia::testing {

/// Copy of demo/demo.toml written into `dir` with the inputs pointing back at
/// the source tree and every output landing in `dir`.
inline std::filesystem::path write_demo_config(const std::filesystem::path& dir) {
    const auto src = source_dir();
    const auto cfg = dir / "demo.toml";
    std::ofstream out(cfg);
    out << "corpus_dir = \"" << (src / "demo/corpus").string() << "\"\n"
        << "templates_dir = \"" << (src / "templates").string() << "\"\n"
        << "providers_file = \"" << (src / "demo/providers.json").string() << "\"\n"
        << "taxonomy_file = \"" << (src / "data/taxonomy.json").string() << "\"\n"
        << "output_dir = \"out\"\n"
        << "store_path = \"out/reviews.db\"\n"
        << "cache_dir = \"out/cache\"\n"
        << "provider = \"mock\"\nqa_count = 3\nseed = 7\n"
        << "[segmentation]\nmax_chars = 400\noverlap_chars = 50\nboundary_rule = \"prefer_paragraph_end\"\n"
        << "[gateway]\nmax_concurrent = 4\nrequests_per_minute = 6000\nmax_retries = 3\nbackoff_base_ms = 50\n"
        << "[dataset]\ndedupe = \"normalized\"\n";
    return cfg;
}

}  // namespace materia::testing
