#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "materia/config.hpp"
#include "materia/corpus.hpp"
#include "materia/dataset.hpp"
#include "materia/eval.hpp"
#include "materia/extraction.hpp"
#include "materia/gateway.hpp"
#include "materia/prompt.hpp"
#include "materia/providers.hpp"
#include "materia/review.hpp"
#include "materia/review_api.hpp"
#include "materia/text.hpp"

namespace materia::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Options {
    std::string config;

    // shared overrides
    std::optional<std::string> corpus, out, segments, templates, template_id, provider, providers, triples, store,
        taxonomy, reviews, dataset, system_profile, dedupe, boundary, cache_dir, reports_dir, ui_dir, log;
    std::optional<std::size_t> max_chars, overlap, qa_count;
    std::optional<int> max_concurrent, rpm, port;
    std::optional<std::uint64_t> seed, split_seed;
    std::optional<double> validation_fraction;
    std::string host = "127.0.0.1";
    std::string reviewer_id = "auto-accept";
    bool auto_accept = false;
    bool json = false;

    // prompts validate
    std::optional<std::string> templates_pos;
    // stats / report
    std::string dataset_pos;
    std::string report_pos;
    std::string format = "text-table";

    // eval
    std::string benchmarks, answers;

    // emit-train-config
    std::optional<std::string> base_model, train_output_dir;
    std::optional<double> learning_rate;
    std::optional<int> batch_size, epochs;
};

struct Commands {
    CLI::App* ingest = nullptr;
    CLI::App* prompts = nullptr;
    CLI::App* prompts_validate = nullptr;
    CLI::App* extract = nullptr;
    CLI::App* review = nullptr;
    CLI::App* review_serve = nullptr;
    CLI::App* review_export = nullptr;
    CLI::App* review_enqueue = nullptr;
    CLI::App* review_log = nullptr;
    CLI::App* review_replay = nullptr;
    CLI::App* assemble = nullptr;
    CLI::App* stats = nullptr;
    CLI::App* emit = nullptr;
    CLI::App* eval = nullptr;
    CLI::App* report = nullptr;
    CLI::App* pipeline = nullptr;
    CLI::App* pipeline_run = nullptr;
};

void add_config(CLI::App* app, Options& o) {
    app->add_option("--config", o.config, "Project config file (TOML subset)");
}

void add_gateway_flags(CLI::App* app, Options& o) {
    app->add_option("--max-concurrent", o.max_concurrent, "Maximum in-flight provider requests");
    app->add_option("--rpm", o.rpm, "Requests per minute");
}

std::unique_ptr<CLI::App> build(Options& o, Commands& c) {
    auto app = std::make_unique<CLI::App>("materia: instruction-dataset pipeline toolkit", "materia");
    app->require_subcommand(1);
    app->set_help_all_flag("--help-all", "Help for every subcommand");

    c.ingest = app->add_subcommand("ingest", "Load a text/markdown corpus and write segments JSONL");
    add_config(c.ingest, o);
    c.ingest->add_option("--corpus", o.corpus, "Corpus root directory");
    c.ingest->add_option("--out", o.out, "Segments JSONL output");
    c.ingest->add_option("--max-chars", o.max_chars, "Maximum segment length in codepoints");
    c.ingest->add_option("--overlap", o.overlap, "Overlap between consecutive segments in codepoints");
    c.ingest->add_option("--boundary", o.boundary, "hard_cut | prefer_sentence_end | prefer_paragraph_end");

    c.prompts = app->add_subcommand("prompts", "Prompt template tools");
    c.prompts->require_subcommand(1);
    c.prompts_validate = c.prompts->add_subcommand("validate", "Check every template file in a directory");
    add_config(c.prompts_validate, o);
    c.prompts_validate->add_option("dir", o.templates_pos, "Templates directory");

    c.extract = app->add_subcommand("extract", "Run QA extraction over segments with checkpointing");
    add_config(c.extract, o);
    c.extract->add_option("--segments", o.segments, "Segments JSONL input");
    c.extract->add_option("--template", o.template_id, "Extraction template id");
    c.extract->add_option("--templates", o.templates, "Templates directory");
    c.extract->add_option("--system-profile", o.system_profile, "Enhanced system prompt profile id");
    c.extract->add_option("--provider", o.provider, "Chat provider id");
    c.extract->add_option("--providers", o.providers, "Providers JSON file");
    c.extract->add_option("--out", o.out, "Triples checkpoint JSONL (appended, resumable)");
    c.extract->add_option("--qa-count", o.qa_count, "QA pairs requested per segment");
    c.extract->add_option("--seed", o.seed, "Seed for the mock provider");
    add_gateway_flags(c.extract, o);

    c.review = app->add_subcommand("review", "Expert review store and service");
    c.review->require_subcommand(1);
    c.review_serve = c.review->add_subcommand("serve", "Serve the review HTTP API");
    add_config(c.review_serve, o);
    c.review_serve->add_option("--store", o.store, "Review store file");
    c.review_serve->add_option("--host", o.host, "Bind address");
    c.review_serve->add_option("--port", o.port, "Bind port");
    c.review_serve->add_option("--taxonomy", o.taxonomy, "Taxonomy JSON used by /api/stats");
    c.review_serve->add_option("--ui-dir", o.ui_dir, "Static UI directory mounted at /ui");

    c.review_export = c.review->add_subcommand("export", "Export reviewed pairs with history as JSONL");
    add_config(c.review_export, o);
    c.review_export->add_option("--store", o.store, "Review store file");
    c.review_export->add_option("--out", o.out, "Export JSONL output")->required();

    c.review_enqueue = c.review->add_subcommand("enqueue", "Queue the pairs of a triples file for review");
    add_config(c.review_enqueue, o);
    c.review_enqueue->add_option("--triples", o.triples, "Triples checkpoint JSONL");
    c.review_enqueue->add_option("--store", o.store, "Review store file");

    c.review_log = c.review->add_subcommand("log", "Write the store's event log as JSONL");
    add_config(c.review_log, o);
    c.review_log->add_option("--store", o.store, "Review store file");
    c.review_log->add_option("--out", o.out, "Event log output")->required();

    c.review_replay = c.review->add_subcommand("replay", "Rebuild an empty store from an event log");
    add_config(c.review_replay, o);
    c.review_replay->add_option("--store", o.store, "Review store file (must be empty)");
    c.review_replay->add_option("--log", o.log, "Event log JSONL")->required();

    c.assemble = app->add_subcommand("assemble", "Join triples with review decisions into dataset.jsonl");
    add_config(c.assemble, o);
    c.assemble->add_option("--triples", o.triples, "Triples checkpoint JSONL");
    c.assemble->add_option("--reviews", o.reviews, "Review store file or review export JSONL");
    c.assemble->add_option("--taxonomy", o.taxonomy, "Taxonomy JSON");
    c.assemble->add_option("--out", o.out, "Dataset JSONL output");
    c.assemble->add_option("--dedupe", o.dedupe, "exact | normalized");
    c.assemble->add_option("--validation-fraction", o.validation_fraction, "Share of records held out for validation");
    c.assemble->add_option("--split-seed", o.split_seed, "Seed for the train/validation split");

    c.stats = app->add_subcommand("stats", "Domain distribution of a dataset");
    add_config(c.stats, o);
    c.stats->add_option("dataset", o.dataset_pos, "Dataset JSONL")->required();
    c.stats->add_option("--taxonomy", o.taxonomy, "Taxonomy JSON");
    c.stats->add_option("--out", o.out, "Also write the distribution JSON here");
    c.stats->add_flag("--json", o.json, "Print JSON instead of a table");

    c.emit = app->add_subcommand("emit-train-config", "Write a fine-tuning run config for a dataset");
    add_config(c.emit, o);
    c.emit->add_option("--dataset", o.dataset, "Dataset JSONL");
    c.emit->add_option("--out", o.out, "Config output (default train_config.json beside the dataset)");
    c.emit->add_option("--base-model", o.base_model, "Base model name");
    c.emit->add_option("--learning-rate", o.learning_rate, "Learning rate");
    c.emit->add_option("--batch-size", o.batch_size, "Batch size");
    c.emit->add_option("--epochs", o.epochs, "Epochs");
    c.emit->add_option("--output-dir", o.train_output_dir, "Trainer output directory");

    c.eval = app->add_subcommand("eval", "Score model answers against benchmark answers");
    add_config(c.eval, o);
    c.eval->add_option("--benchmarks", o.benchmarks, "Benchmarks JSONL {question_id, question, answer}")->required();
    c.eval->add_option("--answers", o.answers, "Answers JSONL {model, question_id, answer}")->required();
    c.eval->add_option("--provider", o.provider, "Embedding provider id");
    c.eval->add_option("--providers", o.providers, "Providers JSON file");
    c.eval->add_option("--format", o.format, "text-table | csv | json");
    c.eval->add_option("--reports-dir", o.reports_dir, "Directory for the report files");
    c.eval->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
    c.eval->add_option("--seed", o.seed, "Seed for the mock embedding provider");
    add_gateway_flags(c.eval, o);

    c.report = app->add_subcommand("report", "Render a similarity report JSON");
    c.report->add_option("report", o.report_pos, "Report JSON")->required();
    c.report->add_option("--format", o.format, "text-table | csv | json");

    c.pipeline = app->add_subcommand("pipeline", "Whole-pipeline commands");
    c.pipeline->require_subcommand(1);
    c.pipeline_run = c.pipeline->add_subcommand("run", "ingest, extract, review, assemble, stats, emit-train-config");
    add_config(c.pipeline_run, o);
    c.pipeline_run->add_option("--provider", o.provider, "Chat provider id");
    c.pipeline_run->add_option("--providers", o.providers, "Providers JSON file");
    c.pipeline_run->add_option("--corpus", o.corpus, "Corpus root directory");
    c.pipeline_run->add_option("--store", o.store, "Review store file");
    c.pipeline_run->add_option("--seed", o.seed, "Seed for the mock provider");
    c.pipeline_run->add_flag("--auto-accept", o.auto_accept, "Accept every pending pair instead of pausing for review (testing)");
    c.pipeline_run->add_option("--reviewer-id", o.reviewer_id, "Reviewer id recorded for auto-accepted pairs");
    add_gateway_flags(c.pipeline_run, o);
    return app;
}

// ---------------------------------------------------------------------------

ProjectConfig resolve_config(const Options& o) {
    ProjectConfig c;
    if (!o.config.empty()) {
        c = load_project_config(o.config);
    } else if (fs::is_regular_file("materia.toml")) {
        c = load_project_config("materia.toml");
    }
    if (o.corpus) c.corpus_dir = *o.corpus;
    if (o.templates) c.templates_dir = *o.templates;
    if (o.templates_pos) c.templates_dir = *o.templates_pos;
    if (o.providers) c.providers_file = *o.providers;
    if (o.taxonomy) c.taxonomy_file = *o.taxonomy;
    if (o.store) c.store_path = *o.store;
    if (o.cache_dir) c.cache_dir = *o.cache_dir;
    if (o.template_id) c.template_id = *o.template_id;
    if (o.system_profile) c.system_profile = *o.system_profile;
    if (o.qa_count) c.qa_count = *o.qa_count;
    if (o.seed) c.seed = *o.seed;
    if (o.max_chars) c.segmentation.max_chars = *o.max_chars;
    if (o.overlap) c.segmentation.overlap_chars = *o.overlap;
    if (o.boundary) c.segmentation.boundary_rule = boundary_rule_from_string(*o.boundary);
    if (o.max_concurrent) c.gateway.max_concurrent = *o.max_concurrent;
    if (o.rpm) c.gateway.requests_per_minute = *o.rpm;
    if (o.dedupe) c.dedupe = dedupe_policy_from_string(*o.dedupe);
    if (o.validation_fraction) c.validation_fraction = *o.validation_fraction;
    if (o.split_seed) c.split_seed = *o.split_seed;
    c.segmentation.validate();
    c.gateway.validate();
    if (c.qa_count == 0) throw Error(ErrorCode::UsageError, "--qa-count must be positive");
    return c;
}

void require_file(const fs::path& p, const char* what) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw Error(ErrorCode::UsageError, std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
    std::error_code ec;
    if (!fs::is_directory(p, ec)) throw Error(ErrorCode::UsageError, std::string(what) + " not found: " + p.string());
}

ProviderConfig resolve_provider_config(const ProjectConfig& c, const std::string& id, const std::string& builtin_mock) {
    std::error_code ec;
    if (fs::is_regular_file(c.providers_file, ec)) {
        const auto all = load_providers_file(c.providers_file);
        if (auto p = find_provider(all, id)) return *p;
    }
    if (id == builtin_mock) return {id, "", "", "", "mock"};
    throw Error(ErrorCode::ConfigError, "provider '" + id + "' is not defined in " + c.providers_file.string());
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
    auto stem = file.stem().string();
    return file.parent_path() / (stem + suffix);
}

// ---------------------------------------------------------------------------

struct Ctx {
    std::ostream& out;
    std::ostream& err;
    std::string stage;
};

std::size_t do_ingest(Ctx& ctx, const ProjectConfig& c, const fs::path& out_path) {
    ctx.stage = "ingest";
    require_dir(c.corpus_dir, "corpus directory");
    const auto docs = load_corpus(c.corpus_dir);
    if (docs.empty()) throw Error(ErrorCode::UsageError, "no .txt or .md documents under " + c.corpus_dir.string());
    std::vector<TextSegment> all;
    for (const auto& d : docs) {
        auto segs = segment(d, c.segmentation);
        all.insert(all.end(), segs.begin(), segs.end());
    }
    write_segments_jsonl(all, out_path);
    ctx.out << "ingest: " << docs.size() << " documents, " << all.size() << " segments -> " << out_path.string() << "\n";
    return all.size();
}

ExtractionReport do_extract(Ctx& ctx, const ProjectConfig& c, const fs::path& segments_path, const fs::path& triples_path) {
    ctx.stage = "extract";
    require_file(segments_path, "segments file");
    require_dir(c.templates_dir, "templates directory");
    const auto segments = read_segments_jsonl(segments_path);
    const auto tmpl = find_template(c.templates_dir, c.template_id);
    if (const auto issues = validate_template(tmpl); !issues.empty()) {
        throw Error(ErrorCode::TemplateInvalid,
                    "template " + c.template_id + " fails " + issues.front().invariant + ": " + issues.front().message);
    }
    ExtractionOptions opts;
    opts.qa_count = c.qa_count;
    if (!c.system_profile.empty()) {
        const auto profile = load_profile(c.templates_dir / (c.system_profile + ".json"));
        opts.system_prompt = render_enhanced_system_prompt(profile);
    }
    const auto pc = resolve_provider_config(c, c.provider_id, "mock");
    opts.model_name = pc.model_name;
    auto provider = make_chat_provider(pc, c.seed, c.gateway.request_timeout_ms, static_cast<int>(c.qa_count));
    Gateway gateway(c.gateway);
    const auto r = run_extraction_job(segments, tmpl, *provider, gateway, triples_path, opts);

    ctx.out << "extract: " << r.segments_total << " segments, " << r.skipped << " already checkpointed, " << r.succeeded
            << " succeeded (" << r.repaired << " after repair), " << r.failed << " failed, " << r.qa_pairs
            << " QA pairs -> " << triples_path.string() << "\n";
    ctx.out << "format compliance: " << r.compliance.compliant << "/" << r.compliance.total_outputs
            << " first outputs compliant, " << r.compliance.violations.size() << " violations\n";
    for (const auto& [code, n] : r.error_tallies) ctx.out << "  " << code << ": " << n << "\n";

    if (r.attempted == 0) return r;
    ojson rep;
    rep["segments_total"] = r.segments_total;
    rep["skipped"] = r.skipped;
    rep["attempted"] = r.attempted;
    rep["succeeded"] = r.succeeded;
    rep["failed"] = r.failed;
    rep["repaired"] = r.repaired;
    rep["qa_pairs"] = r.qa_pairs;
    rep["compliance"]["total_outputs"] = r.compliance.total_outputs;
    rep["compliance"]["compliant"] = r.compliance.compliant;
    rep["compliance"]["segments_with_violations"] = r.compliance.segments_with_violations();
    rep["compliance"]["violations"] = ojson::array();
    for (const auto& v : r.compliance.violations) {
        rep["compliance"]["violations"].push_back({{"doc_id", v.doc_id},
                                                   {"segment_index", v.segment_index},
                                                   {"kind", to_string(v.kind)},
                                                   {"line", v.line},
                                                   {"attempt", v.attempt}});
    }
    rep["error_tallies"] = r.error_tallies;
    write_file_atomic(sibling(triples_path, ".report.json"), rep.dump(2) + "\n");
    return r;
}

std::size_t do_enqueue(Ctx& ctx, ReviewStore& store, const fs::path& triples_path) {
    ctx.stage = "review";
    require_file(triples_path, "triples file");
    const auto triples = read_checkpoint(triples_path);
    std::map<std::string, std::string> contexts;
    for (const auto& t : triples) contexts[t.doc_id + "#" + std::to_string(t.segment_index)] = t.source_text;
    const auto n = store.enqueue(pairs_from_triples(triples), contexts);
    ctx.out << "review: enqueued " << n << " new pairs (" << store.count(ReviewState::Pending) << " pending)\n";
    return n;
}

struct AssembleResult {
    std::size_t records = 0;
    fs::path stats_path;
};

AssembleResult do_assemble(Ctx& ctx, const ProjectConfig& c, const fs::path& triples_path, const fs::path& reviews_path,
                           const fs::path& out_path) {
    ctx.stage = "assemble";
    require_file(triples_path, "triples file");
    require_file(reviews_path, "reviews store");
    require_file(c.taxonomy_file, "taxonomy file");
    const auto taxonomy = load_taxonomy(c.taxonomy_file);
    const auto triples = read_checkpoint(triples_path);

    std::map<std::string, QAPair> reviewed;
    if (reviews_path.extension() == ".jsonl") {
        for (auto& p : read_review_export(reviews_path)) reviewed.emplace(p.qa_id, std::move(p));
    } else {
        ReviewStore store(reviews_path);
        for (auto& p : store.all_pairs()) reviewed.emplace(p.qa_id, std::move(p));
    }

    std::vector<InstructionRecord> records;
    std::vector<std::string> labels;
    std::vector<QAPair> sources;
    std::size_t not_reviewed = 0;
    for (const auto& p : pairs_from_triples(triples)) {
        auto it = reviewed.find(p.qa_id);
        if (it == reviewed.end() ||
            (it->second.review_state != ReviewState::Accepted && it->second.review_state != ReviewState::Edited)) {
            ++not_reviewed;
            continue;
        }
        const auto& r = it->second;
        records.push_back(to_instruction_record(r));
        labels.push_back(tag_text(r.final_question(), r.final_answer(), taxonomy));
        sources.push_back(r);
    }

    auto [kept, report] = dedupe(records, c.dedupe);
    std::set<std::size_t> dropped;
    for (const auto& g : report.groups) dropped.insert(g.duplicates.begin(), g.duplicates.end());
    std::vector<std::string> kept_labels;
    std::string provenance;
    for (std::size_t i = 0, line = 1; i < records.size(); ++i) {
        if (dropped.contains(i)) continue;
        kept_labels.push_back(labels[i]);
        ojson pj;
        pj["line"] = line++;
        pj["qa_id"] = sources[i].qa_id;
        pj["doc_id"] = sources[i].doc_id;
        pj["segment_index"] = sources[i].segment_index;
        pj["review_state"] = to_string(sources[i].review_state);
        pj["domain"] = labels[i];
        provenance += pj.dump() + "\n";
    }

    write_jsonl(kept, out_path);
    write_file_atomic(sibling(out_path, ".provenance.jsonl"), provenance);
    const auto dist = distribution_of_labels(kept_labels, taxonomy);
    const auto stats_path = sibling(out_path, ".stats.json");
    write_file_atomic(stats_path, distribution_to_json_text(dist));

    ctx.out << "assemble: " << kept.size() << " records (" << report.input_count - report.kept_count
            << " duplicates dropped, " << not_reviewed << " pairs not accepted) -> " << out_path.string() << "\n";
    if (c.validation_fraction > 0.0) {
        const auto [train, val] = split_records(kept, c.validation_fraction, c.split_seed);
        write_jsonl(train, sibling(out_path, ".train.jsonl"));
        write_jsonl(val, sibling(out_path, ".val.jsonl"));
        ctx.out << "split: " << train.size() << " train, " << val.size() << " validation\n";
    }
    return {kept.size(), stats_path};
}

std::string distribution_table(const DomainDistribution& d) {
    std::size_t w = 6;
    for (const auto& [l, _] : d.counts) w = std::max(w, l.size());
    std::ostringstream s;
    auto row = [&](const std::string& label, std::size_t n, bool share) {
        s << label << std::string(w + 2 - label.size(), ' ');
        std::string num = std::to_string(n);
        s << std::string(num.size() < 7 ? 7 - num.size() : 0, ' ') << num;
        if (share) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%7.1f%%", d.total ? 100.0 * static_cast<double>(n) / static_cast<double>(d.total) : 0.0);
            s << buf;
        }
        s << "\n";
    };
    s << "domain" << std::string(w + 2 - 6, ' ') << "  count   share\n";
    for (const auto& [l, n] : d.counts) row(l, n, true);
    row("total", d.total, false);
    return s.str();
}

DomainDistribution do_stats(Ctx& ctx, const ProjectConfig& c, const fs::path& dataset_path) {
    ctx.stage = "stats";
    require_file(dataset_path, "dataset file");
    require_file(c.taxonomy_file, "taxonomy file");
    const auto taxonomy = load_taxonomy(c.taxonomy_file);
    std::vector<std::string> labels;
    for (const auto& r : read_jsonl(dataset_path)) labels.push_back(tag_text(r.question(), r.answer(), taxonomy));
    return distribution_of_labels(labels, taxonomy);
}

TrainRunConfig do_emit(Ctx& ctx, const Options& o, const ProjectConfig& c, const fs::path& dataset_path,
                       const fs::path& out_path) {
    ctx.stage = "emit-train-config";
    require_file(dataset_path, "dataset file");
    TrainConfigOverrides ov = c.train;
    if (o.base_model) ov.base_model = o.base_model;
    if (o.learning_rate) ov.learning_rate = o.learning_rate;
    if (o.batch_size) ov.batch_size = o.batch_size;
    if (o.epochs) ov.epochs = o.epochs;
    if (o.train_output_dir) ov.output_dir = o.train_output_dir;
    const auto cfg = emit_train_config(dataset_path, ov, out_path);
    ctx.out << "emit-train-config: " << cfg.method << " on " << cfg.base_model << ", learning_rate "
            << cfg.learning_rate << ", batch_size " << cfg.batch_size
            << ", epochs " << cfg.epochs << " -> " << out_path.string() << "\n";
    return cfg;
}

int do_eval(Ctx& ctx, const Options& o, ProjectConfig c) {
    ctx.stage = "eval";
    require_file(o.benchmarks, "benchmarks file");
    require_file(o.answers, "answers file");
    const auto format = report_format_from_string(o.format);
    if (o.provider) c.embed_provider_id = *o.provider;
    const fs::path reports = o.reports_dir ? fs::path(*o.reports_dir) : c.output_dir / "reports";

    const auto bench = read_benchmarks_jsonl(o.benchmarks);
    if (bench.empty()) throw Error(ErrorCode::UsageError, "benchmarks file is empty: " + o.benchmarks);
    std::vector<std::string> order;
    const auto answers = read_answers_jsonl(o.answers, &order);

    const auto pc = resolve_provider_config(c, c.embed_provider_id, "mock-embed");
    auto gateway = std::make_shared<Gateway>(c.gateway);
    auto provider = make_embedding_provider(pc, c.seed, gateway);
    Embedder embedder(*provider, c.cache_dir);
    const auto report = score_models(bench, answers, embedder, order);

    fs::create_directories(reports);
    for (auto f : {ReportFormat::TextTable, ReportFormat::Csv, ReportFormat::Json}) {
        write_file_atomic(reports / ("similarity." + std::string(report_extension(f))), render_report(report, f));
    }
    ctx.out << render_report(report, format);
    ctx.err << "eval: " << embedder.provider_calls() << " embedding calls, " << embedder.cache_hits()
            << " cache hits; reports in " << reports.string() << "\n";
    return 0;
}

int do_pipeline(Ctx& ctx, const Options& o, const ProjectConfig& c) {
    const fs::path out_dir = c.output_dir;
    const auto segments = out_dir / "segments.jsonl";
    const auto triples = out_dir / "triples.jsonl";
    const auto dataset = out_dir / "dataset.jsonl";

    do_ingest(ctx, c, segments);
    do_extract(ctx, c, segments, triples);

    ctx.stage = "review";
    std::size_t pending = 0;
    {
        ReviewStore store(c.store_path);
        do_enqueue(ctx, store, triples);
        if (o.auto_accept) {
            std::size_t n = 0;
            for (const auto& p : store.queue(ReviewState::Pending, SIZE_MAX)) {
                store.decide({p.qa_id, Decision::Accept, std::nullopt, std::nullopt, o.reviewer_id, ""});
                ++n;
            }
            ctx.out << "review: auto-accepted " << n << " pairs\n";
        }
        pending = store.count(ReviewState::Pending);
    }
    if (pending > 0) {
        ctx.out << "paused: " << pending << " pairs await review. Review them with\n  materia review serve --store "
                << c.store_path.string() << "\nthen rerun this command to continue.\n";
        return 0;
    }

    const auto res = do_assemble(ctx, c, triples, c.store_path, dataset);
    const auto dist = do_stats(ctx, c, dataset);
    ctx.out << distribution_table(dist);
    do_emit(ctx, o, c, dataset, out_dir / "train_config.json");
    ctx.out << "pipeline: done, " << res.records << " records\n";
    return 0;
}

int dispatch(Ctx& ctx, const Options& o, const Commands& cmd) {
    ctx.stage = "config";
    if (cmd.report->parsed()) {
        ctx.stage = "report";
        require_file(o.report_pos, "report file");
        ctx.out << render_report(parse_report_json(read_file(o.report_pos)), report_format_from_string(o.format));
        return 0;
    }
    const ProjectConfig c = resolve_config(o);

    if (cmd.ingest->parsed()) {
        do_ingest(ctx, c, o.out ? fs::path(*o.out) : c.output_dir / "segments.jsonl");
        return 0;
    }
    if (cmd.prompts_validate->parsed()) {
        ctx.stage = "prompts";
        require_dir(c.templates_dir, "templates directory");
        std::size_t bad = 0;
        for (const auto& f : validate_template_dir(c.templates_dir)) {
            if (f.issues.empty()) {
                ctx.out << "ok      " << f.path.string() << " (" << f.kind << ")\n";
                continue;
            }
            ++bad;
            ctx.out << "invalid " << f.path.string() << " (" << f.kind << ")\n";
            for (const auto& i : f.issues) ctx.out << "  " << i.invariant << " [" << i.location << "]: " << i.message << "\n";
        }
        if (bad > 0) throw Error(ErrorCode::TemplateInvalid, std::to_string(bad) + " template file(s) failed validation");
        return 0;
    }
    if (cmd.extract->parsed()) {
        ProjectConfig cc = c;
        if (o.provider) cc.provider_id = *o.provider;
        do_extract(ctx, cc, o.segments ? fs::path(*o.segments) : c.output_dir / "segments.jsonl",
                   o.out ? fs::path(*o.out) : c.output_dir / "triples.jsonl");
        return 0;
    }
    if (cmd.review_serve->parsed()) {
        ctx.stage = "review";
        ReviewStore store(c.store_path);
        std::optional<DomainTaxonomy> taxonomy;
        if (fs::is_regular_file(c.taxonomy_file)) taxonomy = load_taxonomy(c.taxonomy_file);
        const char* token = std::getenv("MATERIA_REVIEW_TOKEN");
        ReviewApi api(store, taxonomy, token ? token : "");
        ReviewServer server(api, o.ui_dir ? fs::path(*o.ui_dir) : fs::path("ui/dist"));
        const int port = server.bind(o.host, o.port.value_or(8080));
        ctx.out << "review: serving on http://" << o.host << ":" << port << " (store " << c.store_path.string() << ")"
                << std::endl;
        server.serve();
        return 0;
    }
    if (cmd.review_export->parsed()) {
        ctx.stage = "review";
        require_file(c.store_path, "review store");
        ReviewStore store(c.store_path);
        write_file_atomic(*o.out, store.export_jsonl());
        ctx.out << "review: exported " << store.count(std::nullopt) << " pairs -> " << *o.out << "\n";
        return 0;
    }
    if (cmd.review_enqueue->parsed()) {
        ReviewStore store(c.store_path);
        do_enqueue(ctx, store, o.triples ? fs::path(*o.triples) : c.output_dir / "triples.jsonl");
        return 0;
    }
    if (cmd.review_log->parsed()) {
        ctx.stage = "review";
        require_file(c.store_path, "review store");
        ReviewStore store(c.store_path);
        write_file_atomic(*o.out, store.event_log());
        ctx.out << "review: event log -> " << *o.out << "\n";
        return 0;
    }
    if (cmd.review_replay->parsed()) {
        ctx.stage = "review";
        require_file(*o.log, "event log");
        ReviewStore store(c.store_path);
        if (!store.event_log().empty()) {
            throw Error(ErrorCode::InvalidState, "replay needs an empty store; " + c.store_path.string() + " has events");
        }
        store.replay(read_file(*o.log));
        ctx.out << "review: replayed into " << c.store_path.string() << " (" << store.count(std::nullopt) << " pairs, "
                << store.sessions().size() << " sessions)\n";
        return 0;
    }
    if (cmd.assemble->parsed()) {
        do_assemble(ctx, c, o.triples ? fs::path(*o.triples) : c.output_dir / "triples.jsonl",
                    o.reviews ? fs::path(*o.reviews) : c.store_path,
                    o.out ? fs::path(*o.out) : c.output_dir / "dataset.jsonl");
        return 0;
    }
    if (cmd.stats->parsed()) {
        const auto dist = do_stats(ctx, c, o.dataset_pos);
        if (o.out) write_file_atomic(*o.out, distribution_to_json_text(dist));
        ctx.out << (o.json ? distribution_to_json_text(dist) : distribution_table(dist));
        return 0;
    }
    if (cmd.emit->parsed()) {
        const fs::path dataset = o.dataset ? fs::path(*o.dataset) : c.output_dir / "dataset.jsonl";
        do_emit(ctx, o, c, dataset, o.out ? fs::path(*o.out) : dataset.parent_path() / "train_config.json");
        return 0;
    }
    if (cmd.eval->parsed()) return do_eval(ctx, o, c);
    if (cmd.pipeline_run->parsed()) {
        ProjectConfig cc = c;
        if (o.provider) cc.provider_id = *o.provider;
        return do_pipeline(ctx, o, cc);
    }
    throw Error(ErrorCode::UsageError, "no command given");
}

void print_error(std::ostream& err, const std::string& stage, std::string_view code, const std::string& message) {
    ojson j;
    j["stage"] = stage;
    j["code"] = code;
    j["message"] = message;
    err << j.dump() << "\n";
}

void collect(const CLI::App* app, const std::string& prefix, std::vector<CommandInfo>& out) {
    for (const auto* sub : app->get_subcommands({})) {
        const std::string path = prefix.empty() ? sub->get_name() : prefix + " " + sub->get_name();
        if (sub->get_subcommands({}).empty()) {
            CommandInfo info{path, {}};
            for (const auto* opt : sub->get_options()) {
                for (const auto& n : opt->get_lnames()) info.flags.push_back("--" + n);
            }
            out.push_back(std::move(info));
        } else {
            collect(sub, path, out);
        }
    }
}

}  // namespace

std::vector<CommandInfo> list_commands() {
    Options o;
    Commands c;
    auto app = build(o, c);
    std::vector<CommandInfo> out;
    collect(app.get(), "", out);
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    Commands cmd;
    auto app = build(o, cmd);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app->parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = app.get();
        while (true) {
            auto subs = target->get_subcommands();
            if (subs.empty()) break;
            target = subs.front();
        }
        out << target->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app->help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return 1;
    }

    Ctx ctx{out, err, "config"};
    try {
        return dispatch(ctx, o, cmd);
    } catch (const Error& e) {
        print_error(err, ctx.stage, to_string(e.code()), e.what());
        return is_validation_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        print_error(err, ctx.stage, "InternalError", e.what());
        return 2;
    }
}

}  // namespace materia::cli
