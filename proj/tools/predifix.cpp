// predifix: analyze MiniLang codebases with Datalog rules, retrieve key
// examples for an alert, and drive the LLM repair loop.

#include "predifix/http_backend.hpp"
#include "predifix/ragloop.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace predifix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotFound = 1; // retrieve: unknown alert; fix: exhausted
constexpr int kExitUsage = 2;
constexpr int kExitAnalysis = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UsageError("cannot read file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Options {
    std::string config_file;
    bool verbose = false;

    std::string rules;
    std::string target;
    std::string alert;
    std::string index_dir;
    std::string manifest;
    std::string out_dir;
    std::string format = "text";
    std::string backend = "mock";
    std::string mock_config;
    std::string http_url;
    std::string http_model = "default";
    std::string session_log;
    std::vector<std::string> excludes;
    bool oracle = false;
    bool dry_run = false;
    int limit = -1;

    retrieval::RetrievalConfig retrieval;
};

// Settings precedence: flags > config file > defaults. CLI11 fills flag
// values; config entries only apply to options the user did not pass.
void merge_config(const CLI::App& app, Options& opt) {
    if (opt.config_file.empty()) return;
    json j = json::parse(slurp(opt.config_file), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw UsageError("config file is not a JSON object: " + opt.config_file);

    auto unset = [&](const std::string& flag) {
        const CLI::Option* o = app.get_option_no_throw("--" + flag);
        return !o || o->count() == 0;
    };
    auto take_int = [&](const char* key, int& slot) {
        if (j.contains(key) && unset(key)) slot = j[key].get<int>();
    };
    auto take_bool = [&](const char* key, bool& slot) {
        if (j.contains(key) && unset(key)) slot = j[key].get<bool>();
    };
    take_int("example-context", opt.retrieval.example_context);
    take_int("alert-context", opt.retrieval.alert_context);
    take_int("max-predicate-matches", opt.retrieval.max_predicate_matches);
    take_int("max-examples-per-source", opt.retrieval.max_examples_per_source);
    take_int("literal-top-k", opt.retrieval.literal_top_k);
    take_int("literal-min-len", opt.retrieval.literal_min_len);
    take_bool("same-file-cond3", opt.retrieval.same_file_cond3);
    if (j.contains("library-globs") && unset("library-glob"))
        opt.retrieval.library_globs = j["library-globs"].get<std::vector<std::string>>();
    if (j.contains("backend") && unset("backend")) opt.backend = j["backend"].get<std::string>();
    if (j.contains("http-url") && unset("http-url")) opt.http_url = j["http-url"];
    if (j.contains("http-model") && unset("http-model")) opt.http_model = j["http-model"];
}

void print_effective_config(const Options& opt) {
    json j;
    j["example-context"] = opt.retrieval.example_context;
    j["alert-context"] = opt.retrieval.alert_context;
    j["max-predicate-matches"] = opt.retrieval.max_predicate_matches;
    j["max-examples-per-source"] = opt.retrieval.max_examples_per_source;
    j["literal-top-k"] = opt.retrieval.literal_top_k;
    j["literal-min-len"] = opt.retrieval.literal_min_len;
    j["same-file-cond3"] = opt.retrieval.same_file_cond3;
    j["library-globs"] = opt.retrieval.library_globs;
    j["backend"] = opt.backend;
    std::cerr << "effective config: " << j.dump() << "\n";
}

struct LoadedRule {
    datalog::RuleProgram program;
    std::string text;
    std::string digest;
    ragloop::RuleMeta meta;
};

LoadedRule load_rule(const std::string& path) {
    fs::path p(path);
    if (!fs::is_regular_file(p)) throw UsageError("rules file not found: " + path);
    LoadedRule r;
    r.text = slurp(p);
    r.digest = corpus::fnv1a64(r.text);
    r.program = datalog::parse_program(r.text, p.stem().string(), p.generic_string());
    fs::path meta = p;
    meta.replace_extension(".meta.json");
    if (fs::is_regular_file(meta)) {
        json j = json::parse(slurp(meta), nullptr, false);
        r.meta = j.is_discarded() ? ragloop::RuleMeta::fallback(r.program.rule_id)
                                  : ragloop::RuleMeta::from_json(j, r.program.rule_id);
    } else {
        r.meta = ragloop::RuleMeta::fallback(r.program.rule_id);
    }
    return r;
}

minilang::Codebase load_target(const std::string& dir) {
    if (!fs::is_directory(dir)) throw UsageError("target directory not found: " + dir);
    return corpus::load_codebase(dir, "target");
}

json alerts_to_json(const datalog::RuleProgram& p, const analyzer::AnalysisRun& run) {
    json out = json::array();
    for (const auto& a : run.alerts) {
        json locs = json::array();
        for (std::size_t i : p.decl(a.pred).loc_param_indices())
            locs.push_back(a.args[i].text());
        out.push_back({{"alert_id", analyzer::format_alert_id(p, a)},
                       {"rule_id", a.rule_id},
                       {"locations", locs}});
    }
    return out;
}

int cmd_analyze(const Options& opt) {
    LoadedRule rule = load_rule(opt.rules);
    minilang::Codebase target = load_target(opt.target);
    analyzer::AnalysisRun run = analyzer::run_analysis(rule.program, target);
    if (opt.format == "json") {
        std::cout << alerts_to_json(rule.program, run).dump(1) << "\n";
    } else {
        for (const auto& a : run.alerts)
            std::cout << analyzer::format_alert_id(rule.program, a) << "\n";
        if (run.alerts.empty()) std::cout << "no alerts\n";
    }
    return kExitOk;
}

int cmd_index(const Options& opt) {
    auto manifest = corpus::CorpusManifest::load(opt.manifest);
    auto index = corpus::CorpusIndex::build(manifest);
    std::vector<std::string> exclusion_texts;
    for (const auto& f : opt.excludes) exclusion_texts.push_back(slurp(f));
    index.apply_exclusion(exclusion_texts);
    index.save(opt.out_dir);
    int files = 0, skipped = 0;
    for (const auto& cb : index.codebases) {
        files += static_cast<int>(cb.files.size());
        skipped += static_cast<int>(cb.skipped.size());
        for (const auto& s : cb.skipped)
            std::cerr << "warning: skipped unparseable file " << cb.id << "/" << s << "\n";
    }
    std::cout << "indexed " << index.codebases.size() << " codebases, " << files << " files";
    if (skipped) std::cout << " (" << skipped << " skipped)";
    std::cout << "\n";
    return kExitOk;
}

struct RetrievalRun {
    LoadedRule rule;
    minilang::Codebase target;
    analyzer::AnalysisRun target_run;
    datalog::AlertInstance alert;
    corpus::CorpusIndex index;
    std::vector<const corpus::IndexedCodebase*> clean;
    std::string alert_context;
};

// Shared setup for retrieve and fix: analysis, alert lookup, index load.
// Returns nullopt when the alert id does not match (exit 1 path).
std::optional<RetrievalRun> setup_retrieval(const Options& opt) {
    RetrievalRun r{load_rule(opt.rules), load_target(opt.target), {}, {}, {}, {}, {}};
    r.target_run = analyzer::run_analysis(r.rule.program, r.target);
    const datalog::AlertInstance* a =
        analyzer::find_alert(r.rule.program, r.target_run, opt.alert);
    if (!a) return std::nullopt;
    r.alert = *a;
    r.index = corpus::CorpusIndex::load(opt.index_dir);
    std::vector<std::string> exclusion_texts;
    for (const auto& f : opt.excludes) exclusion_texts.push_back(slurp(f));
    r.index.apply_exclusion(exclusion_texts);
    r.clean = r.index.select_clean_codebases(
        r.rule.program, r.rule.digest,
        static_cast<std::size_t>(opt.retrieval.literal_top_k),
        static_cast<std::size_t>(opt.retrieval.literal_min_len));
    r.alert_context = retrieval::expand_context(
        r.target, ragloop::alert_location(r.rule.program, r.alert),
        opt.retrieval.alert_context);
    // Persist refreshed cleanliness verdicts, but never an index reduced by
    // ad-hoc exclusions.
    if (opt.excludes.empty()) r.index.save(opt.index_dir);
    return r;
}

std::vector<retrieval::RankedSource> ranked_sources(const RetrievalRun& r, const Options& opt) {
    auto examples = retrieval::identify_key_examples(r.rule.program, r.target_run, r.alert,
                                                     r.clean, opt.retrieval);
    return retrieval::prioritize(examples, r.alert_context, opt.retrieval, r.rule.program);
}

int cmd_retrieve(const Options& opt) {
    auto run = setup_retrieval(opt);
    if (!run) {
        std::cerr << "error: alert not found: " << opt.alert << "\n";
        return kExitNotFound;
    }

    std::vector<retrieval::KeyExample> flat;
    if (opt.oracle) {
        flat = retrieval::oracle_key_examples(run->rule.program, run->target, run->alert,
                                              run->clean, opt.retrieval);
        flat = retrieval::bm25_rank(run->alert_context, std::move(flat));
    } else {
        for (const auto& src : ranked_sources(*run, opt))
            for (const auto& e : src.examples) flat.push_back(e);
    }
    if (opt.limit >= 0 && static_cast<int>(flat.size()) > opt.limit)
        flat.resize(opt.limit);

    json out = json::array();
    for (const auto& e : flat)
        out.push_back({{"predicate", e.predicate},
                       {"file", e.snippet.file},
                       {"line", e.snippet.line},
                       {"source", e.source_kind},
                       {"score", e.score},
                       {"context", e.context_text}});
    std::cout << out.dump(1) << "\n";
    return kExitOk;
}

int cmd_fix(const Options& opt) {
    auto run = setup_retrieval(opt);
    if (!run) {
        std::cerr << "error: alert not found: " << opt.alert << "\n";
        return kExitNotFound;
    }
    auto sources = ranked_sources(*run, opt);

    std::unique_ptr<ragloop::Backend> backend;
    if (opt.backend == "mock") {
        json cfg = json::object();
        if (!opt.mock_config.empty()) {
            cfg = json::parse(slurp(opt.mock_config), nullptr, false);
            if (cfg.is_discarded())
                throw UsageError("mock config is not valid JSON: " + opt.mock_config);
        }
        backend = std::make_unique<ragloop::MockBackend>(ragloop::MockBackend::from_json(cfg));
    } else if (opt.backend == "http") {
        if (opt.http_url.empty()) throw UsageError("--http-url is required for --backend http");
        ragloop::HttpBackendConfig cfg;
        cfg.url = opt.http_url;
        cfg.model = opt.http_model;
        backend = std::make_unique<ragloop::HttpBackend>(cfg);
    } else {
        throw UsageError("unknown backend: " + opt.backend);
    }

    ragloop::RepairSession session = ragloop::run_session(
        run->rule.program, run->target, run->alert, run->rule.meta, sources, opt.retrieval,
        *backend);

    if (!opt.session_log.empty()) {
        std::ofstream log(opt.session_log);
        log << session.to_json().dump(1) << "\n";
    }

    if (session.status == ragloop::SessionStatus::Fixed && !opt.dry_run) {
        for (const auto& f : session.patched->files) {
            std::ofstream out(fs::path(opt.target) / f.path, std::ios::binary);
            for (const auto& line : f.lines) out << line << "\n";
        }
    }

    json summary;
    summary["status"] = ragloop::to_string(session.status);
    summary["alert_id"] = session.alert_id;
    summary["attempts"] = session.attempts.size();
    if (!session.error.empty()) summary["error"] = session.error;
    std::cout << summary.dump(1) << "\n";

    switch (session.status) {
        case ragloop::SessionStatus::Fixed: return kExitOk;
        case ragloop::SessionStatus::Exhausted: return kExitNotFound;
        case ragloop::SessionStatus::Error: return kExitAnalysis;
    }
    return kExitAnalysis;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"predifix: static-analysis alert repair with bridging-predicate retrieval"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_file, "JSON config file mirroring flag names");
    app.add_flag("--verbose", opt.verbose, "print the effective configuration");

    auto add_retrieval_flags = [&](CLI::App* cmd) {
        cmd->add_option("--example-context", opt.retrieval.example_context,
                        "context lines each side of a key example");
        cmd->add_option("--alert-context", opt.retrieval.alert_context,
                        "context lines each side of the alert");
        cmd->add_option("--max-predicate-matches", opt.retrieval.max_predicate_matches,
                        "drop predicates matching more snippets than this");
        cmd->add_option("--max-examples-per-source", opt.retrieval.max_examples_per_source,
                        "examples kept per corpus source");
        cmd->add_option("--library-glob", opt.retrieval.library_globs,
                        "library path patterns to filter out");
        cmd->add_flag("--same-file-cond3", opt.retrieval.same_file_cond3,
                      "require the new alert in the snippet's file");
        cmd->add_option("--literal-top-k", opt.retrieval.literal_top_k,
                        "literal-source codebases kept");
        cmd->add_option("--literal-min-len", opt.retrieval.literal_min_len,
                        "minimum literal length for source ranking");
        cmd->add_option("--exclude", opt.excludes,
                        "file whose exact content is dropped from the corpus");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "run a rule over a codebase");
    analyze->add_option("--rules", opt.rules, "rule file")->required();
    analyze->add_option("--target", opt.target, "target codebase directory")->required();
    analyze->add_option("--format", opt.format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* index = app.add_subcommand("index", "build a corpus index from a manifest");
    index->add_option("--manifest", opt.manifest, "corpus manifest JSON")->required();
    index->add_option("--out", opt.out_dir, "index output directory")->required();
    index->add_option("--exclude", opt.excludes, "anti-leak exclusion file");

    CLI::App* retrieve = app.add_subcommand("retrieve", "retrieve key examples for an alert");
    retrieve->add_option("--rules", opt.rules, "rule file")->required();
    retrieve->add_option("--target", opt.target, "target codebase directory")->required();
    retrieve->add_option("--alert", opt.alert, "alert id, e.g. hasAlert@main.ml:3")->required();
    retrieve->add_option("--index", opt.index_dir, "corpus index directory")->required();
    retrieve->add_flag("--oracle", opt.oracle, "use the brute-force reference path");
    retrieve->add_option("--limit", opt.limit, "print at most N examples");
    add_retrieval_flags(retrieve);

    CLI::App* fix = app.add_subcommand("fix", "run the repair loop for an alert");
    fix->add_option("--rules", opt.rules, "rule file")->required();
    fix->add_option("--target", opt.target, "target codebase directory")->required();
    fix->add_option("--alert", opt.alert, "alert id")->required();
    fix->add_option("--index", opt.index_dir, "corpus index directory")->required();
    fix->add_option("--backend", opt.backend, "mock or http")
        ->check(CLI::IsMember({"mock", "http"}));
    fix->add_option("--mock-config", opt.mock_config, "mock backend config JSON");
    fix->add_option("--http-url", opt.http_url, "chat-completion endpoint URL");
    fix->add_option("--http-model", opt.http_model, "model name for the http backend");
    fix->add_option("--session-log", opt.session_log, "write the session log JSON here");
    fix->add_flag("--dry-run", opt.dry_run, "do not write patched files");
    add_retrieval_flags(fix);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        merge_config(app, opt);
        if (opt.verbose) print_effective_config(opt);
        if (analyze->parsed()) return cmd_analyze(opt);
        if (index->parsed()) return cmd_index(opt);
        if (retrieve->parsed()) return cmd_retrieve(opt);
        if (fix->parsed()) return cmd_fix(opt);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const corpus::ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const analyzer::AmbiguousAlertId& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
}
