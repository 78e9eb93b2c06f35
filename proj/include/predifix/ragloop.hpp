#ifndef PREDIFIX_RAGLOOP_HPP
#define PREDIFIX_RAGLOOP_HPP

#include "predifix/retrieval.hpp"

#include <json.hpp>

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace predifix::ragloop {

using analyzer::AnalysisRun;
using datalog::AlertInstance;
using datalog::RuleProgram;
using minilang::Codebase;
using nlohmann::json;
using retrieval::KeyExample;
using retrieval::RetrievalConfig;

struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoPatchFound : std::runtime_error {
    NoPatchFound() : std::runtime_error("response contains no JSON patch array") {}
};

struct MalformedEdit : std::runtime_error {
    int index;
    MalformedEdit(int index_, const std::string& reason)
        : std::runtime_error("edit " + std::to_string(index_) + ": " + reason), index(index_) {}
};

struct NoMatchingLine : std::runtime_error {
    int index;
    explicit NoMatchingLine(int index_)
        : std::runtime_error("edit " + std::to_string(index_) + ": no line matches old_line"),
          index(index_) {}
};

/// Alert display metadata from the "<rule>.meta.json" sidecar.
struct RuleMeta {
    std::string name;
    std::string description;
    std::string severity;

    static RuleMeta from_json(const json& j, const std::string& rule_id) {
        RuleMeta m;
        m.name = j.value("name", "");
        m.description = j.value("description", "");
        m.severity = j.value("severity", "");
        if (m.name.empty()) m.name = rule_id;
        if (m.description.empty()) m.description = rule_id;
        return m;
    }

    static RuleMeta fallback(const std::string& rule_id) {
        return RuleMeta{rule_id, rule_id, ""};
    }
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::optional<KeyExample> example;
};

inline std::string system_prompt() {
    return
        "You are a helpful programming assistant to fix security vulnerabilities in "
        "MiniLang code. You are given a code snippet and a description of the "
        "vulnerability. You should briefly describe how to fix the vulnerability, and "
        "finally output the modification in JSON.\n"
        "\n"
        "In the JSON, for each modification, use `old_line` to mark the exact line to "
        "modify, and `new_line` as the modified line. Example format:\n"
        "```json\n"
        "[{ \"old_line\": \"int x = 1;\",\n"
        "   \"new_line\": \"int x = 1; x++;\" }]\n"
        "```\n";
}

inline PromptBundle build_prompt(const RuleMeta& meta, const std::string& alert_context_text,
                                 const std::optional<KeyExample>& example = std::nullopt) {
    PromptBundle b;
    b.system_text = system_prompt();
    b.user_text = "Vulnerability description: " + meta.name + ": " + meta.description + "\n\n" +
                  "Code snippet:\n" + alert_context_text + "\n";
    if (example) {
        b.user_text +=
            "\nBelow code snippet is a safe example. You can use it if helpful.\n\n" +
            example->context_text + "\n";
        b.example = example;
    }
    return b;
}

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const PromptBundle& prompt) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic mock: the first configured trigger substring found in the
/// user prompt selects the response; otherwise the default response.
class MockBackend : public Backend {
public:
    struct TriggerRule {
        std::string trigger_substring;
        std::string response;
    };

    MockBackend(std::vector<TriggerRule> rules, std::string default_response)
        : rules_(std::move(rules)), default_(std::move(default_response)) {}

    static MockBackend from_json(const json& j) {
        std::vector<TriggerRule> rules;
        for (const json& r : j.value("rules", json::array()))
            rules.push_back({r.at("trigger_substring").get<std::string>(),
                             r.at("response").get<std::string>()});
        return MockBackend(std::move(rules), j.value("default_response", ""));
    }

    std::string complete(const PromptBundle& prompt) override {
        for (const TriggerRule& r : rules_)
            if (prompt.user_text.find(r.trigger_substring) != std::string::npos)
                return r.response;
        return default_;
    }

    std::string name() const override { return "mock"; }

private:
    std::vector<TriggerRule> rules_;
    std::string default_;
};

struct HttpBackendConfig {
    std::string url;   // e.g. http://host:port/v1/chat/completions
    std::string model = "default";
    int timeout_seconds = 60;
    bool retry_once = true;
    std::string api_key_env = "PREDIFIX_API_KEY";
};

/// Chat-completion client. Declared here; defined in http_backend.hpp to
/// keep the socket dependency out of translation units that never use it.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}
    std::string complete(const PromptBundle& prompt) override;
    std::string name() const override { return "http"; }

private:
    HttpBackendConfig config_;
};

struct LineEdit {
    std::string old_line;
    std::string new_line;
};

struct LinePatch {
    std::vector<LineEdit> edits;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::optional<json> try_parse_array(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array()) return std::nullopt;
    return j;
}

// First fenced code block whose content is a top-level JSON array.
inline std::optional<json> fenced_array(const std::string& text) {
    std::size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string::npos) {
        std::size_t start = text.find('\n', pos);
        if (start == std::string::npos) return std::nullopt;
        std::size_t end = text.find("```", start);
        if (end == std::string::npos) return std::nullopt;
        if (auto j = try_parse_array(text.substr(start + 1, end - start - 1))) return j;
        pos = end + 3;
    }
    return std::nullopt;
}

// First balanced top-level [...] region parsing as a JSON array.
inline std::optional<json> bracket_array(const std::string& text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        int depth = 0;
        bool in_str = false;
        for (std::size_t j = i; j < text.size(); ++j) {
            char c = text[j];
            if (in_str) {
                if (c == '\\') ++j;
                else if (c == '"') in_str = false;
            } else if (c == '"') {
                in_str = true;
            } else if (c == '[') {
                ++depth;
            } else if (c == ']') {
                if (--depth == 0) {
                    if (auto arr = try_parse_array(text.substr(i, j - i + 1))) return arr;
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

} // namespace detail

inline LinePatch parse_patch(const std::string& raw_response) {
    std::optional<json> arr = detail::fenced_array(raw_response);
    if (!arr) arr = detail::bracket_array(raw_response);
    if (!arr) throw NoPatchFound();
    LinePatch patch;
    int i = 0;
    for (const json& e : *arr) {
        if (!e.is_object()) throw MalformedEdit(i, "not an object");
        if (!e.contains("old_line") || !e["old_line"].is_string())
            throw MalformedEdit(i, "missing string field old_line");
        if (!e.contains("new_line") || !e["new_line"].is_string())
            throw MalformedEdit(i, "missing string field new_line");
        LineEdit edit{e["old_line"].get<std::string>(), e["new_line"].get<std::string>()};
        if (detail::trim(edit.old_line).empty())
            throw MalformedEdit(i, "old_line is empty after trimming");
        patch.edits.push_back(std::move(edit));
        ++i;
    }
    if (patch.edits.empty()) throw NoPatchFound();
    return patch;
}

namespace detail {

inline std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '\n') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

/// Applies line edits: a line matches when its trimmed content equals the
/// trimmed old_line. The alert's file is searched first and the candidate
/// nearest the alert line wins (ties to the smaller line number); other
/// files are searched in path order. Replacement text is verbatim;
/// embedded newlines insert lines, an empty new_line deletes the line.
/// All-or-nothing: any failing edit leaves the codebase untouched.
inline Codebase apply_patch(const Codebase& cb, const LinePatch& patch, const Location& alert_loc) {
    // Work on raw lines; statements are re-parsed by the caller.
    struct FileLines {
        std::string path;
        std::vector<std::string> lines;
    };
    std::vector<FileLines> files;
    for (const auto& f : cb.files) files.push_back({f.path, f.lines});
    std::stable_sort(files.begin(), files.end(),
                     [&](const FileLines& a, const FileLines& b) {
                         if ((a.path == alert_loc.file) != (b.path == alert_loc.file))
                             return a.path == alert_loc.file;
                         return a.path < b.path;
                     });

    for (std::size_t ei = 0; ei < patch.edits.size(); ++ei) {
        const LineEdit& edit = patch.edits[ei];
        std::string want = detail::trim(edit.old_line);
        FileLines* best_file = nullptr;
        int best_line = -1;
        for (FileLines& f : files) {
            long best_dist = -1;
            int line = -1;
            for (std::size_t i = 0; i < f.lines.size(); ++i) {
                if (detail::trim(f.lines[i]) != want) continue;
                long dist = f.path == alert_loc.file
                                ? std::labs(static_cast<long>(i) + 1 - alert_loc.line)
                                : static_cast<long>(i);
                if (best_dist < 0 || dist < best_dist) {
                    best_dist = dist;
                    line = static_cast<int>(i) + 1;
                }
            }
            if (line > 0) {
                best_file = &f;
                best_line = line;
                break; // files are already in search priority order
            }
        }
        if (!best_file) throw NoMatchingLine(static_cast<int>(ei));
        auto it = best_file->lines.begin() + (best_line - 1);
        if (edit.new_line.empty()) {
            best_file->lines.erase(it);
        } else {
            auto repl = detail::split_lines(edit.new_line);
            it = best_file->lines.erase(it);
            best_file->lines.insert(it, repl.begin(), repl.end());
        }
    }

    Codebase out;
    out.id = cb.id;
    for (const auto& orig : cb.files) {
        const FileLines* f = nullptr;
        for (const FileLines& x : files)
            if (x.path == orig.path) f = &x;
        std::string text;
        for (const std::string& l : f->lines) text += l + "\n";
        out.files.push_back(minilang::parse_file(orig.path, text));
    }
    return out;
}

struct Attempt {
    int number = 0;
    PromptBundle prompt;
    std::string raw_response;
    std::optional<KeyExample> example;
    std::string parse_error;   // empty when parsing succeeded
    std::string apply_error;   // empty when application succeeded
    std::string backend_error; // empty when the call succeeded
    bool validated = false;    // alert gone after re-analysis
    std::vector<std::string> introduced_alerts;
};

enum class SessionStatus { Fixed, Exhausted, Error };

inline const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::Fixed: return "fixed";
        case SessionStatus::Exhausted: return "exhausted";
        case SessionStatus::Error: return "error";
    }
    return "?";
}

struct RepairSession {
    std::string rule_id;
    std::string alert_id;
    SessionStatus status = SessionStatus::Exhausted;
    std::string error;
    std::vector<Attempt> attempts;
    std::optional<Codebase> patched; // present when status == Fixed

    json to_json() const {
        json j;
        j["rule_id"] = rule_id;
        j["alert_id"] = alert_id;
        j["status"] = to_string(status);
        if (!error.empty()) j["error"] = error;
        j["attempts"] = json::array();
        for (const Attempt& a : attempts) {
            json aj;
            aj["number"] = a.number;
            aj["system"] = a.prompt.system_text;
            aj["user"] = a.prompt.user_text;
            aj["response"] = a.raw_response;
            if (a.example) {
                aj["example"] = {{"predicate", a.example->predicate},
                                 {"codebase", a.example->codebase_id},
                                 {"file", a.example->snippet.file},
                                 {"line", a.example->snippet.line},
                                 {"source", a.example->source_kind}};
            }
            if (!a.backend_error.empty()) aj["backend_error"] = a.backend_error;
            if (!a.parse_error.empty()) aj["parse_error"] = a.parse_error;
            if (!a.apply_error.empty()) aj["apply_error"] = a.apply_error;
            aj["validated"] = a.validated;
            aj["introduced_alerts"] = a.introduced_alerts;
            j["attempts"].push_back(std::move(aj));
        }
        return j;
    }
};

/// Alert context: the first loc argument's line with `context` lines each
/// side.
inline Location alert_location(const RuleProgram& p, const AlertInstance& a) {
    auto indices = p.decl(a.pred).loc_param_indices();
    if (indices.empty()) throw analyzer::AnalysisError("alert predicate has no loc parameter");
    return a.args[indices.front()].loc();
}

/// The gradual escalation loop: attempt 0 carries no example (the basic
/// prompt), then one example per attempt, walking the prioritized sources
/// in order. Stops at the first validated patch or when every budgeted
/// example has been tried.
inline RepairSession run_session(const RuleProgram& p, const Codebase& target,
                                 const AlertInstance& target_alert, const RuleMeta& meta,
                                 const std::vector<retrieval::RankedSource>& sources,
                                 const RetrievalConfig& config, Backend& backend) {
    RepairSession session;
    session.rule_id = p.rule_id;

    AnalysisRun before;
    try {
        before = analyzer::run_analysis(p, target);
        session.alert_id = analyzer::format_alert_id(p, target_alert);
        if (!before.has_alert(target_alert))
            throw analyzer::AnalysisError("target alert not found: " + session.alert_id);
    } catch (const std::exception& e) {
        session.status = SessionStatus::Error;
        session.error = e.what();
        return session;
    }

    Location aloc = alert_location(p, target_alert);
    std::string alert_context = retrieval::expand_context(target, aloc, config.alert_context);

    // Attempt schedule: no example first, then up to max_examples_per_source
    // per source in order.
    std::vector<std::optional<KeyExample>> schedule;
    schedule.push_back(std::nullopt);
    for (const retrieval::RankedSource& src : sources) {
        int n = 0;
        for (const KeyExample& e : src.examples) {
            if (n >= config.max_examples_per_source) break;
            schedule.emplace_back(e);
            ++n;
        }
    }

    for (std::size_t i = 0; i < schedule.size(); ++i) {
        Attempt attempt;
        attempt.number = static_cast<int>(i);
        attempt.example = schedule[i];
        attempt.prompt = build_prompt(meta, alert_context, schedule[i]);

        try {
            attempt.raw_response = backend.complete(attempt.prompt);
        } catch (const BackendError& e) {
            attempt.backend_error = e.what();
            session.attempts.push_back(std::move(attempt));
            continue;
        }

        LinePatch patch;
        try {
            patch = parse_patch(attempt.raw_response);
        } catch (const std::exception& e) {
            attempt.parse_error = e.what();
            session.attempts.push_back(std::move(attempt));
            continue;
        }

        Codebase patched;
        try {
            patched = apply_patch(target, patch, aloc);
        } catch (const std::exception& e) {
            attempt.apply_error = e.what();
            session.attempts.push_back(std::move(attempt));
            continue;
        }

        try {
            AnalysisRun after = analyzer::run_analysis(p, patched);
            auto diff = analyzer::alert_gone(p, before, after, target_alert);
            attempt.validated = diff.gone;
            for (const AlertInstance& a : diff.introduced)
                attempt.introduced_alerts.push_back(analyzer::format_alert_id(p, a));
            session.attempts.push_back(std::move(attempt));
            if (diff.gone) {
                session.status = SessionStatus::Fixed;
                session.patched = std::move(patched);
                return session;
            }
        } catch (const std::exception& e) {
            // The patch broke the build; record and move on.
            Attempt& back = attempt;
            back.apply_error = e.what();
            session.attempts.push_back(std::move(back));
        }
    }
    session.status = SessionStatus::Exhausted;
    return session;
}

} // namespace predifix::ragloop

#endif
