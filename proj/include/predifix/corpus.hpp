#ifndef PREDIFIX_CORPUS_HPP
#define PREDIFIX_CORPUS_HPP

#include "predifix/analyzer.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace predifix::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kIndexFormatVersion = 1;

struct ManifestError : std::runtime_error {
    explicit ManifestError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Trailing whitespace stripped per line, exactly one trailing newline.
inline std::string normalize_content(const std::string& text) {
    std::string out;
    std::string line;
    auto flush = [&] {
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        out += line;
        out += '\n';
        line.clear();
    };
    for (char c : text) {
        if (c == '\n') flush();
        else line += c;
    }
    if (!line.empty()) flush();
    return out;
}

struct ManifestSource {
    std::string name;
    std::string kind; // popular | literal | target | user
    std::string path;
    int priority = 0;
};

struct CorpusManifest {
    std::vector<ManifestSource> sources;

    static CorpusManifest parse(const json& j) {
        CorpusManifest m;
        if (!j.is_object() || !j.contains("sources") || !j["sources"].is_array())
            throw ManifestError("manifest must be an object with a \"sources\" array");
        std::set<std::string> names;
        for (const json& s : j["sources"]) {
            ManifestSource src;
            try {
                src.name = s.at("name").get<std::string>();
                src.kind = s.at("kind").get<std::string>();
                src.path = s.at("path").get<std::string>();
                src.priority = s.value("priority", 0);
            } catch (const json::exception& e) {
                throw ManifestError(std::string("malformed source entry: ") + e.what());
            }
            if (src.kind != "popular" && src.kind != "literal" && src.kind != "target" &&
                src.kind != "user")
                throw ManifestError("source " + src.name + ": unknown kind " + src.kind);
            if (!names.insert(src.name).second)
                throw ManifestError("duplicate source name " + src.name);
            m.sources.push_back(std::move(src));
        }
        return m;
    }

    static CorpusManifest load(const fs::path& file) {
        std::ifstream in(file);
        if (!in) throw ManifestError("cannot read manifest " + file.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ManifestError(std::string("manifest is not valid JSON: ") + e.what());
        }
        return parse(j);
    }
};

struct IndexedFile {
    std::string path;    // relative to the codebase root
    std::string content; // raw bytes
    std::string digest;
};

struct IndexedCodebase {
    std::string id; // "<source>" or "<source>/<subdir>"
    std::string source_name;
    std::string kind;
    int priority = 0;
    int order = 0; // position in manifest enumeration
    std::vector<IndexedFile> files;
    std::vector<std::string> skipped; // unparseable files, kept out of facts
    FactSet facts;

    minilang::Codebase to_codebase() const {
        minilang::Codebase cb;
        cb.id = id;
        for (const IndexedFile& f : files) cb.files.push_back(minilang::parse_file(f.path, f.content));
        return cb;
    }

    std::string files_digest() const {
        std::string all;
        for (const IndexedFile& f : files) all += f.path + ":" + f.digest + "\n";
        return fnv1a64(all);
    }
};

/// Reads every *.ml file under `dir` (sorted relative paths) as one codebase.
inline minilang::Codebase load_codebase(const fs::path& dir, const std::string& id) {
    if (!fs::is_directory(dir)) throw IndexError("not a directory: " + dir.string());
    std::vector<fs::path> paths;
    for (auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ml") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    minilang::Codebase cb;
    cb.id = id;
    for (const fs::path& p : paths) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        cb.files.push_back(minilang::parse_file(fs::relative(p, dir).generic_string(), ss.str()));
    }
    return cb;
}

class CorpusIndex {
public:
    std::vector<IndexedCodebase> codebases;

    /// Parses and fact-extracts every file of every source. Unparseable
    /// files are skipped with a warning recorded on the codebase.
    static CorpusIndex build(const CorpusManifest& manifest) {
        CorpusIndex index;
        int order = 0;
        for (const ManifestSource& src : manifest.sources) {
            fs::path root(src.path);
            if (!fs::is_directory(root))
                throw ManifestError("source " + src.name + ": path does not exist: " + src.path);

            // A source directory is one codebase when it holds .ml files
            // directly; subdirectories become codebases of their own.
            std::vector<std::pair<std::string, fs::path>> roots;
            bool direct = false;
            for (auto& e : fs::directory_iterator(root))
                if (e.is_regular_file() && e.path().extension() == ".ml") direct = true;
            if (direct) roots.emplace_back(src.name, root);
            std::vector<fs::path> subs;
            for (auto& e : fs::directory_iterator(root))
                if (e.is_directory()) subs.push_back(e.path());
            std::sort(subs.begin(), subs.end());
            for (const fs::path& sub : subs)
                roots.emplace_back(src.name + "/" + sub.filename().generic_string(), sub);

            for (auto& [id, dir] : roots) {
                IndexedCodebase cb;
                cb.id = id;
                cb.source_name = src.name;
                cb.kind = src.kind;
                cb.priority = src.priority;
                cb.order = order++;
                std::vector<fs::path> paths;
                for (auto& e : fs::recursive_directory_iterator(dir))
                    if (e.is_regular_file() && e.path().extension() == ".ml")
                        paths.push_back(e.path());
                std::sort(paths.begin(), paths.end());
                for (const fs::path& p : paths) {
                    std::ifstream in(p, std::ios::binary);
                    std::ostringstream ss;
                    ss << in.rdbuf();
                    IndexedFile f{fs::relative(p, dir).generic_string(), ss.str(), ""};
                    f.digest = fnv1a64(f.content);
                    cb.files.push_back(std::move(f));
                }
                index.refresh_facts(cb);
                if (!cb.files.empty() || !cb.skipped.empty())
                    index.codebases.push_back(std::move(cb));
            }
        }
        return index;
    }

    /// Drops corpus files whose normalized content equals any exclusion
    /// text, re-extracting facts for the touched codebases.
    void apply_exclusion(const std::vector<std::string>& exclusion_texts) {
        std::set<std::string> normalized;
        for (const std::string& t : exclusion_texts) normalized.insert(normalize_content(t));
        if (normalized.empty()) return;
        for (IndexedCodebase& cb : codebases) {
            auto before = cb.files.size();
            std::erase_if(cb.files, [&](const IndexedFile& f) {
                return normalized.count(normalize_content(f.content)) > 0;
            });
            if (cb.files.size() != before) {
                refresh_facts(cb);
                clean_cache_.clear(); // verdicts are keyed by file digests
            }
        }
    }

    /// Codebases with zero alerts under the program, ordered by
    /// (source priority, manifest order). Verdicts are cached per
    /// (rule digest, files digest).
    std::vector<const IndexedCodebase*> clean_codebases(const datalog::RuleProgram& p,
                                                        const std::string& rule_digest) const {
        std::vector<const IndexedCodebase*> out;
        for (const IndexedCodebase& cb : codebases)
            if (is_clean(cb, p, rule_digest)) out.push_back(&cb);
        std::stable_sort(out.begin(), out.end(),
                         [](const IndexedCodebase* a, const IndexedCodebase* b) {
                             return std::tie(a->priority, a->order) <
                                    std::tie(b->priority, b->order);
                         });
        return out;
    }

    bool is_clean(const IndexedCodebase& cb, const datalog::RuleProgram& p,
                  const std::string& rule_digest) const {
        std::string key = rule_digest + "|" + cb.id + "|" + cb.files_digest();
        auto it = clean_cache_.find(key);
        if (it != clean_cache_.end()) return it->second;
        bool clean = analyzer::run_analysis(p, cb.to_codebase()).alerts.empty();
        clean_cache_.emplace(std::move(key), clean);
        return clean;
    }

    /// String literals of length >= min_len drawn from rule bodies.
    static std::vector<std::string> rule_literals(const datalog::RuleProgram& p,
                                                  std::size_t min_len) {
        std::set<std::string> seen;
        std::vector<std::string> out;
        for (const auto& r : p.rules)
            for (const auto& lit : r.body)
                for (const auto& t : lit.args)
                    if (t.kind == datalog::Term::Const && t.value.kind == ValueKind::Sym &&
                        t.value.sym.size() >= min_len && seen.insert(t.value.sym).second)
                        out.push_back(t.value.sym);
        return out;
    }

    /// Ranks the codebases of "literal" sources by how many of their files
    /// contain any rule literal as a substring. Zero-match codebases are
    /// not search results and are omitted.
    std::vector<const IndexedCodebase*> literal_rank(const datalog::RuleProgram& p,
                                                     std::size_t top_k = 3,
                                                     std::size_t min_len = 5) const {
        std::vector<std::string> literals = rule_literals(p, min_len);
        if (literals.empty()) return {};
        std::vector<std::pair<std::size_t, const IndexedCodebase*>> scored;
        for (const IndexedCodebase& cb : codebases) {
            if (cb.kind != "literal") continue;
            std::size_t count = 0;
            for (const IndexedFile& f : cb.files)
                for (const std::string& lit : literals)
                    if (f.content.find(lit) != std::string::npos) {
                        ++count;
                        break;
                    }
            if (count > 0) scored.emplace_back(count, &cb);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) {
                             if (a.first != b.first) return a.first > b.first;
                             return a.second->order < b.second->order;
                         });
        std::vector<const IndexedCodebase*> out;
        for (auto& [_, cb] : scored) {
            out.push_back(cb);
            if (out.size() >= top_k) break;
        }
        return out;
    }

    /// clean_codebases with literal-source codebases additionally filtered
    /// to the literal_rank top_k. This is the retrieval-facing view.
    std::vector<const IndexedCodebase*> select_clean_codebases(const datalog::RuleProgram& p,
                                                               const std::string& rule_digest,
                                                               std::size_t top_k = 3,
                                                               std::size_t min_len = 5) const {
        std::set<const IndexedCodebase*> ranked;
        for (const IndexedCodebase* cb : literal_rank(p, top_k, min_len)) ranked.insert(cb);
        std::vector<const IndexedCodebase*> out;
        for (const IndexedCodebase* cb : clean_codebases(p, rule_digest))
            if (cb->kind != "literal" || ranked.count(cb)) out.push_back(cb);
        return out;
    }

    const IndexedCodebase* find(const std::string& id) const {
        for (const IndexedCodebase& cb : codebases)
            if (cb.id == id) return &cb;
        return nullptr;
    }

    // --- persistence: a directory of versioned JSON caches ---

    void save(const fs::path& dir) const {
        fs::create_directories(dir);
        json j;
        j["version"] = kIndexFormatVersion;
        j["codebases"] = json::array();
        for (const IndexedCodebase& cb : codebases) {
            json c;
            c["id"] = cb.id;
            c["source"] = cb.source_name;
            c["kind"] = cb.kind;
            c["priority"] = cb.priority;
            c["order"] = cb.order;
            c["skipped"] = cb.skipped;
            c["files"] = json::array();
            for (const IndexedFile& f : cb.files)
                c["files"].push_back({{"path", f.path}, {"digest", f.digest},
                                      {"content", f.content}});
            c["facts"] = facts_to_json(cb.facts);
            j["codebases"].push_back(std::move(c));
        }
        std::ofstream out(dir / "index.json");
        out << j.dump(1) << "\n";

        json cache;
        cache["version"] = kIndexFormatVersion;
        cache["verdicts"] = json::object();
        for (auto& [k, v] : clean_cache_) cache["verdicts"][k] = v;
        std::ofstream cout_(dir / "clean_cache.json");
        cout_ << cache.dump(1) << "\n";
    }

    static CorpusIndex load(const fs::path& dir) {
        std::ifstream in(dir / "index.json");
        if (!in) throw IndexError("cannot read index at " + dir.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw IndexError(std::string("index is not valid JSON: ") + e.what());
        }
        if (j.value("version", -1) != kIndexFormatVersion)
            throw IndexError("unsupported index version");
        CorpusIndex index;
        for (const json& c : j["codebases"]) {
            IndexedCodebase cb;
            cb.id = c.at("id");
            cb.source_name = c.at("source");
            cb.kind = c.at("kind");
            cb.priority = c.at("priority");
            cb.order = c.at("order");
            cb.skipped = c.at("skipped").get<std::vector<std::string>>();
            for (const json& f : c.at("files")) {
                IndexedFile file{f.at("path"), f.at("content"), f.at("digest")};
                if (fnv1a64(file.content) != file.digest)
                    throw IndexError("digest mismatch for " + cb.id + "/" + file.path);
                cb.files.push_back(std::move(file));
            }
            cb.facts = facts_from_json(c.at("facts"));
            index.codebases.push_back(std::move(cb));
        }
        std::ifstream cin_(dir / "clean_cache.json");
        if (cin_) {
            json cache;
            cin_ >> cache;
            if (cache.value("version", -1) == kIndexFormatVersion)
                for (auto& [k, v] : cache["verdicts"].items())
                    index.clean_cache_[k] = v.get<bool>();
        }
        return index;
    }

    static json facts_to_json(const FactSet& facts) {
        json out = json::object();
        for (auto& [pred, tuples] : facts.by_predicate()) {
            json arr = json::array();
            for (const Tuple& t : tuples) {
                json row = json::array();
                for (const Value& v : t) {
                    if (v.kind == ValueKind::Num) row.push_back(v.num);
                    else if (v.kind == ValueKind::Loc) row.push_back("@" + v.sym);
                    else row.push_back(v.sym);
                }
                arr.push_back(std::move(row));
            }
            out[pred] = std::move(arr);
        }
        return out;
    }

    static FactSet facts_from_json(const json& j) {
        FactSet out;
        for (auto& [pred, arr] : j.items()) {
            for (const json& row : arr) {
                Tuple t;
                for (const json& v : row) {
                    if (v.is_number_integer()) {
                        t.push_back(Value::make_num(v.get<std::int64_t>()));
                    } else {
                        std::string s = v.get<std::string>();
                        if (!s.empty() && s[0] == '@') t.push_back(Value::make_loc(s.substr(1)));
                        else t.push_back(Value::make_sym(s));
                    }
                }
                out.add(pred, std::move(t));
            }
        }
        return out;
    }

private:
    void refresh_facts(IndexedCodebase& cb) {
        // Parse what we can; record the rest. Facts come from the parseable
        // subset only.
        std::vector<IndexedFile> kept;
        minilang::Codebase mlcb;
        mlcb.id = cb.id;
        cb.skipped.clear();
        for (IndexedFile& f : cb.files) {
            try {
                mlcb.files.push_back(minilang::parse_file(f.path, f.content));
                kept.push_back(std::move(f));
            } catch (const minilang::ParseError& e) {
                cb.skipped.push_back(f.path + ": " + e.what());
            }
        }
        cb.files = std::move(kept);
        cb.facts = minilang::extract_facts(mlcb);
    }

    mutable std::map<std::string, bool> clean_cache_;
};

} // namespace predifix::corpus

#endif
