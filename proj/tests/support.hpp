#ifndef PREDIFIX_TESTS_SUPPORT_HPP
#define PREDIFIX_TESTS_SUPPORT_HPP

#include "predifix/retrieval.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;
using namespace predifix;

inline std::string fixture_dir() { return FIXTURE_DIR; }

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline datalog::RuleProgram load_fixture_rule(const std::string& name) {
    fs::path p = fs::path(fixture_dir()) / name;
    return datalog::parse_program(read_file(p), p.stem().string(), p.generic_string());
}

inline minilang::Codebase load_fixture_codebase(const std::string& rel, const std::string& id) {
    return corpus::load_codebase(fs::path(fixture_dir()) / rel, id);
}

inline datalog::RuleProgram f1_rules() { return load_fixture_rule("f1/rules/rmi.dl"); }
inline datalog::RuleProgram npe_rules() { return load_fixture_rule("npe/rules/npe.dl"); }
inline minilang::Codebase f1_target() { return load_fixture_codebase("f1/target", "target"); }
inline minilang::Codebase f1_corpus_cb() { return load_fixture_codebase("f1/corpus/safe", "safe"); }
inline minilang::Codebase npe_target() { return load_fixture_codebase("npe/target", "target"); }
inline minilang::Codebase npe_corpus_cb() {
    return load_fixture_codebase("npe/corpus/clean", "clean");
}

/// In-memory corpus codebase for retrieval tests.
inline corpus::IndexedCodebase make_indexed(
    const std::string& id, const std::vector<std::pair<std::string, std::string>>& files,
    const std::string& kind = "popular", int priority = 1, int order = 0) {
    corpus::IndexedCodebase cb;
    cb.id = id;
    cb.source_name = id;
    cb.kind = kind;
    cb.priority = priority;
    cb.order = order;
    minilang::Codebase ml;
    ml.id = id;
    for (auto& [path, content] : files) {
        cb.files.push_back({path, content, corpus::fnv1a64(content)});
        ml.files.push_back(minilang::parse_file(path, content));
    }
    cb.facts = minilang::extract_facts(ml);
    return cb;
}

inline corpus::IndexedCodebase make_indexed(const minilang::Codebase& ml,
                                            const std::string& kind = "popular",
                                            int priority = 1, int order = 0) {
    std::vector<std::pair<std::string, std::string>> files;
    for (auto& f : ml.files) {
        std::string text;
        for (auto& l : f.lines) text += l + "\n";
        files.emplace_back(f.path, text);
    }
    return make_indexed(ml.id, files, kind, priority, order);
}

/// Writes a file tree under a fresh temp directory; caller removes it.
class TempTree {
public:
    TempTree() {
        static std::atomic<int> counter{0};
        root_ = fs::temp_directory_path() /
                ("predifix_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        fs::create_directories(root_);
    }
    ~TempTree() {
        std::error_code ec;
        fs::remove_all(root_, ec);
    }
    TempTree(const TempTree&) = delete;

    const fs::path& root() const { return root_; }

    fs::path write(const std::string& rel, const std::string& content) {
        fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p;
    }

private:
    fs::path root_;
};

// ---- randomized generators ----

/// Random stratified programs: all predicates are binary over sym, rules
/// are safe by construction (the first body literal binds both variables),
/// negation only reaches strictly lower strata.
inline std::string random_stratified_program(std::mt19937& rng) {
    std::uniform_int_distribution<int> d_edb(2, 3), d_strata(1, 3), d_per(1, 2),
        d_rules(1, 2), d_extra(0, 2), d_coin(0, 1);
    int n_edb = d_edb(rng);
    int n_strata = d_strata(rng);

    std::vector<std::vector<std::string>> layers; // layers[0] = EDB
    std::ostringstream out;
    layers.emplace_back();
    for (int i = 0; i < n_edb; ++i) {
        std::string name = "e" + std::to_string(i);
        layers[0].push_back(name);
        out << ".input " << name << "(x: sym, y: sym)\n";
    }
    int total_idb = 0;
    for (int s = 1; s <= n_strata; ++s) {
        layers.emplace_back();
        int per = d_per(rng);
        for (int i = 0; i < per && total_idb < 7; ++i, ++total_idb) {
            std::string name = "p" + std::to_string(s) + std::to_string(i);
            layers[s].push_back(name);
            out << ".decl " << name << "(x: sym, y: sym)\n";
        }
        if (layers[s].empty()) layers.pop_back();
    }
    n_strata = static_cast<int>(layers.size()) - 1;
    out << ".alert bad(x: sym, y: sym)\n";

    auto pick = [&](const std::vector<std::string>& v) {
        std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
        return v[d(rng)];
    };
    auto any_below = [&](int s) { // any predicate of stratum < s
        std::uniform_int_distribution<int> d(0, s - 1);
        return pick(layers[d(rng)]);
    };
    static const char* vars2[] = {"X", "Y"};
    static const char* consts[] = {"\"a\"", "\"b\"", "\"c\""};
    auto term = [&] {
        std::uniform_int_distribution<int> d(0, 3);
        int t = d(rng);
        if (t < 2) return std::string(vars2[t]);
        if (t == 2) return std::string(consts[d_coin(rng)]);
        return std::string("_");
    };

    for (int s = 1; s <= n_strata; ++s) {
        for (const std::string& head : layers[s]) {
            int n_rules = d_rules(rng);
            for (int r = 0; r < n_rules; ++r) {
                out << head << "(X, Y) :- ";
                // binder: same or lower stratum, positive, binds X and Y
                std::vector<std::string> same_or_below;
                for (int l = 0; l <= s; ++l)
                    for (auto& p : layers[l]) same_or_below.push_back(p);
                out << pick(same_or_below) << "(X, Y)";
                int extra = d_extra(rng);
                for (int x = 0; x < extra; ++x) {
                    bool neg = d_coin(rng) == 1;
                    std::string p = neg ? any_below(s) : pick(same_or_below);
                    out << ", " << (neg ? "!" : "") << p << "(" << term() << ", " << term()
                        << ")";
                }
                out << ".\n";
            }
        }
    }
    // The alert rule keeps every program analyzer-shaped.
    out << "bad(X, Y) :- " << pick(layers[n_strata]) << "(X, Y).\n";
    return out.str();
}

inline FactSet random_edb(const datalog::RuleProgram& p, std::mt19937& rng, int max_facts = 40) {
    static const char* consts[] = {"a", "b", "c", "d"};
    std::uniform_int_distribution<int> d_n(0, max_facts), d_c(0, 3);
    FactSet edb;
    auto inputs = p.input_preds();
    std::uniform_int_distribution<std::size_t> d_p(0, inputs.size() - 1);
    int n = d_n(rng);
    for (int i = 0; i < n; ++i)
        edb.add(inputs[d_p(rng)],
                {Value::make_sym(consts[d_c(rng)]), Value::make_sym(consts[d_c(rng)])});
    return edb;
}

/// Random MiniLang micro-codebases built from statement templates.
inline minilang::Codebase random_codebase(std::mt19937& rng, const std::string& id,
                                          int max_lines = 10) {
    static const char* vars[] = {"a", "b"};
    static const char* keys[] = {"alpha.beta.gamma", "delta.epsilon"};
    std::uniform_int_distribution<int> d_lines(1, max_lines), d_stmt(0, 5), d_v(0, 1),
        d_k(0, 1);
    int n = d_lines(rng);
    std::string text;
    for (int i = 0; i < n; ++i) {
        std::string v = vars[d_v(rng)];
        std::string w = vars[d_v(rng)];
        switch (d_stmt(rng)) {
            case 0: text += v + " = null;\n"; break;
            case 1: text += v + " = new Widget();\n"; break;
            case 2: text += v + ".run();\n"; break;
            case 3: text += v + ".put(\"" + keys[d_k(rng)] + "\", " + w + ");\n"; break;
            case 4: text += "assert " + v + " != null;\n"; break;
            case 5: text += v + " = " + w + ";\n"; break;
        }
    }
    minilang::Codebase cb;
    cb.id = id;
    cb.files.push_back(minilang::parse_file("m.ml", text));
    return cb;
}

/// Random analyzer-shaped programs over the real EDB schema, for the
/// retrieval oracle-equivalence property.
inline std::string random_analysis_program(std::mt19937& rng) {
    std::uniform_int_distribution<int> d_coin(0, 1), d3(0, 2);
    std::ostringstream out;
    out << ".input assignStmt(v: sym, e: sym, l: loc)\n"
           ".input varDef(v: sym, l: loc)\n"
           ".input methodCall(v: sym, m: sym, l: loc)\n"
           ".input callArgStr(l: loc, i: num, s: sym)\n"
           ".input assertStmt(v: sym, op: sym, e: sym, l: loc)\n"
           ".input controlFlowTo(l0: loc, l1: loc)\n"
           ".decl susp(v: sym, l: loc)\n"
           ".decl guard(v: sym, l: loc)\n"
           ".alert bad(l: loc)\n";
    switch (d3(rng)) {
        case 0: out << "susp(V, L) :- assignStmt(V, \"null\", L).\n"; break;
        case 1: out << "susp(V, L) :- assignStmt(V, _, L).\n"; break;
        case 2: out << "susp(V, L) :- methodCall(V, \"put\", L).\n"; break;
    }
    if (d_coin(rng))
        out << "susp(V, L) :- susp(V, L0), controlFlowTo(L0, L).\n";
    switch (d3(rng)) {
        case 0: out << "guard(V, L) :- assertStmt(V, \"!=\", \"null\", L).\n"; break;
        case 1: out << "guard(V, L) :- varDef(V, L), callArgStr(L, 0, \"alpha.beta.gamma\").\n"; break;
        case 2:
            out << "guard(V, L) :- methodCall(V, \"put\", L), "
                   "callArgStr(L, 0, \"alpha.beta.gamma\").\n";
            break;
    }
    if (d_coin(rng))
        out << "bad(L) :- methodCall(V, _, L), susp(V, L), !guard(V, _).\n";
    else
        out << "bad(L) :- susp(V, L), varDef(V, _), !guard(V, _).\n";
    return out.str();
}

} // namespace testsupport

#endif
