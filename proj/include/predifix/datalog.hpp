#ifndef PREDIFIX_DATALOG_HPP
#define PREDIFIX_DATALOG_HPP

#include "predifix/core.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace predifix::datalog {

struct RuleParseError : std::runtime_error {
    int line;
    RuleParseError(int line_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct UnsafeRule : std::runtime_error {
    int rule_index;
    std::string variable;
    UnsafeRule(int idx, std::string var)
        : std::runtime_error("rule " + std::to_string(idx) + " is unsafe: variable " + var +
                             " has no positive binding"),
          rule_index(idx),
          variable(std::move(var)) {}
};

struct NonStratified : std::runtime_error {
    std::vector<std::string> cycle;
    explicit NonStratified(std::vector<std::string> cyc)
        : std::runtime_error("negation cycle through: " + join(cyc)), cycle(std::move(cyc)) {}

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (auto& p : v) {
            if (!s.empty()) s += ", ";
            s += p;
        }
        return s;
    }
};

struct UnknownPredicate : std::runtime_error {
    explicit UnknownPredicate(const std::string& name)
        : std::runtime_error("unknown predicate: " + name) {}
};

struct TypeMismatch : std::runtime_error {
    explicit TypeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct PredDecl {
    std::string name;
    std::vector<std::pair<std::string, ValueKind>> params;
    bool is_input = false;
    bool is_alert = false;
    std::string source_path; // rule file the predicate was declared in

    std::size_t arity() const { return params.size(); }
    bool has_loc_param() const {
        for (auto& [_, k] : params)
            if (k == ValueKind::Loc) return true;
        return false;
    }
    std::vector<std::size_t> loc_param_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].second == ValueKind::Loc) out.push_back(i);
        return out;
    }
};

struct Term {
    enum Kind { Var, Wildcard, Const } kind = Var;
    std::string var;
    Value value; // Const only

    static Term make_var(std::string v) { return Term{Var, std::move(v), {}}; }
    static Term wildcard() { return Term{Wildcard, "", {}}; }
    static Term make_const(Value v) { return Term{Const, "", std::move(v)}; }
};

struct Literal {
    std::string pred;
    bool negated = false;
    std::vector<Term> args;
};

struct Rule {
    Literal head;
    std::vector<Literal> body;
};

struct RuleProgram {
    std::string rule_id;
    std::vector<PredDecl> decls; // declaration order
    std::string alert_pred;
    std::vector<Rule> rules;
    std::map<std::string, int> strata; // predicate -> stratum; EDB is 0

    const PredDecl* find_decl(const std::string& name) const {
        for (auto& d : decls)
            if (d.name == name) return &d;
        return nullptr;
    }
    const PredDecl& decl(const std::string& name) const {
        const PredDecl* d = find_decl(name);
        if (!d) throw UnknownPredicate(name);
        return *d;
    }
    std::vector<std::string> input_preds() const {
        std::vector<std::string> out;
        for (auto& d : decls)
            if (d.is_input) out.push_back(d.name);
        return out;
    }
};

namespace detail {

// --- rule file lexer/parser ---

struct Tok {
    enum Kind { Dot, Directive, Ident, Var, Wild, Str, Num, Punct, End } kind = End;
    std::string text;
    std::int64_t num = 0;
    int line = 0;
};

inline std::vector<Tok> lex_rules(const std::string& text) {
    std::vector<Tok> out;
    int line = 1;
    std::size_t i = 0;
    auto peekc = [&](std::size_t off = 0) -> char {
        return i + off < text.size() ? text[i + off] : '\0';
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') { ++line; ++i; continue; }
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        if (c == '.') {
            // ".decl"/".input"/".alert" directives vs the rule-ending dot
            if (std::isalpha(static_cast<unsigned char>(peekc(1)))) {
                std::size_t j = i + 1;
                while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
                out.push_back({Tok::Directive, text.substr(i + 1, j - i - 1), 0, line});
                i = j;
            } else {
                out.push_back({Tok::Dot, ".", 0, line});
                ++i;
            }
            continue;
        }
        if (c == '_' && !std::isalnum(static_cast<unsigned char>(peekc(1)))) {
            out.push_back({Tok::Wild, "_", 0, line});
            ++i;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            std::string w = text.substr(i, j - i);
            Tok t;
            t.kind = std::isupper(static_cast<unsigned char>(w[0])) ? Tok::Var : Tok::Ident;
            t.text = w;
            t.line = line;
            out.push_back(t);
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && std::isdigit(static_cast<unsigned char>(peekc(1))))) {
            std::size_t j = i + 1;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            Tok t{Tok::Num, text.substr(i, j - i), 0, line};
            t.num = std::stoll(t.text);
            out.push_back(t);
            i = j;
            continue;
        }
        if (c == '"') {
            std::string s;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < text.size()) {
                if (text[j] == '\\' && j + 1 < text.size()) {
                    s += text[j + 1];
                    j += 2;
                } else if (text[j] == '"') {
                    closed = true;
                    ++j;
                    break;
                } else {
                    if (text[j] == '\n') ++line;
                    s += text[j++];
                }
            }
            if (!closed) throw RuleParseError(line, "unterminated string literal");
            out.push_back({Tok::Str, s, 0, line});
            i = j;
            continue;
        }
        if (text.compare(i, 2, ":-") == 0) {
            out.push_back({Tok::Punct, ":-", 0, line});
            i += 2;
            continue;
        }
        out.push_back({Tok::Punct, std::string(1, c), 0, line});
        ++i;
    }
    out.push_back({Tok::End, "", 0, line});
    return out;
}

class RuleFileParser {
public:
    RuleFileParser(std::string text, std::string rule_id, std::string source_path)
        : toks_(lex_rules(text)), rule_id_(std::move(rule_id)), path_(std::move(source_path)) {}

    RuleProgram parse() {
        RuleProgram p;
        p.rule_id = rule_id_;
        while (peek().kind != Tok::End) {
            if (peek().kind == Tok::Directive) {
                parse_decl(p);
            } else {
                parse_rule(p);
            }
        }
        if (p.alert_pred.empty()) throw RuleParseError(peek().line, "no .alert declaration");
        return p;
    }

private:
    const Tok& peek() const { return toks_[pos_]; }
    const Tok& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    void expect_punct(const std::string& s) {
        const Tok& t = next();
        if (t.kind != Tok::Punct || t.text != s)
            throw RuleParseError(t.line, "expected '" + s + "'");
    }

    void parse_decl(RuleProgram& p) {
        const Tok& d = next();
        bool input = d.text == "input";
        bool alert = d.text == "alert";
        if (!input && !alert && d.text != "decl")
            throw RuleParseError(d.line, "unknown directive ." + d.text);
        const Tok& name = next();
        if (name.kind != Tok::Ident)
            throw RuleParseError(name.line, "expected predicate name");
        if (std::any_of(p.decls.begin(), p.decls.end(),
                        [&](const PredDecl& x) { return x.name == name.text; }))
            throw RuleParseError(name.line, "duplicate declaration of " + name.text);
        if (alert && !p.alert_pred.empty())
            throw RuleParseError(name.line, "multiple .alert declarations");
        PredDecl decl;
        decl.name = name.text;
        decl.is_input = input;
        decl.is_alert = alert;
        decl.source_path = path_;
        expect_punct("(");
        if (!(peek().kind == Tok::Punct && peek().text == ")")) {
            while (true) {
                const Tok& pn = next();
                if (pn.kind != Tok::Ident && pn.kind != Tok::Var)
                    throw RuleParseError(pn.line, "expected parameter name");
                expect_punct(":");
                const Tok& ty = next();
                ValueKind k;
                if (ty.text == "sym") k = ValueKind::Sym;
                else if (ty.text == "num") k = ValueKind::Num;
                else if (ty.text == "loc") k = ValueKind::Loc;
                else throw RuleParseError(ty.line, "unknown type " + ty.text);
                decl.params.emplace_back(pn.text, k);
                if (peek().kind == Tok::Punct && peek().text == ",") { next(); continue; }
                break;
            }
        }
        expect_punct(")");
        if (alert) p.alert_pred = decl.name;
        p.decls.push_back(std::move(decl));
    }

    Literal parse_literal() {
        Literal lit;
        if (peek().kind == Tok::Punct && peek().text == "!") {
            next();
            lit.negated = true;
        }
        const Tok& name = next();
        if (name.kind != Tok::Ident)
            throw RuleParseError(name.line, "expected predicate name");
        lit.pred = name.text;
        expect_punct("(");
        if (!(peek().kind == Tok::Punct && peek().text == ")")) {
            while (true) {
                const Tok& t = next();
                switch (t.kind) {
                    case Tok::Var: lit.args.push_back(Term::make_var(t.text)); break;
                    case Tok::Wild: lit.args.push_back(Term::wildcard()); break;
                    case Tok::Str:
                        lit.args.push_back(Term::make_const(Value::make_sym(t.text)));
                        break;
                    case Tok::Num:
                        lit.args.push_back(Term::make_const(Value::make_num(t.num)));
                        break;
                    default:
                        throw RuleParseError(t.line, "expected term");
                }
                if (peek().kind == Tok::Punct && peek().text == ",") { next(); continue; }
                break;
            }
        }
        expect_punct(")");
        return lit;
    }

    void parse_rule(RuleProgram& p) {
        int line = peek().line;
        Rule r;
        r.head = parse_literal();
        if (r.head.negated) throw RuleParseError(line, "negated head");
        for (const Term& t : r.head.args)
            if (t.kind == Term::Wildcard)
                throw RuleParseError(line, "wildcard in rule head");
        expect_punct(":-");
        while (true) {
            r.body.push_back(parse_literal());
            if (peek().kind == Tok::Punct && peek().text == ",") { next(); continue; }
            break;
        }
        const Tok& dot = next();
        if (dot.kind != Tok::Dot) throw RuleParseError(dot.line, "expected '.' after rule");
        p.rules.push_back(std::move(r));
    }

    std::vector<Tok> toks_;
    std::size_t pos_ = 0;
    std::string rule_id_;
    std::string path_;
};

// --- validation ---

inline void check_arities_and_types(const RuleProgram& p) {
    for (std::size_t ri = 0; ri < p.rules.size(); ++ri) {
        const Rule& r = p.rules[ri];
        std::map<std::string, ValueKind> var_types;
        auto check_lit = [&](const Literal& lit) {
            const PredDecl* d = p.find_decl(lit.pred);
            if (!d) throw RuleParseError(0, "undeclared predicate " + lit.pred);
            if (lit.args.size() != d->arity())
                throw RuleParseError(0, "arity mismatch for " + lit.pred);
            for (std::size_t i = 0; i < lit.args.size(); ++i) {
                ValueKind want = d->params[i].second;
                const Term& t = lit.args[i];
                if (t.kind == Term::Const) {
                    if (want == ValueKind::Num) {
                        if (t.value.kind != ValueKind::Num)
                            throw RuleParseError(0, "type mismatch: " + lit.pred +
                                                        " expects num");
                    } else if (t.value.kind != ValueKind::Sym) {
                        throw RuleParseError(0, "type mismatch: " + lit.pred +
                                                    " expects string constant");
                    } else if (want == ValueKind::Loc && !Location::parse(t.value.sym)) {
                        throw RuleParseError(0, "constant \"" + t.value.sym +
                                                    "\" is not a location");
                    }
                } else if (t.kind == Term::Var) {
                    auto it = var_types.find(t.var);
                    if (it == var_types.end()) {
                        var_types.emplace(t.var, want);
                    } else if (it->second != want) {
                        throw RuleParseError(
                            0, "variable " + t.var + " used with conflicting types in rule " +
                                   std::to_string(ri));
                    }
                }
            }
        };
        check_lit(r.head);
        if (p.find_decl(r.head.pred)->is_input)
            throw RuleParseError(0, "rule head " + r.head.pred + " is an input predicate");
        for (const Literal& l : r.body) check_lit(l);
    }
}

inline void check_safety(const RuleProgram& p) {
    for (std::size_t ri = 0; ri < p.rules.size(); ++ri) {
        const Rule& r = p.rules[ri];
        std::set<std::string> bound;
        for (const Literal& l : r.body)
            if (!l.negated)
                for (const Term& t : l.args)
                    if (t.kind == Term::Var) bound.insert(t.var);
        auto require_bound = [&](const Term& t) {
            if (t.kind == Term::Var && !bound.count(t.var))
                throw UnsafeRule(static_cast<int>(ri), t.var);
        };
        for (const Term& t : r.head.args) require_bound(t);
        for (const Literal& l : r.body)
            if (l.negated)
                for (const Term& t : l.args) require_bound(t);
    }
}

// Dependency condensation; assigns each SCC of IDB predicates its own
// stratum in topological order, EDB predicates at stratum 0. Throws
// NonStratified when a cycle crosses a negated edge.
inline std::map<std::string, int> stratify(const RuleProgram& p) {
    std::map<std::string, std::set<std::pair<std::string, bool>>> deps; // head -> (body, negated)
    std::vector<std::string> idb;
    for (auto& d : p.decls)
        if (!d.is_input) {
            idb.push_back(d.name);
            deps[d.name];
        }
    for (const Rule& r : p.rules)
        for (const Literal& l : r.body)
            deps[r.head.pred].insert({l.pred, l.negated});

    // Tarjan SCC over IDB-only edges.
    std::map<std::string, int> index, low, comp;
    std::vector<std::string> stack;
    std::set<std::string> on_stack;
    int counter = 0, ncomp = 0;
    std::vector<std::vector<std::string>> comps;
    std::function<void(const std::string&)> strongconnect = [&](const std::string& v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack.insert(v);
        for (auto& [w, neg] : deps[v]) {
            if (!deps.count(w)) continue; // EDB
            if (!index.count(w)) {
                strongconnect(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack.count(w)) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            comps.emplace_back();
            while (true) {
                std::string w = stack.back();
                stack.pop_back();
                on_stack.erase(w);
                comp[w] = ncomp;
                comps.back().push_back(w);
                if (w == v) break;
            }
            ++ncomp;
        }
    };
    for (auto& v : idb)
        if (!index.count(v)) strongconnect(v);

    // Negated edge inside one SCC -> not stratifiable.
    for (auto& [head, body] : deps)
        for (auto& [pred, neg] : body)
            if (neg && deps.count(pred) && comp[pred] == comp[head])
                throw NonStratified(comps[comp[head]]);

    // Longest-path level per SCC; Tarjan emits components in reverse
    // topological order, so one pass in emission order suffices.
    std::vector<int> level(ncomp, 1);
    for (int c = 0; c < ncomp; ++c)
        for (const std::string& v : comps[c])
            for (auto& [w, neg] : deps[v])
                if (deps.count(w) && comp[w] != c)
                    level[c] = std::max(level[c], level[comp[w]] + 1);

    std::map<std::string, int> strata;
    for (auto& d : p.decls)
        strata[d.name] = d.is_input ? 0 : level[comp[d.name]];
    return strata;
}

inline void validate(RuleProgram& p) {
    check_arities_and_types(p);
    check_safety(p);
    p.strata = stratify(p);
}

// --- evaluation ---

using Env = std::map<std::string, Value>;

inline bool unify(const Literal& lit, const Tuple& t, Env& env,
                  std::vector<std::string>& newly_bound) {
    for (std::size_t i = 0; i < lit.args.size(); ++i) {
        const Term& a = lit.args[i];
        switch (a.kind) {
            case Term::Wildcard: break;
            case Term::Const:
                if (!(a.value.kind == t[i].kind ? a.value == t[i]
                                                : a.value.sym == t[i].text()))
                    return false;
                break;
            case Term::Var: {
                auto it = env.find(a.var);
                if (it == env.end()) {
                    env.emplace(a.var, t[i]);
                    newly_bound.push_back(a.var);
                } else if (it->second != t[i]) {
                    return false;
                }
                break;
            }
        }
    }
    return true;
}

// A negated literal holds when no fact matches under the current bindings.
inline bool negation_holds(const Literal& lit, const FactSet& db, const Env& env) {
    for (const Tuple& t : db.of(lit.pred)) {
        Env scratch = env;
        std::vector<std::string> nb;
        if (unify(lit, t, scratch, nb)) return false;
    }
    return true;
}

inline Tuple instantiate_head(const RuleProgram& p, const Literal& head, const Env& env) {
    const PredDecl& d = p.decl(head.pred);
    Tuple out;
    out.reserve(head.args.size());
    for (std::size_t i = 0; i < head.args.size(); ++i) {
        const Term& t = head.args[i];
        Value v = t.kind == Term::Const ? t.value : env.at(t.var);
        // String constants double as locations when the parameter is loc-typed.
        if (d.params[i].second == ValueKind::Loc && v.kind == ValueKind::Sym)
            v = Value::make_loc(v.sym);
        out.push_back(std::move(v));
    }
    return out;
}

// Enumerates all bindings of the rule body. `delta_pos >= 0` restricts that
// positive literal to the delta set (semi-naive); negated literals always
// read the full database.
inline void enumerate_rule(const RuleProgram& p, const Rule& r, const FactSet& db,
                           const FactSet* delta, int delta_pos,
                           const std::function<void(const Env&)>& emit) {
    std::vector<const Literal*> pos, neg;
    std::vector<int> pos_index;
    for (std::size_t i = 0; i < r.body.size(); ++i) {
        if (r.body[i].negated) {
            neg.push_back(&r.body[i]);
        } else {
            pos.push_back(&r.body[i]);
            pos_index.push_back(static_cast<int>(i));
        }
    }
    std::function<void(std::size_t, Env&)> rec = [&](std::size_t k, Env& env) {
        if (k == pos.size()) {
            for (const Literal* n : neg)
                if (!negation_holds(*n, db, env)) return;
            emit(env);
            return;
        }
        const FactSet& source =
            (delta && pos_index[k] == delta_pos) ? *delta : db;
        for (const Tuple& t : source.of(pos[k]->pred)) {
            Env scratch = env;
            std::vector<std::string> nb;
            if (unify(*pos[k], t, scratch, nb)) rec(k + 1, scratch);
        }
    };
    Env env;
    rec(0, env);
}

inline void check_edb(const RuleProgram& p, const FactSet& edb) {
    for (auto& [pred, tuples] : edb.by_predicate()) {
        const PredDecl* d = p.find_decl(pred);
        if (!d) throw TypeMismatch("EDB contains undeclared predicate " + pred);
        if (!d->is_input)
            throw TypeMismatch("EDB contains non-input predicate " + pred);
        for (const Tuple& t : tuples) {
            if (t.size() != d->arity())
                throw TypeMismatch("arity mismatch in EDB facts of " + pred);
            for (std::size_t i = 0; i < t.size(); ++i)
                if (t[i].kind != d->params[i].second)
                    throw TypeMismatch("type mismatch in EDB facts of " + pred +
                                       " at argument " + std::to_string(i));
        }
    }
}

} // namespace detail

/// Parses and fully validates a rule file (declarations, arity/type
/// agreement, range restriction, stratifiability).
inline RuleProgram parse_program(const std::string& text, const std::string& rule_id,
                                 const std::string& source_path = "") {
    detail::RuleFileParser parser(text, rule_id,
                                  source_path.empty() ? rule_id + ".dl" : source_path);
    RuleProgram p = parser.parse();
    detail::validate(p);
    return p;
}

/// Stratified least-model evaluation. Semi-naive by default; the naive
/// variant recomputes every rule against the full database each round and
/// exists as an independent oracle for tests.
inline FactSet evaluate(const RuleProgram& p, const FactSet& edb, bool semi_naive = true) {
    detail::check_edb(p, edb);
    FactSet db = edb;

    int max_stratum = 0;
    for (auto& [_, s] : p.strata) max_stratum = std::max(max_stratum, s);

    for (int stratum = 1; stratum <= max_stratum; ++stratum) {
        std::vector<const Rule*> rules;
        for (const Rule& r : p.rules)
            if (p.strata.at(r.head.pred) == stratum) rules.push_back(&r);
        if (rules.empty()) continue;

        if (!semi_naive) {
            bool changed = true;
            while (changed) {
                changed = false;
                for (const Rule* r : rules) {
                    detail::enumerate_rule(p, *r, db, nullptr, -1, [&](const detail::Env& env) {
                        Tuple t = detail::instantiate_head(p, r->head, env);
                        if (!db.contains(r->head.pred, t)) {
                            db.add(r->head.pred, std::move(t));
                            changed = true;
                        }
                    });
                }
            }
            continue;
        }

        // Semi-naive: full first round, then delta-restricted rounds over
        // the recursive literals of this stratum.
        FactSet delta;
        for (const Rule* r : rules) {
            detail::enumerate_rule(p, *r, db, nullptr, -1, [&](const detail::Env& env) {
                Tuple t = detail::instantiate_head(p, r->head, env);
                if (!db.contains(r->head.pred, t)) {
                    db.add(r->head.pred, t);
                    delta.add(r->head.pred, std::move(t));
                }
            });
        }
        while (delta.size() > 0) {
            FactSet next_delta;
            for (const Rule* r : rules) {
                for (std::size_t i = 0; i < r->body.size(); ++i) {
                    const Literal& l = r->body[i];
                    if (l.negated) continue;
                    if (p.strata.count(l.pred) == 0 || p.strata.at(l.pred) != stratum) continue;
                    detail::enumerate_rule(p, *r, db, &delta, static_cast<int>(i),
                                           [&](const detail::Env& env) {
                        Tuple t = detail::instantiate_head(p, r->head, env);
                        if (!db.contains(r->head.pred, t)) {
                            db.add(r->head.pred, t);
                            next_delta.add(r->head.pred, std::move(t));
                        }
                    });
                }
            }
            delta = std::move(next_delta);
        }
    }
    return db;
}

enum class SkipReason {
    NotABodyPredicate,
    AlertPredicate,
    UnsafeAfterFlip,
    NonStratifiedAfterFlip,
};

inline const char* to_string(SkipReason r) {
    switch (r) {
        case SkipReason::NotABodyPredicate: return "not-a-body-predicate";
        case SkipReason::AlertPredicate: return "alert-predicate";
        case SkipReason::UnsafeAfterFlip: return "unsafe-after-flip";
        case SkipReason::NonStratifiedAfterFlip: return "non-stratified-after-flip";
    }
    return "?";
}

/// Result of the predicate polarity flip: either a validated transformed
/// program or the reason the flip was skipped.
struct NegationOutcome {
    std::optional<RuleProgram> program;
    std::optional<SkipReason> skip;

    bool ok() const { return program.has_value(); }
};

/// Flips the polarity of every body occurrence of `pred`, then re-validates.
/// Validation failures are skips, not errors.
inline NegationOutcome negate_predicate(const RuleProgram& p, const std::string& pred) {
    p.decl(pred); // UnknownPredicate if absent
    if (pred == p.alert_pred) return {std::nullopt, SkipReason::AlertPredicate};

    RuleProgram flipped = p;
    bool any = false;
    for (Rule& r : flipped.rules)
        for (Literal& l : r.body)
            if (l.pred == pred) {
                l.negated = !l.negated;
                any = true;
            }
    if (!any) return {std::nullopt, SkipReason::NotABodyPredicate};
    try {
        detail::check_safety(flipped);
    } catch (const UnsafeRule&) {
        return {std::nullopt, SkipReason::UnsafeAfterFlip};
    }
    try {
        flipped.strata = detail::stratify(flipped);
    } catch (const NonStratified&) {
        return {std::nullopt, SkipReason::NonStratifiedAfterFlip};
    }
    return {std::move(flipped), std::nullopt};
}

/// One reported alert: a tuple of the alert predicate.
struct AlertInstance {
    std::string rule_id;
    std::string pred;
    Tuple args;

    auto operator<=>(const AlertInstance&) const = default;
};

inline std::vector<AlertInstance> alerts_of(const RuleProgram& p, const FactSet& full_facts) {
    std::vector<AlertInstance> out;
    for (const Tuple& t : full_facts.of(p.alert_pred))
        out.push_back({p.rule_id, p.alert_pred, t});
    return out; // FactSet tuples are already sorted
}

} // namespace predifix::datalog

#endif
