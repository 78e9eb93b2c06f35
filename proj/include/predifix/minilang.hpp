#ifndef PREDIFIX_MINILANG_HPP
#define PREDIFIX_MINILANG_HPP

#include "predifix/core.hpp"

#include <cctype>
#include <memory>
#include <string>
#include <vector>

namespace predifix::minilang {

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct UnknownLocation : std::runtime_error {
    explicit UnknownLocation(const Location& loc)
        : std::runtime_error("no such location: " + loc.text()) {}
};

enum class ExprKind { Null, Var, Str, Num, Ctor, Call };

struct Expr {
    ExprKind kind = ExprKind::Null;
    int col = 0;              // 1-based column of the first token
    std::string name;         // Var: variable; Ctor: type name; Call: method name
    std::string receiver;     // Call only
    std::string str;          // Str payload
    std::int64_t num = 0;     // Num payload
    std::vector<Expr> args;   // Ctor / Call
};

enum class StmtKind { Assign, Call, Assert, If };

struct Stmt {
    StmtKind kind = StmtKind::Assign;
    int line = 0;
    std::string var;            // Assign: lhs; Call: receiver; Assert: subject
    std::string method;         // Call
    std::string op;             // Assert: "!=" or "=="
    Expr expr;                  // Assign rhs, Assert rhs, If condition
    std::vector<Expr> args;     // Call
    std::vector<Stmt> then_branch;
    std::vector<Stmt> else_branch;
    bool has_else = false;
};

struct SourceFile {
    std::string path;
    std::vector<std::string> lines; // raw text, without newline terminators
    std::vector<Stmt> statements;
};

struct Codebase {
    std::string id;
    std::vector<SourceFile> files;

    const SourceFile* find(const std::string& path) const {
        for (auto& f : files)
            if (f.path == path) return &f;
        return nullptr;
    }
};

namespace detail {

struct Token {
    enum Kind { Ident, Str, Num, Punct, End } kind = End;
    std::string text;
    std::int64_t num = 0;
    int col = 0;
};

inline std::vector<Token> lex_line(const std::string& raw, int line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < raw.size()) {
        char c = raw[i];
        if (c == '#') break; // comment to end of line
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        int col = static_cast<int>(i) + 1;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < raw.size() &&
                   (std::isalnum(static_cast<unsigned char>(raw[j])) || raw[j] == '_'))
                ++j;
            out.push_back({Token::Ident, raw.substr(i, j - i), 0, col});
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) ++j;
            Token t{Token::Num, raw.substr(i, j - i), 0, col};
            t.num = std::stoll(t.text);
            out.push_back(t);
            i = j;
        } else if (c == '"') {
            std::string s;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < raw.size()) {
                if (raw[j] == '\\') {
                    if (j + 1 >= raw.size()) throw ParseError(line, "dangling escape in string");
                    char e = raw[j + 1];
                    switch (e) {
                        case 'n': s += '\n'; break;
                        case 't': s += '\t'; break;
                        case '\\': s += '\\'; break;
                        case '"': s += '"'; break;
                        default: throw ParseError(line, std::string("bad escape \\") + e);
                    }
                    j += 2;
                } else if (raw[j] == '"') {
                    closed = true;
                    ++j;
                    break;
                } else {
                    s += raw[j++];
                }
            }
            if (!closed) throw ParseError(line, "unterminated string literal");
            out.push_back({Token::Str, s, 0, col});
            i = j;
        } else {
            static const char* two[] = {"!=", "=="};
            std::string t(1, c);
            for (auto* p : two) {
                if (raw.compare(i, 2, p) == 0) { t = p; break; }
            }
            out.push_back({Token::Punct, t, 0, col});
            i += t.size();
        }
    }
    out.push_back({Token::End, "", 0, static_cast<int>(raw.size()) + 1});
    return out;
}

class LineParser {
public:
    LineParser(std::vector<Token> toks, int line) : toks_(std::move(toks)), line_(line) {}

    const Token& peek(int ahead = 0) const {
        std::size_t i = pos_ + ahead;
        return i < toks_.size() ? toks_[i] : toks_.back();
    }
    const Token& next() {
        const Token& t = peek();
        if (t.kind != Token::End) ++pos_;
        return t;
    }
    void expect_punct(const std::string& p) {
        const Token& t = next();
        if (t.kind != Token::Punct || t.text != p)
            throw ParseError(line_, "expected '" + p + "'");
    }
    std::string expect_ident() {
        const Token& t = next();
        if (t.kind != Token::Ident) throw ParseError(line_, "expected identifier");
        return t.text;
    }
    void expect_end() {
        if (peek().kind != Token::End) throw ParseError(line_, "trailing tokens");
    }
    bool at_end() const { return peek().kind == Token::End; }

    Expr parse_expr() {
        const Token& t = peek();
        Expr e;
        e.col = t.col;
        if (t.kind == Token::Str) {
            next();
            e.kind = ExprKind::Str;
            e.str = t.text;
            return e;
        }
        if (t.kind == Token::Num) {
            next();
            e.kind = ExprKind::Num;
            e.num = t.num;
            return e;
        }
        if (t.kind != Token::Ident) throw ParseError(line_, "expected expression");
        if (t.text == "null") {
            next();
            e.kind = ExprKind::Null;
            return e;
        }
        if (t.text == "new") {
            next();
            e.kind = ExprKind::Ctor;
            e.name = expect_ident();
            expect_punct("(");
            e.args = parse_args();
            expect_punct(")");
            return e;
        }
        std::string ident = expect_ident();
        if (peek().kind == Token::Punct && peek().text == ".") {
            next();
            e.kind = ExprKind::Call;
            e.receiver = ident;
            e.name = expect_ident();
            expect_punct("(");
            e.args = parse_args();
            expect_punct(")");
            return e;
        }
        e.kind = ExprKind::Var;
        e.name = ident;
        return e;
    }

    std::vector<Expr> parse_args() {
        std::vector<Expr> args;
        if (peek().kind == Token::Punct && peek().text == ")") return args;
        args.push_back(parse_expr());
        while (peek().kind == Token::Punct && peek().text == ",") {
            next();
            args.push_back(parse_expr());
        }
        return args;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    int line_;
};

// Pre-lexed significant line of a file.
struct Line {
    int number;
    std::vector<Token> toks;
};

class FileParser {
public:
    explicit FileParser(std::vector<Line> lines) : lines_(std::move(lines)) {}

    std::vector<Stmt> parse_block_until(const char* closer) {
        std::vector<Stmt> out;
        while (pos_ < lines_.size()) {
            if (closer && is_punct_line(lines_[pos_], closer)) return out;
            out.push_back(parse_stmt());
        }
        if (closer) throw ParseError(last_line(), std::string("expected '") + closer + "'");
        return out;
    }

private:
    static bool is_punct_line(const Line& l, const std::string& p) {
        return l.toks.size() == 2 && l.toks[0].kind == Token::Punct && l.toks[0].text == p;
    }
    static bool is_ident_line(const Line& l, const std::string& w) {
        return l.toks.size() == 2 && l.toks[0].kind == Token::Ident && l.toks[0].text == w;
    }
    int last_line() const { return lines_.empty() ? 1 : lines_.back().number; }

    const Line& take() {
        if (pos_ >= lines_.size()) throw ParseError(last_line(), "unexpected end of file");
        return lines_[pos_++];
    }

    void expect_brace(const char* b) {
        if (pos_ >= lines_.size() || !is_punct_line(lines_[pos_], b))
            throw ParseError(pos_ < lines_.size() ? lines_[pos_].number : last_line(),
                             std::string("expected '") + b + "' on its own line");
        ++pos_;
    }

    Stmt parse_stmt() {
        const Line& ln = take();
        LineParser p(ln.toks, ln.number);
        Stmt s;
        s.line = ln.number;
        const Token& first = p.peek();
        if (first.kind != Token::Ident)
            throw ParseError(ln.number, "expected statement");

        if (first.text == "if") {
            p.next();
            s.kind = StmtKind::If;
            p.expect_punct("(");
            s.expr = p.parse_expr();
            p.expect_punct(")");
            p.expect_end();
            expect_brace("{");
            s.then_branch = parse_block_until("}");
            expect_brace("}");
            if (pos_ < lines_.size() && is_ident_line(lines_[pos_], "else")) {
                ++pos_;
                s.has_else = true;
                expect_brace("{");
                s.else_branch = parse_block_until("}");
                expect_brace("}");
            }
            return s;
        }

        if (first.text == "assert") {
            p.next();
            s.kind = StmtKind::Assert;
            s.var = p.expect_ident();
            const Token& op = p.next();
            if (op.kind != Token::Punct || (op.text != "!=" && op.text != "=="))
                throw ParseError(ln.number, "expected '!=' or '=='");
            s.op = op.text;
            s.expr = p.parse_expr();
            p.expect_punct(";");
            p.expect_end();
            return s;
        }

        std::string ident = p.expect_ident();
        const Token& t = p.peek();
        if (t.kind == Token::Punct && t.text == "=") {
            p.next();
            s.kind = StmtKind::Assign;
            s.var = ident;
            s.expr = p.parse_expr();
            p.expect_punct(";");
            p.expect_end();
            return s;
        }
        if (t.kind == Token::Punct && t.text == ".") {
            p.next();
            s.kind = StmtKind::Call;
            s.var = ident;
            s.method = p.expect_ident();
            p.expect_punct("(");
            s.args = p.parse_args();
            p.expect_punct(")");
            p.expect_punct(";");
            p.expect_end();
            return s;
        }
        throw ParseError(ln.number, "expected '=' or '.' after identifier");
    }

    std::vector<Line> lines_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parses one MiniLang file. All-or-nothing: any violation throws ParseError.
inline SourceFile parse_file(const std::string& path, const std::string& text) {
    SourceFile f;
    f.path = path;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            f.lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) f.lines.push_back(cur);

    std::vector<detail::Line> sig;
    for (std::size_t i = 0; i < f.lines.size(); ++i) {
        auto toks = detail::lex_line(f.lines[i], static_cast<int>(i) + 1);
        if (toks.size() > 1) sig.push_back({static_cast<int>(i) + 1, std::move(toks)});
    }
    detail::FileParser fp(std::move(sig));
    f.statements = fp.parse_block_until(nullptr);
    return f;
}

namespace detail {

inline Value loc_value(const std::string& file, int line) {
    return Value::make_loc(Location{file, line});
}

inline std::string descriptor(const Expr& e, const std::string& file, int line) {
    if (e.kind == ExprKind::Null) return "null";
    return "e" + file + ":" + std::to_string(line) + ":" + std::to_string(e.col);
}

// Emits facts for an expression occurrence. callArg* facts are keyed by the
// statement location, ctorArg* by the constructor descriptor.
inline void extract_expr(const Expr& e, const std::string& file, int line, FactSet& out) {
    Value loc = loc_value(file, line);
    switch (e.kind) {
        case ExprKind::Null:
        case ExprKind::Str:
        case ExprKind::Num:
            break;
        case ExprKind::Var:
            out.add("varUse", {Value::make_sym(e.name), loc});
            break;
        case ExprKind::Ctor: {
            Value d = Value::make_sym(descriptor(e, file, line));
            out.add("constructorCall", {d});
            out.add("constructorName", {d, Value::make_sym(e.name)});
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                const Expr& a = e.args[i];
                if (a.kind == ExprKind::Var)
                    out.add("ctorArgVar",
                            {d, Value::make_num(static_cast<std::int64_t>(i)),
                             Value::make_sym(a.name)});
                extract_expr(a, file, line, out);
            }
            break;
        }
        case ExprKind::Call: {
            out.add("methodCall", {Value::make_sym(e.receiver), Value::make_sym(e.name), loc});
            out.add("varUse", {Value::make_sym(e.receiver), loc});
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                const Expr& a = e.args[i];
                Value idx = Value::make_num(static_cast<std::int64_t>(i));
                if (a.kind == ExprKind::Str)
                    out.add("callArgStr", {loc, idx, Value::make_sym(a.str)});
                else if (a.kind == ExprKind::Var)
                    out.add("callArgVar", {loc, idx, Value::make_sym(a.name)});
                extract_expr(a, file, line, out);
            }
            break;
        }
    }
}

// Variables mentioned anywhere in an expression; used for `if` conditions,
// which contribute varUse facts only.
inline void collect_vars(const Expr& e, const std::string& file, int line, FactSet& out) {
    if (e.kind == ExprKind::Var)
        out.add("varUse", {Value::make_sym(e.name), loc_value(file, line)});
    if (e.kind == ExprKind::Call && !e.receiver.empty())
        out.add("varUse", {Value::make_sym(e.receiver), loc_value(file, line)});
    for (const Expr& a : e.args) collect_vars(a, file, line, out);
}

struct CfgNode {
    int entry;                 // line of the first executed statement
    std::vector<int> exits;    // lines control falls out of
};

inline void extract_stmts(const std::vector<Stmt>& stmts, const std::string& file, FactSet& out);

inline CfgNode cfg_of_block(const std::vector<Stmt>& stmts, const std::string& file, FactSet& out);

inline CfgNode cfg_of_stmt(const Stmt& s, const std::string& file, FactSet& out) {
    if (s.kind != StmtKind::If) return {s.line, {s.line}};
    CfgNode node{s.line, {}};
    auto branch = [&](const std::vector<Stmt>& b) -> std::vector<int> {
        if (b.empty()) return {s.line}; // empty branch falls through the header
        CfgNode sub = cfg_of_block(b, file, out);
        out.add("controlFlowTo", {loc_value(file, s.line), loc_value(file, sub.entry)});
        return sub.exits;
    };
    auto then_exits = branch(s.then_branch);
    node.exits.insert(node.exits.end(), then_exits.begin(), then_exits.end());
    if (s.has_else) {
        auto else_exits = branch(s.else_branch);
        node.exits.insert(node.exits.end(), else_exits.begin(), else_exits.end());
    } else {
        node.exits.push_back(s.line); // fall-through when the condition is false
    }
    return node;
}

inline CfgNode cfg_of_block(const std::vector<Stmt>& stmts, const std::string& file, FactSet& out) {
    CfgNode node{stmts.front().line, {}};
    std::vector<int> pending; // exits of the previous statement
    for (std::size_t i = 0; i < stmts.size(); ++i) {
        CfgNode cur = cfg_of_stmt(stmts[i], file, out);
        if (i == 0) node.entry = cur.entry;
        for (int from : pending)
            out.add("controlFlowTo", {loc_value(file, from), loc_value(file, cur.entry)});
        pending = cur.exits;
    }
    node.exits = pending;
    return node;
}

inline void extract_stmts(const std::vector<Stmt>& stmts, const std::string& file, FactSet& out) {
    for (const Stmt& s : stmts) {
        Value loc = loc_value(file, s.line);
        switch (s.kind) {
            case StmtKind::Assign: {
                Value d = Value::make_sym(descriptor(s.expr, file, s.line));
                out.add("assignStmt", {Value::make_sym(s.var), d, loc});
                out.add("varDef", {Value::make_sym(s.var), loc});
                extract_expr(s.expr, file, s.line, out);
                break;
            }
            case StmtKind::Call: {
                out.add("methodCall", {Value::make_sym(s.var), Value::make_sym(s.method), loc});
                out.add("varUse", {Value::make_sym(s.var), loc});
                for (std::size_t i = 0; i < s.args.size(); ++i) {
                    const Expr& a = s.args[i];
                    Value idx = Value::make_num(static_cast<std::int64_t>(i));
                    if (a.kind == ExprKind::Str)
                        out.add("callArgStr", {loc, idx, Value::make_sym(a.str)});
                    else if (a.kind == ExprKind::Var)
                        out.add("callArgVar", {loc, idx, Value::make_sym(a.name)});
                    extract_expr(a, file, s.line, out);
                }
                break;
            }
            case StmtKind::Assert: {
                Value d = Value::make_sym(descriptor(s.expr, file, s.line));
                out.add("assertStmt",
                        {Value::make_sym(s.var), Value::make_sym(s.op), d, loc});
                out.add("varUse", {Value::make_sym(s.var), loc});
                extract_expr(s.expr, file, s.line, out);
                break;
            }
            case StmtKind::If: {
                collect_vars(s.expr, file, s.line, out);
                extract_stmts(s.then_branch, file, out);
                extract_stmts(s.else_branch, file, out);
                break;
            }
        }
    }
}

} // namespace detail

/// Fixed EDB predicate names emitted by extract_facts.
inline const std::vector<std::string>& edb_predicates() {
    static const std::vector<std::string> preds = {
        "assignStmt",      "varDef",      "varUse",   "methodCall",
        "callArgStr",      "callArgVar",  "constructorCall",
        "constructorName", "ctorArgVar",  "assertStmt", "controlFlowTo"};
    return preds;
}

inline FactSet extract_facts(const Codebase& cb) {
    FactSet out;
    for (const SourceFile& f : cb.files) {
        detail::extract_stmts(f.statements, f.path, out);
        if (!f.statements.empty()) detail::cfg_of_block(f.statements, f.path, out);
    }
    return out;
}

inline const std::string& snippet_at(const Codebase& cb, const Location& loc) {
    const SourceFile* f = cb.find(loc.file);
    if (!f || loc.line < 1 || loc.line > static_cast<int>(f->lines.size()))
        throw UnknownLocation(loc);
    return f->lines[loc.line - 1];
}

} // namespace predifix::minilang

#endif
