#ifndef PREDIFIX_CORE_HPP
#define PREDIFIX_CORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace predifix {

/// A 1-based position in a source file, printed as "<file>:<line>".
struct Location {
    std::string file;
    int line = 0;

    std::string text() const { return file + ":" + std::to_string(line); }

    static std::optional<Location> parse(const std::string& s) {
        auto pos = s.rfind(':');
        if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size()) return std::nullopt;
        int line = 0;
        for (std::size_t i = pos + 1; i < s.size(); ++i) {
            char c = s[i];
            if (c < '0' || c > '9') return std::nullopt;
            line = line * 10 + (c - '0');
        }
        if (line <= 0) return std::nullopt;
        return Location{s.substr(0, pos), line};
    }

    auto operator<=>(const Location&) const = default;
};

enum class ValueKind { Sym, Num, Loc };

inline const char* to_string(ValueKind k) {
    switch (k) {
        case ValueKind::Sym: return "sym";
        case ValueKind::Num: return "num";
        case ValueKind::Loc: return "loc";
    }
    return "?";
}

/// A ground term: a symbol, an integer, or a location (stored in text form).
struct Value {
    ValueKind kind = ValueKind::Sym;
    std::string sym;      // Sym and Loc payload
    std::int64_t num = 0; // Num payload

    static Value make_sym(std::string s) { return Value{ValueKind::Sym, std::move(s), 0}; }
    static Value make_num(std::int64_t n) { return Value{ValueKind::Num, "", n}; }
    static Value make_loc(const Location& l) { return Value{ValueKind::Loc, l.text(), 0}; }
    static Value make_loc(std::string text) { return Value{ValueKind::Loc, std::move(text), 0}; }

    Location loc() const {
        auto l = Location::parse(sym);
        if (!l) throw std::logic_error("value is not a location: " + sym);
        return *l;
    }

    std::string text() const {
        if (kind == ValueKind::Num) return std::to_string(num);
        return sym;
    }

    auto operator<=>(const Value&) const = default;
};

using Tuple = std::vector<Value>;

/// Ground facts grouped by predicate. Tuples are kept sorted so that
/// serialization and comparison are byte-stable.
class FactSet {
public:
    void add(const std::string& pred, Tuple t) { facts_[pred].insert(std::move(t)); }

    bool contains(const std::string& pred, const Tuple& t) const {
        auto it = facts_.find(pred);
        return it != facts_.end() && it->second.count(t) > 0;
    }

    const std::set<Tuple>& of(const std::string& pred) const {
        static const std::set<Tuple> empty;
        auto it = facts_.find(pred);
        return it == facts_.end() ? empty : it->second;
    }

    bool has_pred(const std::string& pred) const { return facts_.count(pred) > 0; }

    std::size_t size() const {
        std::size_t n = 0;
        for (auto& [_, s] : facts_) n += s.size();
        return n;
    }

    const std::map<std::string, std::set<Tuple>>& by_predicate() const { return facts_; }

    void merge(const FactSet& other) {
        for (auto& [p, ts] : other.facts_) facts_[p].insert(ts.begin(), ts.end());
    }

    bool operator==(const FactSet& other) const {
        // Predicates with no tuples compare equal to absent predicates.
        auto nonempty = [](const std::map<std::string, std::set<Tuple>>& m) {
            std::map<std::string, std::set<Tuple>> out;
            for (auto& [p, ts] : m)
                if (!ts.empty()) out.emplace(p, ts);
            return out;
        };
        return nonempty(facts_) == nonempty(other.facts_);
    }

private:
    std::map<std::string, std::set<Tuple>> facts_;
};

} // namespace predifix

#endif
