#ifndef PREDIFIX_RETRIEVAL_HPP
#define PREDIFIX_RETRIEVAL_HPP

#include "predifix/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace predifix::retrieval {

using analyzer::AnalysisRun;
using datalog::AlertInstance;
using datalog::NegationOutcome;
using datalog::RuleProgram;

struct RetrievalConfig {
    int example_context = 3;         // lines each side of a key example
    int alert_context = 10;          // lines each side of the alert
    int max_predicate_matches = 20;  // count-heuristic threshold
    int max_examples_per_source = 4;
    std::vector<std::string> library_globs;
    bool same_file_cond3 = false;
    int literal_top_k = 3;
    int literal_min_len = 5;
};

struct KeyExample {
    std::string predicate;
    std::string codebase_id;
    Location snippet;
    std::string context_text; // snippet line +- example_context lines
    std::string source_name;
    std::string source_kind;
    int source_priority = 0;
    int source_order = 0;
    std::size_t predicate_match_count = 0; // corpus-wide snippet matches of the predicate
    double score = 0.0;
    int rank = -1;

    bool same_snippet(const KeyExample& o) const {
        return predicate == o.predicate && codebase_id == o.codebase_id && snippet == o.snippet;
    }
};

/// All declared predicates except the alert predicate.
inline std::vector<std::string> get_predicates(const RuleProgram& p) {
    std::vector<std::string> out;
    for (const auto& d : p.decls)
        if (!d.is_alert) out.push_back(d.name);
    return out;
}

/// Condition 1: the predicate can point at code, i.e. it has a loc parameter.
inline bool check_cond1(const RuleProgram& p, const std::string& pred) {
    return p.decl(pred).has_loc_param();
}

struct Cond2Result {
    bool holds = false;
    NegationOutcome outcome;
};

/// Condition 2: negating the predicate dismisses the target alert. Skipped
/// flips fold into false.
inline Cond2Result check_cond2(const RuleProgram& p, const std::string& pred,
                               const AnalysisRun& target_run, const AlertInstance& target_alert,
                               bool naive = false) {
    Cond2Result res;
    res.outcome = datalog::negate_predicate(p, pred);
    if (!res.outcome.ok()) return res;
    FactSet edb = analyzer::restrict_to_inputs(p, target_run.full_facts);
    FactSet after = datalog::evaluate(*res.outcome.program, edb, !naive);
    for (const AlertInstance& a : datalog::alerts_of(*res.outcome.program, after))
        if (a == target_alert) return res;
    res.holds = true;
    return res;
}

/// Snippet locations the predicate matches in a codebase evaluated under
/// the original program: every loc-typed argument of every fact.
inline std::vector<Location> get_matches(const RuleProgram& p, const FactSet& full_facts,
                                         const std::string& pred) {
    std::set<Location> locs;
    const auto indices = p.decl(pred).loc_param_indices();
    for (const Tuple& t : full_facts.of(pred))
        for (std::size_t i : indices) locs.insert(t[i].loc());
    return {locs.begin(), locs.end()};
}

/// Condition 3: the flipped rule raises an alert on the clean codebase
/// (optionally constrained to the snippet's file).
inline bool check_cond3(const RuleProgram& negated, const FactSet& codebase_edb,
                        const Location& snippet, const RetrievalConfig& config,
                        bool naive = false) {
    FactSet edb = analyzer::restrict_to_inputs(negated, codebase_edb);
    FactSet after = datalog::evaluate(negated, edb, !naive);
    auto alerts = datalog::alerts_of(negated, after);
    if (alerts.empty()) return false;
    if (!config.same_file_cond3) return true;
    const auto indices = negated.decl(negated.alert_pred).loc_param_indices();
    for (const AlertInstance& a : alerts)
        for (std::size_t i : indices)
            if (a.args[i].loc().file == snippet.file) return true;
    return false;
}

/// Snippet line with `context` lines each side, clipped at file bounds.
inline std::string expand_context(const minilang::Codebase& cb, const Location& snippet,
                                  int context) {
    const minilang::SourceFile* f = cb.find(snippet.file);
    if (!f) throw minilang::UnknownLocation(snippet);
    int lo = std::max(1, snippet.line - context);
    int hi = std::min(static_cast<int>(f->lines.size()), snippet.line + context);
    std::string out;
    for (int i = lo; i <= hi; ++i) {
        out += f->lines[i - 1];
        if (i < hi) out += '\n';
    }
    return out;
}

using CandidateList = std::vector<const corpus::IndexedCodebase*>;

/// The retrieval algorithm: filter predicates by Conditions 1 and 2, then
/// walk codebases x predicates x matches testing Condition 3, expanding
/// each hit with surrounding context. Output is unranked but order-stable.
inline std::vector<KeyExample> identify_key_examples(const RuleProgram& p,
                                                     const AnalysisRun& target_run,
                                                     const AlertInstance& target_alert,
                                                     const CandidateList& clean_cbs,
                                                     const RetrievalConfig& config) {
    // Conditions 1 and 2 are corpus-independent and cheap; run them first.
    struct Bridging {
        std::string name;
        RuleProgram flipped;
        std::size_t matches = 0;
    };
    std::vector<Bridging> preds;
    for (const std::string& name : get_predicates(p)) {
        if (!check_cond1(p, name)) continue;
        Cond2Result c2 = check_cond2(p, name, target_run, target_alert);
        if (!c2.holds) continue;
        preds.push_back({name, std::move(*c2.outcome.program), 0});
    }
    if (preds.empty()) return {};

    struct Hit {
        std::size_t cb_index;
        std::size_t pred_index;
        Location snippet;
    };
    std::vector<Hit> hits;
    std::vector<std::vector<std::vector<Location>>> matches(clean_cbs.size());
    for (std::size_t ci = 0; ci < clean_cbs.size(); ++ci) {
        const corpus::IndexedCodebase& cb = *clean_cbs[ci];
        FactSet full;
        try {
            full = datalog::evaluate(p, analyzer::restrict_to_inputs(p, cb.facts));
        } catch (const datalog::TypeMismatch&) {
            continue; // analyzer failed on this codebase: skip it
        }
        matches[ci].resize(preds.size());
        for (std::size_t pi = 0; pi < preds.size(); ++pi) {
            matches[ci][pi] = get_matches(p, full, preds[pi].name);
            preds[pi].matches += matches[ci][pi].size();
        }
    }
    for (std::size_t ci = 0; ci < clean_cbs.size(); ++ci) {
        if (matches[ci].empty()) continue;
        const corpus::IndexedCodebase& cb = *clean_cbs[ci];
        for (std::size_t pi = 0; pi < preds.size(); ++pi) {
            if (matches[ci][pi].empty()) continue;
            // Without the same-file restriction Condition 3 only depends on
            // the (predicate, codebase) pair; evaluate once.
            bool cb_level = false;
            bool cb_level_known = false;
            for (const Location& snippet : matches[ci][pi]) {
                bool ok;
                if (config.same_file_cond3) {
                    ok = check_cond3(preds[pi].flipped, cb.facts, snippet, config);
                } else {
                    if (!cb_level_known) {
                        cb_level = check_cond3(preds[pi].flipped, cb.facts, snippet, config);
                        cb_level_known = true;
                    }
                    ok = cb_level;
                }
                if (ok) hits.push_back({ci, pi, snippet});
            }
        }
    }

    std::vector<KeyExample> out;
    for (const Hit& h : hits) {
        const corpus::IndexedCodebase& cb = *clean_cbs[h.cb_index];
        KeyExample e;
        e.predicate = preds[h.pred_index].name;
        e.codebase_id = cb.id;
        e.snippet = h.snippet;
        e.context_text = expand_context(cb.to_codebase(), h.snippet, config.example_context);
        e.source_name = cb.source_name;
        e.source_kind = cb.kind;
        e.source_priority = cb.priority;
        e.source_order = cb.order;
        e.predicate_match_count = preds[h.pred_index].matches;
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(), [&](const KeyExample& a, const KeyExample& b) {
        return std::tie(a.codebase_id, a.predicate, a.snippet) <
               std::tie(b.codebase_id, b.predicate, b.snippet);
    });
    return out;
}

/// Brute-force reference: for every declared predicate and every line of
/// every clean codebase, test the three conditions from scratch with full
/// re-parsing and naive evaluation. No ordering shortcuts, no caches.
inline std::vector<KeyExample> oracle_key_examples(const RuleProgram& p,
                                                   const minilang::Codebase& target,
                                                   const AlertInstance& target_alert,
                                                   const CandidateList& clean_cbs,
                                                   const RetrievalConfig& config) {
    std::vector<KeyExample> out;
    for (const auto& decl : p.decls) {
        const std::string& pred = decl.name;
        for (const corpus::IndexedCodebase* icb : clean_cbs) {
            minilang::Codebase cb = icb->to_codebase();
            for (const minilang::SourceFile& file : cb.files) {
                for (int line = 1; line <= static_cast<int>(file.lines.size()); ++line) {
                    Location here{file.path, line};
                    if (!check_cond1(p, pred)) continue;
                    // Does pred match this exact line?
                    FactSet cb_full = datalog::evaluate(
                        p, analyzer::restrict_to_inputs(p, minilang::extract_facts(cb)),
                        /*semi_naive=*/false);
                    auto locs = get_matches(p, cb_full, pred);
                    if (std::find(locs.begin(), locs.end(), here) == locs.end()) continue;
                    // Condition 2 from scratch on the target.
                    FactSet target_edb =
                        analyzer::restrict_to_inputs(p, minilang::extract_facts(target));
                    FactSet target_full = datalog::evaluate(p, target_edb, false);
                    AnalysisRun target_run{target.id, target_full,
                                           datalog::alerts_of(p, target_full)};
                    Cond2Result c2 = check_cond2(p, pred, target_run, target_alert, true);
                    if (!c2.holds) continue;
                    if (!check_cond3(*c2.outcome.program, minilang::extract_facts(cb), here,
                                     config, true))
                        continue;
                    KeyExample e;
                    e.predicate = pred;
                    e.codebase_id = icb->id;
                    e.snippet = here;
                    e.context_text = expand_context(cb, here, config.example_context);
                    e.source_name = icb->source_name;
                    e.source_kind = icb->kind;
                    e.source_priority = icb->priority;
                    e.source_order = icb->order;
                    out.push_back(std::move(e));
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [&](const KeyExample& a, const KeyExample& b) {
        return std::tie(a.codebase_id, a.predicate, a.snippet) <
               std::tie(b.codebase_id, b.predicate, b.snippet);
    });
    return out;
}

/// Splits on non-alphanumerics, camelCase humps, and letter/digit
/// boundaries; lowercases everything.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        bool alpha = std::isalpha(static_cast<unsigned char>(c));
        bool digit = std::isdigit(static_cast<unsigned char>(c));
        if (!alpha && !digit) {
            flush();
            continue;
        }
        if (!cur.empty()) {
            char prev = text[i - 1];
            bool prev_alpha = std::isalpha(static_cast<unsigned char>(prev));
            bool prev_digit = std::isdigit(static_cast<unsigned char>(prev));
            bool prev_upper = std::isupper(static_cast<unsigned char>(prev));
            bool upper = std::isupper(static_cast<unsigned char>(c));
            bool next_lower = i + 1 < text.size() &&
                              std::islower(static_cast<unsigned char>(text[i + 1]));
            if ((alpha && prev_digit) || (digit && prev_alpha)) {
                flush(); // letter/digit boundary
            } else if (upper && prev_alpha && !prev_upper) {
                flush(); // aB
            } else if (upper && prev_upper && next_lower) {
                flush(); // ABc -> A|Bc
            }
        }
        cur += lower(c);
    }
    flush();
    return out;
}

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// Okapi BM-25 over distinct query tokens:
///   idf(t) = ln((N - n + 0.5) / (n + 0.5) + 1)
///   score  = sum idf * tf*(k1+1) / (tf + k1*(1 - b + b*|d|/avgdl))
inline std::vector<double> bm25_scores(const std::string& query_text,
                                       const std::vector<std::string>& documents) {
    std::vector<std::map<std::string, int>> tf(documents.size());
    std::vector<double> len(documents.size(), 0.0);
    double total_len = 0.0;
    for (std::size_t i = 0; i < documents.size(); ++i) {
        auto toks = tokenize(documents[i]);
        len[i] = static_cast<double>(toks.size());
        total_len += len[i];
        for (auto& t : toks) ++tf[i][t];
    }
    double avgdl = documents.empty() ? 0.0 : total_len / documents.size();
    double n_docs = static_cast<double>(documents.size());

    std::set<std::string> qterms;
    for (auto& t : tokenize(query_text)) qterms.insert(t);

    std::vector<double> scores(documents.size(), 0.0);
    for (const std::string& term : qterms) {
        double df = 0;
        for (auto& m : tf)
            if (m.count(term)) ++df;
        if (df == 0) continue;
        double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        for (std::size_t i = 0; i < documents.size(); ++i) {
            auto it = tf[i].find(term);
            if (it == tf[i].end()) continue;
            double f = it->second;
            double denom = f + kBm25K1 * (1.0 - kBm25B + kBm25B * (avgdl > 0 ? len[i] / avgdl : 0.0));
            scores[i] += idf * f * (kBm25K1 + 1.0) / denom;
        }
    }
    return scores;
}

/// Scores and sorts examples by BM-25 similarity to the alert context,
/// descending; ties by (source priority, path, line).
inline std::vector<KeyExample> bm25_rank(const std::string& query_text,
                                         std::vector<KeyExample> examples) {
    std::vector<std::string> docs;
    for (auto& e : examples) docs.push_back(e.context_text);
    auto scores = bm25_scores(query_text, docs);
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].score = scores[i];
    std::stable_sort(examples.begin(), examples.end(),
                     [](const KeyExample& a, const KeyExample& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return std::tie(a.source_priority, a.snippet.file, a.snippet.line) <
                                std::tie(b.source_priority, b.snippet.file, b.snippet.line);
                     });
    for (std::size_t i = 0; i < examples.size(); ++i)
        examples[i].rank = static_cast<int>(i);
    return examples;
}

/// Minimal glob: '*' matches within a path segment, "**" across segments,
/// '?' one character.
inline bool glob_match(const std::string& pattern, const std::string& path) {
    std::function<bool(std::size_t, std::size_t)> go = [&](std::size_t pi, std::size_t si) {
        while (pi < pattern.size()) {
            if (pattern[pi] == '*') {
                bool deep = pi + 1 < pattern.size() && pattern[pi + 1] == '*';
                std::size_t rest = pi + (deep ? 2 : 1);
                for (std::size_t k = si; k <= path.size(); ++k) {
                    if (go(rest, k)) return true;
                    if (k < path.size() && !deep && path[k] == '/') break;
                }
                return false;
            }
            if (si >= path.size()) return false;
            if (pattern[pi] != '?' && pattern[pi] != path[si]) return false;
            ++pi;
            ++si;
        }
        return si == path.size();
    };
    return go(0, 0);
}

struct RankedSource {
    std::string name;
    std::string kind;
    int priority = 0;
    int order = 0;
    std::vector<KeyExample> examples;
};

/// The three prioritization heuristics in pipeline order: hierarchy filter,
/// count filter, BM-25 ranking, then per-source truncation.
inline std::vector<RankedSource> prioritize(const std::vector<KeyExample>& examples,
                                            const std::string& query_text,
                                            const RetrievalConfig& config,
                                            const RuleProgram& program) {
    std::vector<KeyExample> kept;
    for (const KeyExample& e : examples) {
        bool library = false;
        for (const std::string& g : config.library_globs) {
            if (glob_match(g, e.snippet.file) ||
                glob_match(g, program.decl(e.predicate).source_path)) {
                library = true;
                break;
            }
        }
        if (library) continue;
        if (e.predicate_match_count > static_cast<std::size_t>(config.max_predicate_matches))
            continue;
        kept.push_back(e);
    }

    kept = bm25_rank(query_text, std::move(kept));

    std::vector<RankedSource> out;
    for (const KeyExample& e : kept) {
        RankedSource* src = nullptr;
        for (RankedSource& s : out)
            if (s.name == e.source_name) src = &s;
        if (!src) {
            out.push_back({e.source_name, e.source_kind, e.source_priority, e.source_order, {}});
            src = &out.back();
        }
        src->order = std::min(src->order, e.source_order);
        if (static_cast<int>(src->examples.size()) < config.max_examples_per_source)
            src->examples.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedSource& a, const RankedSource& b) {
        return std::tie(a.priority, a.order) < std::tie(b.priority, b.order);
    });
    return out;
}

} // namespace predifix::retrieval

#endif
