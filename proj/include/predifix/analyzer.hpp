#ifndef PREDIFIX_ANALYZER_HPP
#define PREDIFIX_ANALYZER_HPP

#include "predifix/datalog.hpp"
#include "predifix/minilang.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace predifix::analyzer {

using datalog::AlertInstance;
using datalog::RuleProgram;
using minilang::Codebase;

struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TargetNotInBefore : std::runtime_error {
    explicit TargetNotInBefore(const std::string& id)
        : std::runtime_error("target alert not present in the before run: " + id) {}
};

struct AmbiguousAlertId : std::runtime_error {
    explicit AmbiguousAlertId(const std::string& id)
        : std::runtime_error("alert id matches more than one instance: " + id) {}
};

/// One analysis of one codebase; facts are kept for retrieval.
struct AnalysisRun {
    std::string codebase_id;
    FactSet full_facts;
    std::vector<AlertInstance> alerts;

    bool has_alert(const AlertInstance& a) const {
        return std::find(alerts.begin(), alerts.end(), a) != alerts.end();
    }
};

/// Shell-friendly alert selector: "<alertPred>@<loc>[;<loc>...]" over the
/// loc-typed arguments in declaration order.
inline std::string format_alert_id(const RuleProgram& p, const AlertInstance& a) {
    std::string out = a.pred + "@";
    bool first = true;
    for (std::size_t i : p.decl(a.pred).loc_param_indices()) {
        if (!first) out += ";";
        out += a.args[i].text();
        first = false;
    }
    return out;
}

inline FactSet restrict_to_inputs(const RuleProgram& p, const FactSet& facts) {
    FactSet out;
    for (const std::string& pred : p.input_preds())
        for (const Tuple& t : facts.of(pred)) out.add(pred, t);
    return out;
}

inline AnalysisRun run_analysis(const RuleProgram& p, const Codebase& cb,
                                bool semi_naive = true) {
    try {
        FactSet edb = restrict_to_inputs(p, minilang::extract_facts(cb));
        AnalysisRun run;
        run.codebase_id = cb.id;
        run.full_facts = datalog::evaluate(p, edb, semi_naive);
        run.alerts = datalog::alerts_of(p, run.full_facts);
        return run;
    } catch (const datalog::TypeMismatch& e) {
        throw AnalysisError("codebase " + cb.id + ": " + e.what());
    }
}

/// Looks up one alert by its textual id. Returns nullptr when no instance
/// matches; throws when the id is ambiguous.
inline const AlertInstance* find_alert(const RuleProgram& p, const AnalysisRun& run,
                                       const std::string& alert_id) {
    const AlertInstance* found = nullptr;
    for (const AlertInstance& a : run.alerts) {
        if (format_alert_id(p, a) != alert_id) continue;
        if (found) throw AmbiguousAlertId(alert_id);
        found = &a;
    }
    return found;
}

struct AlertDiff {
    bool gone = false;
    std::vector<AlertInstance> introduced; // warnings, not failures
};

/// True iff the specific target alert disappeared between two runs of the
/// same rule program. Newly appearing alerts are reported as warnings.
inline AlertDiff alert_gone(const RuleProgram& p, const AnalysisRun& before,
                            const AnalysisRun& after, const AlertInstance& target) {
    if (!before.has_alert(target))
        throw TargetNotInBefore(format_alert_id(p, target));
    AlertDiff diff;
    diff.gone = !after.has_alert(target);
    for (const AlertInstance& a : after.alerts)
        if (!before.has_alert(a)) diff.introduced.push_back(a);
    return diff;
}

} // namespace predifix::analyzer

#endif
