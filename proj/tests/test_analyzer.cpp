#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace predifix;
using namespace testsupport;

TEST_CASE("F1 target raises exactly one alert") {
    auto p = f1_rules();
    auto run = analyzer::run_analysis(p, f1_target());
    REQUIRE(run.alerts.size() == 1);
    CHECK(analyzer::format_alert_id(p, run.alerts[0]) == "hasAlert@main.ml:3");
}

TEST_CASE("F1 corpus codebase is clean") {
    auto p = f1_rules();
    CHECK(analyzer::run_analysis(p, f1_corpus_cb()).alerts.empty());
}

TEST_CASE("empty codebase yields no alerts") {
    auto p = f1_rules();
    minilang::Codebase empty;
    empty.id = "empty";
    CHECK(analyzer::run_analysis(p, empty).alerts.empty());
}

TEST_CASE("analysis runs are byte-stable") {
    auto p = npe_rules();
    auto a = analyzer::run_analysis(p, npe_target());
    auto b = analyzer::run_analysis(p, npe_target());
    CHECK(a.alerts == b.alerts);
    CHECK(a.full_facts == b.full_facts);
    CHECK(a.alerts == datalog::alerts_of(p, a.full_facts));
}

TEST_CASE("find_alert resolves ids") {
    auto p = f1_rules();
    auto run = analyzer::run_analysis(p, f1_target());
    const auto* a = analyzer::find_alert(p, run, "hasAlert@main.ml:3");
    REQUIRE(a != nullptr);
    CHECK(analyzer::format_alert_id(p, *a) == "hasAlert@main.ml:3");
    CHECK(analyzer::find_alert(p, run, "hasAlert@main.ml:1") == nullptr);
    CHECK(analyzer::find_alert(p, run, "nonsense") == nullptr);
}

TEST_CASE("alert id formatting joins loc args in declaration order") {
    std::string text =
        ".input e(l0: loc, l1: loc)\n"
        ".alert pair(l0: loc, tag: sym, l1: loc)\n"
        "pair(A, \"x\", B) :- e(A, B).\n";
    auto p = datalog::parse_program(text, "pair");
    datalog::AlertInstance a{"pair", "pair",
                             {Value::make_loc(Location{"a.ml", 1}), Value::make_sym("x"),
                              Value::make_loc(Location{"b.ml", 2})}};
    CHECK(analyzer::format_alert_id(p, a) == "pair@a.ml:1;b.ml:2");
}

TEST_CASE("alert_gone detects disappearance and introductions") {
    auto p = f1_rules();
    auto before = analyzer::run_analysis(p, f1_target());
    REQUIRE(before.alerts.size() == 1);
    const auto target = before.alerts[0];

    // Patched target: the credential-types put inserted before server creation.
    minilang::Codebase patched;
    patched.id = "target";
    patched.files.push_back(minilang::parse_file(
        "main.ml",
        "env = new HashMap();\n"
        "env.put(\"socketFactory\", f);\n"
        "env.put(\"jmx.remote.rmi.server.credential.types\", t);\n"
        "s = new RMIConnectorServer(env);\n"));
    auto after = analyzer::run_analysis(p, patched);
    auto diff = analyzer::alert_gone(p, before, after, target);
    CHECK(diff.gone);
    CHECK(diff.introduced.empty());

    // Identical runs: nothing gone.
    auto same = analyzer::alert_gone(p, before, before, target);
    CHECK_FALSE(same.gone);
    CHECK(same.introduced.empty());

    // A broken patch that moves the alert introduces a new one.
    minilang::Codebase moved;
    moved.id = "target";
    moved.files.push_back(minilang::parse_file(
        "main.ml",
        "env = new HashMap();\n"
        "env.put(\"socketFactory\", f);\n"
        "q = new HashMap();\n"
        "s = new RMIConnectorServer(q);\n"));
    auto moved_run = analyzer::run_analysis(p, moved);
    auto moved_diff = analyzer::alert_gone(p, before, moved_run, target);
    CHECK(moved_diff.gone);
    REQUIRE(moved_diff.introduced.size() == 1);
    CHECK(analyzer::format_alert_id(p, moved_diff.introduced[0]) == "hasAlert@main.ml:4");

    // Target absent from the before run is a usage error.
    CHECK_THROWS_AS(analyzer::alert_gone(p, after, before, target), analyzer::TargetNotInBefore);
}

TEST_CASE("restrict_to_inputs drops non-EDB facts") {
    auto p = npe_rules();
    FactSet mixed = minilang::extract_facts(npe_target());
    // varUse is extracted but not declared as an input of the NPE rule.
    CHECK(mixed.has_pred("varUse"));
    FactSet edb = analyzer::restrict_to_inputs(p, mixed);
    CHECK_FALSE(edb.has_pred("varUse"));
    CHECK(edb.has_pred("assignStmt"));
    CHECK_NOTHROW(datalog::evaluate(p, edb));
}
