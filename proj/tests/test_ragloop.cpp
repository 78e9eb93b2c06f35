#include "support.hpp"

#include "predifix/http_backend.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

using namespace predifix;
using namespace testsupport;
using nlohmann::json;

namespace {

ragloop::RuleMeta f1_meta() {
    return ragloop::RuleMeta{"InsecureRmiJmxAuthenticationEnvironment",
                             "RMI/JMX server created without credential type restriction",
                             "error"};
}

ragloop::MockBackend f1_mock() {
    json j = json::parse(read_file(fs::path(fixture_dir()) / "f1" / "mock.json"));
    return ragloop::MockBackend::from_json(j);
}

retrieval::KeyExample f1_example() {
    retrieval::KeyExample e;
    e.predicate = "putsCredentialTypesKey";
    e.codebase_id = "safe";
    e.snippet = {"jmx.ml", 2};
    e.context_text =
        "env = new HashMap();\n"
        "env.put(\"jmx.remote.rmi.server.credential.types\", t);\n"
        "s = new RMIConnectorServer(env);";
    e.source_name = "safe";
    e.source_kind = "popular";
    return e;
}

std::vector<retrieval::RankedSource> f1_sources() {
    retrieval::RankedSource s;
    s.name = "safe";
    s.kind = "popular";
    s.priority = 1;
    s.examples = {f1_example()};
    return {s};
}

std::string dump_codebase(const minilang::Codebase& cb) {
    std::string out;
    for (const auto& f : cb.files) {
        out += f.path + "\n";
        for (const auto& l : f.lines) out += l + "\n";
    }
    return out;
}

} // namespace

TEST_CASE("rule metadata falls back to the rule id") {
    auto m = ragloop::RuleMeta::from_json(json::object(), "rmi");
    CHECK(m.name == "rmi");
    CHECK(m.description == "rmi");
    auto full = ragloop::RuleMeta::from_json(
        json{{"name", "N"}, {"description", "D"}, {"severity", "error"}}, "rmi");
    CHECK(full.name == "N");
    CHECK(full.description == "D");
}

TEST_CASE("prompt layout") {
    auto meta = f1_meta();
    auto basic = ragloop::build_prompt(meta, "env = new HashMap();");
    CHECK(basic.system_text.find("output the modification in JSON") != std::string::npos);
    CHECK(basic.system_text.find("old_line") != std::string::npos);
    CHECK(basic.user_text.find("Vulnerability description: "
                               "InsecureRmiJmxAuthenticationEnvironment: ") !=
          std::string::npos);
    CHECK(basic.user_text.find("Code snippet:\nenv = new HashMap();") != std::string::npos);
    CHECK(basic.user_text.find("safe example") == std::string::npos);
    CHECK_FALSE(basic.example.has_value());

    auto with = ragloop::build_prompt(meta, "env = new HashMap();", f1_example());
    CHECK(with.user_text.find("Below code snippet is a safe example.") != std::string::npos);
    CHECK(with.user_text.find("jmx.remote.rmi.server.credential.types") != std::string::npos);
    CHECK(with.user_text.find(f1_example().context_text) != std::string::npos);
    REQUIRE(with.example.has_value());
}

TEST_CASE("mock backend picks the first matching trigger") {
    ragloop::MockBackend mock({{"alpha", "A"}, {"beta", "B"}}, "D");
    ragloop::PromptBundle p;
    p.user_text = "contains beta and alpha";
    CHECK(mock.complete(p) == "A");
    p.user_text = "only beta";
    CHECK(mock.complete(p) == "B");
    p.user_text = "neither";
    CHECK(mock.complete(p) == "D");
    CHECK(mock.complete(p) == mock.complete(p));
}

TEST_CASE("parse_patch accepts fenced and bare arrays") {
    auto p1 = ragloop::parse_patch(
        "Fix it like this:\n```json\n[{\"old_line\":\"a;\",\"new_line\":\"b;\"}]\n```\n");
    REQUIRE(p1.edits.size() == 1);
    CHECK(p1.edits[0].old_line == "a;");
    CHECK(p1.edits[0].new_line == "b;");

    auto p2 = ragloop::parse_patch("apply [{\"old_line\":\"a;\",\"new_line\":\"\"}] now");
    REQUIRE(p2.edits.size() == 1);
    CHECK(p2.edits[0].new_line.empty());

    // The fenced block wins over a later bare array.
    auto p3 = ragloop::parse_patch(
        "```\n[{\"old_line\":\"x;\",\"new_line\":\"y;\"}]\n```\n"
        "[{\"old_line\":\"z;\",\"new_line\":\"w;\"}]");
    CHECK(p3.edits[0].old_line == "x;");
}

TEST_CASE("parse_patch failure modes") {
    CHECK_THROWS_AS(ragloop::parse_patch("no patch here, sorry"), ragloop::NoPatchFound);
    CHECK_THROWS_AS(ragloop::parse_patch("```json\n[]\n```"), ragloop::NoPatchFound);
    try {
        ragloop::parse_patch("[{\"old_line\":\"a;\"}]");
        FAIL("expected MalformedEdit");
    } catch (const ragloop::MalformedEdit& e) {
        CHECK(e.index == 0);
    }
    CHECK_THROWS_AS(ragloop::parse_patch("[{\"old_line\":\"  \",\"new_line\":\"b;\"}]"),
                    ragloop::MalformedEdit);
    CHECK_THROWS_AS(ragloop::parse_patch("[\"not an object\"]"), ragloop::MalformedEdit);
}

TEST_CASE("apply_patch replaces with trim matching") {
    auto cb = f1_target();
    ragloop::LinePatch patch;
    patch.edits = {{"  env.put(\"socketFactory\", f);  ", "env.put(\"other\", f);"}};
    auto out = ragloop::apply_patch(cb, patch, {"main.ml", 3});
    CHECK(out.files[0].lines[1] == "env.put(\"other\", f);");
    CHECK(out.files[0].lines.size() == 3);
}

TEST_CASE("apply_patch multi-line insertion fixes F1") {
    auto p = f1_rules();
    auto cb = f1_target();
    ragloop::LinePatch patch;
    patch.edits = {{"env.put(\"socketFactory\", f);",
                    "env.put(\"socketFactory\", f);\n"
                    "env.put(\"jmx.remote.rmi.server.credential.types\", t);"}};
    auto out = ragloop::apply_patch(cb, patch, {"main.ml", 3});
    REQUIRE(out.files[0].lines.size() == 4);
    CHECK(out.files[0].lines[2] == "env.put(\"jmx.remote.rmi.server.credential.types\", t);");
    CHECK(analyzer::run_analysis(p, out).alerts.empty());
}

TEST_CASE("apply_patch deletes on empty new_line") {
    minilang::Codebase cb;
    cb.id = "t";
    cb.files.push_back(minilang::parse_file("f.ml", "a = null;\nb = null;\n"));
    ragloop::LinePatch patch;
    patch.edits = {{"a = null;", ""}};
    auto out = ragloop::apply_patch(cb, patch, {"f.ml", 1});
    REQUIRE(out.files[0].lines.size() == 1);
    CHECK(out.files[0].lines[0] == "b = null;");
}

TEST_CASE("apply_patch picks the duplicate nearest the alert") {
    minilang::Codebase cb;
    cb.id = "t";
    cb.files.push_back(minilang::parse_file(
        "f.ml", "x = null;\ny = new W();\nx = null;\nx.run();\n"));
    ragloop::LinePatch patch;
    patch.edits = {{"x = null;", "x = new W();"}};
    // Alert at line 4: the duplicate at line 3 is nearest.
    auto out = ragloop::apply_patch(cb, patch, {"f.ml", 4});
    CHECK(out.files[0].lines[0] == "x = null;");
    CHECK(out.files[0].lines[2] == "x = new W();");
    // Alert at line 1: the duplicate at line 1 wins; equidistant ties take
    // the smaller line number.
    auto out2 = ragloop::apply_patch(cb, patch, {"f.ml", 2});
    CHECK(out2.files[0].lines[0] == "x = new W();");
    CHECK(out2.files[0].lines[2] == "x = null;");
}

TEST_CASE("apply_patch searches the alert file first and leaves others alone") {
    minilang::Codebase cb;
    cb.id = "t";
    cb.files.push_back(minilang::parse_file("a.ml", "shared = null;\n"));
    cb.files.push_back(minilang::parse_file("b.ml", "shared = null;\n"));
    ragloop::LinePatch patch;
    patch.edits = {{"shared = null;", "shared = new W();"}};
    auto out = ragloop::apply_patch(cb, patch, {"b.ml", 1});
    CHECK(out.find("a.ml")->lines[0] == "shared = null;");
    CHECK(out.find("b.ml")->lines[0] == "shared = new W();");
}

TEST_CASE("apply_patch failure leaves the codebase untouched") {
    auto cb = f1_target();
    std::string before = dump_codebase(cb);
    ragloop::LinePatch patch;
    patch.edits = {{"env.put(\"socketFactory\", f);", "q = null;"},
                   {"this line does not exist;", "x;"}};
    try {
        ragloop::apply_patch(cb, patch, {"main.ml", 3});
        FAIL("expected NoMatchingLine");
    } catch (const ragloop::NoMatchingLine& e) {
        CHECK(e.index == 1);
    }
    CHECK(dump_codebase(cb) == before);
}

TEST_CASE("F1 session: basic attempt fails, example attempt fixes") {
    auto p = f1_rules();
    auto mock = f1_mock();
    retrieval::RetrievalConfig cfg;
    auto session = ragloop::run_session(p, f1_target(), {"rmi", "hasAlert",
                                        {Value::make_loc(Location{"main.ml", 3})}},
                                        f1_meta(), f1_sources(), cfg, mock);
    CHECK(session.status == ragloop::SessionStatus::Fixed);
    REQUIRE(session.attempts.size() == 2);
    CHECK_FALSE(session.attempts[0].example.has_value());
    CHECK_FALSE(session.attempts[0].validated);
    CHECK(session.attempts[1].example.has_value());
    CHECK(session.attempts[1].validated);
    REQUIRE(session.patched.has_value());
    CHECK(analyzer::run_analysis(p, *session.patched).alerts.empty());
    CHECK(session.alert_id == "hasAlert@main.ml:3");

    // Deterministic: an identical rerun produces a byte-identical log.
    auto mock2 = f1_mock();
    auto again = ragloop::run_session(p, f1_target(), {"rmi", "hasAlert",
                                      {Value::make_loc(Location{"main.ml", 3})}},
                                      f1_meta(), f1_sources(), cfg, mock2);
    CHECK(session.to_json().dump() == again.to_json().dump());
}

TEST_CASE("session with no examples and a never-fixing mock exhausts after 1") {
    auto p = f1_rules();
    ragloop::MockBackend mock({}, "no patch in this response");
    retrieval::RetrievalConfig cfg;
    auto session = ragloop::run_session(p, f1_target(), {"rmi", "hasAlert",
                                        {Value::make_loc(Location{"main.ml", 3})}},
                                        f1_meta(), {}, cfg, mock);
    CHECK(session.status == ragloop::SessionStatus::Exhausted);
    REQUIRE(session.attempts.size() == 1);
    CHECK_FALSE(session.attempts[0].parse_error.empty());
}

TEST_CASE("budget law: 1 + 4 per source") {
    auto p = f1_rules();
    // A syntactically valid patch that never dismisses the alert.
    ragloop::MockBackend mock(
        {}, "```json\n[{\"old_line\":\"env = new HashMap();\","
            "\"new_line\":\"env = new HashMap();\"}]\n```");
    retrieval::RetrievalConfig cfg;
    std::vector<retrieval::RankedSource> sources;
    for (int s = 0; s < 2; ++s) {
        retrieval::RankedSource src;
        src.name = "s" + std::to_string(s);
        src.kind = "popular";
        for (int i = 0; i < 5; ++i) {
            auto e = f1_example();
            e.source_name = src.name;
            e.snippet.line = 1 + i % 3;
            src.examples.push_back(e);
        }
        sources.push_back(src);
    }
    auto session = ragloop::run_session(p, f1_target(), {"rmi", "hasAlert",
                                        {Value::make_loc(Location{"main.ml", 3})}},
                                        f1_meta(), sources, cfg, mock);
    CHECK(session.status == ragloop::SessionStatus::Exhausted);
    CHECK(session.attempts.size() == 9); // 1 + 4 + 4
}

TEST_CASE("session errors out when the target alert is absent") {
    auto p = f1_rules();
    auto mock = f1_mock();
    retrieval::RetrievalConfig cfg;
    auto session = ragloop::run_session(p, f1_corpus_cb(), {"rmi", "hasAlert",
                                        {Value::make_loc(Location{"main.ml", 3})}},
                                        f1_meta(), {}, cfg, mock);
    CHECK(session.status == ragloop::SessionStatus::Error);
    CHECK_FALSE(session.error.empty());
    CHECK(session.attempts.empty());
}

TEST_CASE("patches that break parsing are recorded and skipped") {
    auto p = f1_rules();
    ragloop::MockBackend mock(
        {}, "```json\n[{\"old_line\":\"env = new HashMap();\",\"new_line\":\"env = ;\"}]\n```");
    retrieval::RetrievalConfig cfg;
    auto session = ragloop::run_session(p, f1_target(), {"rmi", "hasAlert",
                                        {Value::make_loc(Location{"main.ml", 3})}},
                                        f1_meta(), {}, cfg, mock);
    CHECK(session.status == ragloop::SessionStatus::Exhausted);
    REQUIRE(session.attempts.size() == 1);
    CHECK_FALSE(session.attempts[0].apply_error.empty());
}

TEST_CASE("http backend round-trip, retry, and failure") {
    httplib::Server server;
    std::atomic<int> calls{0};
    std::atomic<bool> body_ok{true};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int n = ++calls;
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || body["temperature"] != 0 || body["messages"].size() != 2)
            body_ok = false;
        if (n <= 1) { // transient failure; the client retries once
            res.status = 503;
            return;
        }
        json out = {{"choices",
                     json::array({{{"message", {{"content", "patched: " +
                                    body["messages"][1]["content"].get<std::string>()}}}}})}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ragloop::HttpBackendConfig cfg;
    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    ragloop::HttpBackend backend(cfg);
    ragloop::PromptBundle prompt;
    prompt.system_text = "sys";
    prompt.user_text = "hello";
    CHECK(backend.complete(prompt) == "patched: hello");
    CHECK(calls == 2);
    CHECK(body_ok);

    // Two consecutive 5xx responses exhaust the single retry.
    calls = -1; // the next two calls are numbered 0 and 1, both 503
    CHECK_THROWS_AS(backend.complete(prompt), ragloop::BackendError);

    server.stop();
    t.join();
}
