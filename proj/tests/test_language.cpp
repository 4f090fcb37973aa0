#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "quicklap/backends.hpp"
#include "quicklap/language.hpp"

using namespace quicklap;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "quicklap_test_language";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    fs::remove(p);
    return p;
}

LanguageContext c_context(const std::string& utterance) {
    const World w = build_scenario(ScenarioId::C);
    return make_context(w, utterance, {0.0, 0.42, -0.1, 0.0}, {5.0, 2.5, 20.0, 40.0});
}

/// Scripted backend: returns `bad` malformed responses (or throws TransportError) before
/// delegating to the mock.
class FlakyBackend : public LanguageBackend {
public:
    FlakyBackend(int failures, bool transport) : failures_(failures), transport_(transport) {}
    std::string respond(const LanguageRequest& request) override {
        ++calls;
        if (failures_ > 0) {
            --failures_;
            if (transport_) throw TransportError("connection reset");
            return "not json";
        }
        return mock_.respond(request);
    }
    std::string model_label() const override { return "flaky"; }
    std::atomic<int> calls{0};

private:
    int failures_;
    bool transport_;
    MockBackend mock_;
};

}  // namespace

TEST_CASE("system messages match the golden fixtures byte for byte") {
    CHECK(attention_system_message() == read_file(fs::path(QUICKLAP_FIXTURES) / "att_system.txt"));
    CHECK(preference_system_message() == read_file(fs::path(QUICKLAP_FIXTURES) / "pref_system.txt"));
    const LanguageContext ctx = c_context("Watch the cone.");
    CHECK(build_att_prompt(ctx).system == attention_system_message());
    CHECK(build_pref_prompt(ctx, std::vector<double>{0, 1, 0, 0}).system == preference_system_message());
}

TEST_CASE("attention user prompt") {
    const LanguageContext ctx = c_context("Watch the cone.");
    const std::string user = build_att_prompt(ctx).user;
    CHECK(user.rfind("Human Driver Intervention Explanation:\nWatch the cone.\n", 0) == 0);
    CHECK(user.find("- lane_alignment (How well the car stays centered in its lane): feature change after "
                    "intervention: +0.420, the human increased this feature\n") != std::string::npos);
    CHECK(user.find("feature change after intervention: -0.100, the human decreased this feature") !=
          std::string::npos);
    CHECK(user.find("+0.000, the human did not change this feature") != std::string::npos);
    CHECK(user.find("(gate score 0.0 or 1.0)") != std::string::npos);
    CHECK(user.find("car_distance") == std::string::npos);
}

TEST_CASE("preference user prompt lists weights and gate") {
    const LanguageContext ctx = c_context("Watch the cone.");
    const std::string user = build_pref_prompt(ctx, std::vector<double>{0, 1, 0, 1}).user;
    CHECK(user.find("Current Reward Weights after a Physical Intervention Update:\n- speed_desirability: 5.000\n") !=
          std::string::npos);
    CHECK(user.find("- cone_distance: 40.000\n") != std::string::npos);
    CHECK(user.find("- lane_alignment: 1.0\n") != std::string::npos);
    CHECK(user.find("(confidence score 0.0-1.0)") != std::string::npos);
}

TEST_CASE("prompt inputs are validated") {
    LanguageContext ctx = c_context("");
    CHECK_THROWS_AS(build_att_prompt(ctx), std::invalid_argument);
    ctx = c_context("ok");
    ctx.dphi.pop_back();
    CHECK_THROWS_AS(build_att_prompt(ctx), std::invalid_argument);
    CHECK_THROWS_AS(build_pref_prompt(c_context("ok"), std::vector<double>{1, 0}), std::invalid_argument);
}

TEST_CASE("attention parser") {
    CHECK(parse_att_response(R"({"gate": [0, 1, 0.5]})", 3) == std::vector<double>{0, 1, 0.5});
    auto kind_of = [](auto&& f) {
        try {
            f();
        } catch (const ParseError& e) {
            return e.kind();
        }
        FAIL("no ParseError");
        return ParseError::Kind::malformed;
    };
    CHECK(kind_of([] { parse_att_response("gate: 1", 3); }) == ParseError::Kind::malformed);
    CHECK(kind_of([] { parse_att_response(R"({"gates": [0, 1, 0]})", 3); }) == ParseError::Kind::wrong_keys);
    CHECK(kind_of([] { parse_att_response(R"({"gate": [0, 1, 0], "x": 1})", 3); }) ==
          ParseError::Kind::wrong_keys);
    CHECK(kind_of([] { parse_att_response(R"({"gate": [0, "1", 0]})", 3); }) == ParseError::Kind::wrong_type);
    CHECK(kind_of([] { parse_att_response(R"({"gate": [0, 1]})", 3); }) == ParseError::Kind::wrong_length);
    CHECK(kind_of([] { parse_att_response(R"({"gate": [0, 1.5, 0]})", 3); }) == ParseError::Kind::out_of_range);
    CHECK(kind_of([] { parse_att_response(R"([0, 1, 0])", 3); }) != ParseError::Kind::out_of_range);
}

TEST_CASE("preference parser") {
    const auto p = parse_pref_response(R"({"mu": [-0.5, 6, 0], "confidence": [0.9, 0, 1]})", 3);
    CHECK(p.mu == std::vector<double>{-0.5, 6, 0});
    CHECK(p.confidence == std::vector<double>{0.9, 0, 1});
    CHECK_THROWS_AS(parse_pref_response(R"({"mu": [7, 0, 0], "confidence": [0, 0, 0]})", 3), ParseError);
    CHECK_THROWS_AS(parse_pref_response(R"({"mu": [0, 0, 0], "confidence": [0, -0.1, 0]})", 3), ParseError);
    CHECK_THROWS_AS(parse_pref_response(R"({"mu": [0, 0, 0]})", 3), ParseError);
    CHECK_THROWS_AS(parse_pref_response(R"({"mu": [0, 0, 0], "confidence": [0, 0]})", 3), ParseError);
    CHECK_THROWS_AS(parse_pref_response(R"({"mu": [0, null, 0], "confidence": [0, 0, 0]})", 3), ParseError);
}

TEST_CASE("prompt hashes") {
    CHECK(prompt_sha256({"", ""}) == "6e340b9cffb37a989ca544e6bb780a2c78901d3fb33738768511a30617afa01d");
    CHECK(prompt_sha256({"sys", "user"}) == "d9a85eb23dd96f9c5e0bfaa3121633c2d678e44c5582ec82120d4132f70ff461");
    CHECK(prompt_sha256({"sy", "suser"}) != prompt_sha256({"sys", "user"}));
}

TEST_CASE("cache round trip and replay") {
    const fs::path path = temp_path("cache.jsonl");
    {
        ResponseCache cache(path);
        cache.append({"aaa", "m", 0.1, "{\"gate\": [1]}\nsecond line", "2024-01-01T00:00:00Z"});
        cache.append({"bbb", "m", 0.3, "first", ""});
        cache.append({"bbb", "m", 0.3, "second", ""});
    }
    const auto records = ResponseCache::load(path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].response_text == "{\"gate\": [1]}\nsecond line");
    CHECK(records[0].temperature == 0.1);
    CHECK(records[0].timestamp == "2024-01-01T00:00:00Z");

    ReplayBackend replay(path);
    CHECK(replay.size() == 2);
    const LanguageContext ctx = c_context("x");
    const PromptPair prompt{"", ""};
    CHECK_THROWS_AS(replay.respond({Stage::attention, prompt, 0.1, ctx, {}}), BackendError);

    {
        ResponseCache cache(path);
        const PromptPair att = build_att_prompt(ctx);
        cache.append({prompt_sha256(att), "m", 0.1, "old", ""});
        cache.append({prompt_sha256(att), "m", 0.1, "new", ""});
        ReplayBackend again(path);
        CHECK(again.respond({Stage::attention, att, 0.1, ctx, {}}) == "new");
    }

    std::ofstream(path, std::ios::app) << "{broken\n";
    CHECK_THROWS_AS(ResponseCache::load(path), BackendError);
    CHECK_THROWS_AS(ResponseCache::load(temp_path("missing.jsonl")), BackendError);
}

TEST_CASE("mock backend gating") {
    MockBackend mock;
    {
        const auto [gate, conf] = mock.evaluate(c_context("Steer clear of the cones."));
        CHECK(gate == std::vector<double>{0, 0, 0, 1});
        CHECK(conf[3] == 0.9);
    }
    {
        const auto [gate, conf] = mock.evaluate(c_context("Be careful."));
        CHECK(gate == std::vector<double>{0, 0, 0, 1});
        CHECK(conf[3] == 0.4);
    }
    {
        const auto [gate, conf] = mock.evaluate(c_context("Nice weather today."));
        CHECK(gate == std::vector<double>{0, 0, 0, 0});
        CHECK(conf == std::vector<double>{0, 0, 0, 0});
    }
    {
        const World w = build_scenario(ScenarioId::CPC3);
        // features: speed, lane, off_road, cone, car, puddle
        const std::vector<double> dphi{0, 0, 0, 0.02, 0.01, 0.3};
        const auto [gate, conf] = mock.evaluate(make_context(w, "Watch out for that thing!", dphi, std::vector<double>(6, 1)));
        const std::size_t puddle = *w.index_of(Feature::puddle_distance);
        CHECK(gate[puddle] == 1.0);
        CHECK(conf[puddle] == 0.4);
        CHECK(gate[*w.index_of(Feature::car_distance)] == 1.0);  // "watch out" gates all obstacles
        CHECK(gate[*w.index_of(Feature::lane_alignment)] == 0.0);
    }

    const auto rules = parse_mock_rules(R"({"rules": [{"keywords": ["car"], "target": "car_distance", "confidence": 0.7}]})");
    MockBackend only_car(rules);
    const World w = build_scenario(ScenarioId::CPC3);
    const std::vector<double> dphi(6, 0.1), theta(6, 1.0);
    const std::size_t car = *w.index_of(Feature::car_distance);
    CHECK(only_car.evaluate(make_context(w, "Be careful.", dphi, theta)).first[car] == 0.0);
    CHECK(only_car.evaluate(make_context(w, "Mind the CARS", dphi, theta)).first[car] == 1.0);
    CHECK(only_car.evaluate(make_context(w, "Mind the CARS", dphi, theta)).second[car] == 0.7);

    CHECK_THROWS_AS(parse_mock_rules(R"({"rules": [{"keywords": ["x"], "target": "nope"}]})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_mock_rules(R"({"rules": [{"keywords": ["x"], "target": "cone_distance", "extra": 1}]})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_mock_rules(R"({"rules": [{"keywords": [], "target": "cone_distance"}]})"),
                    std::invalid_argument);
}

TEST_CASE("interpret with the mock backend caps mu") {
    MockBackend mock;
    const LanguageContext ctx = c_context("Steer clear of the cone.");
    LanguageContext c = ctx;
    c.dphi = {0.0, 0.0, 0.0, 0.05};
    const LanguageSignal sig = interpret(mock, c, BackendConfig{});
    CHECK(sig.gate == std::vector<double>{0, 0, 0, 1});
    CHECK(sig.mu[3] == doctest::Approx(0.25));
    CHECK(sig.confidence[3] == 0.9);
    c.dphi = {0.0, 0.0, 0.0, -2.0};
    CHECK(interpret(mock, c, BackendConfig{}).mu[3] == doctest::Approx(-6.0));
}

TEST_CASE("oracle backend") {
    OracleBackend oracle({5, 2.5, 20, 40}, 0.1, 0.95);
    LanguageContext ctx = c_context("anything");
    ctx.theta_t = {5, 2.5, 19.5, 1};
    const LanguageSignal sig = interpret(oracle, ctx, BackendConfig{});
    CHECK(sig.gate == std::vector<double>{0, 0, 0, 1});
    CHECK(sig.mu[3] == doctest::Approx(6.0));
    CHECK(sig.confidence[3] == 0.95);
}

TEST_CASE("retries count attempts and record every response") {
    const fs::path path = temp_path("retry.jsonl");
    ResponseCache cache(path);
    BackendConfig cfg;
    cfg.max_retries = 2;
    {
        FlakyBackend flaky(2, false);
        CHECK_NOTHROW(interpret(flaky, c_context("cone"), cfg, &cache));
        CHECK(flaky.calls == 4);
        CHECK(ResponseCache::load(path).size() == 4);
    }
    {
        FlakyBackend flaky(3, false);
        CHECK_THROWS_AS(interpret(flaky, c_context("cone"), cfg), BackendError);
        CHECK(flaky.calls == 3);
    }
    {
        FlakyBackend flaky(2, true);
        CHECK_NOTHROW(interpret(flaky, c_context("cone"), cfg));
        CHECK(flaky.calls == 4);
    }
    cfg.max_retries = 0;
    FlakyBackend flaky(1, true);
    CHECK_THROWS_AS(interpret(flaky, c_context("cone"), cfg), BackendError);
    CHECK(flaky.calls == 1);
}

TEST_CASE("remote backend talks to a chat completions endpoint") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth, seen_model;
    double seen_temp = -1;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        seen_model = body.at("model");
        const std::string system = body.at("messages").at(0).at("content");
        if (system == attention_system_message()) seen_temp = body.at("temperature");
        const std::string content = system == attention_system_message()
                                        ? R"({"gate": [0, 0, 0, 1]})"
                                        : R"({"mu": [0, 0, 0, 0.5], "confidence": [0, 0, 0, 0.8]})";
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(),
                        "application/json");
    });
    server.Post("/bad/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("QUICKLAP_API_KEY", "test-key", 1);
    BackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.model_name = "test-model";
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    cfg.timeout = 5.0;
    auto backend = make_backend(cfg);
    const LanguageSignal sig = interpret(*backend, c_context("cone"), cfg);
    CHECK(sig.mu[3] == 0.5);
    CHECK(sig.confidence[3] == 0.8);
    CHECK(hits == 2);
    CHECK(seen_auth == "Bearer test-key");
    CHECK(seen_model == "test-model");
    CHECK(seen_temp == 0.1);

    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/bad";
    cfg.max_retries = 1;
    hits = 0;
    auto bad = make_backend(cfg);
    CHECK_THROWS_AS(interpret(*bad, c_context("cone"), cfg), BackendError);
    CHECK(hits == 2);

    server.stop();
    th.join();
    unsetenv("QUICKLAP_API_KEY");

    cfg.base_url = "http://127.0.0.1:1";
    cfg.timeout = 1.0;
    auto unreachable = make_backend(cfg);
    CHECK_THROWS_AS(interpret(*unreachable, c_context("cone"), cfg), BackendError);
    cfg.base_url = "no-scheme";
    CHECK_THROWS_AS(make_backend(cfg), std::invalid_argument);
}

TEST_CASE("backend factory") {
    BackendConfig cfg;
    cfg.kind = BackendKind::replay;
    CHECK_THROWS_AS(make_backend(cfg), std::invalid_argument);
    CHECK(backend_kind_from_name("oracle") == BackendKind::oracle);
    CHECK(backend_kind_name(BackendKind::replay) == "replay");
    CHECK_THROWS_AS(backend_kind_from_name("gpt"), std::invalid_argument);
    cfg.kind = BackendKind::mock;
    cfg.rules_path = temp_path("no_rules.json").string();
    CHECK_THROWS(make_backend(cfg));
}

TEST_CASE("simulated models answer from what the prompt shows") {
    MockBackend mock;
    LanguageContext a = c_context("Avoid the cone.");
    LanguageContext b = a;
    a.dphi = {0.0, 0.0, 0.0, 0.04210};
    b.dphi = {0.0, 0.0, 0.0, 0.04196};
    const PromptPair pa = build_att_prompt(a), pb = build_att_prompt(b);
    REQUIRE(pa.user == pb.user);
    const std::vector<double> gate{0, 0, 0, 1};
    const PromptPair qa = build_pref_prompt(a, gate), qb = build_pref_prompt(b, gate);
    REQUIRE(qa.user == qb.user);
    const std::string ra = mock.respond({Stage::preference, qa, 0.3, a, gate});
    CHECK(ra == mock.respond({Stage::preference, qb, 0.3, b, gate}));
    CHECK(parse_pref_response(ra, 4).mu[3] == doctest::Approx(5 * 0.042));

    a.dphi = {0.0, 0.0, 0.0, 0.0004};
    CHECK(interpret(mock, a, BackendConfig{}).mu[3] == 0.0);

    OracleBackend oracle({5, 2.5, 20, 40});
    a.theta_t = {5, 2.5, 20, 39.9996};
    b.theta_t = {5, 2.5, 20, 40.0004};
    CHECK(oracle.respond({Stage::preference, qa, 0.3, a, gate}) == oracle.respond({Stage::preference, qb, 0.3, b, gate}));
}
