// Remote agent over a local stub. Every test talks to an in-process HTTP
// server on 127.0.0.1 with an ephemeral port; nothing leaves the loopback
// interface. The stub records what it received so the wire format, the auth
// header, and the retry discipline can be asserted exactly.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "llmo/errors.hpp"
#include "llmo/http_agent.hpp"
#include "llmo/population.hpp"

using namespace llmo;

namespace {

struct StubServer {
    httplib::Server server;
    std::thread worker;
    int port = 0;
    std::atomic<int> hits{0};
    std::mutex mutex;
    std::vector<std::string> bodies;
    std::vector<std::string> auth_headers;

    explicit StubServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", [this, handler](const httplib::Request& req,
                                                            httplib::Response& res) {
            ++hits;
            {
                std::lock_guard<std::mutex> lock(mutex);
                bodies.push_back(req.body);
                auth_headers.push_back(req.get_header_value("Authorization"));
            }
            handler(req, res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        worker = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubServer() {
        server.stop();
        worker.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::string envelope(const std::string& content) {
    const nlohmann::json j = {
        {"choices",
         nlohmann::json::array(
             {{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
    return j.dump();
}

HttpAgentConfig test_config(const std::string& endpoint) {
    HttpAgentConfig c;
    c.endpoint = endpoint;
    c.population = 2;
    c.dims = 2;
    c.bounds = Bounds::uniform(2, 0.0, 1.0);
    c.backoff_seconds = 0.0;
    c.timeout_seconds = 5.0;
    return c;
}

Population two_examples() {
    Population p;
    p.append_row(ActionVector{{0.100, 0.200}}, 1.5);
    p.append_row(ActionVector{{0.300, 0.400}}, 2.5);
    return p;
}

}  // namespace

TEST_CASE("agent posts the rendered prompt and parses the reply") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(envelope("0.125, 0.250\n0.500, 0.750\n"), "application/json");
    });
    setenv("LLMO_TEST_API_KEY", "super-secret-token", 1);
    HttpAgentConfig config = test_config(stub.url());
    config.api_key_env = "LLMO_TEST_API_KEY";
    config.model = "tiny-model";
    config.temperature = 0.5;
    HttpChatAgent agent(config);

    const Population out = agent.generate(two_examples());
    REQUIRE(out.size() == 2);
    REQUIRE(out.actions[0].values == std::vector<double>{0.125, 0.250});
    REQUIRE(out.actions[1].values == std::vector<double>{0.500, 0.750});
    REQUIRE(out.rewards.empty());  // generation arrives unevaluated

    REQUIRE(stub.hits == 1);
    const nlohmann::json sent = nlohmann::json::parse(stub.bodies.at(0));
    REQUIRE(sent.at("model") == "tiny-model");
    REQUIRE(sent.at("temperature") == 0.5);
    const std::string prompt = sent.at("messages").at(0).at("content");
    REQUIRE(prompt.find("maximize a reward function") != std::string::npos);
    REQUIRE(prompt.find("0.100, 0.200, 1.500") != std::string::npos);
    REQUIRE(stub.auth_headers.at(0) == "Bearer super-secret-token");
    unsetenv("LLMO_TEST_API_KEY");
}

TEST_CASE("missing credential variable fails before any request") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(envelope("0.1, 0.1\n0.2, 0.2\n"), "application/json");
    });
    unsetenv("LLMO_ABSENT_KEY");
    HttpAgentConfig config = test_config(stub.url());
    config.api_key_env = "LLMO_ABSENT_KEY";
    HttpChatAgent agent(config);
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Api);
        REQUIRE(std::string(e.what()).find("LLMO_ABSENT_KEY") != std::string::npos);
        REQUIRE(e.attempts == 0);
    }
    REQUIRE(stub.hits == 0);  // the secret check never touches the network
}

TEST_CASE("server errors are retried until a good reply arrives") {
    std::atomic<int> calls{0};
    StubServer stub([&calls](const httplib::Request&, httplib::Response& res) {
        const int n = ++calls;
        if (n == 1) {
            res.status = 500;
        } else if (n == 2) {
            res.status = 429;
        } else {
            res.set_content(envelope("0.1, 0.2\n0.3, 0.4\n"), "application/json");
        }
    });
    HttpChatAgent agent(test_config(stub.url()));
    const Population out = agent.generate(two_examples());
    REQUIRE(out.size() == 2);
    REQUIRE(stub.hits == 3);
}

TEST_CASE("exhausted retries report the last retryable failure") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    HttpAgentConfig config = test_config(stub.url());
    config.max_attempts = 2;
    HttpChatAgent agent(config);
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Api);
        REQUIRE(e.attempts == 2);
        REQUIRE(std::string(e.what()).find("503") != std::string::npos);
    }
    REQUIRE(stub.hits == 2);
}

TEST_CASE("client errors are not retried") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    HttpChatAgent agent(test_config(stub.url()));
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Api);
        REQUIRE(std::string(e.what()).find("400") != std::string::npos);
    }
    REQUIRE(stub.hits == 1);
}

TEST_CASE("a closed port surfaces as a transport failure") {
    // Bind a port, note its number, and close it again so nothing listens.
    int dead_port = 0;
    {
        httplib::Server probe;
        dead_port = probe.bind_to_any_port("127.0.0.1");
    }
    HttpAgentConfig config = test_config("http://127.0.0.1:" + std::to_string(dead_port));
    config.max_attempts = 2;
    config.timeout_seconds = 1.0;
    HttpChatAgent agent(config);
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Transport);
        REQUIRE(e.attempts == 2);
    }
}

TEST_CASE("a stalled server trips the read timeout") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(500));
        res.set_content(envelope("0.1, 0.2\n0.3, 0.4\n"), "application/json");
    });
    HttpAgentConfig config = test_config(stub.url());
    config.max_attempts = 1;
    config.timeout_seconds = 0.05;
    HttpChatAgent agent(config);
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Transport);
    }
}

TEST_CASE("a broken response envelope is a parse failure") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content("this is not json", "application/json");
    });
    HttpChatAgent agent(test_config(stub.url()));
    try {
        agent.generate(two_examples());
        FAIL("expected an agent failure");
    } catch (const AgentFailure& e) {
        REQUIRE(e.kind == AgentFailure::Kind::Parse);
    }
}

TEST_CASE("an envelope without choices is a parse failure") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"error": {"message": "overloaded"}})", "application/json");
    });
    HttpChatAgent agent(test_config(stub.url()));
    REQUIRE_THROWS_AS(agent.generate(two_examples()), AgentFailure);
}

TEST_CASE("garbled generation text raises the usual parse errors") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(envelope("here are some actions, good luck"), "application/json");
    });
    HttpChatAgent agent(test_config(stub.url()));
    REQUIRE_THROWS_AS(agent.generate(two_examples()), ParseError);
}

TEST_CASE("http configuration is validated") {
    HttpAgentConfig config = test_config("http://127.0.0.1:1");
    config.path = "no-leading-slash";
    REQUIRE_THROWS_AS(HttpChatAgent(config), ValidationError);
    config = test_config("http://127.0.0.1:1");
    config.bounds = Bounds::uniform(3, 0.0, 1.0);
    REQUIRE_THROWS_AS(HttpChatAgent(config), ValidationError);
    config = test_config("http://127.0.0.1:1");
    config.max_attempts = 0;
    REQUIRE_THROWS_AS(HttpChatAgent(config), ValidationError);
}
