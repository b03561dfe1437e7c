#ifndef LLMO_HTTP_AGENT_HPP
#define LLMO_HTTP_AGENT_HPP

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "llmo/agents.hpp"
#include "llmo/errors.hpp"
#include "llmo/population.hpp"
#include "llmo/prompt.hpp"

namespace llmo {

// Connection settings for a chat-completions endpoint. The credential is
// looked up from the process environment by name at request time, so configs
// can be committed and shared without carrying secrets.
struct HttpAgentConfig {
    std::string endpoint = "http://127.0.0.1:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key_env;  // environment variable NAME; empty sends no auth header
    double temperature = 1.0;
    std::size_t population = 5;
    std::size_t dims = 1;
    Bounds bounds = Bounds::uniform(1, 0.0, 1.0);
    PromptTemplate prompt = PromptTemplate::standard();
    NumberEncoding encoding;
    std::size_t max_attempts = 3;
    double backoff_seconds = 0.25;  // doubles after every failed attempt
    double timeout_seconds = 30.0;
    std::string label = "http-llm";

    void validate() const {
        if (endpoint.empty() || path.empty() || path.front() != '/')
            throw ValidationError("endpoint and an absolute path are required");
        if (population == 0 || dims == 0)
            throw ValidationError("population and dims must be positive");
        if (bounds.dims() != dims) throw ValidationError("bounds dimension mismatch");
        if (max_attempts == 0) throw ValidationError("at least one attempt is required");
        if (!(temperature >= 0.0)) throw ValidationError("temperature must be non-negative");
        if (!(backoff_seconds >= 0.0) || !(timeout_seconds > 0.0))
            throw ValidationError("backoff and timeout must be sensible");
    }
};

// LLM agent speaking the OpenAI chat-completions wire format. Transport
// errors and retryable statuses (429 and 5xx) are retried with exponential
// backoff; other statuses fail immediately. The reply text is parsed with
// the same reader used everywhere else, so malformed generations surface as
// parse errors that the ensemble layer may retry.
class HttpChatAgent : public Agent {
  public:
    explicit HttpChatAgent(HttpAgentConfig config) : config_(std::move(config)) {
        config_.validate();
    }

    std::string name() const override { return config_.label; }

    Population generate(const Population& examples) override {
        const std::string prompt = render_prompt(examples, config_.bounds, config_.population,
                                                 config_.prompt, config_.encoding);
        const std::string reply = post_chat(prompt);
        return parse_population(reply, config_.population, config_.dims, config_.bounds,
                                config_.encoding);
    }

    const HttpAgentConfig& config() const { return config_; }

  private:
    std::string post_chat(const std::string& prompt) {
        const nlohmann::json body = {
            {"model", config_.model},
            {"temperature", config_.temperature},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        };
        httplib::Headers headers;
        if (!config_.api_key_env.empty()) {
            const char* key = std::getenv(config_.api_key_env.c_str());
            if (key == nullptr || *key == '\0')
                throw AgentFailure(AgentFailure::Kind::Api,
                                   "environment variable " + config_.api_key_env +
                                       " is not set, cannot authenticate",
                                   0);
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        httplib::Client client(config_.endpoint);
        const auto timeout = std::chrono::milliseconds(
            static_cast<long long>(config_.timeout_seconds * 1000.0));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        std::string last_error;
        bool transport = false;
        for (std::size_t attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1 && config_.backoff_seconds > 0.0) {
                const double delay =
                    config_.backoff_seconds * double(1ull << (attempt - 2));
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            httplib::Result res =
                client.Post(config_.path, headers, body.dump(), "application/json");
            if (!res) {
                transport = true;
                last_error = "transport: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) return extract_content(res->body);
            if (res->status == 429 || res->status >= 500) {
                transport = false;
                last_error = "retryable status " + std::to_string(res->status);
                continue;
            }
            throw AgentFailure(AgentFailure::Kind::Api,
                               "status " + std::to_string(res->status) + " from " + config_.path,
                               static_cast<int>(attempt));
        }
        throw AgentFailure(transport ? AgentFailure::Kind::Transport : AgentFailure::Kind::Api,
                           last_error, static_cast<int>(config_.max_attempts));
    }

    static std::string extract_content(const std::string& body) {
        const nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded())
            throw AgentFailure(AgentFailure::Kind::Parse, "response body is not valid JSON", 1);
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw AgentFailure(AgentFailure::Kind::Parse,
                               std::string("unexpected response shape: ") + e.what(), 1);
        }
    }

    HttpAgentConfig config_;
};

}  // namespace llmo

#endif
