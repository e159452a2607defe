#pragma once

#include "reprobe/errors.hpp"
#include "reprobe/models.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace reprobe {

inline constexpr const char* kAuthTokenEnvVar = "REINFORCE_PROBE_TOKEN";

struct RemoteAdapterConfig {
    std::string endpoint;                        // e.g. "http://127.0.0.1:8080"
    int batch_size = 16;                         // items per HTTP request
    int max_retries = 3;                         // transient-failure retries per request
    std::chrono::milliseconds timeout{30000};
    std::chrono::milliseconds retry_backoff{100};
    std::optional<std::string> auth_token;       // falls back to $REINFORCE_PROBE_TOKEN
    unsigned parallelism = 1;                    // in-flight request limit

    std::optional<std::string> effective_token() const {
        if (auth_token) return auth_token;
        if (const char* env = std::getenv(kAuthTokenEnvVar)) {
            return std::string(env);
        }
        return std::nullopt;
    }
};

struct ScoreRequest {
    TokenSeq context;
    std::vector<std::size_t> positions;
};

namespace detail {

inline nlohmann::json score_request_body(const std::string& vocab_name,
                                         std::span<const ScoreRequest> items) {
    nlohmann::json body;
    body["vocab"] = vocab_name;
    body["items"] = nlohmann::json::array();
    for (const auto& item : items) {
        nlohmann::json j;
        j["ids"] = item.context.ids();
        j["positions"] = item.positions;
        body["items"].push_back(std::move(j));
    }
    return body;
}

// Logprobs travel as natural logs keyed by stringified position; convert and
// validate at the boundary.
inline std::map<std::size_t, double> parse_score_item(const nlohmann::json& item,
                                                      const ScoreRequest& request) {
    if (!item.contains("logprobs") || !item.at("logprobs").is_object()) {
        throw AdapterError("remote score: response item missing logprobs object");
    }
    std::map<std::size_t, double> out;
    const auto& logprobs = item.at("logprobs");
    for (std::size_t p : request.positions) {
        const std::string key = std::to_string(p);
        if (!logprobs.contains(key)) {
            throw AdapterError("remote score: response missing position " + key);
        }
        const double lp = logprobs.at(key).get<double>();
        if (!(lp <= 1e-9) || std::isnan(lp)) {
            throw AdapterError("remote score: non-normalized response (logprob " +
                               std::to_string(lp) + " at position " + key + ")");
        }
        out.emplace(p, std::exp(lp));
    }
    return out;
}

inline bool transient_status(int status) { return status >= 500; }

} // namespace detail

// Order-preserving batched scoring against the wire protocol:
//   POST {endpoint}/score  {"vocab":"name","items":[{"ids":[...],"positions":[...]}]}
//   -> {"items":[{"logprobs":{"<pos>":<nat-log float>}}]}
// Requests are idempotent, so connection failures and 5xx responses retry up
// to max_retries with a fixed backoff.
inline std::vector<std::map<std::size_t, double>> remote_score(const RemoteAdapterConfig& config,
                                                               std::span<const ScoreRequest> batch) {
    if (batch.empty()) {
        return {};
    }
    if (config.batch_size < 1) {
        throw ConfigError("remote_score: batch_size must be >= 1");
    }
    const std::string vocab_name = batch.front().context.vocab()->name();
    for (const auto& item : batch) {
        if (item.context.vocab()->name() != vocab_name) {
            throw std::invalid_argument("remote_score: mixed vocabs in one batch");
        }
        for (std::size_t p : item.positions) {
            if (p >= item.context.size()) {
                throw std::invalid_argument("remote_score: position out of range");
            }
        }
    }

    httplib::Client client(config.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    client.set_connection_timeout(secs.count() ? secs : std::chrono::seconds(1));
    client.set_read_timeout(secs.count() ? secs : std::chrono::seconds(1));
    httplib::Headers headers;
    if (auto token = config.effective_token()) {
        headers.emplace("Authorization", "Bearer " + *token);
    }

    std::vector<std::map<std::size_t, double>> results;
    results.reserve(batch.size());
    const std::size_t chunk = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < batch.size(); start += chunk) {
        const std::size_t count = std::min(chunk, batch.size() - start);
        const auto items = batch.subspan(start, count);
        const std::string body = detail::score_request_body(vocab_name, items).dump();

        httplib::Result res;
        std::string last_error;
        for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(config.retry_backoff);
            }
            res = client.Post("/score", headers, body, "application/json");
            if (!res) {
                last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (detail::transient_status(res->status)) {
                last_error = "server status " + std::to_string(res->status);
                continue;
            }
            break;
        }
        if (!res || detail::transient_status(res->status)) {
            throw AdapterError("remote score: " + last_error + " after " +
                               std::to_string(config.max_retries) + " retries");
        }
        if (res->status != 200) {
            throw AdapterError("remote score: server status " + std::to_string(res->status));
        }

        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw AdapterError(std::string("remote score: bad response json: ") + e.what());
        }
        if (!parsed.contains("items") || !parsed.at("items").is_array() ||
            parsed.at("items").size() != count) {
            throw AdapterError("remote score: response item count mismatch");
        }
        for (std::size_t i = 0; i < count; ++i) {
            results.push_back(detail::parse_score_item(parsed.at("items")[i], items[i]));
        }
    }
    return results;
}

// ModelAdapter over the wire protocol. The vocab is supplied locally (the
// protocol scores pre-tokenized ids, so both sides must already agree on it).
// Concurrent score() calls share an in-flight gate of config.parallelism.
class RemoteModelAdapter final : public ModelAdapter {
public:
    RemoteModelAdapter(RemoteAdapterConfig config, VocabPtr vocab)
        : config_(std::move(config)), vocab_(std::move(vocab)) {
        if (!vocab_) throw std::invalid_argument("RemoteModelAdapter: null vocab");
        if (config_.endpoint.empty()) throw ConfigError("RemoteModelAdapter: empty endpoint");
        if (config_.batch_size < 1) throw ConfigError("RemoteModelAdapter: batch_size must be >= 1");
        if (config_.parallelism < 1) throw ConfigError("RemoteModelAdapter: parallelism must be >= 1");
    }

    const VocabPtr& vocab() const override { return vocab_; }
    const RemoteAdapterConfig& config() const noexcept { return config_; }

    std::map<std::size_t, double> score(const TokenSeq& context,
                                        std::span<const std::size_t> positions) const override {
        Gate gate(*this);
        std::vector<ScoreRequest> batch;
        batch.push_back({context, {positions.begin(), positions.end()}});
        return remote_score(config_, batch).front();
    }

    // One appended-token score per non-special id, batched through the wire.
    // Expensive for big vocabs; meant for label-space probes on small ones.
    std::vector<double> next_dist(const TokenSeq& context) const override {
        Gate gate(*this);
        std::vector<ScoreRequest> batch;
        const auto& ns = vocab_->non_special_ids();
        batch.reserve(ns.size());
        for (TokenId id : ns) {
            std::vector<TokenId> ids = context.ids();
            ids.push_back(id);
            batch.push_back({TokenSeq(vocab_, std::move(ids)), {context.size()}});
        }
        const auto scored = remote_score(config_, batch);
        std::vector<double> dist(vocab_->size(), 0.0);
        double sum = 0.0;
        for (std::size_t i = 0; i < ns.size(); ++i) {
            dist[ns[i]] = scored[i].at(context.size());
            sum += dist[ns[i]];
        }
        if (std::fabs(sum - 1.0) > 1e-6) {
            throw AdapterError("remote next_dist: non-normalized response (sum " +
                               std::to_string(sum) + ")");
        }
        return dist;
    }

    unsigned max_parallel_scores() const override { return config_.parallelism; }

private:
    struct Gate {
        const RemoteModelAdapter& adapter;
        explicit Gate(const RemoteModelAdapter& a) : adapter(a) {
            std::unique_lock lock(a.mutex_);
            a.cv_.wait(lock, [&] { return a.in_flight_ < a.config_.parallelism; });
            ++a.in_flight_;
        }
        ~Gate() {
            {
                std::lock_guard lock(adapter.mutex_);
                --adapter.in_flight_;
            }
            adapter.cv_.notify_one();
        }
    };

    RemoteAdapterConfig config_;
    VocabPtr vocab_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    mutable unsigned in_flight_ = 0;
};

} // namespace reprobe
