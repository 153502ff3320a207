#pragma once

// Collects model generations from a chat-completions style endpoint.
//
// Request body: {"model", "messages": [{"role": "user", "content": prompt}],
//                "temperature": 0, "logprobs": true?}
// The reply text is choices[0].message.content. Replies are cached on disk,
// one JSON file per (model, template version, prompt, decoding params) key.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>

#include "taskcast/corpus.hpp"
#include "taskcast/error.hpp"
#include "taskcast/hash.hpp"
#include "taskcast/io.hpp"

namespace taskcast {

inline constexpr const char* kApiKeyEnv = "TASKCAST_API_KEY";

struct PromptTemplate {
    static constexpr std::string_view kVersion = "taskcast-prompt-v1";
    std::size_t k_demonstrations = 0;
};

// Template v1:
//
//   Definition: <instruction>
//
//   Positive Example 1 -
//   Input: <demo input>
//   Output: <demo output>
//
//   (k demonstrations, stored order)
//
//   Now complete the following example -
//   Input: <instance input>
//   Output:
//
// The prompt ends with "Output:" and no trailing newline.
inline std::string render_prompt(const Task& task, const Instance& instance, const PromptTemplate& tmpl)
{
    if (tmpl.k_demonstrations > task.demonstrations.size())
        throw Error("task \"" + task.task_id + "\" has " + std::to_string(task.demonstrations.size())
                    + " demonstrations, template needs " + std::to_string(tmpl.k_demonstrations));
    std::string p = "Definition: " + task.instruction + "\n\n";
    for (std::size_t i = 0; i < tmpl.k_demonstrations; ++i) {
        const auto& d = task.demonstrations[i];
        p += "Positive Example " + std::to_string(i + 1) + " -\n";
        p += "Input: " + d.input + "\n";
        p += "Output: " + d.output + "\n\n";
    }
    p += "Now complete the following example -\n";
    p += "Input: " + instance.input + "\n";
    p += "Output:";
    return p;
}

struct RetryPolicy {
    std::size_t max_attempts = 3;
    double backoff_base_seconds = 1.0; // attempt n waits base * 2^(n-1) after failing
};

struct EndpointConfig {
    std::string url = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model;
    std::optional<std::string> api_key; // read from TASKCAST_API_KEY when unset
    std::size_t max_inflight = 4;
    std::size_t requests_per_minute = 60; // 0 disables the cap
    std::chrono::milliseconds rate_window{60000};
    RetryPolicy retry;
    double timeout_seconds = 120.0;
    bool request_logprobs = false;
};

inline std::optional<std::string> api_key_from_env()
{
    if (const char* v = std::getenv(kApiKeyEnv); v && *v)
        return std::string(v);
    return std::nullopt;
}

// At most `limit` acquisitions in any window of length `window`.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;

    RateLimiter(std::size_t limit, Clock::duration window) : limit_(limit), window_(window) {}

    void acquire()
    {
        if (limit_ == 0)
            return;
        std::unique_lock lock(mu_);
        for (;;) {
            const auto now = Clock::now();
            while (!stamps_.empty() && now - stamps_.front() >= window_)
                stamps_.pop_front();
            if (stamps_.size() < limit_) {
                stamps_.push_back(now);
                return;
            }
            const auto wake = stamps_.front() + window_;
            lock.unlock();
            std::this_thread::sleep_until(wake);
            lock.lock();
        }
    }

private:
    std::size_t limit_;
    Clock::duration window_;
    std::mutex mu_;
    std::deque<Clock::time_point> stamps_;
};

struct CollectStats {
    std::size_t cache_hits = 0;
    std::size_t requests = 0; // HTTP attempts, including retries
    std::size_t retries = 0;
};

struct CollectOptions {
    std::filesystem::path cache_dir = ".taskcast-cache";
    std::function<void(const std::string&)> log; // retry/progress messages
};

namespace detail {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url)
{
    const auto scheme = url.find("://");
    if (scheme == std::string::npos)
        throw UsageError("endpoint URL needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos)
        return {url, "/v1/chat/completions"};
    return {url.substr(0, slash), url.substr(slash)};
}

inline std::string utc_timestamp()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Reply {
    std::string text;
    std::optional<std::vector<double>> logprobs;
};

inline std::optional<Reply> parse_reply(const json& resp)
{
    try {
        const auto& choice = resp.at("choices").at(0);
        Reply r{choice.at("message").at("content").get<std::string>(), std::nullopt};
        if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
            if (auto content = lp->find("content"); content != lp->end() && content->is_array()) {
                std::vector<double> v;
                for (const auto& tok : *content)
                    v.push_back(std::min(0.0, tok.at("logprob").get<double>()));
                if (!v.empty() && std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
                    r.logprobs = std::move(v);
            }
        }
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

inline json decoding_params(const EndpointConfig& endpoint)
{
    json p{{"temperature", 0}};
    if (endpoint.request_logprobs)
        p["logprobs"] = true;
    return p;
}

inline json cache_key(const std::string& model, const std::string& prompt, const json& params)
{
    return {{"model", model}, {"template_version", PromptTemplate::kVersion}, {"prompt", prompt}, {"params", params}};
}

// Same key -> same file name, across runs and machines.
inline std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const json& key)
{
    return cache_dir / (hex64(fnv1a64(key.dump())) + ".json");
}

inline json request_body(const std::string& model, const std::string& prompt, const json& params)
{
    json body{{"model", model}, {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    for (const auto& [k, v] : params.items())
        body[k] = v;
    return body;
}

// Renders one prompt per instance and queries the endpoint for every prompt
// not already cached. Throws if the API key is needed but missing, or if any
// instance still fails after the retry budget (naming every failed instance).
inline GenerationSet collect(const TaskSet& tasks, const EndpointConfig& endpoint, const PromptTemplate& tmpl,
                             const CollectOptions& options = {}, CollectStats* stats_out = nullptr)
{
    if (endpoint.retry.max_attempts < 1)
        throw UsageError("max attempts must be at least 1");
    if (endpoint.max_inflight < 1)
        throw UsageError("max in-flight requests must be at least 1");
    if (endpoint.model.empty())
        throw UsageError("no model name given");

    struct Job {
        const Task* task;
        const Instance* instance;
        std::string prompt;
        json key;
        std::filesystem::path file;
    };
    const json params = decoding_params(endpoint);
    std::vector<Job> jobs;
    for (const auto& task : tasks)
        for (const auto& inst : task.instances) {
            auto prompt = render_prompt(task, inst, tmpl);
            auto key = cache_key(endpoint.model, prompt, params);
            auto file = cache_path(options.cache_dir, key);
            jobs.push_back({&task, &inst, std::move(prompt), std::move(key), std::move(file)});
        }

    CollectStats stats;
    std::vector<std::optional<detail::Reply>> replies(jobs.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& job = jobs[i];
        if (std::filesystem::exists(job.file)) {
            try {
                const auto entry = json::parse(read_file(job.file));
                if (entry.at("key") == job.key) {
                    if (auto r = detail::parse_reply(entry.at("response"))) {
                        replies[i] = std::move(r);
                        ++stats.cache_hits;
                        continue;
                    }
                }
            } catch (const std::exception&) {
                // unreadable entry: refetch and overwrite
            }
        }
        pending.push_back(i);
    }

    std::vector<std::string> failures;
    if (!pending.empty()) {
        const auto key = endpoint.api_key ? endpoint.api_key : api_key_from_env();
        if (!key)
            throw Error(std::string(kApiKeyEnv) + " is not set and " + std::to_string(pending.size())
                        + " prompts are not cached");
        std::filesystem::create_directories(options.cache_dir);
        const auto url = detail::split_url(endpoint.url);
        RateLimiter limiter(endpoint.requests_per_minute, endpoint.rate_window);
        std::mutex mu;
        std::atomic<std::size_t> next{0};

        auto log = [&](const std::string& msg) {
            if (options.log) {
                std::lock_guard g(mu);
                options.log(msg);
            }
        };

        auto worker = [&] {
            httplib::Client client(url.origin);
            const auto timeout = std::chrono::duration<double>(endpoint.timeout_seconds);
            client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            const httplib::Headers headers{{"Authorization", "Bearer " + *key}};
            for (;;) {
                const std::size_t slot = next.fetch_add(1);
                if (slot >= pending.size())
                    return;
                const auto i = pending[slot];
                const auto& job = jobs[i];
                const auto body = request_body(endpoint.model, job.prompt, params);
                const auto label = job.task->task_id + "/" + job.instance->instance_id;
                std::string last_error;
                for (std::size_t attempt = 1; attempt <= endpoint.retry.max_attempts; ++attempt) {
                    limiter.acquire();
                    {
                        std::lock_guard g(mu);
                        ++stats.requests;
                    }
                    auto res = client.Post(url.path, headers, body.dump(), "application/json");
                    if (!res) {
                        last_error = "transport error: " + httplib::to_string(res.error());
                    } else if (res->status != 200) {
                        last_error = "HTTP " + std::to_string(res->status);
                    } else {
                        json resp;
                        try {
                            resp = json::parse(res->body);
                        } catch (const json::parse_error&) {
                        }
                        if (auto reply = detail::parse_reply(resp)) {
                            json entry{{"key", job.key},
                                       {"request", body},
                                       {"response", resp},
                                       {"timestamp", detail::utc_timestamp()}};
                            try {
                                atomic_write(job.file, entry.dump(2) + "\n");
                            } catch (const std::exception& e) {
                                std::lock_guard g(mu);
                                failures.push_back(label + " (cache write failed: " + e.what() + ")");
                                break;
                            }
                            std::lock_guard g(mu);
                            replies[i] = std::move(reply);
                            break;
                        }
                        last_error = "malformed response body";
                    }
                    if (attempt == endpoint.retry.max_attempts) {
                        std::lock_guard g(mu);
                        failures.push_back(label + " (" + last_error + ")");
                        break;
                    }
                    {
                        std::lock_guard g(mu);
                        ++stats.retries;
                    }
                    log("retry " + std::to_string(attempt) + " for " + label + ": " + last_error);
                    const double wait = endpoint.retry.backoff_base_seconds * std::pow(2.0, double(attempt - 1));
                    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
                }
            }
        };

        const std::size_t n_workers = std::min(endpoint.max_inflight, pending.size());
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_workers; ++t)
            threads.emplace_back(worker);
        for (auto& t : threads)
            t.join();
    }

    if (stats_out)
        *stats_out = stats;
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        std::string msg = std::to_string(failures.size()) + " instance(s) failed after "
                          + std::to_string(endpoint.retry.max_attempts) + " attempts:";
        for (const auto& f : failures)
            msg += "\n  " + f;
        throw Error(msg);
    }

    GenerationSet gens(endpoint.model);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& reply = *replies[i];
        gens.insert({jobs[i].task->task_id, jobs[i].instance->instance_id, std::move(reply.text),
                     endpoint.request_logprobs ? std::move(reply.logprobs) : std::nullopt});
    }
    return gens;
}

} // namespace taskcast
