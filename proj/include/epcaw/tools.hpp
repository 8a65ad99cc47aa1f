// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <thread>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epcaw/backend.hpp"
#include "epcaw/errors.hpp"
#include "epcaw/text.hpp"

namespace epcaw {

inline constexpr const char* kBaseGenerator = "base_generator";
inline constexpr const char* kPythonCoder = "python_coder";
inline constexpr const char* kGoogleSearch = "google_search";
inline constexpr const char* kWikipediaSearch = "wikipedia_search";
inline constexpr const char* kWebSearch = "web_search";

enum class ProviderKind { Live, Fixture };

struct ToolSpec {
    std::string tool_id;
    std::string description;
    ProviderKind provider = ProviderKind::Fixture;
};

struct ToolResult {
    std::string tool_id;
    std::string raw_output;
    bool transport_ok = false;
    std::chrono::milliseconds latency{0};
};

struct SearchHit {
    std::string url;
    std::string snippet;
};

/// Removes results whose URL contains an excluded-domain substring
/// (case-insensitive). Order preserved.
inline std::vector<SearchHit> filter_results(const std::vector<SearchHit>& results,
                                             const std::vector<std::string>& excluded_domains) {
    std::vector<SearchHit> out;
    out.reserve(results.size());
    for (const auto& hit : results) {
        bool excluded = false;
        for (const auto& domain : excluded_domains) {
            if (!domain.empty() && contains_ci(hit.url, domain)) { excluded = true; break; }
        }
        if (!excluded) out.push_back(hit);
    }
    return out;
}

inline std::vector<std::string> default_excluded_domains() { return {"huggingface.co"}; }

/// query -> ranked results; query/url -> page text. Implemented by fixtures
/// for desk-scale runs and by an HTTP provider for live ones.
class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual std::optional<std::vector<SearchHit>> search(const std::string& query) = 0;
    virtual std::optional<std::string> wiki_lookup(const std::string& query) = 0;
    virtual std::optional<std::string> fetch_page(const std::string& url_or_query) = 0;
    virtual ProviderKind kind() const = 0;
};

/// Fixture file layout:
/// {
///   "version": 1,
///   "google_search":    {"<normalized query>": [{"url":..., "snippet":...}, ...]},
///   "wikipedia_search": {"<normalized query>": "page summary text"},
///   "pages":            {"<url or normalized query>": "page text"}
/// }
class FixtureSearchProvider : public SearchProvider {
public:
    FixtureSearchProvider() = default;

    explicit FixtureSearchProvider(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open tool fixture file", path);
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw SchemaMismatch("tool fixture file is not valid JSON: " + path);
        if (doc.value("version", -1) != 1)
            throw SchemaMismatch("unsupported tool fixture version in " + path);
        load(doc);
    }

    void add_results(const std::string& query, std::vector<SearchHit> hits) {
        results_[normalize_key(query)] = std::move(hits);
    }
    void add_wiki(const std::string& query, std::string text) {
        wiki_[normalize_key(query)] = std::move(text);
    }
    void add_page(const std::string& key, std::string text) {
        pages_[normalize_key(key)] = std::move(text);
    }

    std::optional<std::vector<SearchHit>> search(const std::string& query) override {
        auto it = results_.find(normalize_key(query));
        if (it == results_.end()) return std::nullopt;
        return it->second;
    }
    std::optional<std::string> wiki_lookup(const std::string& query) override {
        auto it = wiki_.find(normalize_key(query));
        if (it == wiki_.end()) return std::nullopt;
        return it->second;
    }
    std::optional<std::string> fetch_page(const std::string& url_or_query) override {
        auto it = pages_.find(normalize_key(url_or_query));
        if (it == pages_.end()) return std::nullopt;
        return it->second;
    }
    ProviderKind kind() const override { return ProviderKind::Fixture; }

private:
    void load(const nlohmann::json& doc) {
        const nlohmann::json searches = doc.value("google_search", nlohmann::json::object());
        for (const auto& [q, hits] : searches.items()) {
            std::vector<SearchHit> list;
            for (const auto& h : hits)
                list.push_back({h.value("url", std::string()), h.value("snippet", std::string())});
            results_[normalize_key(q)] = std::move(list);
        }
        const nlohmann::json wiki = doc.value("wikipedia_search", nlohmann::json::object());
        for (const auto& [q, text] : wiki.items()) wiki_[normalize_key(q)] = text.get<std::string>();
        const nlohmann::json pages = doc.value("pages", nlohmann::json::object());
        for (const auto& [k, text] : pages.items()) pages_[normalize_key(k)] = text.get<std::string>();
    }

    std::map<std::string, std::vector<SearchHit>> results_;
    std::map<std::string, std::string> wiki_;
    std::map<std::string, std::string> pages_;
};

/// Live provider speaking a small JSON wire format:
///   GET <endpoint>/search?q=...  -> [{"url":..., "snippet":...}, ...]
///   GET <endpoint>/wiki?q=...    -> {"text": ...}
///   GET <endpoint>/page?url=...  -> {"text": ...}
class HttpSearchProvider : public SearchProvider {
public:
    explicit HttpSearchProvider(std::string endpoint) : endpoint_(std::move(endpoint)) {}

    std::optional<std::vector<SearchHit>> search(const std::string& query) override {
        auto body = get("/search", "q", query);
        if (!body) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(*body, nullptr, false);
        if (j.is_discarded() || !j.is_array()) return std::nullopt;
        std::vector<SearchHit> hits;
        for (const auto& h : j)
            hits.push_back({h.value("url", std::string()), h.value("snippet", std::string())});
        return hits;
    }
    std::optional<std::string> wiki_lookup(const std::string& query) override {
        auto body = get("/wiki", "q", query);
        if (!body) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(*body, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        return j.value("text", std::string());
    }
    std::optional<std::string> fetch_page(const std::string& url_or_query) override {
        auto body = get("/page", "url", url_or_query);
        if (!body) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(*body, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        return j.value("text", std::string());
    }
    ProviderKind kind() const override { return ProviderKind::Live; }

private:
    std::optional<std::string> get(const std::string& path, const std::string& param,
                                   const std::string& value) {
        httplib::Client client(endpoint_);
        client.set_read_timeout(30, 0);
        auto res = client.Get(path + "?" + param + "=" + httplib::detail::encode_query_param(value));
        if (!res || res->status != 200) return std::nullopt;
        return res->body;
    }

    std::string endpoint_;
};

/// Runs Python source in a child process with a wall-clock timeout, capturing
/// stdout and stderr. Disabled by default at desk scale.
inline ToolResult run_code(const std::string& source, std::chrono::milliseconds timeout,
                           bool enabled) {
    ToolResult result;
    result.tool_id = kPythonCoder;
    if (!enabled) {
        result.transport_ok = false;
        result.raw_output = "code execution disabled by configuration";
        return result;
    }
    auto started = std::chrono::steady_clock::now();
    int pipefd[2];
    if (pipe(pipefd) != 0) {
        result.raw_output = "failed to create pipe";
        return result;
    }
    pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        result.raw_output = "failed to fork child process";
        return result;
    }
    if (pid == 0) {
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[0]);
        close(pipefd[1]);
        execlp("python3", "python3", "-c", source.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(pipefd[1]);
    fcntl(pipefd[0], F_SETFL, O_NONBLOCK);

    std::string output;
    bool timed_out = false;
    int status = 0;
    while (true) {
        pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (std::chrono::steady_clock::now() - started > timeout) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            timed_out = true;
            break;
        }
        char buf[4096];
        ssize_t n = read(pipefd[0], buf, sizeof(buf));
        if (n > 0) output.append(buf, static_cast<size_t>(n));
        else std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    // drain whatever is left after exit
    char buf[4096];
    ssize_t n;
    while ((n = read(pipefd[0], buf, sizeof(buf))) > 0) output.append(buf, static_cast<size_t>(n));
    close(pipefd[0]);

    result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    if (timed_out) {
        result.transport_ok = false;
        result.raw_output = "code execution timed out after " +
                            std::to_string(timeout.count()) + " ms";
    } else if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
        result.transport_ok = true;
        result.raw_output = output;
    } else {
        result.transport_ok = false;
        result.raw_output = output.empty() ? "code execution failed" : output;
    }
    return result;
}

struct ToolConfig {
    int result_count = 10;
    std::vector<std::string> excluded_domains = default_excluded_domains();
    bool code_execution_enabled = false;
    std::chrono::milliseconds code_timeout{5000};
};

/// Read-only after startup; safe to share across runs. The registry holds
/// exactly the five tool ids; the web_search adapter issues one summarization
/// completion (Executor role, ToolArgumentation purpose) after the page fetch.
class ToolRegistry {
public:
    ToolRegistry(std::shared_ptr<SearchProvider> provider, ToolConfig config,
                 Backend* summarizer = nullptr)
        : provider_(std::move(provider)), config_(std::move(config)), summarizer_(summarizer) {
        const ProviderKind kind = provider_ ? provider_->kind() : ProviderKind::Fixture;
        specs_ = {
            {kBaseGenerator, "default reasoning over the current context", kind},
            {kPythonCoder, "generates and executes Python code and returns the result", kind},
            {kGoogleSearch, "retrieves ranked web results for a query", kind},
            {kWikipediaSearch, "structured knowledge lookup", kind},
            {kWebSearch, "fetches a page and summarizes its content", kind},
        };
    }

    const std::vector<ToolSpec>& specs() const { return specs_; }

    bool has(const std::string& tool_id) const {
        for (const auto& s : specs_)
            if (s.tool_id == tool_id) return true;
        return false;
    }

    std::string catalog() const {
        std::ostringstream out;
        for (const auto& s : specs_) out << "- " << s.tool_id << ": " << s.description << "\n";
        return out.str();
    }

    /// Dispatches to the provider. Provider failures come back as
    /// transport_ok=false; only an unregistered tool_id throws.
    ToolResult invoke(const std::string& tool_id, const std::string& arguments,
                      int round = 1) const {
        if (!has(tool_id)) throw UnknownTool(tool_id);
        auto started = std::chrono::steady_clock::now();
        ToolResult result;
        result.tool_id = tool_id;

        if (tool_id == kBaseGenerator) {
            result.transport_ok = true;
            result.raw_output = arguments;
        } else if (tool_id == kPythonCoder) {
            result = run_code(arguments, config_.code_timeout, config_.code_execution_enabled);
        } else if (tool_id == kGoogleSearch) {
            run_search(arguments, result);
        } else if (tool_id == kWikipediaSearch) {
            auto page = provider_ ? provider_->wiki_lookup(arguments) : std::nullopt;
            if (page) {
                result.transport_ok = true;
                result.raw_output = *page;
            } else {
                result.raw_output = "wikipedia_search returned no page for: " + arguments;
            }
        } else if (tool_id == kWebSearch) {
            run_web_search(arguments, round, result);
        }

        if (result.latency.count() == 0) {
            result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
        }
        if (!result.transport_ok && result.raw_output.empty())
            result.raw_output = tool_id + " failed with no output";
        return result;
    }

private:
    void run_search(const std::string& query, ToolResult& result) const {
        auto hits = provider_ ? provider_->search(query) : std::nullopt;
        if (!hits) {
            result.raw_output = "google_search returned no results for: " + query;
            return;
        }
        auto kept = filter_results(*hits, config_.excluded_domains);
        if (static_cast<int>(kept.size()) > config_.result_count)
            kept.resize(static_cast<size_t>(config_.result_count));
        std::ostringstream out;
        for (size_t i = 0; i < kept.size(); ++i)
            out << (i + 1) << ". " << kept[i].url << " :: " << kept[i].snippet << "\n";
        result.transport_ok = true;
        result.raw_output = out.str();
    }

    void run_web_search(const std::string& url_or_query, int round, ToolResult& result) const {
        auto page = provider_ ? provider_->fetch_page(url_or_query) : std::nullopt;
        if (!page) {
            result.raw_output = "web_search could not fetch: " + url_or_query;
            return;
        }
        if (!summarizer_) {
            result.transport_ok = true;
            result.raw_output = *page;
            return;
        }
        CompletionRequest req;
        req.role_tag = RoleTag::Executor;
        req.purpose_tag = Purpose::ToolArgumentation;
        req.round = round;
        req.temperature = 0.0;
        req.prompt = "Summarize the key facts of the following page in a few sentences.\n\nPAGE:\n" +
                     *page;
        result.transport_ok = true;
        result.raw_output = summarizer_->complete(req).text;
    }

    std::shared_ptr<SearchProvider> provider_;
    ToolConfig config_;
    Backend* summarizer_;
    std::vector<ToolSpec> specs_;
};

}  // namespace epcaw
