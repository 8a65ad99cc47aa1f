// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "epcaw/errors.hpp"
#include "epcaw/text.hpp"

namespace epcaw {

enum class RoleTag { Planner, Executor, Diagnoser, Judge };

enum class Purpose {
    CandidateGeneration,
    Evaluation,
    Diagnosis,
    ConstraintInduction,
    StopCheck,
    AnswerGeneration,
    ToolArgumentation,
    Judging,
};

inline const char* to_string(RoleTag r) {
    switch (r) {
        case RoleTag::Planner: return "Planner";
        case RoleTag::Executor: return "Executor";
        case RoleTag::Diagnoser: return "Diagnoser";
        case RoleTag::Judge: return "Judge";
    }
    return "?";
}

inline const char* to_string(Purpose p) {
    switch (p) {
        case Purpose::CandidateGeneration: return "CandidateGeneration";
        case Purpose::Evaluation: return "Evaluation";
        case Purpose::Diagnosis: return "Diagnosis";
        case Purpose::ConstraintInduction: return "ConstraintInduction";
        case Purpose::StopCheck: return "StopCheck";
        case Purpose::AnswerGeneration: return "AnswerGeneration";
        case Purpose::ToolArgumentation: return "ToolArgumentation";
        case Purpose::Judging: return "Judging";
    }
    return "?";
}

/// (evaluating agent, target agent). Self-evaluations use evaluator == target.
struct Perspective {
    RoleTag evaluator;
    RoleTag target;

    bool is_self() const { return evaluator == target; }
    friend bool operator==(const Perspective&, const Perspective&) = default;
    friend auto operator<=>(const Perspective&, const Perspective&) = default;
};

inline std::string to_string(const Perspective& p) {
    return std::string(to_string(p.evaluator)) + "->" + to_string(p.target);
}

struct CompletionRequest {
    RoleTag role_tag = RoleTag::Planner;
    Purpose purpose_tag = Purpose::CandidateGeneration;
    std::optional<Perspective> perspective_tag;
    int round = 1;
    std::string prompt;
    double temperature = 0.0;
    int max_output = 1024;
};

struct CompletionResponse {
    std::string text;
    int prompt_tokens = 0;
    int output_tokens = 0;
    std::chrono::milliseconds latency{0};
    bool usage_reported = false;  // true when token counts came from the backend
};

/// Canonical script/ledger key: "role|purpose|perspective|round".
/// Perspective renders as "Evaluator->Target" or "-" when absent.
inline std::string request_key(RoleTag role, Purpose purpose,
                               const std::optional<Perspective>& perspective, int round) {
    std::string p = perspective ? to_string(*perspective) : std::string("-");
    return std::string(to_string(role)) + "|" + to_string(purpose) + "|" + p + "|" +
           std::to_string(round);
}

inline std::string request_key(const CompletionRequest& r) {
    return request_key(r.role_tag, r.purpose_tag, r.perspective_tag, r.round);
}

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// One scripted response. `when_prompt_contains` empty means the entry matches
/// any prompt. Entries under an exact-round key are consumed in order; entries
/// under a round-wildcard key are reusable.
struct ScriptEntry {
    std::string when_prompt_contains;
    std::string text;

    bool matches(const std::string& prompt) const {
        return when_prompt_contains.empty() ||
               prompt.find(when_prompt_contains) != std::string::npos;
    }
};

/// Deterministic response table keyed by (role, purpose, perspective, round).
/// Lookup never depends on global call order, so concurrent calls with
/// distinct keys resolve identically under any interleaving.
class Script {
public:
    static constexpr int kScriptFileVersion = 1;

    Script() = default;
    Script(Script&& other) noexcept
        : entries_(std::move(other.entries_)),
          wildcard_(std::move(other.wildcard_)),
          consumed_(std::move(other.consumed_)) {}
    Script& operator=(Script&& other) noexcept {
        entries_ = std::move(other.entries_);
        wildcard_ = std::move(other.wildcard_);
        consumed_ = std::move(other.consumed_);
        return *this;
    }

    void add(const std::string& key, ScriptEntry entry) {
        entries_[key].push_back(std::move(entry));
    }
    void add(const std::string& key, const std::string& text) {
        add(key, ScriptEntry{"", text});
    }
    void add_wildcard(RoleTag role, Purpose purpose,
                      const std::optional<Perspective>& perspective, ScriptEntry entry) {
        wildcard_[wildcard_key(role, purpose, perspective)].push_back(std::move(entry));
    }

    bool empty() const { return entries_.empty() && wildcard_.empty(); }

    /// Exact-round entries win and are consumed; wildcard entries are a
    /// reusable fallback. Throws ScriptExhausted when the exact key exists but
    /// nothing is left to serve, ScriptMiss when the key is entirely unknown.
    std::string next(const CompletionRequest& request) const {
        std::lock_guard<std::mutex> lock(mutex_);
        const std::string key = request_key(request);
        auto it = entries_.find(key);
        bool key_known = it != entries_.end();
        if (key_known) {
            auto& consumed = consumed_[key];
            for (size_t i = 0; i < it->second.size(); ++i) {
                if (consumed.size() <= i) consumed.resize(it->second.size(), false);
                if (!consumed[i] && it->second[i].matches(request.prompt)) {
                    consumed[i] = true;
                    return it->second[i].text;
                }
            }
        }
        auto wit = wildcard_.find(
            wildcard_key(request.role_tag, request.purpose_tag, request.perspective_tag));
        if (wit != wildcard_.end()) {
            for (const auto& entry : wit->second) {
                if (entry.matches(request.prompt)) return entry.text;
            }
            key_known = true;
        }
        if (key_known) throw ScriptExhausted(key);
        throw ScriptMiss(key);
    }

    void reset_consumption() const {
        std::lock_guard<std::mutex> lock(mutex_);
        consumed_.clear();
    }

    /// Parses one task section of a script file (the {"key": [entries]} map).
    /// Keys use the canonical form with the round field either a number or "*".
    /// Entry values are plain strings or {"when_prompt_contains", "text"}.
    static Script from_json(const nlohmann::json& section);

    /// Loads a version-tagged script file. Two layouts are accepted:
    ///   {"version":1, "entries": {...}}               — applies to every task
    ///   {"version":1, "tasks": {"<task_id>": {...}, "*": {...}}}
    /// Returns the section for `task_id` (falling back to "*" / "entries").
    static Script load_for_task(const std::string& path, const std::string& task_id);

private:
    static std::string wildcard_key(RoleTag role, Purpose purpose,
                                    const std::optional<Perspective>& perspective) {
        std::string p = perspective ? to_string(*perspective) : std::string("-");
        return std::string(to_string(role)) + "|" + to_string(purpose) + "|" + p;
    }

    static bool parse_key(const std::string& key, RoleTag& role, Purpose& purpose,
                          std::optional<Perspective>& perspective, std::string& round_field);

    std::map<std::string, std::vector<ScriptEntry>> entries_;
    std::map<std::string, std::vector<ScriptEntry>> wildcard_;
    mutable std::map<std::string, std::vector<bool>> consumed_;
    mutable std::mutex mutex_;
};

class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        CompletionResponse resp;
        resp.text = script_.next(request);
        resp.prompt_tokens = count_tokens(request.prompt);
        resp.output_tokens = count_tokens(resp.text);
        resp.latency = std::chrono::milliseconds(0);
        return resp;
    }

    std::string name() const override { return "scripted"; }

    const Script& script() const { return script_; }

private:
    Script script_;
};

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpBackendConfig {
    std::string endpoint = "http://localhost:8000/v1/chat/completions";
    std::string model = "default";
    std::string api_key_env = "EPCAW_API_KEY";  // name of the env var holding the key
    int max_attempts = 5;                       // total tries, >= 3 retries on transient failures
    int backoff_base_ms = 250;
    int backoff_cap_ms = 8000;
    int timeout_seconds = 120;
    int seed = 0;  // forwarded in the request body when nonzero
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        split_endpoint(config_.endpoint, base_, path_);
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        nlohmann::json body{
            {"model", config_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output},
        };
        if (config_.seed != 0) body["seed"] = config_.seed;
        const std::string payload = body.dump();

        httplib::Headers headers{{"Content-Type", "application/json"}};
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        int delay_ms = config_.backoff_base_ms;
        std::string last_failure = "no attempt made";
        auto started = std::chrono::steady_clock::now();
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            httplib::Client client(base_);
            client.set_connection_timeout(config_.timeout_seconds, 0);
            client.set_read_timeout(config_.timeout_seconds, 0);
            auto res = client.Post(path_, headers, payload, "application/json");
            if (res && res->status == 200) {
                auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - started);
                return parse_response(res->body, request, latency);
            }
            if (res && !is_transient(res->status)) {
                throw BackendUnavailable("backend returned status " +
                                         std::to_string(res->status) + ": " + res->body);
            }
            last_failure = res ? "status " + std::to_string(res->status)
                               : "transport error " + httplib::to_string(res.error());
            if (attempt < config_.max_attempts) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
                delay_ms = std::min(delay_ms * 2, config_.backoff_cap_ms);
            }
        }
        throw BackendUnavailable("exhausted " + std::to_string(config_.max_attempts) +
                                 " attempts against " + config_.endpoint + " (last: " +
                                 last_failure + ")");
    }

    std::string name() const override { return "http"; }

private:
    static bool is_transient(int status) {
        return status == 408 || status == 429 || status >= 500;
    }

    static void split_endpoint(const std::string& endpoint, std::string& base,
                               std::string& path) {
        auto scheme = endpoint.find("://");
        size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
        auto slash = endpoint.find('/', host_start);
        if (slash == std::string::npos) {
            base = endpoint;
            path = "/v1/chat/completions";
        } else {
            base = endpoint.substr(0, slash);
            path = endpoint.substr(slash);
        }
    }

    CompletionResponse parse_response(const std::string& body, const CompletionRequest& request,
                                      std::chrono::milliseconds latency) const {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            throw BackendUnavailable("malformed completion response: " + body.substr(0, 200));
        }
        CompletionResponse resp;
        resp.text = j["choices"][0].value("message", nlohmann::json::object())
                        .value("content", std::string());
        resp.latency = latency;
        if (j.contains("usage")) {
            resp.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            resp.output_tokens = j["usage"].value("completion_tokens", 0);
            resp.usage_reported = true;
        } else {
            resp.prompt_tokens = count_tokens(request.prompt);
            resp.output_tokens = count_tokens(resp.text);
        }
        return resp;
    }

    HttpBackendConfig config_;
    std::string base_;
    std::string path_;
    std::string api_key_;
};

// ---------------------------------------------------------------------------
// Score parsing
// ---------------------------------------------------------------------------

struct ParsedScores {
    std::vector<double> scores;       // length K, each within [1,5]
    std::vector<int> clamped_plans;   // 1-based plan indices that were clamped
};

/// Extracts one integer per plan from "Plan <k>: <score>" lines. Out-of-range
/// integers clamp into [1,5] and are flagged; a missing or non-integer score
/// throws (the caller owns the single re-prompt budget).
inline ParsedScores parse_score(const std::string& text, int expected_plans) {
    static const std::regex line_re(R"(^\s*Plan\s+(\d+)\s*:\s*(-?\d+)\s*$)");
    std::map<int, long> found;
    for (const auto& line : split_lines(text)) {
        std::smatch m;
        if (std::regex_match(line, m, line_re)) {
            int idx = std::stoi(m[1].str());
            if (!found.count(idx)) found[idx] = std::stol(m[2].str());
        }
    }
    ParsedScores out;
    out.scores.reserve(expected_plans);
    for (int k = 1; k <= expected_plans; ++k) {
        auto it = found.find(k);
        if (it == found.end()) {
            throw ScoreParseFailure("no integer score for plan " + std::to_string(k) +
                                    " in: " + collapse_whitespace(text).substr(0, 120));
        }
        long raw = it->second;
        long clamped = std::min<long>(5, std::max<long>(1, raw));
        if (clamped != raw) out.clamped_plans.push_back(k);
        out.scores.push_back(static_cast<double>(clamped));
    }
    return out;
}

// --- Script file loading ----------------------------------------------------

inline bool Script::parse_key(const std::string& key, RoleTag& role, Purpose& purpose,
                              std::optional<Perspective>& perspective,
                              std::string& round_field) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        auto bar = key.find('|', start);
        if (bar == std::string::npos) {
            parts.push_back(key.substr(start));
            break;
        }
        parts.push_back(key.substr(start, bar - start));
        start = bar + 1;
    }
    if (parts.size() != 4) return false;

    auto parse_role = [](const std::string& s, RoleTag& out) {
        for (RoleTag r : {RoleTag::Planner, RoleTag::Executor, RoleTag::Diagnoser, RoleTag::Judge})
            if (s == to_string(r)) { out = r; return true; }
        return false;
    };
    if (!parse_role(parts[0], role)) return false;

    bool purpose_ok = false;
    for (Purpose p : {Purpose::CandidateGeneration, Purpose::Evaluation, Purpose::Diagnosis,
                      Purpose::ConstraintInduction, Purpose::StopCheck, Purpose::AnswerGeneration,
                      Purpose::ToolArgumentation, Purpose::Judging}) {
        if (parts[1] == to_string(p)) { purpose = p; purpose_ok = true; break; }
    }
    if (!purpose_ok) return false;

    if (parts[2] == "-") {
        perspective.reset();
    } else {
        auto arrow = parts[2].find("->");
        if (arrow == std::string::npos) return false;
        Perspective pv{};
        if (!parse_role(parts[2].substr(0, arrow), pv.evaluator)) return false;
        if (!parse_role(parts[2].substr(arrow + 2), pv.target)) return false;
        perspective = pv;
    }
    round_field = parts[3];
    return true;
}

inline Script Script::from_json(const nlohmann::json& section) {
    Script script;
    for (const auto& [key, value] : section.items()) {
        RoleTag role;
        Purpose purpose;
        std::optional<Perspective> perspective;
        std::string round_field;
        if (!parse_key(key, role, purpose, perspective, round_field)) {
            throw SchemaMismatch("bad script key: " + key);
        }
        auto to_entry = [](const nlohmann::json& v) {
            if (v.is_string()) return ScriptEntry{"", v.get<std::string>()};
            return ScriptEntry{v.value("when_prompt_contains", std::string()),
                               v.at("text").get<std::string>()};
        };
        std::vector<ScriptEntry> list;
        if (value.is_array()) {
            for (const auto& v : value) list.push_back(to_entry(v));
        } else {
            list.push_back(to_entry(value));
        }
        if (round_field == "*") {
            for (auto& e : list) script.add_wildcard(role, purpose, perspective, std::move(e));
        } else {
            const std::string exact = request_key(role, purpose, perspective,
                                                  std::stoi(round_field));
            for (auto& e : list) script.add(exact, std::move(e));
        }
    }
    return script;
}

inline Script Script::load_for_task(const std::string& path, const std::string& task_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open script file", path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SchemaMismatch("script file is not valid JSON: " + path);
    if (doc.value("version", -1) != kScriptFileVersion) {
        throw SchemaMismatch("unsupported script file version in " + path);
    }
    if (doc.contains("entries")) return from_json(doc["entries"]);
    if (doc.contains("tasks")) {
        const auto& tasks = doc["tasks"];
        if (tasks.contains(task_id)) return from_json(tasks[task_id]);
        if (tasks.contains("*")) return from_json(tasks["*"]);
        throw ScriptMiss("task section '" + task_id + "' in " + path);
    }
    throw SchemaMismatch("script file has neither 'entries' nor 'tasks': " + path);
}

}  // namespace epcaw
