// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace epcaw {

/// Base class for every error raised by the engine.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotPlannerMemory : Error {
    NotPlannerMemory() : Error("constraints can only be appended to Planner memory") {}
};

struct ContextOverflow : Error {
    explicit ContextOverflow(int needed, int budget)
        : Error("context overflow: query + role need " + std::to_string(needed) +
                " tokens, budget is " + std::to_string(budget)) {}
};

struct BackendUnavailable : Error {
    using Error::Error;
};

struct ScriptMiss : Error {
    explicit ScriptMiss(const std::string& key) : Error("no script entry for key " + key) {}
};

struct ScriptExhausted : Error {
    explicit ScriptExhausted(const std::string& key)
        : Error("script entries exhausted for key " + key) {}
};

struct ScoreParseFailure : Error {
    using Error::Error;
};

struct CandidateParseFailure : Error {
    using Error::Error;
};

struct UnknownTool : Error {
    explicit UnknownTool(const std::string& tool_id) : Error("unknown tool: " + tool_id) {}
};

struct InvalidRollbackTarget : Error {
    explicit InvalidRollbackTarget(int target, int current)
        : Error("rollback target " + std::to_string(target) + " is past current round " +
                std::to_string(current)) {}
};

struct MalformedRecord : Error {
    MalformedRecord(int line, const std::string& field)
        : Error("malformed dataset record at line " + std::to_string(line) +
                ": missing or empty field '" + field + "'"),
          line_number(line), missing_field(field) {}
    int line_number;
    std::string missing_field;
};

struct EmptyRun : Error {
    EmptyRun() : Error("metrics requested for an empty verdict list") {}
};

struct SchemaMismatch : Error {
    using Error::Error;
};

struct IoError : Error {
    IoError(const std::string& what, const std::string& path)
        : Error(what + ": " + path), path(path) {}
    std::string path;
};

struct UsageError : Error {
    using Error::Error;
};

}  // namespace epcaw
