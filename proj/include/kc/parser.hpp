// Lex, parse, validate and canonically serialize kernel contracts.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kc/contract.hpp"

namespace kc::lang {

// Parses one contract from UTF-8 source. Comments run from `#` or `--` to end
// of line. Throws SyntaxError / MissingPartError / DuplicatePartError.
ContractAst parse_contract(const std::string& source);

// Deterministic text form; parse_contract(canonical_serialize(a)) == a.
std::string canonical_serialize(const ContractAst& ast);

struct Finding {
    std::string rule;
    std::string severity;  // "error" | "warning"
    std::string message;
    int line = 0;
    int column = 0;
    bool operator==(const Finding&) const = default;
};

struct ValidationReport {
    std::vector<Finding> findings;
    int error_count() const;
    int warning_count() const;
    std::string to_json() const;
};

// Built-in op classes plus the numerics format registry.
ValidationReport validate(const ContractAst& ast);

bool is_builtin_op_class(const std::string& name);

struct CorpusEntry {
    std::string name;  // file stem
    std::variant<ContractAst, std::string> result;  // AST or error message
    bool ok() const { return std::holds_alternative<ContractAst>(result); }
};

// Parses every `.kc` file in a directory (sorted by name); per-file failures
// are carried as values. Throws std::runtime_error only if the directory is
// unreadable.
std::vector<CorpusEntry> parse_corpus(const std::filesystem::path& dir);

}  // namespace kc::lang
