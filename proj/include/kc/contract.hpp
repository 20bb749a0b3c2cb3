// AST for the eight-part kernel contract language.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace kc::lang {

enum class PredicateKind { Precision, Shape, ValueRange, Env, Version, Freeform };

struct Predicate {
    PredicateKind kind = PredicateKind::Freeform;
    std::string text;                   // normalized clause text
    std::vector<std::string> tensors;   // precision / value_range / shape
    std::vector<std::string> formats;   // precision
    bool operator==(const Predicate&) const = default;
};

// The paper's scope lines range from a clean comma list ("matmul, reduction")
// to prose ("all floating-point kernels", "kernels using atomicAdd"). A clean
// identifier list is taken literally; otherwise built-in op-class names are
// extracted from the prose and, when none occur, the scope is universal.
struct ScopeClause {
    std::vector<std::string> classes;
    bool universal = false;
    std::string text;
    bool covers(const std::string& op_class) const;
    bool operator==(const ScopeClause&) const = default;
};

struct Relation {
    std::string text;
    std::vector<std::string> policy_set;  // RAISE | CLAMP | ... alternations
    std::string raises;                   // exception class after "raise"
    bool operator==(const Relation&) const = default;
};

struct ToleranceSpec {
    enum class Kind { Absolute, Relative, Ulp, Elementwise, PerPrecision, None };
    Kind kind = Kind::None;
    double value = 0.0;
    std::string formula;  // symbolic bound, e.g. "N * eps(P) * max|x|"
    std::string note;     // trailing prose kept for round-tripping
    std::vector<std::string> keys;          // per_precision
    std::vector<ToleranceSpec> children;    // per_precision / elementwise
    bool has_numeric_bound() const;
    const ToleranceSpec* resolve(const std::string& key) const;
    bool operator==(const ToleranceSpec&) const = default;
};

struct RefSpec {
    enum class Kind { HigherPrecision, AlternateStack, Algebraic,
                      StableAlgorithm, Spec };
    Kind kind = Kind::Spec;
    std::string target;  // format / stack id / property / algorithm / spec text
    std::map<std::string, std::string> options;  // higher_precision "with" opts
    std::string note;
    bool operator==(const RefSpec&) const = default;
};

struct Protocol {
    enum class Kind { Sample, Sweep, Inject, Enumerate, Repeat, Custom };
    enum class Anomaly { None, NearSaturation, WideDynamicRange, Exceptional,
                         Denormal, IndexMix };
    Kind kind = Kind::Custom;
    std::string text;
    long count = -1;               // sample / repeat, -1 when unstated
    std::string param;             // swept parameter
    std::vector<double> values;    // swept value set
    bool holdout = false;          // held-out / non-benchmarked sweep
    Anomaly anomaly = Anomaly::None;
    bool operator==(const Protocol&) const = default;
};

struct ViolationSignature {
    enum class Matcher { None, SaturationAtValue, PolicyMismatch,
                         ToleranceExceededFraction, BitwiseMismatch,
                         HoldoutDivergence };
    Matcher matcher = Matcher::None;
    double saturation_value = 0.0;
    bool has_saturation_value = false;
    std::string text;  // always preserved verbatim (normalized)
    bool operator==(const ViolationSignature&) const = default;
};

struct ContractAst {
    std::string id;
    ScopeClause scope;
    std::vector<Predicate> pre;
    Relation post;
    ToleranceSpec tolerance;
    RefSpec reference;
    Protocol measure;
    ViolationSignature violation;
    bool operator==(const ContractAst&) const = default;
};

// --- errors -----------------------------------------------------------------

struct ParseError : std::runtime_error {
    int line = 0, column = 0;
    ParseError(const std::string& msg, int l, int c)
        : std::runtime_error(msg), line(l), column(c) {}
};

struct SyntaxError : ParseError {
    std::vector<std::string> expected;
    SyntaxError(const std::string& msg, int l, int c,
                std::vector<std::string> exp = {})
        : ParseError(msg, l, c), expected(std::move(exp)) {}
};

struct MissingPartError : ParseError {
    std::vector<std::string> parts;
    MissingPartError(const std::string& msg, std::vector<std::string> p,
                     int l, int c)
        : ParseError(msg, l, c), parts(std::move(p)) {}
};

struct DuplicatePartError : ParseError {
    std::string part;
    DuplicatePartError(const std::string& msg, std::string p, int l, int c)
        : ParseError(msg, l, c), part(std::move(p)) {}
};

}  // namespace kc::lang
