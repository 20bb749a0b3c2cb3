// Executes a contract's measurement protocol against a registered kernel and
// runs three-state calibration (good / bad / baseline).
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kc/contract.hpp"
#include "kc/kernels.hpp"
#include "kc/trace.hpp"

namespace kc::harness {

// Raised for free-text protocols (e.g. training-loop measures) that the
// harness refuses to guess at.
struct UnsupportedProtocol : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Raised when no input generator / oracle exists for (protocol, op class).
struct OracleUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedReference : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything the signature matchers need about one failing (or passing)
// sample, independent of the protocol that produced it.
struct SampleEvidence {
    long sample_index = 0;
    double residual = 0.0;
    double max_abs_output = 0.0;
    bool in_benchmarked_set = true;
    bool matches_declared_policy = true;
    bool matches_any_policy = true;
};

enum class Verdict { Conforming, Violating, NotApplicable };

struct ConformanceReport {
    std::string contract_id;
    std::string contract_version;
    std::string impl_id;
    Verdict verdict = Verdict::Conforming;
    long sample_count = 0;
    long failure_count = 0;
    long benchmarked_passes = 0;  // holdout sweeps: passes inside B
    double max_residual = 0.0;
    double mean_residual = 0.0;
    double bound = 0.0;  // last-evaluated tolerance bound
    bool matched_signature = false;
    std::string signature_details;
    std::uint64_t seed = 0;
    std::vector<SampleEvidence> failures;

    bool conforming() const { return verdict == Verdict::Conforming; }
    // 0 conforming, 1 violating, 2 not_applicable.
    int exit_code() const;
    std::string verdict_name() const;
    std::string to_json() const;
};

struct RunOptions {
    std::uint64_t seed = 42;
    long sample_budget = 256;
    // Receives one record per verification call, in sample order.
    std::function<void(const trace::TraceRecord&)> sink;
    // When false, records carry a fixed epoch timestamp (byte-stable output).
    bool real_timestamps = true;
};

ConformanceReport run_protocol(const lang::ContractAst& contract,
                               const zoo::KernelImpl& impl,
                               const RunOptions& opts = {});

// Structured matcher over the failing/passing evidence of one run.
// Free-text-only signatures return false with reason "unstructured signature".
bool match_violation_signature(const lang::ViolationSignature& sig,
                               const ConformanceReport& report,
                               std::string* details = nullptr);

struct StateOutcome {
    bool smoke_pass = false;
    bool contract_pass = false;
};

struct CalibrationVerdict {
    std::string contract_id;
    bool separated = false;
    std::map<std::string, StateOutcome> per_state;  // baseline | bad | good
    ConformanceReport good_report, bad_report;
    std::string to_json() const;
};

struct Triple {
    std::string contract_id;  // corpus id this triple calibrates
    std::string good, bad, baseline;
};

// The shipped triples for the 11 executable contract classes.
const std::vector<Triple>& calibration_triples();
const Triple* find_triple(const std::string& contract_id);

CalibrationVerdict three_state_calibrate(const lang::ContractAst& contract,
                                         const Triple& triple,
                                         const RunOptions& opts = {});

}  // namespace kc::harness
