// JSONL trace records, content hashing, and the version-diff retest planner.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kc/contract.hpp"
#include "kc/kernels.hpp"

namespace kc::trace {

struct SinkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidRecord : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One verification call. Field order in JSONL output is fixed:
// contract_id, contract_version, impl_id, silicon_profile, input_ref,
// residual_kind, residual, tolerance_kind, tolerance, verdict, sample_index,
// seed, timestamp.
struct TraceRecord {
    std::string contract_id;
    std::string contract_version;
    std::string impl_id;
    std::string silicon_profile;  // JSON object (host descriptor)
    std::string input_ref;        // 64-hex-char content hash or inline ref
    std::string residual_kind;    // absolute | relative | ulp | none
    double residual = 0.0;
    std::string tolerance_kind;
    double tolerance = 0.0;
    std::string verdict;  // pass | fail
    long sample_index = 0;
    std::uint64_t seed = 0;
    std::string timestamp;  // RFC 3339 UTC, millisecond precision

    std::string to_json() const;
    // Throws InvalidRecord when a required field is missing/malformed.
    void check() const;
};

std::string sha256_hex(const unsigned char* data, std::size_t len);
std::string sha256_hex(const std::string& s);

// Canonical little-endian serialization of shapes + formats + data + attrs.
std::string hash_input(const zoo::KernelInput& input);

// Digest of the contract's canonical text; any textual change to a contract
// changes its version automatically.
std::string contract_version(const lang::ContractAst& ast);

// Host descriptor: emulated-format registry hash, arch, toolchain.
std::string silicon_profile_json();

std::string now_rfc3339();

// Round-trip helpers ---------------------------------------------------------

class TraceWriter {
  public:
    explicit TraceWriter(const std::filesystem::path& path);
    ~TraceWriter();
    void emit(const TraceRecord& r);  // one line per record, flushed
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
    void* stream_;  // std::ofstream, opaque to keep the header light
};

// Default trace directory; env var KC_TRACE_DIR overrides.
std::filesystem::path default_trace_dir();

struct ReadResult {
    std::vector<TraceRecord> records;
    std::vector<std::string> diagnostics;  // "line N: reason"
};
ReadResult read_traces(const std::filesystem::path& path);
ReadResult parse_traces(const std::string& jsonl);

struct Aggregate {
    long runs = 0;
    long fails = 0;
    double max_residual = 0.0;
    // Log-spaced decade buckets: (-inf,1e-16), [1e-16,1e-15), ..,
    // [1e-1,1e0), [1e0,inf) — 18 buckets.
    std::vector<long> residual_histogram = std::vector<long>(18, 0);
};
std::map<std::pair<std::string, std::string>, Aggregate> summarize_traces(
    const std::vector<TraceRecord>& records);

// Retest planner -------------------------------------------------------------

enum class ChangeClass { Patch, Minor, Major };

struct RetestDecision {
    bool retest = false;
    std::string reason;
};

struct RetestPlan {
    std::string from_version, to_version;
    ChangeClass change_class = ChangeClass::Patch;
    std::set<std::string> release_note_subsystems;
    std::map<std::string, RetestDecision> per_contract;
    std::set<std::string> retest_set() const;
    std::string to_json() const;
};

// The twelve contract classes with their retest policies.
const std::vector<std::string>& all_contract_classes();
const std::set<std::string>& always_retest_set();

RetestPlan retest_plan(const std::string& from_version,
                       const std::string& to_version,
                       const std::set<std::string>& release_note_subsystems,
                       const std::vector<std::string>& contract_set =
                           all_contract_classes());

}  // namespace kc::trace
