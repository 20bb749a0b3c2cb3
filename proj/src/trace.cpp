#include "kc/trace.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kc/numerics.hpp"
#include "kc/parser.hpp"

namespace kc::trace {

namespace {

std::string format_number(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out += '\\';
            out += c;
        } else if (c == '\n') {
            out += "\\n";
        } else {
            out += c;
        }
    }
    return out;
}

void le_append(std::string& buf, const void* p, std::size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n);
}

void append_u64(std::string& buf, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    le_append(buf, b, 8);
}

void append_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    append_u64(buf, bits);
}

}  // namespace

std::string sha256_hex(const unsigned char* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < dlen; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_hex(const std::string& s) {
    return sha256_hex(reinterpret_cast<const unsigned char*>(s.data()),
                      s.size());
}

std::string hash_input(const zoo::KernelInput& input) {
    std::string buf;
    for (const auto& [name, t] : input.tensors) {  // map order = sorted
        buf += name;
        buf += '\0';
        buf += t.format;
        buf += '\0';
        append_u64(buf, t.shape.size());
        for (long d : t.shape) append_u64(buf, std::uint64_t(d));
        append_u64(buf, t.data.size());
        for (double v : t.data) append_f64(buf, v);
    }
    for (const auto& [k, v] : input.attrs) {
        buf += k;
        buf += '\0';
        append_f64(buf, v);
    }
    for (const auto& [k, v] : input.sattrs) {
        buf += k;
        buf += '\0';
        buf += v;
        buf += '\0';
    }
    return sha256_hex(buf);
}

std::string contract_version(const lang::ContractAst& ast) {
    return sha256_hex(lang::canonical_serialize(ast));
}

std::string silicon_profile_json() {
    static const std::string profile = [] {
        const std::string reg = num::FormatRegistry::instance().to_json();
        std::ostringstream os;
        // Keys in lexicographic order so reparse-and-dump round-trips
        // byte-identically through ordered JSON writers.
        os << "{\"arch\":\""
#if defined(__x86_64__)
           << "x86_64"
#elif defined(__aarch64__)
           << "aarch64"
#else
           << "unknown"
#endif
           << "\",\"registry_hash\":\"" << sha256_hex(reg).substr(0, 16)
           << "\",\"toolchain\":\"" <<
#if defined(__GNUC__)
            "gcc-" + std::to_string(__GNUC__) + "." +
                std::to_string(__GNUC_MINOR__)
#else
            std::string("unknown")
#endif
           << "\"}";
        return os.str();
    }();
    return profile;
}

std::string now_rfc3339() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const auto ms =
        duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t t = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                  tm.tm_min, tm.tm_sec, int(ms));
    return buf;
}

void TraceRecord::check() const {
    auto req = [](const std::string& v, const char* name) {
        if (v.empty())
            throw InvalidRecord(std::string("trace record missing field: ") +
                                name);
    };
    req(contract_id, "contract_id");
    req(contract_version, "contract_version");
    req(impl_id, "impl_id");
    req(silicon_profile, "silicon_profile");
    req(input_ref, "input_ref");
    req(residual_kind, "residual_kind");
    req(tolerance_kind, "tolerance_kind");
    req(timestamp, "timestamp");
    if (verdict != "pass" && verdict != "fail")
        throw InvalidRecord("trace record verdict must be pass or fail");
    if (sample_index < 0)
        throw InvalidRecord("trace record sample_index must be >= 0");
}

std::string TraceRecord::to_json() const {
    std::ostringstream os;
    os << "{\"contract_id\":\"" << json_escape(contract_id) << "\""
       << ",\"contract_version\":\"" << json_escape(contract_version) << "\""
       << ",\"impl_id\":\"" << json_escape(impl_id) << "\""
       << ",\"silicon_profile\":" << silicon_profile
       << ",\"input_ref\":\"" << json_escape(input_ref) << "\""
       << ",\"residual_kind\":\"" << residual_kind << "\""
       << ",\"residual\":" << format_number(residual)
       << ",\"tolerance_kind\":\"" << tolerance_kind << "\""
       << ",\"tolerance\":" << format_number(tolerance)
       << ",\"verdict\":\"" << verdict << "\""
       << ",\"sample_index\":" << sample_index << ",\"seed\":" << seed
       << ",\"timestamp\":\"" << timestamp << "\"}";
    return os.str();
}

TraceWriter::TraceWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    auto* f = new std::ofstream(path, std::ios::app);
    if (!*f) {
        delete f;
        throw SinkError("cannot open trace sink: " + path.string());
    }
    stream_ = f;
}

TraceWriter::~TraceWriter() { delete static_cast<std::ofstream*>(stream_); }

void TraceWriter::emit(const TraceRecord& r) {
    r.check();
    auto& f = *static_cast<std::ofstream*>(stream_);
    f << r.to_json() << "\n";
    f.flush();
    if (!f) throw SinkError("trace sink write failed: " + path_.string());
}

std::filesystem::path default_trace_dir() {
    if (const char* env = std::getenv("KC_TRACE_DIR")) return env;
    return "traces";
}

ReadResult parse_traces(const std::string& jsonl) {
    ReadResult out;
    std::istringstream in(jsonl);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            out.diagnostics.push_back("line " + std::to_string(lineno) +
                                      ": malformed JSON");
            continue;
        }
        try {
            TraceRecord r;
            r.contract_id = j.at("contract_id").get<std::string>();
            r.contract_version = j.at("contract_version").get<std::string>();
            r.impl_id = j.at("impl_id").get<std::string>();
            r.silicon_profile = j.at("silicon_profile").dump();
            r.input_ref = j.at("input_ref").get<std::string>();
            r.residual_kind = j.at("residual_kind").get<std::string>();
            r.residual = j.at("residual").is_null()
                             ? std::nan("")
                             : j.at("residual").get<double>();
            r.tolerance_kind = j.at("tolerance_kind").get<std::string>();
            r.tolerance = j.at("tolerance").get<double>();
            r.verdict = j.at("verdict").get<std::string>();
            r.sample_index = j.at("sample_index").get<long>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.timestamp = j.at("timestamp").get<std::string>();
            r.check();
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.diagnostics.push_back("line " + std::to_string(lineno) +
                                      ": " + e.what());
        }
    }
    return out;
}

ReadResult read_traces(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read traces: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_traces(ss.str());
}

std::map<std::pair<std::string, std::string>, Aggregate> summarize_traces(
    const std::vector<TraceRecord>& records) {
    std::map<std::pair<std::string, std::string>, Aggregate> out;
    for (const auto& r : records) {
        Aggregate& a = out[{r.contract_id, r.impl_id}];
        ++a.runs;
        if (r.verdict == "fail") ++a.fails;
        const double res = std::isnan(r.residual) ? 0.0 : r.residual;
        if (res > a.max_residual) a.max_residual = res;
        int bucket;
        if (res < 1e-16) bucket = 0;
        else if (res >= 1.0) bucket = 17;
        else bucket = 1 + std::min(15, int(std::floor(std::log10(res)) + 16));
        ++a.residual_histogram[std::size_t(bucket)];
    }
    return out;
}

// --- retest planner ---------------------------------------------------------

namespace {

struct Version {
    long major = 0, minor = 0, patch = 0;
};

Version parse_version(const std::string& s) {
    Version v;
    int n = 0;
    char extra;
    n = std::sscanf(s.c_str(), "%ld.%ld.%ld%c", &v.major, &v.minor, &v.patch,
                    &extra);
    if (n == 3 || n == 2) return v;
    if (std::sscanf(s.c_str(), "%ld.%ld%c", &v.major, &v.minor, &extra) == 2)
        return v;
    if (std::sscanf(s.c_str(), "%ld%c", &v.major, &extra) == 1) return v;
    throw VersionParseError("cannot parse version: " + s);
}

const std::set<std::string> kConditional = {"C-PRC-02", "C-PRC-04",
                                            "C-CMP-01"};
const std::set<std::string> kMajorOnly = {"C-ORD-02", "C-ORD-03", "C-CMP-03"};

// Subsystem tags that match each conditional contract: family tag, the
// contract id itself, or an op-class tag.
const std::map<std::string, std::set<std::string>> kSubsystemTags = {
    {"C-PRC-02", {"PRC", "softmax", "variance", "log_sum_exp"}},
    {"C-PRC-04", {"PRC", "training", "loss_scale"}},
    {"C-CMP-01", {"CMP", "matmul", "fusion"}},
};

}  // namespace

const std::vector<std::string>& all_contract_classes() {
    static const std::vector<std::string> classes = {
        "C-PRC-01", "C-PRC-02", "C-PRC-03", "C-PRC-04",
        "C-ORD-01", "C-ORD-02", "C-ORD-03",
        "C-CMP-01", "C-CMP-02", "C-CMP-03",
        "C-EXC-01", "C-EXC-02"};
    return classes;
}

const std::set<std::string>& always_retest_set() {
    static const std::set<std::string> always = {
        "C-PRC-01", "C-PRC-03", "C-ORD-01",
        "C-CMP-02", "C-EXC-01", "C-EXC-02"};
    return always;
}

RetestPlan retest_plan(const std::string& from_version,
                       const std::string& to_version,
                       const std::set<std::string>& subsystems,
                       const std::vector<std::string>& contract_set) {
    const Version from = parse_version(from_version);
    const Version to = parse_version(to_version);
    RetestPlan plan;
    plan.from_version = from_version;
    plan.to_version = to_version;
    plan.release_note_subsystems = subsystems;
    plan.change_class = from.major != to.major ? ChangeClass::Major
                        : from.minor != to.minor ? ChangeClass::Minor
                                                 : ChangeClass::Patch;
    const bool major = plan.change_class == ChangeClass::Major;
    for (const auto& id : contract_set) {
        RetestDecision d;
        if (always_retest_set().count(id)) {
            d.retest = true;
            d.reason = "always-retest contract";
        } else if (major) {
            // Major bump: conditional and major-only sets both retest
            // (union semantics).
            d.retest = true;
            d.reason = "major version change";
        } else if (kConditional.count(id)) {
            auto it = kSubsystemTags.find(id);
            bool hit = subsystems.count(id) > 0;
            if (it != kSubsystemTags.end())
                for (const auto& tag : it->second)
                    if (subsystems.count(tag)) hit = true;
            d.retest = hit;
            d.reason = hit ? "release notes mention affected subsystem"
                           : "no affected subsystem in release notes";
        } else if (kMajorOnly.count(id)) {
            d.retest = false;
            d.reason = "retest once per major version only";
        } else {
            d.retest = false;
            d.reason = "no policy entry; defaults to skip";
        }
        plan.per_contract[id] = d;
    }
    return plan;
}

std::set<std::string> RetestPlan::retest_set() const {
    std::set<std::string> out;
    for (const auto& [id, d] : per_contract)
        if (d.retest) out.insert(id);
    return out;
}

std::string RetestPlan::to_json() const {
    std::ostringstream os;
    os << "{\"from_version\":\"" << from_version << "\",\"to_version\":\""
       << to_version << "\",\"change_class\":\""
       << (change_class == ChangeClass::Major   ? "major"
           : change_class == ChangeClass::Minor ? "minor"
                                                : "patch")
       << "\",\"release_note_subsystems\":[";
    bool first = true;
    for (const auto& s : release_note_subsystems) {
        if (!first) os << ",";
        first = false;
        os << "\"" << s << "\"";
    }
    os << "],\"per_contract\":{";
    first = true;
    for (const auto& [id, d] : per_contract) {
        if (!first) os << ",";
        first = false;
        os << "\"" << id << "\":{\"retest\":" << (d.retest ? "true" : "false")
           << ",\"reason\":\"" << json_escape(d.reason) << "\"}";
    }
    os << "}}";
    return os.str();
}

}  // namespace kc::trace
