// Release acceptance checklist. Each numbered criterion prints one PASS/FAIL
// line; the process exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kc/freivalds.hpp"
#include "kc/harness.hpp"
#include "kc/parser.hpp"
#include "kc/trace.hpp"
#include "oracles.hpp"

using namespace kc;

namespace {

int g_failures = 0;

void report(int n, bool pass, const std::string& what,
            const std::string& detail = "") {
    std::printf("criterion %2d: %s — %s%s%s\n", n, pass ? "PASS" : "FAIL",
                what.c_str(), detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

harness::RunOptions budget256(std::uint64_t seed = 42) {
    harness::RunOptions o;
    o.seed = seed;
    o.sample_budget = 256;
    o.real_timestamps = false;
    return o;
}

std::string stem_of(const std::string& contract_id) {
    std::string s = contract_id;
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// --- 1: corpus parse / validate / round-trip --------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    auto corpus = lang::parse_corpus(KC_CONTRACTS_DIR);
    if (corpus.size() != 18) {
        ok = false;
        detail = "expected 18 contracts, found " +
                 std::to_string(corpus.size());
    }
    for (const auto& e : corpus) {
        if (!e.ok()) {
            ok = false;
            detail = e.name + ": " + std::get<std::string>(e.result);
            break;
        }
        const auto& ast = std::get<lang::ContractAst>(e.result);
        if (lang::validate(ast).error_count() != 0) {
            ok = false;
            detail = e.name + ": validation errors";
            break;
        }
        if (lang::parse_contract(lang::canonical_serialize(ast)) != ast) {
            ok = false;
            detail = e.name + ": round-trip mismatch";
            break;
        }
    }
    const double dt = seconds_since(t0);
    if (ok && dt >= 1.0) {
        ok = false;
        detail = "took " + std::to_string(dt) + " s (limit 1 s)";
    }
    report(1, ok, "18-contract corpus parses, validates clean and round-trips",
           detail);
}

// --- 2: three-state calibration across all executable classes ---------------

void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    const auto& triples = harness::calibration_triples();
    if (triples.size() != 11) {
        ok = false;
        detail = "expected 11 calibration triples";
    }
    for (const auto& t : triples) {
        auto ast = oracles::load_contract(stem_of(t.contract_id));
        auto v = harness::three_state_calibrate(ast, t, budget256());
        if (!v.separated) {
            ok = false;
            detail = t.contract_id + " not separated";
            break;
        }
    }
    const double dt = seconds_since(t0);
    if (ok && dt >= 120.0) {
        ok = false;
        detail = "took " + std::to_string(dt) + " s (limit 120 s)";
    }
    report(2, ok,
           "good/bad/baseline separation holds for all 11 executable classes",
           detail);
}

// --- 3: saturation-collapse detection ---------------------------------------

void criterion_3() {
    bool ok = true;
    std::string detail;
    auto ast = oracles::load_contract("c-prc-01-fp8-accumulator");
    auto bad = harness::run_protocol(
        ast, zoo::Zoo::instance().get("matmul.bad"), budget256());
    if (bad.verdict != harness::Verdict::Violating || !bad.matched_signature ||
        bad.failures.empty()) {
        ok = false;
        detail = "saturating matmul not flagged";
    }
    for (const auto& f : bad.failures)
        if (std::abs(f.max_abs_output - 65504.0) > 0.01 * 65504.0) {
            ok = false;
            detail = "failure magnitude " + std::to_string(f.max_abs_output) +
                     " not at the FP16 ceiling";
            break;
        }
    auto good = harness::run_protocol(
        ast, zoo::Zoo::instance().get("matmul.good"), budget256());
    if (!good.conforming() || good.max_residual > 1e-5) {
        ok = false;
        detail = "conforming matmul residual " +
                 std::to_string(good.max_residual);
    }
    report(3, ok,
           "near-saturation probe pins the bad matmul at 65504 and clears the "
           "good one at rel 1e-5",
           detail);
}

// --- 4: schedule-stability bound for the good reduce ------------------------

void criterion_4() {
    bool ok = true;
    std::string detail;
    const double bound = 1024.0 * std::ldexp(1.0, -23);
    const auto& impl = zoo::Zoo::instance().get("reduce.good");
    for (std::uint64_t seed = 1; seed <= 100 && ok; ++seed) {
        rng::SplitMix64 r(rng::substream(seed, 4));
        zoo::KernelInput in;
        in.tensors["x"] =
            oracles::tensor({1024}, oracles::uniform_vec(r, 1024, -1.0, 1.0));
        in.sattrs["op"] = "sum";
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        for (long s = 0; s < 8; ++s) {
            zoo::InvocationContext ctx;
            ctx.schedule = s;
            const double v = impl.entry(in, ctx).tensors.at("y").data[0];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > bound) {
            ok = false;
            detail = "seed " + std::to_string(seed) + ": spread " +
                     std::to_string(hi - lo) + " > " + std::to_string(bound);
        }
    }
    report(4, ok,
           "8 block schedules stay within 1024*eps(FP32) over 100 fuzz seeds",
           detail);
}

// --- 5: bitwise-determinism contract and its violator -----------------------

void criterion_5() {
    bool ok = true;
    std::string detail;
    const auto& good = zoo::Zoo::instance().get("reduce.good");
    const auto& bad = zoo::Zoo::instance().get("reduce.bad");

    rng::SplitMix64 r(rng::substream(42, 5));
    zoo::KernelInput in;
    in.tensors["x"] =
        oracles::tensor({1024}, oracles::uniform_vec(r, 1024, 0.0, 1.0));
    in.sattrs["op"] = "sum";

    std::vector<double> anchor;
    for (std::uint64_t i = 0; i < 100; ++i) {
        zoo::InvocationContext ctx;
        ctx.seed = rng::substream(7, i);
        auto y = good.entry(in, ctx).tensors.at("y").data;
        if (i == 0)
            anchor = y;
        else if (!oracles::bitwise_equal(y, anchor)) {
            ok = false;
            detail = "declared-bitwise reduce diverged on invocation " +
                     std::to_string(i);
        }
    }

    int seeds_caught = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        rng::SplitMix64 rs(rng::substream(seed, 55));
        zoo::KernelInput bin;
        bin.tensors["x"] =
            oracles::tensor({1024}, oracles::uniform_vec(rs, 1024, 0.0, 1.0));
        bin.sattrs["op"] = "sum";
        std::vector<double> first;
        bool diverged = false;
        for (std::uint64_t i = 0; i < 100 && !diverged; ++i) {
            zoo::InvocationContext ctx;
            ctx.seed = rng::substream(seed, 1000 + i);
            auto y = bad.entry(bin, ctx).tensors.at("y").data;
            if (i == 0)
                first = y;
            else
                diverged = !oracles::bitwise_equal(y, first);
        }
        if (diverged) ++seeds_caught;
    }
    if (seeds_caught < 99) {
        ok = false;
        detail = "shuffled-order reduce caught on only " +
                 std::to_string(seeds_caught) + "/100 seeds";
    }
    report(5, ok,
           "100 invocations are ulp-0 identical for the good reduce; the "
           "reordering one trips on >= 99/100 seeds",
           detail);
}

// --- 6: out-of-bounds policy enumeration ------------------------------------

void criterion_6() {
    bool ok = true;
    std::string detail;
    const auto& z = zoo::Zoo::instance();
    const long bound = 16;

    auto clamp_oracle = [&](const std::vector<double>& data,
                            const std::vector<double>& idx) {
        std::vector<double> y;
        for (double di : idx)
            y.push_back(data[std::size_t(
                std::clamp(long(di), 0L, bound - 1))]);
        return y;
    };
    auto zero_oracle = [&](const std::vector<double>& data,
                           const std::vector<double>& idx) {
        std::vector<double> y;
        for (double di : idx) {
            const long i = long(di);
            y.push_back(i >= 0 && i < bound ? data[std::size_t(i)] : 0.0);
        }
        return y;
    };

    for (std::uint64_t trial = 0; trial < 1000 && ok; ++trial) {
        rng::SplitMix64 r(rng::substream(trial, 6));
        zoo::KernelInput in;
        auto data = oracles::uniform_vec(r, std::size_t(bound), 0.5, 1.5);
        std::vector<double> idx(8);
        bool has_oob = false;
        for (double& v : idx) {
            const long i = long(r.below(std::uint64_t(bound) + 8)) - 4;
            v = double(i);
            has_oob = has_oob || i < 0 || i >= bound;
        }
        if (!has_oob) idx[0] = double(bound + 3);
        in.tensors["data"] = oracles::tensor({bound}, data);
        in.tensors["indices"] = oracles::tensor({long(idx.size())}, idx);
        in.attrs["bound"] = double(bound);
        zoo::InvocationContext ctx;
        ctx.seed = trial;

        auto raise = z.get("gather.good_raise").entry(in, ctx);
        if (!raise.raised() || raise.exception->kind != "index_out_of_bounds") {
            ok = false;
            detail = "declared-RAISE gather did not raise";
        }
        auto clamp = z.get("gather.good_clamp").entry(in, ctx);
        if (clamp.raised() ||
            clamp.tensors.at("y").data != clamp_oracle(data, idx)) {
            ok = false;
            detail = "declared-CLAMP gather mismatched the clamp oracle";
        }
        auto zero = z.get("gather.good_zero").entry(in, ctx);
        if (zero.raised() ||
            zero.tensors.at("y").data != zero_oracle(data, idx)) {
            ok = false;
            detail = "declared-ZERO gather mismatched the zero oracle";
        }
        auto bad = z.get("gather.bad").entry(in, ctx);
        if (bad.raised() ||
            bad.tensors.at("y").data == clamp_oracle(data, idx) ||
            bad.tensors.at("y").data == zero_oracle(data, idx)) {
            ok = false;
            detail = "undeclared gather matched a candidate policy";
        }
    }
    report(6, ok,
           "undeclared gather matches no candidate policy; declared variants "
           "match exactly over 1000 index fuzz trials",
           detail);
}

// --- 7: corruption-sensitivity structure ------------------------------------

void criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    freivalds::VerifierConfig cfg;
    cfg.k = 20;
    auto rows = freivalds::sensitivity_experiment(
        256, 128, 64, {0.1, 0.5, 1.0, 1.5, 3.0, 10.0}, 40, cfg);
    auto want = [&](std::size_t i, int lo, int hi) {
        if (rows[i].detected < lo || rows[i].detected > hi) {
            ok = false;
            detail = "at " + std::to_string(rows[i].multiplier) + "x: " +
                     std::to_string(rows[i].detected) + "/40 detections";
        }
    };
    want(0, 0, 0);
    want(1, 0, 0);
    want(2, 1, 39);  // strictly inside (0, 40) at the threshold itself
    want(3, 40, 40);
    want(4, 40, 40);
    want(5, 40, 40);
    const double dt = seconds_since(t0);
    if (ok && dt >= 30.0) {
        ok = false;
        detail = "took " + std::to_string(dt) + " s (limit 30 s)";
    }
    report(7, ok,
           "detection is 0/40 below threshold, 40/40 above, intermediate at "
           "exactly 1x",
           detail);
}

// --- 8: zero false positives on correct products ----------------------------

void criterion_8() {
    const auto t0 = std::chrono::steady_clock::now();
    freivalds::VerifierConfig cfg;
    cfg.k = 40;
    const int fp = freivalds::soundness_spot_check(500, 256, cfg);
    bool ok = fp == 0;
    std::string detail =
        ok ? "" : std::to_string(fp) + " false positives in 500 trials";
    const double dt = seconds_since(t0);
    if (ok && dt >= 60.0) {
        ok = false;
        detail = "took " + std::to_string(dt) + " s (limit 60 s)";
    }
    report(8, ok, "500 correct products at k=40 produce no false positive",
           detail);
}

// --- 9: batched / naive verifier equivalence --------------------------------

void criterion_9() {
    bool ok = true;
    std::string detail;
    rng::SplitMix64 r(9);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const int m = 8 + int(r.below(57));
        const int n = 8 + int(r.below(57));
        const int p = 8 + int(r.below(57));
        freivalds::Matrix A(m, n), B(n, p);
        for (Eigen::Index i = 0; i < A.size(); ++i)
            A.data()[i] = r.uniform(-1.0, 1.0);
        for (Eigen::Index i = 0; i < B.size(); ++i)
            B.data()[i] = r.uniform(-1.0, 1.0);
        freivalds::Matrix C = A * B;
        if (trial % 2 == 1)
            C(int(r.below(std::uint64_t(m))), int(r.below(std::uint64_t(p)))) +=
                r.uniform(0.5, 5.0);
        freivalds::VerifierConfig cfg;
        cfg.seed = r.next();
        cfg.mode = freivalds::Mode::Batched;
        auto vb = freivalds::verify(A, B, C, cfg);
        cfg.mode = freivalds::Mode::Naive;
        auto vn = freivalds::verify(A, B, C, cfg);
        if (vb.pass != vn.pass) {
            ok = false;
            detail = "verdicts disagree on trial " + std::to_string(trial);
            break;
        }
        const double tol = 4.0 * std::ldexp(1.0, -23) * double(n);
        for (int j = 0; j < cfg.k; ++j)
            if (std::abs(vb.per_iteration_residuals[std::size_t(j)] -
                         vn.per_iteration_residuals[std::size_t(j)]) > tol) {
                ok = false;
                detail = "residual gap beyond 4*eps32*n on trial " +
                         std::to_string(trial);
            }
    }
    report(9, ok,
           "batched and naive modes agree on 100 random instances (verdicts "
           "and residuals)",
           detail);
}

// --- 10: verification overhead shrinks with problem size --------------------

void criterion_10() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    freivalds::VerifierConfig cfg;
    cfg.k = 10;
    auto rows = freivalds::overhead_benchmark({256, 512, 1024, 2048}, cfg);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].batched_ms > rows[i].naive_ms) {
            ok = false;
            detail = "batched slower than naive at n=" +
                     std::to_string(rows[i].n);
        }
        if (i > 0 && (rows[i].batched_pct >= rows[i - 1].batched_pct ||
                      rows[i].naive_pct >= rows[i - 1].naive_pct)) {
            ok = false;
            detail = "overhead not strictly decreasing at n=" +
                     std::to_string(rows[i].n);
        }
    }
    const double dt = seconds_since(t0);
    if (ok && dt >= 120.0) {
        ok = false;
        detail = "took " + std::to_string(dt) + " s (limit 120 s)";
    }
    report(10, ok,
           "relative verification cost strictly decreases over sizes "
           "256..2048 in both modes",
           detail);
}

// --- 11: minor-version retest set -------------------------------------------

void criterion_11() {
    auto plan = trace::retest_plan("6.2", "6.3", {});
    const std::set<std::string> want = {"C-PRC-01", "C-PRC-03", "C-ORD-01",
                                       "C-CMP-02", "C-EXC-01", "C-EXC-02"};
    const bool ok = plan.retest_set() == want;
    report(11, ok, "6.2 to 6.3 with empty release notes retests exactly the "
                   "six always-retest contracts");
}

// --- 12: trace emission, schema and reproducibility -------------------------

void criterion_12() {
    namespace fs = std::filesystem;
    bool ok = true;
    std::string detail;
    auto ast = oracles::load_contract("c-cmp-01");
    const auto& impl = zoo::Zoo::instance().get("fused_bias_gelu_matmul.good");

    auto run_to_file = [&](const fs::path& path) {
        fs::remove(path);
        trace::TraceWriter w(path);
        harness::RunOptions o = budget256();
        o.sink = [&](const trace::TraceRecord& rec) { w.emit(rec); };
        return harness::run_protocol(ast, impl, o);
    };

    const fs::path f1 = fs::temp_directory_path() / "acceptance_run1.jsonl";
    const fs::path f2 = fs::temp_directory_path() / "acceptance_run2.jsonl";
    run_to_file(f1);
    run_to_file(f2);

    auto r1 = trace::read_traces(f1);
    auto r2 = trace::read_traces(f2);
    if (!r1.diagnostics.empty() || r1.records.size() != 256 ||
        r2.records.size() != 256) {
        ok = false;
        detail = "expected 256 clean records, got " +
                 std::to_string(r1.records.size());
    }
    const std::vector<std::string> fields = {
        "contract_id", "contract_version", "impl_id",      "silicon_profile",
        "input_ref",   "residual_kind",    "residual",     "tolerance_kind",
        "tolerance",   "verdict",          "sample_index", "seed",
        "timestamp"};
    std::istringstream lines(oracles::read_file(f1.string()));
    std::string line;
    while (ok && std::getline(lines, line)) {
        auto j = nlohmann::json::parse(line);
        for (const auto& f : fields)
            if (!j.contains(f)) {
                ok = false;
                detail = "record missing field " + f;
            }
        if (j.size() != fields.size()) {
            ok = false;
            detail = "record carries unexpected fields";
        }
    }
    for (std::size_t i = 0; ok && i < r1.records.size(); ++i) {
        if (r1.records[i].residual != r2.records[i].residual ||
            r1.records[i].input_ref != r2.records[i].input_ref) {
            ok = false;
            detail = "re-run diverged at sample " + std::to_string(i);
        }
        if (r1.records[i].to_json() != r2.records[i].to_json()) {
            ok = false;
            detail = "serialized records differ at sample " + std::to_string(i);
        }
    }
    fs::remove(f1);
    fs::remove(f2);
    report(12, ok,
           "a 256-sample run emits 256 full-schema trace records and replays "
           "bit-identically",
           detail);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();
    if (g_failures == 0)
        std::printf("all 12 acceptance criteria pass\n");
    else
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
