#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "kc/harness.hpp"
#include "oracles.hpp"

using namespace kc::harness;
using kc::lang::ContractAst;
using kc::lang::ViolationSignature;
using kc::zoo::Zoo;

namespace {

RunOptions quick(long budget = 64, std::uint64_t seed = 42) {
    RunOptions o;
    o.sample_budget = budget;
    o.seed = seed;
    o.real_timestamps = false;
    return o;
}

ConformanceReport run(const std::string& contract_stem,
                      const std::string& impl_id, long budget = 64,
                      std::uint64_t seed = 42) {
    return run_protocol(oracles::load_contract(contract_stem),
                        Zoo::instance().get(impl_id), quick(budget, seed));
}

}  // namespace

TEST_CASE("saturation contract: violating and conforming matmuls") {
    auto bad = run("c-prc-01-fp8-accumulator", "matmul.bad");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.failure_count > 0);
    CHECK(bad.matched_signature);
    CHECK(bad.exit_code() == 1);
    for (const auto& f : bad.failures)
        CHECK(std::abs(f.max_abs_output - 65504.0) <= 655.04);

    auto good = run("c-prc-01-fp8-accumulator", "matmul.good");
    CHECK(good.verdict == Verdict::Conforming);
    CHECK(good.failure_count == 0);
    CHECK(good.max_residual <= 1e-5);
    CHECK(good.exit_code() == 0);
}

TEST_CASE("scope gating yields not_applicable, not failure") {
    auto r = run("c-prc-02", "matmul.good");
    CHECK(r.verdict == Verdict::NotApplicable);
    CHECK(r.exit_code() == 2);
    CHECK(r.sample_count == 0);
}

TEST_CASE("free-text protocols are refused, not guessed") {
    CHECK_THROWS_AS(run("c-prc-04", "matmul.good"), UnsupportedProtocol);
}

TEST_CASE("denormal policy contract separates IEEE from flush-to-zero") {
    auto good = run("c-prc-03", "elementwise.good");
    CHECK(good.conforming());
    auto bad = run("c-prc-03", "elementwise.bad_ftz");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.matched_signature);  // matches FTZ, not its declared IEEE policy
}

TEST_CASE("exceptional-value contract flags NaN masking") {
    auto good = run("c-exc-01", "elementwise.good");
    CHECK(good.conforming());
    auto bad = run("c-exc-01", "elementwise.bad_nanmask");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.matched_signature);
    bool all_match_some_policy = true;
    for (const auto& f : bad.failures) {
        CHECK(!f.matches_declared_policy);
        all_match_some_policy = all_match_some_policy && f.matches_any_policy;
    }
    CHECK(all_match_some_policy);  // masking IS a known policy, just not its own
}

TEST_CASE("index policy contract: undeclared wraparound matches no candidate") {
    auto good = run("c-exc-02", "gather.good_raise");
    CHECK(good.conforming());
    CHECK(run("c-exc-02", "gather.good_clamp").conforming());
    CHECK(run("c-exc-02", "gather.good_zero").conforming());

    auto bad = run("c-exc-02", "gather.bad");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.matched_signature);
    for (const auto& f : bad.failures) CHECK(!f.matches_any_policy);
}

TEST_CASE("repeat protocol: bitwise determinism across invocations") {
    auto good = run("c-fa3-det", "attention.good");
    CHECK(good.conforming());
    CHECK(good.sample_count == 100);

    auto bad = run("c-ord-02", "reduce.bad");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.matched_signature);  // bitwise mismatch signature
}

TEST_CASE("holdout sweep: divergence confined to non-benchmarked shapes") {
    auto bad = run("c-cmp-03-sakana", "shape_polymorphic_matmul.bad");
    CHECK(bad.verdict == Verdict::Violating);
    CHECK(bad.matched_signature);
    CHECK(bad.benchmarked_passes > 0);
    for (const auto& f : bad.failures) CHECK(!f.in_benchmarked_set);

    CHECK(run("c-cmp-03-sakana", "shape_polymorphic_matmul.good").conforming());
}

TEST_CASE("head-dim sweep passes on supported dims and expected raises") {
    auto r = run("c-fa3-shape", "attention.good");
    CHECK(r.conforming());
    CHECK(r.sample_count == 9);
    CHECK(r.failure_count == 0);
}

TEST_CASE("schedule enumeration holds the class bound for the good reduce") {
    auto good = run("c-ord-01", "reduce.good");
    CHECK(good.conforming());
    auto bad = run("c-ord-01", "reduce.bad_lowprec");
    CHECK(bad.verdict == Verdict::Violating);
}

TEST_CASE("per-sample traces arrive in order through the sink") {
    RunOptions o = quick(32);
    std::vector<kc::trace::TraceRecord> got;
    o.sink = [&](const kc::trace::TraceRecord& r) { got.push_back(r); };
    auto report = run_protocol(oracles::load_contract("c-cmp-01"),
                               Zoo::instance().get("fused_bias_gelu_matmul.good"),
                               o);
    CHECK(report.conforming());
    REQUIRE(long(got.size()) == 32);
    for (long i = 0; i < 32; ++i) {
        CHECK(got[std::size_t(i)].sample_index == i);
        CHECK(got[std::size_t(i)].contract_id == "C-CMP-01");
        CHECK(got[std::size_t(i)].verdict == "pass");
        CHECK(got[std::size_t(i)].timestamp == "1970-01-01T00:00:00.000Z");
    }
}

TEST_CASE("reports are seed-stable and serialize to JSON") {
    auto a = run("c-cmp-02", "reduce.good", 32, 7);
    auto b = run("c-cmp-02", "reduce.good", 32, 7);
    CHECK(a.max_residual == b.max_residual);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.to_json().find("\"verdict\":\"conforming\"") != std::string::npos);
}

TEST_CASE("signature matcher unit behavior on synthetic evidence") {
    ConformanceReport rep;
    rep.failures.push_back({0, 1.0, 65500.0, true, true, true});

    ViolationSignature sat;
    sat.matcher = ViolationSignature::Matcher::SaturationAtValue;
    sat.saturation_value = 65504.0;
    sat.has_saturation_value = true;
    std::string details;
    CHECK(match_violation_signature(sat, rep, &details));
    CHECK(!details.empty());

    rep.failures[0].max_abs_output = 1.0;  // nowhere near any format ceiling
    CHECK(!match_violation_signature(sat, rep));

    ViolationSignature none;
    none.matcher = ViolationSignature::Matcher::None;
    none.text = "prose only";
    CHECK(!match_violation_signature(none, rep, &details));
    CHECK(details == "unstructured signature");

    ViolationSignature holdout;
    holdout.matcher = ViolationSignature::Matcher::HoldoutDivergence;
    rep.failures[0].in_benchmarked_set = false;
    rep.benchmarked_passes = 4;
    CHECK(match_violation_signature(holdout, rep));
    rep.failures.push_back({1, 1.0, 0.0, true, true, true});
    CHECK(!match_violation_signature(holdout, rep));  // a benchmarked failure
}

TEST_CASE("three-state calibration separates one class per protocol family") {
    RunOptions o = quick(64);
    for (const char* stem : {"c-prc-01", "c-exc-02", "c-ord-02", "c-cmp-01"}) {
        auto ast = oracles::load_contract(stem);
        const Triple* t = find_triple(ast.id);
        REQUIRE(t != nullptr);
        auto v = three_state_calibrate(ast, *t, o);
        INFO("contract: ", ast.id);
        CHECK(v.separated);
        CHECK(v.per_state.at("good").smoke_pass);
        CHECK(v.per_state.at("good").contract_pass);
        CHECK(v.per_state.at("bad").smoke_pass);
        CHECK(!v.per_state.at("bad").contract_pass);
        CHECK(!v.per_state.at("baseline").smoke_pass);
        CHECK(v.to_json().find("\"separated\":true") != std::string::npos);
    }
    CHECK(calibration_triples().size() == 11);
    CHECK(find_triple("C-PRC-04") == nullptr);
}
