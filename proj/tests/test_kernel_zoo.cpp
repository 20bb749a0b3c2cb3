#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kc/kernels.hpp"
#include "kc/numerics.hpp"
#include "oracles.hpp"

using namespace kc::zoo;
using kc::num::FormatRegistry;
using kc::num::quantize;

namespace {

const Zoo& zoo() { return Zoo::instance(); }

KernelOutput call(const std::string& id, const KernelInput& in,
                  std::uint64_t seed = 0, long schedule = 0) {
    InvocationContext ctx;
    ctx.seed = seed;
    ctx.schedule = schedule;
    return zoo().get(id).entry(in, ctx);
}

const std::vector<double>& y_of(const KernelOutput& out) {
    return out.tensors.at("y").data;
}

}  // namespace

TEST_CASE("registry lookups and the expected id set") {
    for (const char* id :
         {"matmul.good", "matmul.bad", "matmul.baseline",
          "shape_polymorphic_matmul.good", "shape_polymorphic_matmul.bad",
          "fused_bias_gelu_matmul.good", "fused_bias_gelu_matmul.bad",
          "reduce.good", "reduce.bad", "reduce.bad_lowprec", "reduce.baseline",
          "softmax.good", "softmax.bad", "softmax.baseline",
          "gather.good_raise", "gather.good_clamp", "gather.good_zero",
          "gather.bad", "gather.baseline", "collective.good", "collective.bad",
          "elementwise.good", "elementwise.bad_nanmask", "elementwise.bad_ftz",
          "attention.good", "attention.bad", "attention.baseline"})
        CHECK(zoo().find(id) != nullptr);
    CHECK(zoo().find("nonexistent.good") == nullptr);
    CHECK_THROWS_AS(zoo().get("nonexistent.good"), std::exception);
}

TEST_CASE("smoke tests separate baseline variants from the rest") {
    for (const auto& impl : zoo().all()) {
        INFO("impl: ", impl.id);
        if (impl.state == CalibrationState::Baseline)
            CHECK(!smoke_test(impl));
        else
            CHECK(smoke_test(impl));
    }
}

TEST_CASE("matmul.good equals the FP64 product rounded to FP32") {
    kc::rng::SplitMix64 r(11);
    const int m = 5, k = 17, n = 3;
    auto a = oracles::uniform_vec(r, m * k, -1.0, 1.0);
    auto b = oracles::uniform_vec(r, k * n, -1.0, 1.0);
    KernelInput in;
    in.tensors["a"] = oracles::tensor({m, k}, a);
    in.tensors["b"] = oracles::tensor({k, n}, b);
    auto want = oracles::matmul_fp64(a, b, m, k, n);
    const auto& fp32 = FormatRegistry::instance().get("FP32");
    for (double& v : want) v = quantize(v, fp32);
    CHECK(oracles::bitwise_equal(y_of(call("matmul.good", in)), want));
}

TEST_CASE("matmul.bad saturates large accumulations at the FP16 ceiling") {
    kc::rng::SplitMix64 r(3);
    const int k = 1024;
    auto a = oracles::uniform_vec(r, k, 128.0, 448.0);
    KernelInput in;
    in.tensors["a"] = oracles::tensor({1, k}, a);
    in.tensors["b"] = oracles::tensor({k, 1}, std::vector<double>(k, 1.0));
    double exact = 0.0;
    for (double v : a) exact += v;
    REQUIRE(exact > 65504.0);
    const double got = y_of(call("matmul.bad", in))[0];
    CHECK(std::abs(got - 65504.0) <= 0.01 * 65504.0);
    // Small inputs still come out exact in FP32.
    KernelInput small;
    small.tensors["a"] = oracles::tensor({1, 2}, {1.5, 2.5});
    small.tensors["b"] = oracles::tensor({2, 1}, {2.0, 4.0});
    CHECK(y_of(call("matmul.bad", small))[0] == 13.0);
}

TEST_CASE("reduce.good is schedule-stable within the class bound and bitwise "
          "across seeds") {
    kc::rng::SplitMix64 r(21);
    auto x = oracles::uniform_vec(r, 1024, -1.0, 1.0);
    KernelInput in;
    in.tensors["x"] = oracles::tensor({1024}, x);
    in.sattrs["op"] = "sum";

    const double anchor = y_of(call("reduce.good", in, 1, 0))[0];
    CHECK(y_of(call("reduce.good", in, 999, 0))[0] == anchor);  // seed-blind

    const double bound = 1024.0 * std::ldexp(1.0, -23);
    double lo = anchor, hi = anchor;
    for (long s = 0; s < 8; ++s) {
        const double v = y_of(call("reduce.good", in, 0, s))[0];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi - lo <= bound);
    CHECK(std::abs(anchor - kc::zoo::fp64_reduce(x, "sum")) <= bound);
}

TEST_CASE("reduce.bad reorders by seed while declaring bitwise determinism") {
    CHECK(zoo().get("reduce.bad").declared.at("determinism") == "BITWISE");
    kc::rng::SplitMix64 r(22);
    auto x = oracles::uniform_vec(r, 1024, 0.0, 1.0);
    KernelInput in;
    in.tensors["x"] = oracles::tensor({1024}, x);
    in.sattrs["op"] = "sum";
    const double first = y_of(call("reduce.bad", in, 1))[0];
    bool diverged = false;
    for (std::uint64_t s = 2; s <= 20 && !diverged; ++s)
        diverged = y_of(call("reduce.bad", in, s))[0] != first;
    CHECK(diverged);
}

TEST_CASE("softmax.good matches the stable FP64 oracle") {
    kc::rng::SplitMix64 r(31);
    for (double center : {0.0, 100.0, 1000.0}) {
        std::vector<double> x(64);
        for (double& v : x) v = center + r.uniform(-5.0, 5.0);
        KernelInput in;
        in.tensors["x"] = oracles::tensor({64}, x);
        auto y = y_of(call("softmax.good", in));
        auto want = oracles::stable_softmax(x);
        CHECK(oracles::max_rel_diff(y, want) < 1e-5);
        double sum = 0.0;
        for (double v : y) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("softmax.bad overflows on large-magnitude rows") {
    std::vector<double> x(8, 1000.0);
    KernelInput in;
    in.tensors["x"] = oracles::tensor({8}, x);
    auto y = y_of(call("softmax.bad", in));
    bool bad_value = false;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!std::isfinite(y[i]) ||
            std::abs(y[i] - 0.125) > 1e-3)
            bad_value = true;
    CHECK(bad_value);
}

TEST_CASE("gather policies against hand-computed expectations") {
    KernelInput in;
    in.tensors["data"] = oracles::tensor({4}, {10.0, 20.0, 30.0, 40.0});
    in.tensors["indices"] = oracles::tensor({5}, {0.0, 3.0, 4.0, -1.0, 2.0});
    in.attrs["bound"] = 4.0;

    auto raised = call("gather.good_raise", in);
    REQUIRE(raised.raised());
    CHECK(raised.exception->kind == "index_out_of_bounds");
    CHECK(raised.exception->index == 4);

    CHECK(y_of(call("gather.good_clamp", in)) ==
          std::vector<double>{10, 40, 40, 10, 30});
    CHECK(y_of(call("gather.good_zero", in)) ==
          std::vector<double>{10, 40, 0, 0, 30});

    // The undeclared variant neither raises nor matches clamp/zero: it wraps.
    auto bad = call("gather.bad", in);
    REQUIRE(!bad.raised());
    CHECK(y_of(bad) == std::vector<double>{10, 40, 10, 40, 30});

    // In-range indices agree across every non-baseline policy.
    in.tensors["indices"] = oracles::tensor({3}, {1.0, 1.0, 2.0});
    const std::vector<double> want{20, 20, 30};
    for (const char* id : {"gather.good_raise", "gather.good_clamp",
                           "gather.good_zero", "gather.bad"})
        CHECK(y_of(call(id, in)) == want);
}

TEST_CASE("collective reduce: fixed combine order vs seed-shuffled shards") {
    kc::rng::SplitMix64 r(41);
    auto x = oracles::uniform_vec(r, 1024, 0.5, 1.5);
    KernelInput in;
    in.tensors["x"] = oracles::tensor({1024}, x);
    in.attrs["ranks"] = 8.0;
    const double good = y_of(call("collective.good", in, 1))[0];
    CHECK(y_of(call("collective.good", in, 2))[0] == good);
    const double bound = 8.0 * std::ldexp(1.0, -23);
    CHECK(std::abs(good - kc::zoo::fp64_reduce(x, "sum")) / good < bound);
    // The BF16-shard variant lands far outside the collective class bound.
    const double bad = y_of(call("collective.bad", in, 1))[0];
    CHECK(std::abs(bad - kc::zoo::fp64_reduce(x, "sum")) / good > bound);
}

TEST_CASE("elementwise policies: NaN propagation and denormal handling") {
    const double nan = std::nan("");
    const double denorm = std::ldexp(1.0, -140);  // FP32 denormal
    KernelInput in;
    in.tensors["x"] = oracles::tensor({4}, {1.0, nan, denorm, -2.0});
    in.attrs["scale"] = 1.0;
    in.attrs["shift"] = 0.0;

    auto good = y_of(call("elementwise.good", in));
    CHECK(good[0] == 1.0);
    CHECK(std::isnan(good[1]));
    CHECK(good[2] == denorm);
    CHECK(good[3] == -2.0);

    auto masked = y_of(call("elementwise.bad_nanmask", in));
    CHECK(!std::isnan(masked[1]));

    auto flushed = y_of(call("elementwise.bad_ftz", in));
    CHECK(flushed[2] == 0.0);
    CHECK(flushed[0] == 1.0);
}

TEST_CASE("fused kernel equals the sequential matmul+bias+gelu composition") {
    kc::rng::SplitMix64 r(51);
    const int m = 4, k = 9, n = 6;
    auto a = oracles::uniform_vec(r, m * k, -1.0, 1.0);
    auto b = oracles::uniform_vec(r, k * n, -1.0, 1.0);
    auto bias = oracles::uniform_vec(r, n, -0.5, 0.5);
    KernelInput in;
    in.tensors["a"] = oracles::tensor({m, k}, a);
    in.tensors["b"] = oracles::tensor({k, n}, b);
    in.tensors["bias"] = oracles::tensor({n}, bias);
    auto y = y_of(call("fused_bias_gelu_matmul.good", in));

    const auto& fp32 = FormatRegistry::instance().get("FP32");
    auto prod = oracles::matmul_fp64(a, b, m, k, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double v = quantize(prod[std::size_t(i) * n + j], fp32);
            v = quantize(v + bias[std::size_t(j)], fp32);
            v = quantize(kc::zoo::gelu(v), fp32);
            CHECK(y[std::size_t(i) * n + j] == v);
        }
}

TEST_CASE("attention.good tracks the FP64 reference on supported head dims") {
    kc::rng::SplitMix64 r(61);
    const int S = 8, D = 64;
    auto q = oracles::uniform_vec(r, S * D, -1.0, 1.0);
    auto k = oracles::uniform_vec(r, S * D, -1.0, 1.0);
    auto v = oracles::uniform_vec(r, S * D, 0.5, 1.5);
    KernelInput in;
    in.tensors["q"] = oracles::tensor({S, D}, q);
    in.tensors["k"] = oracles::tensor({S, D}, k);
    in.tensors["v"] = oracles::tensor({S, D}, v);
    auto y = y_of(call("attention.good", in));

    const double inv = 1.0 / std::sqrt(double(D));
    std::vector<double> want(std::size_t(S) * D, 0.0);
    for (int i = 0; i < S; ++i) {
        std::vector<double> row(S);
        for (int j = 0; j < S; ++j) {
            double acc = 0.0;
            for (int t = 0; t < D; ++t)
                acc += q[std::size_t(i) * D + t] * k[std::size_t(j) * D + t];
            row[std::size_t(j)] = acc * inv;
        }
        auto p = oracles::stable_softmax(row);
        for (int t = 0; t < D; ++t) {
            double acc = 0.0;
            for (int j = 0; j < S; ++j)
                acc += p[std::size_t(j)] * v[std::size_t(j) * D + t];
            want[std::size_t(i) * D + t] = acc;
        }
    }
    CHECK(oracles::max_rel_diff(y, want) < 1e-4);

    // Unsupported head dim raises the declared shape exception.
    KernelInput odd;
    odd.tensors["q"] = oracles::tensor({4, 65}, std::vector<double>(260, 0.1));
    odd.tensors["k"] = odd.tensors["q"];
    odd.tensors["v"] = odd.tensors["q"];
    auto out = call("attention.good", odd);
    REQUIRE(out.raised());
    CHECK(out.exception->kind == "dimension_unsupported");
}

TEST_CASE("declared metadata drives the contract checks") {
    CHECK(zoo().get("matmul.good").declared.at("accumulator") == "FP32");
    CHECK(zoo().get("gather.bad").declared.empty());
    CHECK(zoo().get("elementwise.good").declared.at("nan") == "IEEE_PROPAGATE");
    CHECK(zoo().get("elementwise.bad_ftz").declared.at("denormal") == "IEEE");
    CHECK(zoo().get("collective.bad").declared.count("determinism") == 0);
    const std::string dj = zoo().get("gather.good_clamp").declared_json();
    CHECK(dj.find("\"oob\":\"CLAMP\"") != std::string::npos);
}
