#include "kc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kc/numerics.hpp"
#include "kc/rng.hpp"

namespace kc::harness {

using kc::lang::ContractAst;
using kc::lang::Protocol;
using kc::lang::ToleranceSpec;
using kc::num::FormatRegistry;
using kc::num::PrecisionFormat;
using kc::num::ToleranceSpecEval;
using kc::zoo::InvocationContext;
using kc::zoo::KernelImpl;
using kc::zoo::KernelInput;
using kc::zoo::KernelOutput;
using kc::zoo::Tensor;

namespace {

// Large finite stand-in for "not comparable" so trace JSON stays numeric.
constexpr double kHugeResidual = 9e307;

const PrecisionFormat& fp32() { return FormatRegistry::instance().get("FP32"); }
double q32(double x) { return kc::num::quantize(x, fp32()); }

Tensor mk(std::vector<long> shape, std::vector<double> data,
          std::string format = "FP64") {
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    t.format = std::move(format);
    return t;
}

std::string leaf_kind_name(ToleranceSpecEval::Kind k) {
    switch (k) {
        case ToleranceSpecEval::Kind::Absolute: return "absolute";
        case ToleranceSpecEval::Kind::Relative: return "relative";
        case ToleranceSpecEval::Kind::Ulp: return "ulp";
        default: return "none";
    }
}

// Flattens a parsed tolerance to an evaluable leaf. Per-precision specs
// resolve against `key` (falling back to the first child); symbolic formulas
// are handled by the protocol dispatchers, which know the instance parameters.
ToleranceSpecEval leaf_tolerance(const ToleranceSpec& spec,
                                 const std::string& key) {
    const ToleranceSpec* s = &spec;
    if (spec.kind == ToleranceSpec::Kind::PerPrecision) {
        const ToleranceSpec* child = spec.resolve(key);
        if (!child && !spec.children.empty()) child = &spec.children.front();
        if (child) s = child;
    } else if (spec.kind == ToleranceSpec::Kind::Elementwise &&
               !spec.children.empty()) {
        s = &spec.children.front();
    }
    ToleranceSpecEval e;
    switch (s->kind) {
        case ToleranceSpec::Kind::Absolute:
            e.kind = ToleranceSpecEval::Kind::Absolute;
            break;
        case ToleranceSpec::Kind::Relative:
            e.kind = ToleranceSpecEval::Kind::Relative;
            break;
        case ToleranceSpec::Kind::Ulp:
            e.kind = ToleranceSpecEval::Kind::Ulp;
            break;
        default:
            e.kind = ToleranceSpecEval::Kind::None;
            break;
    }
    e.value = s->value;
    return e;
}

// Evaluation format: the impl's declared accumulator when registered, FP32
// otherwise (every zoo kernel stores outputs on the FP32 grid or finer).
const PrecisionFormat& eval_format(const KernelImpl& impl) {
    auto it = impl.declared.find("accumulator");
    if (it != impl.declared.end())
        if (const PrecisionFormat* f = FormatRegistry::instance().find(it->second))
            return *f;
    return fp32();
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        if (!std::isnan(x)) m = std::max(m, std::abs(x));
    return m;
}

// Shared per-run state: report accumulation plus trace emission.
struct Runner {
    const ContractAst& contract;
    const KernelImpl& impl;
    const RunOptions& opts;
    ConformanceReport report;
    std::string version;
    std::string profile;
    double residual_sum = 0.0;

    Runner(const ContractAst& c, const KernelImpl& i, const RunOptions& o)
        : contract(c), impl(i), opts(o) {
        report.contract_id = c.id;
        report.impl_id = i.id;
        report.seed = o.seed;
        version = trace::contract_version(c);
        report.contract_version = version;
        profile = trace::silicon_profile_json();
    }

    void record(long sample_index, const KernelInput& input,
                ToleranceSpecEval::Kind kind, double residual, double bound,
                bool pass, SampleEvidence ev) {
        if (!std::isfinite(residual)) residual = kHugeResidual;
        ++report.sample_count;
        residual_sum += residual;
        report.max_residual = std::max(report.max_residual, residual);
        report.bound = bound;
        ev.sample_index = sample_index;
        ev.residual = residual;
        if (!pass) {
            ++report.failure_count;
            report.failures.push_back(ev);
        } else if (ev.in_benchmarked_set) {
            ++report.benchmarked_passes;
        }
        if (opts.sink) {
            trace::TraceRecord r;
            r.contract_id = contract.id;
            r.contract_version = version;
            r.impl_id = impl.id;
            r.silicon_profile = profile;
            r.input_ref = trace::hash_input(input);
            r.residual_kind = leaf_kind_name(kind);
            r.residual = residual;
            r.tolerance_kind = leaf_kind_name(kind);
            r.tolerance = bound;
            r.verdict = pass ? "pass" : "fail";
            r.sample_index = sample_index;
            r.seed = opts.seed;
            r.timestamp = opts.real_timestamps ? trace::now_rfc3339()
                                               : "1970-01-01T00:00:00.000Z";
            opts.sink(r);
        }
    }

    // Evaluate y against ref under a leaf tolerance and record the sample.
    void check_sample(long sample_index, const KernelInput& input,
                      const KernelOutput& out, const std::vector<double>& ref,
                      const ToleranceSpecEval& tol, const PrecisionFormat& fmt,
                      SampleEvidence ev = {}) {
        if (out.raised()) {
            ev.max_abs_output = 0.0;
            record(sample_index, input, tol.kind, kHugeResidual, tol.value,
                   false, ev);
            return;
        }
        const std::vector<double>& y = out.tensors.at("y").data;
        std::vector<double> r = ref;
        if (tol.kind == ToleranceSpecEval::Kind::Ulp)
            for (double& v : r) v = kc::num::quantize(v, fmt);
        const auto v = kc::num::evaluate_tolerance(y, r, tol, fmt);
        ev.max_abs_output = max_abs(y);
        record(sample_index, input, tol.kind, v.residual.value, v.bound,
               v.pass, ev);
    }
};

KernelOutput invoke(const KernelImpl& impl, const KernelInput& in,
                    std::uint64_t seed, long schedule = 0) {
    InvocationContext ctx;
    ctx.seed = seed;
    ctx.schedule = schedule;
    return impl.entry(in, ctx);
}

// --- sample protocols -------------------------------------------------------

// Fused-kernel equivalence (matmul + bias + gelu vs sequential composition).
void sample_fused(Runner& run) {
    const ToleranceSpecEval tol = leaf_tolerance(run.contract.tolerance, "FP32");
    const long m = 8, k = 16, n = 8;
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        KernelInput in;
        std::vector<double> a(m * k), b(k * n), bias(n);
        for (auto& v : a) v = r.uniform(-1.0, 1.0);
        for (auto& v : b) v = r.uniform(-1.0, 1.0);
        for (auto& v : bias) v = r.uniform(-1.0, 1.0);
        in.tensors["a"] = mk({m, k}, a);
        in.tensors["b"] = mk({k, n}, b);
        in.tensors["bias"] = mk({n}, bias);
        std::vector<double> ref(m * n);
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j) {
                double acc = 0.0;
                for (long t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
                double v = q32(acc);
                v = q32(v + bias[j]);
                ref[i * n + j] = q32(zoo::gelu(v));
            }
        run.check_sample(s, in, invoke(run.impl, in, run.opts.seed), ref, tol,
                         fp32());
    }
}

// Attention numerics vs a stable FP64 oracle on FP8-grid inputs.
void sample_attention(Runner& run) {
    const ToleranceSpecEval tol =
        leaf_tolerance(run.contract.tolerance, "FP8_E4M3");
    const PrecisionFormat& e4m3 = FormatRegistry::instance().get("FP8_E4M3");
    // Long rows: FP16 softmax accumulation error grows with S, FP32 does not.
    const long S = 128, D = 64;
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        auto draw = [&](double lo, double hi) {
            std::vector<double> v(S * D);
            for (auto& x : v) x = kc::num::quantize(r.uniform(lo, hi), e4m3);
            return v;
        };
        KernelInput in;
        in.tensors["q"] = mk({S, D}, draw(-2.0, 2.0), "FP8_E4M3");
        in.tensors["k"] = mk({S, D}, draw(-2.0, 2.0), "FP8_E4M3");
        // Positive values keep the outputs (convex combinations of v) away
        // from zero, so the contract's per-element relative bound is
        // meaningful rather than dominated by cancellation.
        in.tensors["v"] = mk({S, D}, draw(0.5, 1.5), "FP8_E4M3");
        const auto& Q = in.tensors["q"].data;
        const auto& K = in.tensors["k"].data;
        const auto& V = in.tensors["v"].data;
        std::vector<double> ref(S * D);
        const double inv = 1.0 / std::sqrt(double(D));
        std::vector<double> sc(S), p(S);
        for (long i = 0; i < S; ++i) {
            for (long j = 0; j < S; ++j) {
                double acc = 0.0;
                for (long d = 0; d < D; ++d)
                    acc += Q[i * D + d] * K[j * D + d];
                sc[j] = acc * inv;
            }
            const double mx = *std::max_element(sc.begin(), sc.end());
            double denom = 0.0;
            for (long j = 0; j < S; ++j) {
                p[j] = std::exp(sc[j] - mx);
                denom += p[j];
            }
            for (long d = 0; d < D; ++d) {
                double acc = 0.0;
                for (long j = 0; j < S; ++j) acc += p[j] / denom * V[j * D + d];
                ref[i * D + d] = acc;
            }
        }
        run.check_sample(s, in, invoke(run.impl, in, run.opts.seed), ref, tol,
                         fp32());
    }
}

// --- injection protocols ----------------------------------------------------

// Near-saturation accumulation: FP8-grid inputs whose exact sum is safe in
// FP32 but overflows FP16.
void inject_near_saturation(Runner& run) {
    const ToleranceSpecEval tol =
        leaf_tolerance(run.contract.tolerance, "FP32");
    const PrecisionFormat& e4m3 = FormatRegistry::instance().get("FP8_E4M3");
    const PrecisionFormat& fmt = eval_format(run.impl);
    const long n = 1024;
    const bool is_matmul = run.impl.op_class == "matmul";
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        std::vector<double> x(n);
        for (auto& v : x) v = kc::num::quantize(r.uniform(128.0, 448.0), e4m3);
        KernelInput in;
        if (is_matmul) {
            in.tensors["a"] = mk({1, n}, x, "FP8_E4M3");
            in.tensors["b"] = mk({n, 1}, std::vector<double>(n, 1.0));
        } else {
            in.tensors["x"] = mk({n}, x, "FP8_E4M3");
            in.sattrs["op"] = "sum";
        }
        double exact = 0.0;  // same accumulation order as the kernels
        for (double v : x) exact += v;
        run.check_sample(s, in, invoke(run.impl, in, run.opts.seed), {exact},
                         tol, fmt);
    }
}

// Wide-dynamic-range softmax inputs vs the stable FP64 algorithm.
void inject_wide_dynamic_range(Runner& run) {
    const ToleranceSpecEval tol =
        leaf_tolerance(run.contract.tolerance, "FP32");
    const double centers[] = {0.0, 100.0, 1000.0, 1e4};
    const long n = 64;
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        const double c = centers[s % 4];
        std::vector<double> x(n);
        for (auto& v : x) v = r.uniform(c - 50.0, c + 50.0);
        KernelInput in;
        in.tensors["x"] = mk({n}, x);
        const double mx = *std::max_element(x.begin(), x.end());
        double denom = 0.0;
        std::vector<double> ref(n);
        for (long i = 0; i < n; ++i) {
            ref[i] = std::exp(x[i] - mx);
            denom += ref[i];
        }
        for (auto& v : ref) v /= denom;
        run.check_sample(s, in, invoke(run.impl, in, run.opts.seed), ref, tol,
                         fp32());
    }
}

// Policy-enumeration helper shared by the denormal / exceptional injections:
// the output must exactly match the candidate derived from the declared
// policy; matching an *undeclared* candidate is precisely the violation.
void check_policy_sample(Runner& run, long sample_index, const KernelInput& in,
                         const KernelOutput& out,
                         const std::map<std::string, std::vector<double>>& candidates,
                         const std::string& declared) {
    ToleranceSpecEval ulp0;
    ulp0.kind = ToleranceSpecEval::Kind::Ulp;
    ulp0.value = 0.0;
    SampleEvidence ev;
    ev.matches_any_policy = false;
    double declared_residual = kHugeResidual;
    if (!out.raised()) {
        const std::vector<double>& y = out.tensors.at("y").data;
        ev.max_abs_output = max_abs(y);
        for (const auto& [name, ref] : candidates) {
            const auto v = kc::num::evaluate_tolerance(y, ref, ulp0, fp32());
            if (v.pass) ev.matches_any_policy = true;
            if (name == declared) declared_residual = v.residual.value;
        }
    }
    const bool pass = !out.raised() && candidates.count(declared) &&
                      declared_residual == 0.0;
    ev.matches_declared_policy = pass;
    run.record(sample_index, in, ToleranceSpecEval::Kind::Ulp,
               declared_residual == kHugeResidual && pass ? 0.0
                                                          : declared_residual,
               0.0, pass, ev);
}

void inject_denormal(Runner& run) {
    const long n = 32;
    const std::string declared = run.impl.declared.count("denormal")
                                     ? run.impl.declared.at("denormal")
                                     : "";
    const PrecisionFormat ftz = kc::num::with_ftz(fp32());
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        std::vector<double> x(n);
        for (long i = 0; i < n; ++i)
            x[i] = (i % 2) ? r.uniform(-1.0, 1.0)
                           : std::ldexp(r.uniform(1.0, 2.0), -140);
        x[0] = std::ldexp(3.0, -149);  // exact FP32 denormal
        KernelInput in;
        in.tensors["x"] = mk({n}, x);
        in.attrs["scale"] = 1.0;
        in.attrs["shift"] = 0.0;
        std::map<std::string, std::vector<double>> cand;
        auto& ieee = cand["IEEE"];
        auto& flush = cand["FTZ"];
        for (double v : x) {
            ieee.push_back(kc::num::quantize(v, fp32()));
            flush.push_back(kc::num::quantize(v, ftz));
        }
        check_policy_sample(run, s, in, invoke(run.impl, in, run.opts.seed),
                            cand, declared);
    }
}

void inject_exceptional(Runner& run) {
    const long n = 32;
    const std::string declared =
        run.impl.declared.count("nan") ? run.impl.declared.at("nan") : "";
    const double inf = std::numeric_limits<double>::infinity();
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        std::vector<double> x(n);
        for (auto& v : x) v = r.uniform(-1.0, 1.0);
        const long p = long(r.below(n - 2));
        x[p] = std::nan("");
        x[p + 1] = inf;
        x[p + 2] = -inf;
        KernelInput in;
        in.tensors["x"] = mk({n}, x);
        in.attrs["scale"] = 1.0;
        in.attrs["shift"] = 1.0;
        std::map<std::string, std::vector<double>> cand;
        auto& prop = cand["IEEE_PROPAGATE"];
        auto& mask = cand["MASK"];
        for (double v : x) {
            prop.push_back(kc::num::quantize(v + 1.0, fp32()));
            mask.push_back(
                kc::num::quantize((std::isnan(v) ? 0.0 : v) + 1.0, fp32()));
        }
        check_policy_sample(run, s, in, invoke(run.impl, in, run.opts.seed),
                            cand, declared);
    }
}

void inject_index_mix(Runner& run) {
    const long bound = 16, m = 8;
    const std::string declared =
        run.impl.declared.count("oob") ? run.impl.declared.at("oob") : "";
    for (long s = 0; s < run.opts.sample_budget; ++s) {
        rng::SplitMix64 r(rng::substream(run.opts.seed, std::uint64_t(s)));
        std::vector<double> data(bound);
        for (auto& v : data) v = r.uniform(0.5, 1.5);
        std::vector<double> idx(m);
        for (auto& v : idx) v = double(r.below(std::uint64_t(bound)));
        idx[m - 3] = double(bound);      // one-past-the-end
        idx[m - 2] = -1.0;               // negative
        idx[m - 1] = double(bound + 3);  // far out of range
        KernelInput in;
        in.tensors["data"] = mk({bound}, data);
        in.tensors["indices"] = mk({m}, idx);
        in.attrs["bound"] = double(bound);
        const KernelOutput out = invoke(run.impl, in, run.opts.seed);

        // Candidate behaviors per declared policy.
        auto expected = [&](const std::string& policy) {
            std::vector<double> y;
            for (double di : idx) {
                const long i = long(di);
                if (i >= 0 && i < bound) {
                    y.push_back(data[std::size_t(i)]);
                } else if (policy == "CLAMP") {
                    y.push_back(data[std::size_t(std::clamp(i, 0L, bound - 1))]);
                } else {
                    y.push_back(0.0);
                }
            }
            return y;
        };
        const bool raised_oob =
            out.raised() && out.exception->kind == "index_out_of_bounds";
        auto matches = [&](const std::string& policy) {
            if (policy == "RAISE" || policy == "UNDEFINED") return raised_oob;
            if (out.raised()) return false;
            return out.tensors.at("y").data == expected(policy);
        };
        SampleEvidence ev;
        ev.matches_any_policy =
            matches("RAISE") || matches("CLAMP") || matches("ZERO");
        const bool pass = !declared.empty() && matches(declared);
        ev.matches_declared_policy = pass;
        if (!out.raised()) ev.max_abs_output = max_abs(out.tensors.at("y").data);
        run.record(s, in, ToleranceSpecEval::Kind::None, pass ? 0.0 : 1.0, 0.0,
                   pass, ev);
    }
}

// --- enumerate / repeat -----------------------------------------------------

// All block schedules on one input; the sequential (block-1) schedule is the
// designated reference.
void enumerate_schedules(Runner& run) {
    const long n = 1024;
    const bool derived = !run.contract.tolerance.formula.empty();
    rng::SplitMix64 r(rng::substream(run.opts.seed, 0));
    std::vector<double> x(n);
    for (auto& v : x) v = derived ? r.uniform(-1.0, 1.0) : r.uniform(0.0, 1.0);
    KernelInput in;
    in.tensors["x"] = mk({n}, x);
    in.sattrs["op"] = "sum";
    ToleranceSpecEval tol;
    if (derived) {
        kc::num::DerivedBoundParams p;
        p.n = std::size_t(n);
        p.max_abs = max_abs(x);
        tol = kc::num::derived_bound(run.contract.id.substr(0, 8) == "C-ORD-01"
                                         ? "C-ORD-01"
                                         : "generic-reduction",
                                     p);
    } else {
        tol = leaf_tolerance(run.contract.tolerance, "FP32");
    }
    std::vector<double> ref;
    for (long s = 0; s < 8; ++s) {
        const KernelOutput out = invoke(run.impl, in, run.opts.seed, s);
        if (s == 0 && !out.raised()) ref = out.tensors.at("y").data;
        run.check_sample(s, in, out, ref, tol, fp32());
    }
}

KernelInput repeat_input(const std::string& op_class, std::uint64_t seed) {
    rng::SplitMix64 r(rng::substream(seed, 0));
    KernelInput in;
    auto fill = [&](long n, double lo, double hi) {
        std::vector<double> v(n);
        for (auto& x : v) x = r.uniform(lo, hi);
        return v;
    };
    if (op_class == "reduction" || op_class == "collective") {
        in.tensors["x"] = mk({1024}, fill(1024, 0.0, 1.0));
        in.sattrs["op"] = "sum";
        if (op_class == "collective") in.attrs["ranks"] = 4.0;
    } else if (op_class == "fused_attention") {
        const long S = 16, D = 64;
        in.tensors["q"] = mk({S, D}, fill(S * D, -1.0, 1.0));
        in.tensors["k"] = mk({S, D}, fill(S * D, -1.0, 1.0));
        in.tensors["v"] = mk({S, D}, fill(S * D, -1.0, 1.0));
    } else if (op_class == "matmul") {
        in.tensors["a"] = mk({8, 8}, fill(64, -1.0, 1.0));
        in.tensors["b"] = mk({8, 8}, fill(64, -1.0, 1.0));
        in.tensors["bias"] = mk({8}, fill(8, -1.0, 1.0));
    } else if (op_class == "softmax") {
        in.tensors["x"] = mk({16}, fill(16, -1.0, 1.0));
    } else if (op_class == "indexing") {
        in.tensors["data"] = mk({16}, fill(16, 0.5, 1.5));
        std::vector<double> idx(8);
        for (auto& v : idx) v = double(r.below(16));
        in.tensors["indices"] = mk({8}, idx);
    } else {
        in.tensors["x"] = mk({32}, fill(32, -1.0, 1.0));
    }
    return in;
}

// N invocations on one fixed input; invocation 0 is the comparison anchor.
// The tolerance keys on the impl's declared determinism class when the
// contract is keyed that way (BITWISE | RUN_TO_RUN | NONE).
void repeat_invocations(Runner& run) {
    const long count =
        run.contract.measure.count > 0 ? run.contract.measure.count : 100;
    std::string key = "NONE";
    if (auto it = run.impl.declared.find("determinism");
        it != run.impl.declared.end())
        key = it->second;
    const ToleranceSpecEval tol = leaf_tolerance(run.contract.tolerance, key);
    const KernelInput in = repeat_input(run.impl.op_class, run.opts.seed);
    std::vector<double> ref;
    for (long i = 0; i < count; ++i) {
        const KernelOutput out = invoke(
            run.impl, in, rng::substream(run.opts.seed, 1000 + std::uint64_t(i)));
        if (i == 0 && !out.raised()) ref = out.tensors.at("y").data;
        run.check_sample(i, in, out, ref, tol, fp32());
    }
}

// --- sweeps -----------------------------------------------------------------

void sweep_holdout_shapes(Runner& run) {
    ToleranceSpecEval tol = leaf_tolerance(run.contract.tolerance, "FP32");
    if (tol.kind == ToleranceSpecEval::Kind::None) {
        // "as declared by companion contract": stand in the fused-kernel
        // FP32 figure so the sweep has teeth.
        tol.kind = ToleranceSpecEval::Kind::Relative;
        tol.value = 1e-4;
    }
    struct Shape {
        long m, k, n;
        bool benchmarked;
    };
    const std::vector<Shape> shapes = {
        {8, 8, 8, true},    {16, 16, 16, true}, {32, 32, 32, true},
        {64, 64, 64, true}, {24, 24, 24, false}, {48, 48, 48, false},
        {64, 64, 65, false}, {33, 17, 9, false}};
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const Shape& sh = shapes[s];
        rng::SplitMix64 r(rng::substream(run.opts.seed, s));
        std::vector<double> a(sh.m * sh.k), b(sh.k * sh.n);
        for (auto& v : a) v = r.uniform(-1.0, 1.0);
        for (auto& v : b) v = r.uniform(-1.0, 1.0);
        KernelInput in;
        in.tensors["a"] = mk({sh.m, sh.k}, a);
        in.tensors["b"] = mk({sh.k, sh.n}, b);
        std::vector<double> ref(sh.m * sh.n);
        for (long i = 0; i < sh.m; ++i)
            for (long j = 0; j < sh.n; ++j) {
                double acc = 0.0;
                for (long t = 0; t < sh.k; ++t)
                    acc += a[t + i * sh.k] * b[j + t * sh.n];
                ref[i * sh.n + j] = acc;
            }
        SampleEvidence ev;
        ev.in_benchmarked_set = sh.benchmarked;
        run.check_sample(long(s), in, invoke(run.impl, in, run.opts.seed), ref,
                         tol, fp32(), ev);
    }
}

void sweep_rank_counts(Runner& run) {
    std::vector<double> ks = run.contract.measure.values;
    if (ks.empty()) ks = {2, 4, 8, 16, 32};
    rng::SplitMix64 r(rng::substream(run.opts.seed, 0));
    const long n = 1024;
    std::vector<double> x(n);
    for (auto& v : x) v = r.uniform(0.5, 1.5);
    double exact = 0.0;
    for (double v : x) exact += v;  // single-rank FP64 reference
    for (std::size_t s = 0; s < ks.size(); ++s) {
        KernelInput in;
        in.tensors["x"] = mk({n}, x);
        in.attrs["ranks"] = ks[s];
        kc::num::DerivedBoundParams p;
        p.ranks = std::size_t(ks[s]);
        const ToleranceSpecEval tol = kc::num::derived_bound("C-ORD-03", p);
        run.check_sample(long(s), in, invoke(run.impl, in, run.opts.seed),
                         {exact}, tol, fp32());
    }
}

// Head-dimension sweep: supported dims must run and stay near the FP64
// oracle; unsupported dims must raise rather than silently diverge.
void sweep_head_dims(Runner& run) {
    std::vector<double> dims = run.contract.measure.values;
    if (dims.empty()) dims = {63, 64, 65, 127, 128, 129, 255, 256, 257};
    const long S = 4;
    for (std::size_t s = 0; s < dims.size(); ++s) {
        const long D = long(dims[s]);
        const bool supported = D == 64 || D == 128 || D == 256;
        rng::SplitMix64 r(rng::substream(run.opts.seed, s));
        auto fill = [&] {
            std::vector<double> v(S * D);
            for (auto& x : v) x = r.uniform(-1.0, 1.0);
            return v;
        };
        KernelInput in;
        in.tensors["q"] = mk({S, D}, fill());
        in.tensors["k"] = mk({S, D}, fill());
        in.tensors["v"] = mk({S, D}, fill());
        const KernelOutput out = invoke(run.impl, in, run.opts.seed);
        if (!supported) {
            const bool pass = out.raised();
            SampleEvidence ev;
            ev.matches_declared_policy = pass;
            run.record(long(s), in, ToleranceSpecEval::Kind::None,
                       pass ? 0.0 : 1.0, 0.0, pass, ev);
            continue;
        }
        const auto& Q = in.tensors["q"].data;
        const auto& K = in.tensors["k"].data;
        const auto& V = in.tensors["v"].data;
        std::vector<double> ref(S * D);
        const double inv = 1.0 / std::sqrt(double(D));
        std::vector<double> sc(S), p(S);
        for (long i = 0; i < S; ++i) {
            for (long j = 0; j < S; ++j) {
                double acc = 0.0;
                for (long d = 0; d < D; ++d)
                    acc += Q[i * D + d] * K[j * D + d];
                sc[j] = acc * inv;
            }
            const double mx = *std::max_element(sc.begin(), sc.end());
            double denom = 0.0;
            for (long j = 0; j < S; ++j) {
                p[j] = std::exp(sc[j] - mx);
                denom += p[j];
            }
            for (long d = 0; d < D; ++d) {
                double acc = 0.0;
                for (long j = 0; j < S; ++j) acc += p[j] / denom * V[j * D + d];
                ref[i * D + d] = acc;
            }
        }
        // Silent-divergence screen: anything past 1.0 relative is treated as
        // an undeclared failure, per the contract's violation clause.
        ToleranceSpecEval tol;
        tol.kind = ToleranceSpecEval::Kind::Relative;
        tol.value = 1.0;
        run.check_sample(long(s), in, out, ref, tol, fp32());
    }
}

}  // namespace

// --- entry points -----------------------------------------------------------

ConformanceReport run_protocol(const ContractAst& contract,
                               const KernelImpl& impl, const RunOptions& opts) {
    Runner run(contract, impl, opts);
    if (!contract.scope.covers(impl.op_class)) {
        run.report.verdict = Verdict::NotApplicable;
        return run.report;
    }
    const std::string& op = impl.op_class;
    switch (contract.measure.kind) {
        case Protocol::Kind::Custom:
            throw UnsupportedProtocol("contract " + contract.id +
                                      ": free-text measurement protocol");
        case Protocol::Kind::Sample:
            if (op == "fused_attention") sample_attention(run);
            else if (op == "matmul") sample_fused(run);
            else
                throw OracleUnavailable("no sampling oracle for op class " + op);
            break;
        case Protocol::Kind::Inject:
            switch (contract.measure.anomaly) {
                case Protocol::Anomaly::NearSaturation:
                    if (op == "matmul" || op == "reduction")
                        inject_near_saturation(run);
                    else
                        throw OracleUnavailable(
                            "no near-saturation generator for op class " + op);
                    break;
                case Protocol::Anomaly::WideDynamicRange:
                    if (op == "softmax") inject_wide_dynamic_range(run);
                    else
                        throw OracleUnavailable(
                            "no wide-range generator for op class " + op);
                    break;
                case Protocol::Anomaly::Denormal:
                    if (op == "elementwise") inject_denormal(run);
                    else
                        throw OracleUnavailable(
                            "no denormal generator for op class " + op);
                    break;
                case Protocol::Anomaly::Exceptional:
                    if (op == "elementwise") inject_exceptional(run);
                    else
                        throw OracleUnavailable(
                            "no NaN/Inf generator for op class " + op);
                    break;
                case Protocol::Anomaly::IndexMix:
                    if (op == "indexing") inject_index_mix(run);
                    else
                        throw OracleUnavailable(
                            "no index generator for op class " + op);
                    break;
                default:
                    throw OracleUnavailable("injection protocol of contract " +
                                            contract.id +
                                            " names no known anomaly");
            }
            break;
        case Protocol::Kind::Enumerate:
            if (op == "reduction") enumerate_schedules(run);
            else
                throw OracleUnavailable("no schedule space for op class " + op);
            break;
        case Protocol::Kind::Repeat:
            repeat_invocations(run);
            break;
        case Protocol::Kind::Sweep:
            if (contract.measure.holdout && op == "matmul")
                sweep_holdout_shapes(run);
            else if (op == "collective")
                sweep_rank_counts(run);
            else if (op == "fused_attention")
                sweep_head_dims(run);
            else
                throw OracleUnavailable("no sweep generator for op class " + op);
            break;
    }
    run.report.verdict =
        run.report.failure_count ? Verdict::Violating : Verdict::Conforming;
    if (run.report.sample_count)
        run.report.mean_residual =
            run.residual_sum / double(run.report.sample_count);
    if (run.report.verdict == Verdict::Violating)
        run.report.matched_signature = match_violation_signature(
            contract.violation, run.report, &run.report.signature_details);
    return run.report;
}

bool match_violation_signature(const lang::ViolationSignature& sig,
                               const ConformanceReport& report,
                               std::string* details) {
    auto say = [&](const std::string& msg) {
        if (details) *details = msg;
    };
    using M = lang::ViolationSignature::Matcher;
    if (report.failures.empty()) {
        say("no failing samples");
        return false;
    }
    switch (sig.matcher) {
        case M::SaturationAtValue: {
            std::vector<double> targets;
            if (sig.has_saturation_value) {
                targets.push_back(sig.saturation_value);
            } else {
                for (const auto& name : FormatRegistry::instance().names())
                    targets.push_back(
                        FormatRegistry::instance().get(name).max_finite);
            }
            for (const auto& f : report.failures)
                for (double t : targets)
                    if (t > 0.0 && std::abs(f.max_abs_output - t) <= 0.01 * t) {
                        std::ostringstream os;
                        os << "failing outputs cluster at saturation value "
                           << t;
                        say(os.str());
                        return true;
                    }
            say("failing outputs do not cluster at a saturation value");
            return false;
        }
        case M::PolicyMismatch: {
            for (const auto& f : report.failures)
                if (!f.matches_declared_policy) {
                    say(f.matches_any_policy
                            ? "output follows a policy the kernel did not "
                              "declare"
                            : "output matches none of the candidate policies");
                    return true;
                }
            say("all failing samples follow the declared policy");
            return false;
        }
        case M::ToleranceExceededFraction:
            say("residuals exceed the declared tolerance");
            return true;
        case M::BitwiseMismatch:
            for (const auto& f : report.failures)
                if (f.residual > 0.0) {
                    say("invocations differ bitwise");
                    return true;
                }
            say("no bitwise difference among failing samples");
            return false;
        case M::HoldoutDivergence: {
            for (const auto& f : report.failures)
                if (f.in_benchmarked_set) {
                    say("failures are not confined to held-out points");
                    return false;
                }
            if (report.benchmarked_passes == 0) {
                say("no passing benchmarked points to partition against");
                return false;
            }
            say("passes on benchmarked points, failures only on held-out "
                "points");
            return true;
        }
        default:
            say("unstructured signature");
            return false;
    }
}

int ConformanceReport::exit_code() const {
    switch (verdict) {
        case Verdict::Conforming: return 0;
        case Verdict::Violating: return 1;
        default: return 2;
    }
}

std::string ConformanceReport::verdict_name() const {
    switch (verdict) {
        case Verdict::Conforming: return "conforming";
        case Verdict::Violating: return "violating";
        default: return "not_applicable";
    }
}

namespace {
std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}
}  // namespace

std::string ConformanceReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"contract_id\":\"" << contract_id << "\",\"contract_version\":\""
       << contract_version << "\",\"impl_id\":\"" << impl_id
       << "\",\"verdict\":\"" << verdict_name()
       << "\",\"sample_count\":" << sample_count
       << ",\"failure_count\":" << failure_count
       << ",\"max_residual\":" << max_residual
       << ",\"mean_residual\":" << mean_residual << ",\"bound\":" << bound
       << ",\"matched_signature\":" << (matched_signature ? "true" : "false")
       << ",\"signature_details\":\"" << json_escape(signature_details)
       << "\",\"seed\":" << seed << "}";
    return os.str();
}

const std::vector<Triple>& calibration_triples() {
    static const std::vector<Triple> triples = {
        {"C-PRC-01", "matmul.good", "matmul.bad", "matmul.baseline"},
        {"C-PRC-02", "softmax.good", "softmax.bad", "softmax.baseline"},
        {"C-PRC-03", "elementwise.good", "elementwise.bad_ftz",
         "elementwise.baseline"},
        {"C-ORD-01", "reduce.good", "reduce.bad_lowprec", "reduce.baseline"},
        {"C-ORD-02", "reduce.good", "reduce.bad", "reduce.baseline"},
        {"C-ORD-03", "collective.good", "collective.bad",
         "collective.baseline"},
        {"C-CMP-01", "fused_bias_gelu_matmul.good",
         "fused_bias_gelu_matmul.bad", "fused_bias_gelu_matmul.baseline"},
        {"C-CMP-02", "reduce.good", "reduce.bad_lowprec", "reduce.baseline"},
        {"C-CMP-03", "shape_polymorphic_matmul.good",
         "shape_polymorphic_matmul.bad", "shape_polymorphic_matmul.baseline"},
        {"C-EXC-01", "elementwise.good", "elementwise.bad_nanmask",
         "elementwise.baseline"},
        {"C-EXC-02", "gather.good_raise", "gather.bad", "gather.baseline"},
    };
    return triples;
}

const Triple* find_triple(const std::string& contract_id) {
    for (const auto& t : calibration_triples())
        if (t.contract_id == contract_id) return &t;
    return nullptr;
}

CalibrationVerdict three_state_calibrate(const ContractAst& contract,
                                         const Triple& triple,
                                         const RunOptions& opts) {
    const auto& zoo = zoo::Zoo::instance();
    CalibrationVerdict v;
    v.contract_id = contract.id;
    auto eval = [&](const std::string& state, const std::string& impl_id,
                    bool run_contract) {
        const KernelImpl& impl = zoo.get(impl_id);
        StateOutcome o;
        o.smoke_pass = zoo::smoke_test(impl);
        if (run_contract) {
            ConformanceReport rep = run_protocol(contract, impl, opts);
            o.contract_pass = rep.conforming();
            if (state == "good") v.good_report = std::move(rep);
            if (state == "bad") v.bad_report = std::move(rep);
        }
        v.per_state[state] = o;
    };
    eval("good", triple.good, true);
    eval("bad", triple.bad, true);
    // The baseline only has to fail the visible test; its contract verdict
    // carries no calibration weight.
    eval("baseline", triple.baseline, false);
    v.separated = v.per_state["good"].smoke_pass &&
                  v.per_state["good"].contract_pass &&
                  v.per_state["bad"].smoke_pass &&
                  !v.per_state["bad"].contract_pass &&
                  !v.per_state["baseline"].smoke_pass;
    return v;
}

std::string CalibrationVerdict::to_json() const {
    std::ostringstream os;
    os << "{\"contract_id\":\"" << contract_id
       << "\",\"separated\":" << (separated ? "true" : "false")
       << ",\"per_state\":{";
    bool first = true;
    for (const auto& [state, o] : per_state) {
        if (!first) os << ",";
        first = false;
        os << "\"" << state
           << "\":{\"smoke_pass\":" << (o.smoke_pass ? "true" : "false")
           << ",\"contract_pass\":" << (o.contract_pass ? "true" : "false")
           << "}";
    }
    os << "}}";
    return os.str();
}

}  // namespace kc::harness
