#include "kc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kc/numerics.hpp"
#include "kc/rng.hpp"

namespace kc::zoo {

namespace {

using kc::num::FormatRegistry;
using kc::num::PrecisionFormat;

const PrecisionFormat& fp32() { return FormatRegistry::instance().get("FP32"); }
const PrecisionFormat& fp16() { return FormatRegistry::instance().get("FP16"); }
const PrecisionFormat& bf16() { return FormatRegistry::instance().get("BF16"); }

double q32(double x) { return kc::num::quantize(x, fp32()); }
double q16(double x) { return kc::num::quantize(x, fp16()); }
double qbf16(double x) { return kc::num::quantize(x, bf16()); }

// FP16 with saturating overflow: the silent-downcast failure caps magnitude
// at 65504 instead of overflowing to infinity.
double sat16(double x) {
    double q = q16(x);
    if (std::isinf(q) && !std::isinf(x))
        return std::copysign(fp16().max_finite, x);
    return q;
}

const Tensor& need(const KernelInput& in, const std::string& name) {
    auto it = in.tensors.find(name);
    if (it == in.tensors.end())
        throw ShapeMismatch("missing input tensor: " + name);
    return it->second;
}

double attr(const KernelInput& in, const std::string& name, double dflt) {
    auto it = in.attrs.find(name);
    return it == in.attrs.end() ? dflt : it->second;
}

std::string sattr(const KernelInput& in, const std::string& name,
                  const std::string& dflt) {
    auto it = in.sattrs.find(name);
    return it == in.sattrs.end() ? dflt : it->second;
}

Tensor zeros_like_shape(std::vector<long> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(t.size(), 0.0);
    t.format = "FP32";
    return t;
}

// --- matmul family ---------------------------------------------------------

void matmul_dims(const Tensor& a, const Tensor& b, long& m, long& k, long& n) {
    if (a.shape.size() != 2 || b.shape.size() != 2)
        throw ShapeMismatch("matmul expects rank-2 tensors");
    m = a.shape[0];
    k = a.shape[1];
    n = b.shape[1];
    if (b.shape[0] != k) throw ShapeMismatch("matmul inner dimension mismatch");
}

// Exactly rounded product: full double accumulation, one FP32 quantization.
Tensor matmul_exact_q32(const Tensor& a, const Tensor& b) {
    long m, k, n;
    matmul_dims(a, b, m, k, n);
    Tensor out = zeros_like_shape({m, n});
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            for (long t = 0; t < k; ++t)
                acc += a.data[i * k + t] * b.data[t * n + j];
            out.data[i * n + j] = q32(acc);
        }
    return out;
}

KernelOutput matmul_good(const KernelInput& in, const InvocationContext&) {
    KernelOutput out;
    out.tensors["y"] = matmul_exact_q32(need(in, "a"), need(in, "b"));
    return out;
}

// Silently downcasts the running accumulator to saturating FP16 once its
// magnitude exceeds 2^12, so small inputs stay exact and near-saturation
// inputs cap at the FP16 max-finite value.
KernelOutput matmul_bad(const KernelInput& in, const InvocationContext&) {
    const Tensor &a = need(in, "a"), &b = need(in, "b");
    long m, k, n;
    matmul_dims(a, b, m, k, n);
    KernelOutput out;
    Tensor y = zeros_like_shape({m, n});
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            bool narrowed = false;
            for (long t = 0; t < k; ++t) {
                const double term = a.data[i * k + t] * b.data[t * n + j];
                if (!narrowed) {
                    acc = q32(acc + term);
                    if (std::abs(acc) > 4096.0) {
                        narrowed = true;
                        acc = sat16(acc);
                    }
                } else {
                    acc = sat16(acc + term);
                }
            }
            y.data[i * n + j] = acc;
        }
    out.tensors["y"] = std::move(y);
    return out;
}

KernelOutput matmul_baseline(const KernelInput& in, const InvocationContext&) {
    const Tensor &a = need(in, "a"), &b = need(in, "b");
    long m, k, n;
    matmul_dims(a, b, m, k, n);
    KernelOutput out;
    out.tensors["y"] = zeros_like_shape({m, n});
    return out;
}

bool power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

// Correct fast path on the benchmarked shape set (all dims powers of two);
// wrong-stride operand read everywhere else.
KernelOutput shape_poly_bad(const KernelInput& in, const InvocationContext&) {
    const Tensor &a = need(in, "a"), &b = need(in, "b");
    long m, k, n;
    matmul_dims(a, b, m, k, n);
    if (power_of_two(m) && power_of_two(n) && power_of_two(k)) {
        KernelOutput out;
        out.tensors["y"] = matmul_exact_q32(a, b);
        return out;
    }
    KernelOutput out;
    Tensor y = zeros_like_shape({m, n});
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            for (long t = 0; t < k; ++t)
                acc += a.data[(t * m + i) % (m * k)] * b.data[t * n + j];
            y.data[i * n + j] = q32(acc);
        }
    out.tensors["y"] = std::move(y);
    return out;
}

// --- fused matmul + bias + gelu --------------------------------------------

KernelOutput fused_run(const KernelInput& in, bool add_bias, bool fp16_mid) {
    const Tensor &a = need(in, "a"), &b = need(in, "b");
    const Tensor& bias = need(in, "bias");
    long m, k, n;
    matmul_dims(a, b, m, k, n);
    if (long(bias.data.size()) != n)
        throw ShapeMismatch("bias length must equal output columns");
    KernelOutput out;
    Tensor y = zeros_like_shape({m, n});
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            for (long t = 0; t < k; ++t)
                acc += a.data[i * k + t] * b.data[t * n + j];
            double v = q32(acc);
            if (add_bias) v = q32(v + bias.data[j]);
            if (fp16_mid) v = q16(v);
            y.data[i * n + j] = q32(gelu(v));
        }
    out.tensors["y"] = std::move(y);
    return out;
}

// --- reductions ------------------------------------------------------------

std::vector<double> block_partials(const std::vector<double>& x, long block,
                                   double (*q)(double), bool per_step) {
    std::vector<double> partials;
    for (std::size_t start = 0; start < x.size(); start += std::size_t(block)) {
        const std::size_t end = std::min(x.size(), start + std::size_t(block));
        double acc = 0.0;
        for (std::size_t i = start; i < end; ++i)
            acc = per_step ? q(acc + x[i]) : acc + x[i];
        partials.push_back(q(acc));
    }
    return partials;
}

double tree_combine(std::vector<double> v, double (*q)(double)) {
    while (v.size() > 1) {
        std::vector<double> next;
        for (std::size_t i = 0; i + 1 < v.size(); i += 2)
            next.push_back(q(v[i] + v[i + 1]));
        if (v.size() % 2) next.push_back(v.back());
        v = std::move(next);
    }
    return v.empty() ? 0.0 : v[0];
}

long schedule_block(const InvocationContext& ctx) {
    long s = std::clamp(ctx.schedule, 0L, 7L);
    return 1L << s;  // block sizes 1..128
}

double reduce_scheduled(const std::vector<double>& x, const std::string& op,
                        long block, double (*q)(double), bool per_step) {
    if (op == "variance") {
        // Welford, schedule-insensitive by design.
        double mean = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - mean;
            mean += d / double(i + 1);
            m2 += d * (x[i] - mean);
        }
        return q(x.empty() ? 0.0 : m2 / double(x.size()));
    }
    std::vector<double> vals = x;
    if (op == "norm")
        for (auto& v : vals) v = v * v;
    const double total = tree_combine(
        block_partials(vals, block, q, per_step), q);
    if (op == "mean") return q(total / double(vals.size()));
    if (op == "norm") return q(std::sqrt(total));
    return total;  // sum
}

KernelOutput scalar_output(double v, const std::string& format = "FP32") {
    KernelOutput out;
    Tensor t;
    t.shape = {1};
    t.data = {v};
    t.format = format;
    out.tensors["y"] = std::move(t);
    return out;
}

KernelOutput reduce_good(const KernelInput& in, const InvocationContext& ctx) {
    const Tensor& x = need(in, "x");
    return scalar_output(reduce_scheduled(x.data, sattr(in, "op", "sum"),
                                          schedule_block(ctx), q32,
                                          /*per_step=*/false));
}

// Emulated atomic-add nondeterminism: summation order is a random permutation
// drawn from the invocation context, while the kernel declares BITWISE.
KernelOutput reduce_bad(const KernelInput& in, const InvocationContext& ctx) {
    std::vector<double> x = need(in, "x").data;
    kc::rng::SplitMix64 r(ctx.seed ^ 0x5bf03635d0d6eb35ULL);
    for (std::size_t i = x.size(); i > 1; --i)
        std::swap(x[i - 1], x[r.below(i)]);
    const std::string op = sattr(in, "op", "sum");
    std::vector<double> vals = x;
    if (op == "norm")
        for (auto& v : vals) v = v * v;
    double acc = 0.0;
    for (double v : vals) acc = q32(acc + v);
    if (op == "mean") acc = q32(acc / double(vals.size()));
    if (op == "norm") acc = q32(std::sqrt(acc));
    if (op == "variance") {
        // Fall back to the deterministic path; calibration uses sum.
        return scalar_output(reduce_scheduled(need(in, "x").data, op, 1, q32,
                                              true));
    }
    return scalar_output(acc);
}

// Declares an FP32 accumulator but accumulates in FP16 per step.
KernelOutput reduce_bad_lowprec(const KernelInput& in,
                                const InvocationContext& ctx) {
    const Tensor& x = need(in, "x");
    return scalar_output(reduce_scheduled(x.data, sattr(in, "op", "sum"),
                                          schedule_block(ctx), q16,
                                          /*per_step=*/true));
}

// --- softmax ---------------------------------------------------------------

KernelOutput softmax_run(const std::vector<double>& x, bool stabilized) {
    std::vector<double> e(x.size());
    const double m =
        stabilized ? *std::max_element(x.begin(), x.end()) : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = std::exp(x[i] - m);
    double denom = 0.0;
    for (double v : e) denom = q32(denom + v);
    KernelOutput out;
    Tensor y;
    y.shape = {long(x.size())};
    y.format = "FP32";
    for (double v : e) y.data.push_back(q32(v / denom));
    out.tensors["y"] = std::move(y);
    return out;
}

// --- gather ----------------------------------------------------------------

long gather_bound(const KernelInput& in) {
    return long(attr(in, "bound", double(need(in, "data").data.size())));
}

enum class OobMode { Raise, Clamp, Zero, Wrap, AlwaysRaise };

KernelOutput gather_run(const KernelInput& in, OobMode mode) {
    const Tensor& data = need(in, "data");
    const Tensor& idx = need(in, "indices");
    const long bound = gather_bound(in);
    KernelOutput out;
    if (mode == OobMode::AlwaysRaise) {
        out.exception = KernelError{"index_out_of_bounds",
                                    "memory access violation", -1};
        return out;
    }
    Tensor y;
    y.shape = {long(idx.data.size())};
    y.format = data.format;
    for (double di : idx.data) {
        const long i = long(di);
        if (i >= 0 && i < bound) {
            y.data.push_back(data.data[std::size_t(i)]);
            continue;
        }
        switch (mode) {
            case OobMode::Raise:
                out.exception = KernelError{
                    "index_out_of_bounds",
                    "index " + std::to_string(i) + " outside [0, " +
                        std::to_string(bound) + ")",
                    i};
                return out;
            case OobMode::Clamp:
                y.data.push_back(data.data[std::size_t(
                    std::clamp(i, 0L, bound - 1))]);
                break;
            case OobMode::Zero:
                y.data.push_back(0.0);
                break;
            case OobMode::Wrap: {
                const long w = ((i % bound) + bound) % bound;
                y.data.push_back(data.data[std::size_t(w)]);
                break;
            }
            default:
                break;
        }
    }
    out.tensors["y"] = std::move(y);
    return out;
}

// --- simulated collective reduce -------------------------------------------

KernelOutput collective_good(const KernelInput& in, const InvocationContext&) {
    const Tensor& x = need(in, "x");
    const long ranks = std::max(1L, long(attr(in, "ranks", 1.0)));
    const std::size_t shard =
        (x.data.size() + std::size_t(ranks) - 1) / std::size_t(ranks);
    double total = 0.0;
    for (long r = 0; r < ranks; ++r) {
        double s = 0.0;
        for (std::size_t i = std::size_t(r) * shard;
             i < std::min(x.data.size(), std::size_t(r + 1) * shard); ++i)
            s += x.data[i];
        total += s;  // fixed combine order, double precision throughout
    }
    return scalar_output(q32(total));
}

KernelOutput collective_bad(const KernelInput& in,
                            const InvocationContext& ctx) {
    const Tensor& x = need(in, "x");
    const long ranks = std::max(1L, long(attr(in, "ranks", 1.0)));
    const std::size_t shard =
        (x.data.size() + std::size_t(ranks) - 1) / std::size_t(ranks);
    std::vector<double> sums;
    for (long r = 0; r < ranks; ++r) {
        double s = 0.0;
        for (std::size_t i = std::size_t(r) * shard;
             i < std::min(x.data.size(), std::size_t(r + 1) * shard); ++i)
            s = qbf16(s + x.data[i]);  // BF16 shard accumulator
        sums.push_back(s);
    }
    kc::rng::SplitMix64 rnd(ctx.seed ^ 0x94d049bb133111ebULL);
    for (std::size_t i = sums.size(); i > 1; --i)
        std::swap(sums[i - 1], sums[rnd.below(i)]);
    double total = 0.0;
    for (double s : sums) total = qbf16(total + s);
    return scalar_output(total, "BF16");
}

// --- elementwise y = x * scale + shift -------------------------------------

KernelOutput elementwise_run(const KernelInput& in, bool mask_nan, bool ftz) {
    const Tensor& x = need(in, "x");
    const double scale = attr(in, "scale", 1.0);
    const double shift = attr(in, "shift", 0.0);
    const PrecisionFormat fmt = ftz ? kc::num::with_ftz(fp32()) : fp32();
    KernelOutput out;
    Tensor y;
    y.shape = x.shape;
    y.format = "FP32";
    for (double v : x.data) {
        if (mask_nan && std::isnan(v)) v = 0.0;
        y.data.push_back(kc::num::quantize(v * scale + shift, fmt));
    }
    out.tensors["y"] = std::move(y);
    return out;
}

// --- single-head attention -------------------------------------------------

bool supported_head_dim(long d) { return d == 64 || d == 128 || d == 256; }

KernelOutput attention_run(const KernelInput& in, bool fp16_softmax) {
    const Tensor &Q = need(in, "q"), &K = need(in, "k"), &V = need(in, "v");
    if (Q.shape.size() != 2 || K.shape != Q.shape || V.shape != Q.shape)
        throw ShapeMismatch("attention expects equal rank-2 q/k/v");
    const long S = Q.shape[0], D = Q.shape[1];
    KernelOutput out;
    if (!supported_head_dim(D)) {
        out.exception = KernelError{"dimension_unsupported",
                                    "head dim " + std::to_string(D) +
                                        " not in {64, 128, 256}",
                                    D};
        return out;
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(double(D));
    auto qmid = fp16_softmax ? q16 : q32;
    Tensor O = zeros_like_shape({S, D});
    std::vector<double> scores(std::size_t(S), 0.0);
    for (long i = 0; i < S; ++i) {
        for (long j = 0; j < S; ++j) {
            double acc = 0.0;
            for (long d = 0; d < D; ++d)
                acc += Q.data[i * D + d] * K.data[j * D + d];
            scores[std::size_t(j)] = q32(acc * inv_sqrt_d);
        }
        const double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        std::vector<double> p(std::size_t(S), 0.0);
        for (long j = 0; j < S; ++j) {
            p[std::size_t(j)] = qmid(std::exp(scores[std::size_t(j)] - mx));
            denom = qmid(denom + p[std::size_t(j)]);
        }
        for (long j = 0; j < S; ++j)
            p[std::size_t(j)] = qmid(p[std::size_t(j)] / denom);
        for (long d = 0; d < D; ++d) {
            double acc = 0.0;
            for (long j = 0; j < S; ++j)
                acc += p[std::size_t(j)] * V.data[j * D + d];
            O.data[i * D + d] = q32(acc);
        }
    }
    out.tensors["y"] = std::move(O);
    return out;
}

KernelOutput attention_baseline(const KernelInput& in,
                                const InvocationContext&) {
    const Tensor& Q = need(in, "q");
    KernelOutput out;
    out.tensors["y"] = zeros_like_shape(Q.shape);
    return out;
}

}  // namespace

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double fp64_reduce(const std::vector<double>& x, const std::string& op) {
    if (op == "variance") {
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= x.empty() ? 1.0 : double(x.size());
        double m2 = 0.0;
        for (double v : x) m2 += (v - mean) * (v - mean);
        return x.empty() ? 0.0 : m2 / double(x.size());
    }
    double acc = 0.0;
    for (double v : x) acc += (op == "norm") ? v * v : v;
    if (op == "mean") return acc / double(x.size());
    if (op == "norm") return std::sqrt(acc);
    return acc;
}

std::string KernelImpl::declared_json() const {
    std::ostringstream os;
    os << "{";
    bool first = true;
    for (const auto& [k, v] : declared) {
        if (!first) os << ",";
        first = false;
        os << "\"" << k << "\":\"" << v << "\"";
    }
    os << "}";
    return os.str();
}

Zoo::Zoo() {
    using M = std::map<std::string, std::string>;
    auto add = [&](std::string id, std::string op_class, CalibrationState st,
                   M declared, auto fn) {
        KernelImpl k;
        k.id = std::move(id);
        k.op_class = std::move(op_class);
        k.state = st;
        k.declared = std::move(declared);
        k.entry = fn;
        impls_.push_back(std::move(k));
    };
    const auto G = CalibrationState::Good;
    const auto B = CalibrationState::Bad;
    const auto Z = CalibrationState::Baseline;

    add("matmul.good", "matmul", G,
        M{{"accumulator", "FP32"}, {"determinism", "BITWISE"}}, matmul_good);
    add("matmul.bad", "matmul", B,
        M{{"accumulator", "FP32"}, {"determinism", "BITWISE"}}, matmul_bad);
    add("matmul.baseline", "matmul", Z, M{}, matmul_baseline);

    add("shape_polymorphic_matmul.good", "matmul", G,
        M{{"shape_class", "any M, N, K"}, {"determinism", "BITWISE"}},
        matmul_good);
    add("shape_polymorphic_matmul.bad", "matmul", B,
        M{{"shape_class", "any M, N, K"}, {"determinism", "BITWISE"}},
        shape_poly_bad);
    add("shape_polymorphic_matmul.baseline", "matmul", Z, M{},
        matmul_baseline);

    add("fused_bias_gelu_matmul.good", "matmul", G, M{{"accumulator", "FP32"}},
        [](const KernelInput& in, const InvocationContext&) {
            return fused_run(in, true, false);
        });
    add("fused_bias_gelu_matmul.bad", "matmul", B, M{{"accumulator", "FP32"}},
        [](const KernelInput& in, const InvocationContext&) {
            return fused_run(in, true, true);
        });
    add("fused_bias_gelu_matmul.baseline", "matmul", Z, M{},
        [](const KernelInput& in, const InvocationContext&) {
            return fused_run(in, false, false);
        });

    add("reduce.good", "reduction", G,
        M{{"accumulator", "FP32"},
          {"determinism", "BITWISE"},
          {"denormal", "IEEE"}},
        reduce_good);
    add("reduce.bad", "reduction", B, M{{"determinism", "BITWISE"}},
        reduce_bad);
    add("reduce.bad_lowprec", "reduction", B,
        M{{"accumulator", "FP32"}, {"determinism", "BITWISE"}},
        reduce_bad_lowprec);
    add("reduce.baseline", "reduction", Z, M{},
        [](const KernelInput&, const InvocationContext&) {
            return scalar_output(0.0);
        });

    add("softmax.good", "softmax", G,
        M{{"softmax_stabilization", "max_subtraction"},
          {"accumulator", "FP32"}},
        [](const KernelInput& in, const InvocationContext&) {
            return softmax_run(need(in, "x").data, true);
        });
    add("softmax.bad", "softmax", B, M{{"accumulator", "FP32"}},
        [](const KernelInput& in, const InvocationContext&) {
            return softmax_run(need(in, "x").data, false);
        });
    add("softmax.baseline", "softmax", Z, M{},
        [](const KernelInput& in, const InvocationContext&) {
            const std::size_t n = need(in, "x").data.size();
            KernelOutput out;
            Tensor y;
            y.shape = {long(n)};
            y.format = "FP32";
            y.data.assign(n, n ? 1.0 / double(n) : 0.0);
            out.tensors["y"] = std::move(y);
            return out;
        });

    add("gather.good_raise", "indexing", G, M{{"oob", "RAISE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return gather_run(in, OobMode::Raise);
        });
    add("gather.good_clamp", "indexing", G, M{{"oob", "CLAMP"}},
        [](const KernelInput& in, const InvocationContext&) {
            return gather_run(in, OobMode::Clamp);
        });
    add("gather.good_zero", "indexing", G, M{{"oob", "ZERO"}},
        [](const KernelInput& in, const InvocationContext&) {
            return gather_run(in, OobMode::Zero);
        });
    add("gather.bad", "indexing", B, M{},
        [](const KernelInput& in, const InvocationContext&) {
            return gather_run(in, OobMode::Wrap);
        });
    add("gather.baseline", "indexing", Z, M{{"oob", "RAISE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return gather_run(in, OobMode::AlwaysRaise);
        });

    add("collective.good", "collective", G,
        M{{"accumulator", "FP32"}, {"determinism", "BITWISE"}},
        collective_good);
    add("collective.bad", "collective", B, M{{"accumulator", "FP32"}},
        collective_bad);
    add("collective.baseline", "collective", Z, M{},
        [](const KernelInput&, const InvocationContext&) {
            return scalar_output(0.0);
        });

    add("elementwise.good", "elementwise", G,
        M{{"nan", "IEEE_PROPAGATE"}, {"denormal", "IEEE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return elementwise_run(in, false, false);
        });
    add("elementwise.bad_nanmask", "elementwise", B,
        M{{"nan", "IEEE_PROPAGATE"}, {"denormal", "IEEE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return elementwise_run(in, true, false);
        });
    add("elementwise.bad_ftz", "elementwise", B,
        M{{"nan", "IEEE_PROPAGATE"}, {"denormal", "IEEE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return elementwise_run(in, false, true);
        });
    add("elementwise.baseline", "elementwise", Z, M{},
        [](const KernelInput& in, const InvocationContext&) {
            const Tensor& x = need(in, "x");
            KernelOutput out;
            out.tensors["y"] = zeros_like_shape(x.shape);
            return out;
        });

    add("attention.good", "fused_attention", G,
        M{{"accumulator", "FP32"},
          {"softmax_stabilization", "max_subtraction"},
          {"determinism", "BITWISE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return attention_run(in, false);
        });
    add("attention.bad", "fused_attention", B,
        M{{"accumulator", "FP32"},
          {"softmax_stabilization", "max_subtraction"},
          {"determinism", "BITWISE"}},
        [](const KernelInput& in, const InvocationContext&) {
            return attention_run(in, true);
        });
    add("attention.baseline", "fused_attention", Z, M{}, attention_baseline);
}

const Zoo& Zoo::instance() {
    static Zoo zoo;
    return zoo;
}

const KernelImpl* Zoo::find(const std::string& id) const {
    for (const auto& k : impls_)
        if (k.id == id) return &k;
    return nullptr;
}

const KernelImpl& Zoo::get(const std::string& id) const {
    const KernelImpl* k = find(id);
    if (!k) throw std::out_of_range("unknown kernel: " + id);
    return *k;
}

// ---------------------------------------------------------------------------
// Smoke test: fixed tiny instances, loose relative 1e-2
// ---------------------------------------------------------------------------

namespace {

bool close_all(const std::vector<double>& got,
               const std::vector<double>& want) {
    if (got.size() != want.size()) return false;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double denom = std::max(std::abs(want[i]), 1e-6);
        if (!(std::abs(got[i] - want[i]) / denom <= 1e-2)) return false;
    }
    return true;
}

Tensor make_tensor(std::vector<long> shape, std::vector<double> data) {
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    t.format = "FP32";
    return t;
}

}  // namespace

bool smoke_test(const KernelImpl& impl) {
    InvocationContext ctx;
    try {
        if (impl.op_class == "matmul") {
            KernelInput in;
            in.tensors["a"] = make_tensor(
                {2, 4}, {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0});
            in.tensors["b"] = make_tensor(
                {4, 2}, {0.5, -0.25, 0.25, 0.5, -0.5, 0.75, 1.0, -0.25});
            in.tensors["bias"] = make_tensor({2}, {1.0, -0.5});
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            const bool fused = impl.id.rfind("fused", 0) == 0;
            std::vector<double> want;
            for (long i = 0; i < 2; ++i)
                for (long j = 0; j < 2; ++j) {
                    double acc = 0.0;
                    for (long t = 0; t < 4; ++t)
                        acc += in.tensors["a"].data[i * 4 + t] *
                               in.tensors["b"].data[t * 2 + j];
                    want.push_back(fused
                                       ? gelu(acc + in.tensors["bias"].data[j])
                                       : acc);
                }
            return close_all(out.tensors.at("y").data, want);
        }
        if (impl.op_class == "reduction" || impl.op_class == "collective") {
            KernelInput in;
            in.tensors["x"] = make_tensor(
                {8}, {0.5, 1.25, 0.75, 1.0, 0.625, 0.875, 1.125, 0.375});
            in.sattrs["op"] = "sum";
            in.attrs["ranks"] = 2;
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            return close_all(out.tensors.at("y").data,
                             {fp64_reduce(in.tensors["x"].data, "sum")});
        }
        if (impl.op_class == "softmax") {
            KernelInput in;
            in.tensors["x"] = make_tensor({4}, {0.1, 0.2, 0.3, 0.4});
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            std::vector<double> want;
            double denom = 0.0;
            for (double v : in.tensors["x"].data) denom += std::exp(v - 0.4);
            for (double v : in.tensors["x"].data)
                want.push_back(std::exp(v - 0.4) / denom);
            return close_all(out.tensors.at("y").data, want);
        }
        if (impl.op_class == "indexing") {
            KernelInput in;
            in.tensors["data"] = make_tensor({4}, {10, 20, 30, 40});
            in.tensors["indices"] = make_tensor({4}, {0, 2, 3, 1});
            in.attrs["bound"] = 4;
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            return close_all(out.tensors.at("y").data, {10, 30, 40, 20});
        }
        if (impl.op_class == "elementwise") {
            KernelInput in;
            in.tensors["x"] = make_tensor({4}, {1, 2, 3, 4});
            in.attrs["scale"] = 0.5;
            in.attrs["shift"] = 0.25;
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            return close_all(out.tensors.at("y").data,
                             {0.75, 1.25, 1.75, 2.25});
        }
        if (impl.op_class == "fused_attention") {
            const long S = 2, D = 64;
            KernelInput in;
            std::vector<double> q, k, v;
            for (long i = 0; i < S * D; ++i) {
                q.push_back(double((i * 7 + 3) % 11) / 11.0 - 0.5);
                k.push_back(double((i * 5 + 1) % 13) / 13.0 - 0.5);
                v.push_back(double((i * 3 + 2) % 7) / 7.0 - 0.5);
            }
            in.tensors["q"] = make_tensor({S, D}, q);
            in.tensors["k"] = make_tensor({S, D}, k);
            in.tensors["v"] = make_tensor({S, D}, v);
            KernelOutput out = impl.entry(in, ctx);
            if (out.raised()) return false;
            // FP64 stable oracle.
            std::vector<double> want(std::size_t(S * D), 0.0);
            for (long i = 0; i < S; ++i) {
                std::vector<double> sc(std::size_t(S), 0.0);
                for (long j = 0; j < S; ++j) {
                    double acc = 0.0;
                    for (long d = 0; d < D; ++d)
                        acc += q[i * D + d] * k[j * D + d];
                    sc[std::size_t(j)] = acc / std::sqrt(double(D));
                }
                const double mx = *std::max_element(sc.begin(), sc.end());
                double denom = 0.0;
                for (double s : sc) denom += std::exp(s - mx);
                for (long d = 0; d < D; ++d) {
                    double acc = 0.0;
                    for (long j = 0; j < S; ++j)
                        acc += std::exp(sc[std::size_t(j)] - mx) / denom *
                               v[j * D + d];
                    want[std::size_t(i * D + d)] = acc;
                }
            }
            return close_all(out.tensors.at("y").data, want);
        }
    } catch (const std::exception&) {
        return false;
    }
    return false;
}

}  // namespace kc::zoo
