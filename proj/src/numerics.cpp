#include "kc/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace kc::num {

double PrecisionFormat::min_normal() const {
    return std::ldexp(1.0, min_exponent());
}

namespace {

PrecisionFormat make_format(std::string name, int mantissa, int exponent,
                            double max_finite, bool has_inf_nan) {
    PrecisionFormat f;
    f.name = std::move(name);
    f.mantissa_bits = mantissa;
    f.exponent_bits = exponent;
    f.eps = std::ldexp(1.0, -mantissa);
    f.unit_roundoff = f.eps / 2.0;
    f.max_finite = max_finite;
    f.has_inf_nan = has_inf_nan;
    return f;
}

}  // namespace

FormatRegistry::FormatRegistry() {
    formats_.push_back(make_format("FP64", 52, 11,
                                   std::numeric_limits<double>::max(), true));
    formats_.push_back(make_format("FP32", 23, 8, 3.4028234663852886e38, true));
    formats_.push_back(make_format("FP16", 10, 5, 65504.0, true));
    formats_.push_back(make_format("BF16", 7, 8, 3.3895313892515355e38, true));
    // OCP E4M3: top mantissa pattern at the top exponent is NaN, so the max
    // finite value is 448 and overflow saturates.
    formats_.push_back(make_format("FP8_E4M3", 3, 4, 448.0, false));
    formats_.push_back(make_format("FP8_E5M2", 2, 5, 57344.0, true));
}

const FormatRegistry& FormatRegistry::instance() {
    static FormatRegistry reg;
    return reg;
}

const PrecisionFormat* FormatRegistry::find(const std::string& name) const {
    for (const auto& f : formats_)
        if (f.name == name) return &f;
    return nullptr;
}

const PrecisionFormat& FormatRegistry::get(const std::string& name) const {
    const PrecisionFormat* f = find(name);
    if (!f) throw std::out_of_range("unknown precision format: " + name);
    return *f;
}

std::vector<std::string> FormatRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& f : formats_) out.push_back(f.name);
    return out;
}

std::string FormatRegistry::to_json() const {
    std::ostringstream os;
    os << "{";
    bool first = true;
    for (const auto& f : formats_) {
        if (!first) os << ",";
        first = false;
        os << "\"" << f.name << "\":{\"mantissa_bits\":" << f.mantissa_bits
           << ",\"exponent_bits\":" << f.exponent_bits
           << ",\"max_finite\":" << f.max_finite
           << ",\"has_inf_nan\":" << (f.has_inf_nan ? "true" : "false") << "}";
    }
    os << "}";
    return os.str();
}

PrecisionFormat with_ftz(const PrecisionFormat& fmt) {
    PrecisionFormat f = fmt;
    f.denormal_policy = DenormalPolicy::FTZ;
    return f;
}

double quantize(double x, const PrecisionFormat& fmt) {
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(x))
        return fmt.has_inf_nan ? x : std::copysign(fmt.max_finite, x);
    if (x == 0.0) return 0.0;

    int e2;
    std::frexp(std::abs(x), &e2);          // |x| = m * 2^e2, m in [0.5, 1)
    int exp = e2 - 1;                      // floor(log2 |x|)
    if (exp < fmt.min_exponent()) exp = fmt.min_exponent();
    const double step = std::ldexp(1.0, exp - fmt.mantissa_bits);
    double q = std::nearbyint(x / step) * step;  // ties to even

    if (std::abs(q) > fmt.max_finite) {
        if (fmt.has_inf_nan)
            return std::copysign(std::numeric_limits<double>::infinity(), x);
        return std::copysign(fmt.max_finite, x);
    }
    if (fmt.denormal_policy == DenormalPolicy::FTZ && q != 0.0 &&
        std::abs(q) < fmt.min_normal())
        return 0.0;
    return q;
}

namespace {

// Monotone signed rank of a grid value: 0 at zero, +/-1 at the smallest
// denormals, one past the max-finite code for infinity.
std::int64_t grid_rank(double x, const PrecisionFormat& fmt) {
    if (x == 0.0) return 0;
    const std::int64_t sign = std::signbit(x) ? -1 : 1;
    const std::int64_t m = std::int64_t{1} << fmt.mantissa_bits;
    if (std::isinf(x)) {
        int ef;
        std::frexp(fmt.max_finite, &ef);
        const int max_exp = ef - 1;
        const std::int64_t top =
            (std::int64_t(max_exp - fmt.min_exponent()) + 2) * m;
        return sign * top;
    }
    int e2;
    std::frexp(std::abs(x), &e2);
    int exp = e2 - 1;
    if (exp < fmt.min_exponent()) exp = fmt.min_exponent();
    const double step = std::ldexp(1.0, exp - fmt.mantissa_bits);
    const std::int64_t units = std::llround(std::abs(x) / step);
    return sign * (std::int64_t(exp - fmt.min_exponent()) * m + units);
}

}  // namespace

std::int64_t ulp_distance(double a, double b, const PrecisionFormat& fmt) {
    if (std::isnan(a) || std::isnan(b)) return kNotComparable;
    if (std::isinf(a) && std::isinf(b) && std::signbit(a) != std::signbit(b))
        return kNotComparable;
    const std::int64_t ra = grid_rank(a, fmt);
    const std::int64_t rb = grid_rank(b, fmt);
    return ra > rb ? ra - rb : rb - ra;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double leaf_residual(double y, double r, ToleranceSpecEval::Kind kind,
                     const PrecisionFormat& fmt) {
    const bool ny = std::isnan(y), nr = std::isnan(r);
    if (ny || nr) return (ny && nr) ? 0.0 : kInf;  // canonical NaN matches NaN
    switch (kind) {
        case ToleranceSpecEval::Kind::Absolute: {
            double d = std::abs(y - r);
            return std::isnan(d) ? kInf : d;  // inf - inf
        }
        case ToleranceSpecEval::Kind::Relative: {
            double d = std::abs(y - r);
            if (std::isnan(d)) return kInf;
            return d / std::max(std::abs(r), fmt.min_normal());
        }
        case ToleranceSpecEval::Kind::Ulp: {
            std::int64_t d = ulp_distance(y, r, fmt);
            return d == kNotComparable ? kInf : double(d);
        }
        default:
            return 0.0;
    }
}

}  // namespace

ToleranceVerdict evaluate_tolerance(const std::vector<double>& y,
                                    const std::vector<double>& ref,
                                    const ToleranceSpecEval& tol,
                                    const PrecisionFormat& fmt) {
    if (y.size() != ref.size())
        throw ShapeMismatch("evaluate_tolerance: size mismatch");

    ToleranceVerdict v;
    v.tolerance_kind = tol.kind;

    if (tol.kind == ToleranceSpecEval::Kind::None) {
        v.pass = true;
        v.bound = 0.0;
        return v;
    }
    if (tol.kind == ToleranceSpecEval::Kind::Elementwise) {
        v.pass = true;
        double worst = -1.0;
        for (const auto& child : tol.children) {
            ToleranceVerdict cv = evaluate_tolerance(y, ref, child, fmt);
            v.pass = v.pass && cv.pass;
            const double scaled = cv.bound > 0.0
                                      ? cv.residual.value / cv.bound
                                      : (cv.residual.value > 0.0 ? kInf : 0.0);
            if (scaled > worst) {
                worst = scaled;
                v.residual = cv.residual;
                v.bound = cv.bound;
            }
        }
        return v;
    }

    v.bound = tol.value;
    double worst = -1.0;
    std::size_t loc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = leaf_residual(y[i], ref[i], tol.kind, fmt);
        if (r > worst) {
            worst = r;
            loc = i;
        }
    }
    if (worst < 0.0) worst = 0.0;  // empty tensors
    v.residual.kind = tol.kind == ToleranceSpecEval::Kind::Absolute
                          ? Residual::Kind::Absolute
                      : tol.kind == ToleranceSpecEval::Kind::Relative
                          ? Residual::Kind::Relative
                          : Residual::Kind::Ulp;
    v.residual.value = worst;
    if (!y.empty()) v.residual.location = loc;
    v.pass = worst <= v.bound;
    return v;
}

ToleranceSpecEval derived_bound(const std::string& class_id,
                                const DerivedBoundParams& p) {
    const PrecisionFormat& fmt =
        p.fmt ? *p.fmt : FormatRegistry::instance().get("FP32");
    ToleranceSpecEval t;
    if (class_id == "C-ORD-01") {
        t.kind = ToleranceSpecEval::Kind::Absolute;
        t.value = double(p.n) * fmt.eps * p.max_abs;
    } else if (class_id == "C-ORD-03") {
        t.kind = ToleranceSpecEval::Kind::Relative;
        t.value = double(p.ranks) * fmt.eps;
    } else if (class_id == "generic-simple") {
        t.kind = ToleranceSpecEval::Kind::Relative;
        t.value = fmt.eps;
    } else if (class_id == "generic-reduction") {
        t.kind = ToleranceSpecEval::Kind::Relative;
        double k = p.n > 1 ? std::log2(double(p.n)) : 1.0;
        if (k < 1.0) k = 1.0;  // floor at the simple-op constant
        t.value = k * fmt.eps;
    } else {
        throw UnknownClass("derived_bound: unknown class " + class_id);
    }
    return t;
}

}  // namespace kc::num
