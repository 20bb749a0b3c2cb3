// Software-emulated floating-point formats, ULP arithmetic and tolerance
// evaluation. All kernel math in this project runs in native double and is
// quantized onto a format's grid at declared storage/accumulation points.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kc::num {

enum class DenormalPolicy { IEEE, FTZ };

struct PrecisionFormat {
    std::string name;
    int mantissa_bits = 0;   // fraction bits, excluding the implicit leading 1
    int exponent_bits = 0;
    double eps = 0.0;        // 2^-mantissa_bits
    double unit_roundoff = 0.0;
    double max_finite = 0.0;
    bool has_inf_nan = true;
    DenormalPolicy denormal_policy = DenormalPolicy::IEEE;

    int exponent_bias() const { return (1 << (exponent_bits - 1)) - 1; }
    int min_exponent() const { return 1 - exponent_bias(); }
    double min_normal() const;
};

// Immutable registry of built-in formats (FP64, FP32, FP16, BF16, FP8_E4M3,
// FP8_E5M2). FP8_E4M3 saturates on overflow; the others overflow to infinity.
class FormatRegistry {
  public:
    static const FormatRegistry& instance();
    const PrecisionFormat& get(const std::string& name) const;
    const PrecisionFormat* find(const std::string& name) const;
    std::vector<std::string> names() const;
    std::string to_json() const;

  private:
    FormatRegistry();
    std::vector<PrecisionFormat> formats_;
};

// Nearest representable value under round-to-nearest-even. Overflow goes to
// +/-inf when the format has infinities, else saturates at max_finite.
// Denormals are flushed to zero when the format instance is FTZ.
double quantize(double x, const PrecisionFormat& fmt);

// FTZ variant of a registry format.
PrecisionFormat with_ftz(const PrecisionFormat& fmt);

inline constexpr std::int64_t kNotComparable = -1;

// Number of representable values strictly between a and b plus zero on
// equality; kNotComparable for NaN operands or opposite infinities.
// Operands must already lie on the format grid.
std::int64_t ulp_distance(double a, double b, const PrecisionFormat& fmt);

struct ToleranceSpecEval {
    enum class Kind { Absolute, Relative, Ulp, Elementwise, None };
    Kind kind = Kind::None;
    double value = 0.0;
    std::vector<ToleranceSpecEval> children;  // elementwise only
};

struct Residual {
    enum class Kind { Absolute, Relative, Ulp };
    Kind kind = Kind::Absolute;
    double value = 0.0;
    std::optional<std::size_t> location;  // element index of the maximizer
};

struct ToleranceVerdict {
    bool pass = false;
    Residual residual;
    double bound = 0.0;
    ToleranceSpecEval::Kind tolerance_kind = ToleranceSpecEval::Kind::None;
};

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Evaluates a tolerance leaf (or elementwise conjunction) over two equal-length
// value sequences. Relative residuals use |y-r| / max(|r|, min_normal(fmt)).
// Pass is residual <= bound so a zero bound admits exact equality.
ToleranceVerdict evaluate_tolerance(const std::vector<double>& y,
                                    const std::vector<double>& ref,
                                    const ToleranceSpecEval& tol,
                                    const PrecisionFormat& fmt);

struct DerivedBoundParams {
    std::size_t n = 0;        // reduction length
    std::size_t ranks = 1;    // K, collective classes
    double max_abs = 1.0;
    const PrecisionFormat* fmt = nullptr;
};

struct UnknownClass : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Class tolerance formulas: C-ORD-01 gives absolute n*eps*max|x|, C-ORD-03
// gives relative K*eps, generic-simple relative eps, generic-reduction
// relative max(1, log2 n)*eps.
ToleranceSpecEval derived_bound(const std::string& class_id,
                                const DerivedBoundParams& params);

}  // namespace kc::num
