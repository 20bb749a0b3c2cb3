// CPU reference kernels and deliberately violating variants: one
// good / bad / baseline triple per implemented contract class.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kc::zoo {

struct Tensor {
    std::vector<long> shape;
    std::vector<double> data;
    std::string format = "FP64";  // grid the data lies on

    std::size_t size() const {
        std::size_t n = 1;
        for (long d : shape) n *= std::size_t(d);
        return n;
    }
};

struct KernelInput {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, double> attrs;        // numeric attributes
    std::map<std::string, std::string> sattrs;  // string attributes (op, ...)
};

struct KernelError {
    std::string kind;  // index_out_of_bounds | dimension_unsupported | ...
    std::string message;
    long index = -1;  // offending index when applicable
};

struct KernelOutput {
    std::map<std::string, Tensor> tensors;
    std::optional<KernelError> exception;
    bool raised() const { return exception.has_value(); }
};

struct InvocationContext {
    std::uint64_t seed = 0;  // nondeterminism source (ignored by BITWISE impls)
    long schedule = 0;       // block-schedule selector
};

enum class CalibrationState { Good, Bad, Baseline };

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KernelImpl {
    std::string id;
    std::string op_class;
    CalibrationState state = CalibrationState::Good;
    // Declarations the contracts check against: accumulator, determinism,
    // denormal, oob, nan, shape_class. Absent key = undeclared.
    std::map<std::string, std::string> declared;
    std::function<KernelOutput(const KernelInput&, const InvocationContext&)>
        entry;

    std::string declared_json() const;
};

class Zoo {
  public:
    static const Zoo& instance();
    const KernelImpl* find(const std::string& id) const;
    const KernelImpl& get(const std::string& id) const;
    const std::vector<KernelImpl>& all() const { return impls_; }

  private:
    Zoo();
    std::vector<KernelImpl> impls_;
};

// The visible test of three-state calibration: one fixed tiny instance per
// implementation family, checked at a loose relative 1e-2.
bool smoke_test(const KernelImpl& impl);

// Shared by the fused kernel and the harness's sequential-composition oracle.
double gelu(double x);

// FP64 block-schedule reduction used as the deterministic reference order.
double fp64_reduce(const std::vector<double>& x, const std::string& op);

}  // namespace kc::zoo
