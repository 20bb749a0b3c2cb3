// Randomized matmul verification (Freivalds' algorithm) with batched and
// naive modes, a corruption-sensitivity experiment, a soundness spot-check
// and an overhead benchmark.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kc::freivalds {

using Matrix = Eigen::MatrixXd;

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Mode { Batched, Naive };

struct VerifierConfig {
    int k = 20;          // iteration count; false-accept probability 2^-k
    double atol = 1e-4;  // FP32 defaults
    double rtol = 1e-4;
    Mode mode = Mode::Batched;
    std::uint64_t seed = 42;
};

struct VerifyResult {
    bool pass = false;
    double max_residual = 0.0;
    std::vector<double> per_iteration_residuals;  // length k
    double threshold_used = 0.0;
};

// Aggregate norm-based acceptance threshold for C ?= A·B:
// atol·sqrt(n) + rtol·|A|_F·|B|_F / sqrt(m·p). The sensitivity experiment
// normalizes corruption magnitudes by this value. Internally, verify tests
// each residual row against a per-row variant of the same formula and scales
// residuals back to this aggregate so "1x threshold" stays self-consistent.
double threshold(const Matrix& A, const Matrix& B, const Matrix& C,
                 double atol, double rtol);

// Tests C ?= A·B with k Rademacher probes. Batched mode computes A(BR) - CR
// as three matrix products; naive mode accumulates the same products with
// explicit column-by-column loops. Both modes draw identical probe columns
// per seed and return identical verdicts.
VerifyResult verify(const Matrix& A, const Matrix& B, const Matrix& C,
                    const VerifierConfig& cfg = {});

struct SensitivityRow {
    double multiplier = 0.0;
    int detected = 0;
    int trials = 0;
    double rate = 0.0;
};

// Corrupts one random element of a correct product by multiplier x threshold
// per trial and tabulates detection rates.
std::vector<SensitivityRow> sensitivity_experiment(
    int m, int n, int p, const std::vector<double>& magnitudes, int trials,
    const VerifierConfig& cfg = {});

// CSV: multiplier,detected,trials,rate
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

// Runs verify on known-correct products whose C carries FP32 storage noise;
// returns the false-positive count (expected 0).
int soundness_spot_check(int trials, int n, const VerifierConfig& cfg);

struct OverheadRow {
    int n = 0;
    double matmul_ms = 0.0;
    double batched_ms = 0.0;
    double naive_ms = 0.0;
    double batched_pct = 0.0;
    double naive_pct = 0.0;
};

// Times square matmul vs both verifier modes; median of 5 after 1 warmup.
std::vector<OverheadRow> overhead_benchmark(const std::vector<int>& sizes,
                                            const VerifierConfig& cfg = {});

// CSV: n,matmul_ms,batched_ms,naive_ms,batched_pct,naive_pct
std::string overhead_csv(const std::vector<OverheadRow>& rows);

}  // namespace kc::freivalds
