// Command-line front end: contract parsing, conformance checks, calibration,
// randomized matmul verification and the retest planner.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kc/freivalds.hpp"
#include "kc/harness.hpp"
#include "kc/kernels.hpp"
#include "kc/parser.hpp"
#include "kc/rng.hpp"
#include "kc/trace.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kUnsupported = 2;
constexpr int kInternal = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

kc::lang::ContractAst load_contract(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return kc::lang::parse_contract(ss.str());
}

int cmd_parse(const std::string& path, bool json) {
    namespace fs = std::filesystem;
    std::vector<kc::lang::CorpusEntry> entries;
    if (fs::is_directory(path)) {
        entries = kc::lang::parse_corpus(path);
    } else {
        kc::lang::CorpusEntry e;
        e.name = fs::path(path).stem().string();
        try {
            e.result = load_contract(path);
        } catch (const kc::lang::ParseError& err) {
            e.result = std::string(err.what());
        }
        entries.push_back(std::move(e));
    }
    int bad = 0;
    for (const auto& e : entries) {
        if (!e.ok()) {
            ++bad;
            std::cout << e.name << ": PARSE ERROR: "
                      << std::get<std::string>(e.result) << "\n";
            continue;
        }
        const auto& ast = std::get<kc::lang::ContractAst>(e.result);
        const auto report = kc::lang::validate(ast);
        if (report.error_count()) ++bad;
        if (json) {
            std::cout << "{\"file\":\"" << e.name << "\",\"id\":\"" << ast.id
                      << "\",\"report\":" << report.to_json() << "}\n";
        } else {
            std::cout << e.name << ": " << ast.id << " OK ("
                      << report.error_count() << " errors, "
                      << report.warning_count() << " warnings)\n";
            for (const auto& f : report.findings)
                std::cout << "  [" << f.severity << "] " << f.rule << ": "
                          << f.message << "\n";
        }
    }
    std::cout << entries.size() - bad << "/" << entries.size()
              << " files OK\n";
    return bad ? kViolation : kOk;
}

std::unique_ptr<kc::trace::TraceWriter> make_writer(
    const std::string& trace_out) {
    if (trace_out.empty()) return nullptr;
    return std::make_unique<kc::trace::TraceWriter>(trace_out);
}

int cmd_check(const std::string& contract_path, const std::string& impl_id,
              const kc::harness::RunOptions& base, const std::string& trace_out,
              bool json) {
    const auto ast = load_contract(contract_path);
    const auto* impl = kc::zoo::Zoo::instance().find(impl_id);
    if (!impl) {
        std::cerr << "unknown implementation: " << impl_id << "\n";
        return kUnsupported;
    }
    kc::harness::RunOptions opts = base;
    auto writer = make_writer(trace_out);
    if (writer)
        opts.sink = [&](const kc::trace::TraceRecord& r) { writer->emit(r); };
    const auto report = kc::harness::run_protocol(ast, *impl, opts);
    if (json) {
        std::cout << report.to_json() << "\n";
    } else {
        std::cout << report.contract_id << " x " << report.impl_id << ": "
                  << report.verdict_name() << " (" << report.failure_count
                  << "/" << report.sample_count
                  << " failing, max residual " << report.max_residual << ")\n";
        if (report.matched_signature)
            std::cout << "violation signature matched: "
                      << report.signature_details << "\n";
    }
    return report.exit_code();
}

int cmd_calibrate(const std::string& contract_path,
                  const kc::harness::RunOptions& opts, bool json) {
    const auto ast = load_contract(contract_path);
    const kc::harness::Triple* triple = kc::harness::find_triple(ast.id);
    if (!triple)  // case-study ids calibrate through their base class triple
        for (const auto& t : kc::harness::calibration_triples())
            if (ast.id.rfind(t.contract_id, 0) == 0) triple = &t;
    if (!triple) {
        std::cerr << "no calibration triple for contract " << ast.id << "\n";
        return kUnsupported;
    }
    const auto v = kc::harness::three_state_calibrate(ast, *triple, opts);
    if (json) {
        std::cout << v.to_json() << "\n";
    } else {
        std::cout << v.contract_id << ": separated="
                  << (v.separated ? "true" : "false") << "\n";
        for (const auto& [state, o] : v.per_state)
            std::cout << "  " << state << ": smoke="
                      << (o.smoke_pass ? "pass" : "fail") << " contract="
                      << (o.contract_pass ? "pass" : "fail") << "\n";
    }
    return v.separated ? kOk : kViolation;
}

int cmd_verify_matmul(int n, int k, std::uint64_t seed, double corrupt,
                      bool naive, bool json) {
    kc::rng::SplitMix64 r(seed);
    kc::freivalds::Matrix A(n, n), B(n, n);
    for (Eigen::Index i = 0; i < A.size(); ++i)
        A.data()[i] = r.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < B.size(); ++i)
        B.data()[i] = r.uniform(-1.0, 1.0);
    kc::freivalds::Matrix C = A * B;
    kc::freivalds::VerifierConfig cfg;
    cfg.k = k;
    cfg.seed = r.next();
    cfg.mode = naive ? kc::freivalds::Mode::Naive
                     : kc::freivalds::Mode::Batched;
    if (corrupt != 0.0) {
        const double tau =
            kc::freivalds::threshold(A, B, C, cfg.atol, cfg.rtol);
        C(Eigen::Index(r.below(std::uint64_t(n))),
          Eigen::Index(r.below(std::uint64_t(n)))) += corrupt * tau;
    }
    const auto res = kc::freivalds::verify(A, B, C, cfg);
    if (json) {
        std::cout << "{\"pass\":" << (res.pass ? "true" : "false")
                  << ",\"max_residual\":" << res.max_residual
                  << ",\"threshold\":" << res.threshold_used << "}\n";
    } else {
        std::cout << (res.pass ? "pass" : "FAIL") << " max_residual="
                  << res.max_residual << " threshold=" << res.threshold_used
                  << "\n";
    }
    return res.pass ? kOk : kViolation;
}

int cmd_retest_plan(const std::string& from, const std::string& to,
                    const std::vector<std::string>& subsystems, bool json) {
    const std::set<std::string> subs(subsystems.begin(), subsystems.end());
    const auto plan = kc::trace::retest_plan(from, to, subs);
    if (json) {
        std::cout << plan.to_json() << "\n";
    } else {
        std::cout << from << " -> " << to << " retest set:";
        for (const auto& id : plan.retest_set()) std::cout << " " << id;
        std::cout << "\n";
        for (const auto& [id, d] : plan.per_contract)
            std::cout << "  " << id << ": " << (d.retest ? "retest" : "skip")
                      << " (" << d.reason << ")\n";
    }
    return kOk;
}

int cmd_list_kernels(bool json) {
    for (const auto& impl : kc::zoo::Zoo::instance().all()) {
        const char* state =
            impl.state == kc::zoo::CalibrationState::Good  ? "good"
            : impl.state == kc::zoo::CalibrationState::Bad ? "bad"
                                                           : "baseline";
        if (json) {
            std::cout << "{\"id\":\"" << impl.id << "\",\"op_class\":\""
                      << impl.op_class << "\",\"state\":\"" << state
                      << "\",\"declared\":" << impl.declared_json() << "}\n";
        } else {
            std::cout << impl.id << " (" << impl.op_class << ", " << state
                      << ") declared " << impl.declared_json() << "\n";
        }
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel contract toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    long budget = 256;
    bool json = false, no_timestamp = false;
    std::string trace_out;
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();
    app.add_option("--budget", budget, "sample budget")->capture_default_str();
    app.add_flag("--json", json, "machine-readable output");
    app.add_flag("--no-timestamp", no_timestamp,
                 "fixed epoch timestamps (byte-stable traces)");
    app.add_option("--trace-out", trace_out, "JSONL trace sink path");

    std::string contract_path, impl_id;
    auto* check = app.add_subcommand("check", "run a contract against a kernel");
    check->add_option("contract", contract_path, "contract file")->required();
    check->add_option("--impl", impl_id, "kernel implementation id")
        ->required();

    std::string cal_path;
    auto* calibrate =
        app.add_subcommand("calibrate", "three-state calibration of a triple");
    calibrate->add_option("contract", cal_path, "contract file")->required();

    int vm_n = 256, vm_k = 20;
    double vm_corrupt = 0.0;
    bool vm_naive = false;
    auto* vm = app.add_subcommand("verify-matmul",
                                  "randomized product verification");
    vm->add_option("--n", vm_n, "matrix size")->capture_default_str();
    vm->add_option("--k", vm_k, "probe count")->capture_default_str();
    vm->add_option("--corrupt", vm_corrupt,
                   "corrupt one element by this multiple of the threshold");
    vm->add_flag("--naive", vm_naive, "use the naive per-probe mode");

    int se_trials = 40, se_k = 20;
    std::vector<int> se_shape = {256, 128, 64};
    std::vector<double> se_mags = {0.1, 0.5, 1.0, 1.5, 3.0, 10.0};
    auto* sens = app.add_subcommand("sensitivity",
                                    "corruption detection-rate table (CSV)");
    sens->add_option("--shape", se_shape, "m n p")->expected(3);
    sens->add_option("--trials", se_trials, "trials per magnitude")
        ->capture_default_str();
    sens->add_option("--k", se_k, "probe count")->capture_default_str();
    sens->add_option("--magnitudes", se_mags, "threshold multipliers");

    std::vector<int> ov_sizes = {256, 512, 1024, 2048};
    int ov_k = 10;
    auto* bench = app.add_subcommand("bench-overhead",
                                     "verification overhead benchmark (CSV)");
    bench->add_option("--sizes", ov_sizes, "square sizes");
    bench->add_option("--k", ov_k, "probe count")->capture_default_str();

    std::string rp_from, rp_to;
    std::vector<std::string> rp_subsystems;
    auto* rp = app.add_subcommand("retest-plan",
                                  "version-diff driven retest planner");
    rp->add_option("--from", rp_from, "previous stack version")->required();
    rp->add_option("--to", rp_to, "new stack version")->required();
    rp->add_option("--subsystem", rp_subsystems,
                   "subsystem tag from the release notes (repeatable)");

    app.add_subcommand("list-kernels", "enumerate the kernel registry");

    std::string parse_path;
    auto* parse = app.add_subcommand("parse", "parse and validate contracts");
    parse->add_option("path", parse_path, "contract file or directory")
        ->required();

    // Let the shared options (--seed, --budget, ...) appear after the
    // subcommand name as well as before it.
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help / --version
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUnsupported;  // usage errors share the unsupported exit code
    }

    kc::harness::RunOptions opts;
    opts.seed = seed;
    opts.sample_budget = budget;
    opts.real_timestamps = !no_timestamp;

    try {
        if (check->parsed())
            return cmd_check(contract_path, impl_id, opts, trace_out, json);
        if (calibrate->parsed()) return cmd_calibrate(cal_path, opts, json);
        if (vm->parsed())
            return cmd_verify_matmul(vm_n, vm_k, seed, vm_corrupt, vm_naive,
                                     json);
        if (sens->parsed()) {
            kc::freivalds::VerifierConfig cfg;
            cfg.k = se_k;
            cfg.seed = seed;
            std::cout << kc::freivalds::sensitivity_csv(
                kc::freivalds::sensitivity_experiment(
                    se_shape[0], se_shape[1], se_shape[2], se_mags, se_trials,
                    cfg));
            return kOk;
        }
        if (bench->parsed()) {
            kc::freivalds::VerifierConfig cfg;
            cfg.k = ov_k;
            cfg.seed = seed;
            std::cout << kc::freivalds::overhead_csv(
                kc::freivalds::overhead_benchmark(ov_sizes, cfg));
            return kOk;
        }
        if (rp->parsed())
            return cmd_retest_plan(rp_from, rp_to, rp_subsystems, json);
        if (app.get_subcommand("list-kernels")->parsed())
            return cmd_list_kernels(json);
        if (parse->parsed()) return cmd_parse(parse_path, json);
    } catch (const kc::harness::UnsupportedProtocol& e) {
        std::cerr << "unsupported protocol: " << e.what() << "\n";
        return kUnsupported;
    } catch (const kc::harness::OracleUnavailable& e) {
        std::cerr << "oracle unavailable: " << e.what() << "\n";
        return kUnsupported;
    } catch (const kc::trace::VersionParseError& e) {
        std::cerr << e.what() << "\n";
        return kUnsupported;
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n";
        return kUnsupported;
    } catch (const kc::lang::ParseError& e) {
        std::cerr << "parse error at " << e.line << ":" << e.column << ": "
                  << e.what() << "\n";
        return kViolation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kUnsupported;
}
