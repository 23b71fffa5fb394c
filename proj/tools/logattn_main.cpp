#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "logattn/harness.hpp"
#include "logattn/streaming.hpp"

namespace {

void add_common_options(CLI::App& sub, logattn::RunConfig& cfg) {
    sub.add_option("--n", cfg.n, "Sequence length")->capture_default_str();
    sub.add_option("--dk", cfg.d_k, "Key dimension")->capture_default_str();
    sub.add_option("--dv", cfg.d_v, "Value dimension")->capture_default_str();
    sub.add_option("--seed", cfg.seed,
                   "RNG seed; fully determines every generated input")
        ->capture_default_str();
    sub.add_option("--range", cfg.value_range,
                   "Entries are drawn uniformly from [-range, range)")
        ->capture_default_str();
    sub.add_option("--tol", cfg.tol_cross,
                   "Cross-form tolerance on exp(logA)")
        ->capture_default_str();
    sub.add_option("--chunk", cfg.chunk,
                   "Chunk size for the chunk-parallel state build")
        ->capture_default_str();
    sub.add_option("--out", cfg.out_path,
                   "Write the report to this file instead of stdout");
}

void write_report(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw logattn::StateIoError("cannot write report: " + out_path);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Log-space attention harness: property checks, scaling benchmarks, "
        "and a state save/resume demo"};
    app.require_subcommand(1);

    logattn::RunConfig check_cfg;
    logattn::RunConfig bench_cfg;
    bench_cfg.n = 2048;  // largest n the quadratic form is benchmarked at
    logattn::RunConfig demo_cfg;
    std::string form_name;
    std::string snapshot_path = "logattn_state.bin";

    CLI::App* check = app.add_subcommand(
        "check", "Run every library property at the configured sizes");
    add_common_options(*check, check_cfg);

    CLI::App* bench =
        app.add_subcommand("bench", "Per-token scaling benchmark (CSV)");
    add_common_options(*bench, bench_cfg);
    bench
        ->add_option("--form", form_name,
                     "Benchmark one form only (default: all three)")
        ->check(CLI::IsMember({"quadratic", "logspace", "streaming"}));

    CLI::App* demo = app.add_subcommand(
        "stream-demo",
        "Absorb tokens, snapshot, resume, and verify against an "
        "uninterrupted run");
    add_common_options(*demo, demo_cfg);
    demo->add_option("snapshot", snapshot_path, "State snapshot path")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (check->parsed()) {
            const logattn::CheckReport report = logattn::run_check(check_cfg);
            write_report(report.to_json(check_cfg), check_cfg.out_path);
            return report.all_pass ? 0 : 1;
        }
        if (bench->parsed()) {
            if (form_name == "quadratic") {
                bench_cfg.form = logattn::BenchForm::Quadratic;
            } else if (form_name == "logspace") {
                bench_cfg.form = logattn::BenchForm::Logspace;
            } else if (form_name == "streaming") {
                bench_cfg.form = logattn::BenchForm::Streaming;
            }
            const logattn::BenchReport report = logattn::run_bench(bench_cfg);
            write_report(report.to_csv(), bench_cfg.out_path);
            return 0;
        }
        const logattn::StreamDemoReport report =
            logattn::run_stream_demo(demo_cfg, snapshot_path);
        write_report(report.to_json(), demo_cfg.out_path);
        return report.pass ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const logattn::StateIoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
