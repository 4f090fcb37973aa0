// Command-line front end: run sweeps, verify the update rule, summarise results.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quicklap/config.hpp"
#include "quicklap/report.hpp"
#include "quicklap/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, std::vector<std::string> overrides, const std::string& out_dir,
            const std::string& backend, const std::optional<std::uint64_t>& seed) {
    if (!backend.empty()) overrides.push_back("backend.kind=" + backend);
    if (seed) overrides.push_back("seeds=[" + std::to_string(*seed) + "]");
    quicklap::RunConfig cfg;
    try {
        cfg = quicklap::load_run_config(config_path, overrides);
    } catch (const quicklap::ConfigError& e) {
        std::cerr << "invalid configuration (" << config_path << "):\n" << e.what();
        return 2;
    }
    const quicklap::SweepResult result = quicklap::execute_run(cfg, out_dir, &std::cerr);
    for (const auto& row : result.summary) {
        std::printf("%-8s %-14s %.6f +- %.6f (n=%zu)\n", row.scenario.c_str(),
                    std::string(quicklap::algorithm_name(row.algorithm)).c_str(), row.mean_nmse, row.sem, row.n);
    }
    for (const auto& e : result.episodes) {
        if (!e.ok()) return 1;
    }
    return 0;
}

int cmd_verify(std::uint64_t seed) {
    const quicklap::VerifyReport report = quicklap::run_verification(seed, quicklap::update_quicklap, &std::cout);
    std::cout << "seed " << report.seed << "\n";
    if (report.passed()) {
        std::cout << "all " << report.checks << " checks passed\n";
        return 0;
    }
    std::cout << report.failures.size() << " of " << report.checks << " checks failed\n";
    return 1;
}

int cmd_report(const std::string& dir, const std::string& format) {
    std::cout << quicklap::render_report(dir, quicklap::report_format_from_name(format));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online reward inference from physical corrections and language"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an episode or a sweep from a config file");
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir = "results";
    std::string backend;
    std::optional<std::uint64_t> run_seed;
    run->add_option("--config", config_path, "JSON config or run manifest")->required();
    run->add_option("--set", sets, "Override a setting, e.g. backend.kind=mock (repeatable)");
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run->add_option("--backend", backend, "Language backend")
        ->check(CLI::IsMember({"remote", "mock", "replay", "oracle"}));
    run->add_option("--seed", run_seed, "Run a single seed");

    auto* verify = app.add_subcommand("verify", "Check the update rule against its posterior");
    std::uint64_t verify_seed = 0;
    verify->add_option("--seed", verify_seed, "Seed of the randomized checks")->capture_default_str();

    auto* report = app.add_subcommand("report", "Summarise a results directory");
    std::string results_dir;
    std::string format = "markdown";
    report->add_option("results_dir", results_dir, "Directory written by run")->required();
    report->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"markdown", "csv"}))
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, sets, out_dir, backend, run_seed);
        if (*verify) return cmd_verify(verify_seed);
        if (*report) return cmd_report(results_dir, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
