// Benchmark CLI: builds simulated networks and reproduces the performance
// experiments as machine-readable CSV/JSON reports.
//
//   sim run --experiment path-length --config sim.cfg --out csv
//
// Output lands in $SIM_OUT_DIR (default: current directory). In --check mode
// the exit code is 2 when a declared tolerance fails.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "georing/bench.hpp"

namespace {

std::string out_dir() {
    const char* env = std::getenv("SIM_OUT_DIR");
    return env && *env ? std::string(env) : std::string(".");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw georing::ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw georing::Error("cannot write '" + path + "'");
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical geographic ring overlay simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one experiment and emit a report");
    std::string experiment;
    std::string config_path;
    std::string out_format = "csv";
    int nodes = 0, k = 0, height = -1, neighborhood = 0;
    long long seed = -1;
    bool trace = false, check = false;
    run->add_option("--experiment", experiment,
                    "path-length | peer-latency | path-latency | overhead | storage | convergence | churn")
        ->required();
    run->add_option("--config", config_path, "flat key=value config file");
    run->add_option("--nodes", nodes, "override node count");
    run->add_option("--k", k, "override cluster branching factor");
    run->add_option("--height", height, "override hierarchy height (0 = auto)");
    run->add_option("--neighborhood", neighborhood, "override neighborhood size M");
    run->add_option("--seed", seed, "override base seed");
    run->add_option("--out", out_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    run->add_flag("--trace", trace, "also write per-hop / per-node trace output");
    run->add_flag("--check", check, "verify declared tolerances; exit 2 on failure");

    CLI11_PARSE(app, argc, argv);

    try {
        georing::sim::SimConfig cfg;
        if (!config_path.empty()) cfg = georing::bench::parse_config(read_file(config_path));
        if (nodes > 0) cfg.nodes = nodes;
        if (k > 0) cfg.k = k;
        if (height >= 0) cfg.h = height;
        if (neighborhood > 0) cfg.M = neighborhood;
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
        cfg.validate();

        const auto kind = georing::bench::parse_experiment(experiment);
        georing::bench::ExperimentOptions opts;
        if (nodes > 0) opts.nodes_sweep = {nodes};
        opts.trace = trace;

        const auto report = georing::bench::run_experiment(cfg, kind, opts);

        const std::string base = out_dir() + "/" + experiment;
        if (out_format == "json") {
            write_file(base + ".json", report.to_json().dump(2) + "\n");
            std::cout << "wrote " << base << ".json (" << report.rows.size() << " rows)\n";
        } else {
            write_file(base + ".csv", report.to_csv());
            std::cout << "wrote " << base << ".csv (" << report.rows.size() << " rows)\n";
        }
        if (trace && !opts.trace_out.empty()) {
            write_file(base + "_trace.csv", opts.trace_out);
            std::cout << "wrote " << base << "_trace.csv\n";
        }

        if (check) {
            const auto failures = georing::bench::check_report(kind, report, cfg);
            if (!failures.empty()) {
                for (const auto& f : failures) std::cerr << "check failed: " << f << "\n";
                return 2;
            }
            std::cout << "all declared tolerances hold\n";
        }
    } catch (const georing::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
