#include "mdflow/harness.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <pthread.h>

#include "CLI11.hpp"

using namespace mdf;

namespace {

void write_text(const std::string &path, const std::string &text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw Error(Errc::Config, "cannot write " + path);
    out << text;
}

std::vector<Payload> read_inputs(const std::string &path) {
    std::vector<Payload> out;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        out.push_back(payload_from_text(line));
    }
    return out;
}

/** "1..8" or "1,2,4". */
std::vector<std::size_t> parse_counts(const std::string &text) {
    std::vector<std::size_t> out;
    auto dots = text.find("..");
    if (dots != std::string::npos) {
        std::size_t lo = std::stoul(text.substr(0, dots));
        std::size_t hi = std::stoul(text.substr(dots + 2));
        if (lo == 0 || hi < lo)
            throw Error(Errc::Config, "bad worker range " + text);
        for (std::size_t w = lo; w <= hi; ++w)
            out.push_back(w);
        return out;
    }
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        out.push_back(std::stoul(item));
    return out;
}

std::vector<double> parse_doubles(const std::string &text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        out.push_back(std::stod(item));
    return out;
}

int run_worker(std::uint16_t port, double grain_ms) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGTERM);
    sigaddset(&set, SIGINT);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    StandardOpcodeOptions opts;
    opts.grain_ms = grain_ms;
    WorkerServer server(std::make_shared<const OpcodeRegistry>(standard_registry(opts)), port);
    server.start();
    std::cout << "listening " << server.port() << std::endl;

    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    std::cerr << "stopped after " << server.executed() << " requests" << std::endl;
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"mdflow: macro data-flow skeleton runtime"};
    app.require_subcommand(1);

    ExperimentConfig run_cfg;
    std::string run_workers, run_faults, run_overload, run_out, run_results, run_config, run_in;
    auto *run = app.add_subcommand("run", "Run a program over a task stream");
    run->add_option("--config", run_config, "key = value config file, applied before flags");
    run->add_option("--program", run_cfg.program, "Skeleton text or workflow:@file.json");
    run->add_option("--tasks", run_cfg.tasks);
    run->add_option("--grain", run_cfg.grain_ms, "Compute ms of the work opcode");
    run->add_option("--comm", run_cfg.comm_ms, "Injected delay ms per message");
    run->add_option("--workers", run_workers, "local:K or a list of local / host:port");
    run->add_option("--contract", run_cfg.contract, "pardegree:N, throughput:R or qos: V=..; E=..");
    run->add_flag("--normalize", run_cfg.normalize);
    run->add_option("--faults", run_faults, "File of 'time_s worker' lines");
    run->add_option("--overload", run_overload, "File of 'time_s worker factor' lines");
    run->add_option("--duration", run_cfg.duration_s, "Feed continuously for this many seconds");
    run->add_option("--seed", run_cfg.seed);
    run->add_option("--in", run_in, "Input payloads, one per line");
    run->add_option("--out", run_out, "report.json");
    run->add_option("--results", run_results, "Per-seq results text");

    std::uint16_t worker_port = 0;
    double worker_grain = 0;
    auto *worker = app.add_subcommand("worker", "Serve opcodes over TCP until SIGTERM");
    worker->add_option("--port", worker_port, "0 picks a free port")->required();
    worker->add_option("--grain", worker_grain, "Compute ms of the work opcode");

    std::string bg_grains = "3,70,200", bg_workers = "1..8", bg_out;
    BenchGrainOptions bg;
    auto *bench_grain = app.add_subcommand("bench-grain", "Efficiency over grain x workers");
    bench_grain->add_option("--grains", bg_grains);
    bench_grain->add_option("--workers", bg_workers);
    bench_grain->add_option("--comm", bg.comm_ms);
    bench_grain->add_option("--tasks", bg.tasks);
    bench_grain->add_option("--out", bg_out, "CSV path");

    std::string ba_config, ba_out, ba_log;
    auto *bench_adapt = app.add_subcommand("bench-adapt", "Throughput contract under scripted overload");
    bench_adapt->add_option("--config", ba_config, "Overrides of the built-in scenario");
    bench_adapt->add_option("--out", ba_out, "report.json");
    bench_adapt->add_option("--event-log", ba_log, "JSON-lines event log");

    std::string or_program, or_in, or_out;
    double or_grain = 0;
    auto *oracle = app.add_subcommand("oracle", "Sequential reference evaluation");
    oracle->add_option("--program", or_program)->required();
    oracle->add_option("--in", or_in, "Input payloads, one per line")->required();
    oracle->add_option("--out", or_out);
    oracle->add_option("--grain", or_grain);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ExperimentConfig cfg = run_cfg;
            if (!run_config.empty()) {
                cfg = load_config_file(run_config);
                // flags given explicitly win over the file
                if (run->count("--program"))
                    cfg.program = run_cfg.program;
                if (run->count("--tasks"))
                    cfg.tasks = run_cfg.tasks;
                if (run->count("--grain"))
                    cfg.grain_ms = run_cfg.grain_ms;
                if (run->count("--comm"))
                    cfg.comm_ms = run_cfg.comm_ms;
                if (run->count("--contract"))
                    cfg.contract = run_cfg.contract;
                if (run->count("--normalize"))
                    cfg.normalize = true;
                if (run->count("--duration"))
                    cfg.duration_s = run_cfg.duration_s;
                if (run->count("--seed"))
                    cfg.seed = run_cfg.seed;
            }
            if (!run_workers.empty())
                cfg.workers = parse_worker_list(run_workers);
            if (!run_faults.empty())
                cfg.faults = parse_faults(read_file(run_faults));
            if (!run_overload.empty())
                cfg.overload = parse_overload(read_file(run_overload));
            if (!run_in.empty())
                cfg.inputs = read_inputs(run_in);
            auto rep = cmd_run(cfg);
            if (!run_out.empty())
                write_text(run_out, rep.to_json().dump(2) + "\n");
            if (!run_results.empty())
                write_text(run_results, results_text(rep.results));
            std::cerr << "tasks " << rep.tasks << " emitted " << rep.emitted << " failed " << rep.failed
                      << " completion_ms " << rep.completion_ms << " efficiency " << rep.efficiency << '\n';
            return rep.exit_code;
        }
        if (*worker)
            return run_worker(worker_port, worker_grain);
        if (*bench_grain) {
            bg.grains = parse_doubles(bg_grains);
            bg.workers = parse_counts(bg_workers);
            auto bench = cmd_bench_grain(bg);
            write_text(bg_out, bench.csv());
            return bench.monotone ? ExitOk : ExitTaskFailures;
        }
        if (*bench_adapt) {
            ExperimentConfig cfg = ba_config.empty() ? adapt_defaults() : load_config_file(ba_config, adapt_defaults());
            if (!ba_log.empty())
                cfg.event_log = ba_log;
            auto rep = cmd_bench_adapt(cfg);
            write_text(ba_out, rep.to_json().dump(2) + "\n");
            return rep.exit_code;
        }
        if (*oracle) {
            StandardOpcodeOptions opts;
            opts.grain_ms = or_grain;
            auto registry = standard_registry(opts);
            write_text(or_out, results_text(cmd_oracle(or_program, read_inputs(or_in), registry)));
            return ExitOk;
        }
    } catch (const std::exception &e) {
        std::cerr << "mdflow: " << e.what() << '\n';
        return ExitInfrastructure;
    }
    return ExitOk;
}
