#ifndef MDFLOW_HARNESS_HPP
#define MDFLOW_HARNESS_HPP

#include "mdflow/manager.hpp"
#include "mdflow/runtime.hpp"
#include "mdflow/skeleton.hpp"
#include "mdflow/workflow.hpp"

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mdf {

struct FaultEvent {
    double t_s = 0;
    WorkerId worker = 0;
};

struct OverloadEvent {
    double t_s = 0;
    WorkerId worker = 0;
    double factor = 1;
};

/** Exit statuses of the CLI commands. */
enum ExitCode : int {
    ExitOk = 0,
    ExitTaskFailures = 1,
    ExitEscalated = 2,
    ExitInfrastructure = 3,
};

struct ExperimentConfig {
    /// Skeleton text, or "workflow:@file.json".
    std::string program = "farm(seq:work)";
    std::size_t tasks = 0;
    double grain_ms = 0;
    double comm_ms = 0;
    /// Recruited at start. Worker ids are assigned 1, 2, ... in this order.
    std::vector<WorkerSpec> workers{WorkerSpec::local()};
    /// Recruitable later by the manager.
    std::vector<WorkerSpec> spare;
    std::string contract;  // empty: no manager
    bool normalize = false;
    std::vector<FaultEvent> faults;
    std::vector<OverloadEvent> overload;
    /// When positive, tasks are fed continuously for this long instead of `tasks` at once.
    double duration_s = 0;
    /// Live tasks kept in the pool while feeding continuously; 0 means 2 per worker.
    std::size_t backlog = 0;
    std::uint64_t seed = 1;
    ManagerOptions manager;
    double throughput_window_s = 10;
    std::string event_log;  // JSON-lines path, optional
    /// Explicit inputs; when empty, seeded random integers (see make_inputs).
    std::vector<Payload> inputs;
};

/** TOML-style "key = value" lines; '#' starts a comment. Throws Config, Parse. */
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::string &path, ExperimentConfig base = {});

/** "local:K", or a comma-separated list of "local" and "host:port". */
std::vector<WorkerSpec> parse_worker_list(std::string_view text);
/** Lines or comma-separated items "time_s worker" (or "time_s:worker"). */
std::vector<FaultEvent> parse_faults(std::string_view text);
/** Lines or comma-separated items "time_s worker factor" (or colon-separated). */
std::vector<OverloadEvent> parse_overload(std::string_view text);
std::string read_file(const std::string &path);

/** Deterministic task inputs: seeded random integers in [0, 1e6). */
std::vector<Payload> make_inputs(std::size_t n, std::uint64_t seed);
Payload input_at(std::size_t i, std::uint64_t seed);

struct RunReport {
    std::size_t tasks = 0;
    std::size_t emitted = 0;
    std::size_t failed = 0;
    std::size_t workers = 0;  // initial parallelism degree
    double completion_ms = 0;
    double t_seq_ms = 0;
    double efficiency = 0;
    std::vector<ResultRecord> results;  // ordered by seq
    std::vector<double> latencies_ms;   // per seq
    std::vector<double> throughput_series;  // emissions per 1 s bucket
    struct Sample {
        double t_s = 0;
        std::size_t workers = 0;
        double throughput = 0;  // pool window measure at t_s
    };
    std::vector<Sample> samples;  // once per second
    std::vector<LogEvent> events;
    std::vector<TickRecord> ticks;
    double start_ms = 0;  // now_ms() of the first submission
    std::size_t reconfigurations = 0;
    std::size_t escalations = 0;
    int exit_code = ExitOk;

    nlohmann::json to_json() const;
};

/**
 * compile (optionally normalize) -> recruit -> submit stream -> drain ->
 * report. Throws on configuration and recruitment errors.
 */
RunReport cmd_run(const ExperimentConfig &cfg);

/**
 * Sequential reference evaluation, no pool and no runtime. One record per
 * input, in order; only seq, value, failed and error are set.
 */
std::vector<ResultRecord> cmd_oracle(const std::string &program, const std::vector<Payload> &inputs,
                                     const OpcodeRegistry &registry);

/** Runs one task of a compiled graph by direct interpretation. */
Payload evaluate_graph(const Graph &g, const Payload &input, const OpcodeRegistry &registry);
/** Topological evaluation of a workflow; the result node's value. */
Payload evaluate_workflow(const WorkflowSpec &spec, const Payload &input, const OpcodeRegistry &registry);

struct GrainRow {
    double grain = 0;
    std::size_t workers = 0;
    double efficiency = 0;
};

struct BenchGrainOptions {
    std::vector<double> grains{3, 70, 200};
    std::vector<std::size_t> workers{1, 2, 3, 4, 5, 6, 7, 8};
    double comm_ms = 1;
    std::size_t tasks = 1000;
    /// Allowed rise of efficiency from W to W+1 workers before it counts as an increase.
    double tolerance = 0.05;
};

struct GrainBench {
    std::vector<GrainRow> rows;
    std::vector<std::string> checks;  // one line per grain
    bool monotone = true;

    /** CSV with header grain,workers,efficiency and '#' check lines. */
    std::string csv() const;
};

/** `grain` is the compute/communication ratio; compute ms = grain * comm_ms. */
GrainBench cmd_bench_grain(const BenchGrainOptions &opts);

/**
 * The self-optimization scenario: 4 workers plus 4 spares, 2 s tasks,
 * throughput:1.5, half the workers slowed 4x at t = 60 s, 180 s run.
 */
ExperimentConfig adapt_defaults();
RunReport cmd_bench_adapt(const ExperimentConfig &cfg);

/** Opcodes every worker must support to run `program`. */
std::vector<std::string> program_opcodes(const std::string &program, const OpcodeRegistry &registry);

std::string results_text(const std::vector<ResultRecord> &results);

} // namespace mdf

#endif // MDFLOW_HARNESS_HPP
