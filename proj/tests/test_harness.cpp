#include "doctest.h"
#include "gen.hpp"

#include "mdflow/harness.hpp"

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <spawn.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

extern char **environ;

using namespace mdf;
using namespace mdf::testing;
using namespace std::chrono_literals;

namespace {

template <typename F>
Errc code_of(F &&f) {
    try {
        f();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("no error raised");
    return Errc::Config;
}

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() / ("mdflow_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p;
}

void write_file(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p);
    out << text;
}

struct Child {
    pid_t pid = -1;
    int out_fd = -1;
};

Child spawn(const std::vector<std::string> &args) {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, fds[0]);
    std::vector<char *> argv;
    for (const auto &a : args)
        argv.push_back(const_cast<char *>(a.c_str()));
    argv.push_back(nullptr);
    Child c;
    REQUIRE(posix_spawn(&c.pid, argv[0], &fa, nullptr, argv.data(), environ) == 0);
    posix_spawn_file_actions_destroy(&fa);
    ::close(fds[1]);
    c.out_fd = fds[0];
    return c;
}

std::string read_line(int fd) {
    std::string line;
    char ch;
    while (::read(fd, &ch, 1) == 1 && ch != '\n')
        line += ch;
    return line;
}

int wait_exit(pid_t pid) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_cli(const std::vector<std::string> &args) {
    std::vector<std::string> full{MDFLOW_CLI};
    full.insert(full.end(), args.begin(), args.end());
    auto c = spawn(full);
    char buf[256];
    while (::read(c.out_fd, buf, sizeof buf) > 0) {
    }
    ::close(c.out_fd);
    return wait_exit(c.pid);
}

std::vector<std::int64_t> ints(const std::vector<ResultRecord> &rs) {
    std::vector<std::int64_t> out;
    for (const auto &r : rs)
        out.push_back(r.failed ? INT64_MIN : decode_int(r.value));
    return out;
}

} // namespace

TEST_CASE("config files") {
    auto cfg = parse_config(R"cfg(
# scenario
program = "pipe(seq:inc,seq:dbl)"
tasks = 50
grain = 2.5
comm = 1
workers = local:3
spare = local, 127.0.0.1:7000
contract = throughput:1.5
normalize = true
faults = 1.5 2, 3:1
overload = 60 1 4
duration = 30
tick = 0.5
cooldown = 3
event_log = /tmp/x.jsonl
)cfg");
    CHECK(cfg.program == "pipe(seq:inc,seq:dbl)");
    CHECK(cfg.tasks == 50);
    CHECK(cfg.grain_ms == 2.5);
    CHECK(cfg.workers.size() == 3);
    REQUIRE(cfg.spare.size() == 2);
    CHECK(cfg.spare[1].port == 7000);
    CHECK(cfg.normalize);
    REQUIRE(cfg.faults.size() == 2);
    CHECK(cfg.faults[1].t_s == 3);
    CHECK(cfg.faults[1].worker == 1);
    REQUIRE(cfg.overload.size() == 1);
    CHECK(cfg.overload[0].factor == 4);
    CHECK(cfg.manager.tick_s == 0.5);
    CHECK(cfg.manager.cooldown_ticks == 3);

    CHECK(code_of([] { parse_config("bogus = 1"); }) == Errc::Config);
    CHECK(code_of([] { parse_config("tasks = -1"); }) == Errc::Config);
    CHECK(code_of([] { parse_config("tasks"); }) == Errc::Config);
    CHECK(code_of([] { parse_overload("1 1 0.5"); }) == Errc::Config);
    CHECK(code_of([] { parse_faults("1"); }) == Errc::Config);
}

TEST_CASE("inputs are deterministic per seed") {
    CHECK(make_inputs(20, 3) == make_inputs(20, 3));
    CHECK(make_inputs(20, 3) != make_inputs(20, 4));
    CHECK(make_inputs(5, 3)[4] == input_at(4, 3));
}

TEST_CASE("oracle") {
    auto reg = standard_registry();
    std::vector<Payload> in{encode_int(1), encode_int(5), encode_int(-2)};
    auto same = cmd_oracle("farm(seq:id)", in, reg);
    REQUIRE(same.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(same[i].value == in[i]);
    CHECK(ints(cmd_oracle("pipe(seq:inc,seq:dbl)", in, reg)) == std::vector<std::int64_t>{4, 12, -2});
    auto failing = cmd_oracle("seq:fail", in, reg);
    CHECK(failing[0].failed);
    CHECK(results_text(cmd_oracle("seq:inc", {encode_int(1)}, reg)) == "0\t2\n");

    auto dir = temp_dir();
    write_file(dir / "diamond.json", R"([
        {"name": "F", "opcode": "fork", "args": ["$input"]},
        {"name": "G1", "opcode": "inc", "args": ["$F.0"]},
        {"name": "G2", "opcode": "mul", "args": ["$F.1", 3]},
        {"name": "H", "opcode": "add", "args": ["$G1", "$G2"]}
    ])");
    auto wf = cmd_oracle("workflow:@" + (dir / "diamond.json").string(), in, reg);
    CHECK(ints(wf) == std::vector<std::int64_t>{1 + 1 + 3, 5 + 1 + 15, -2 + 1 - 6});
}

TEST_CASE("run matches the oracle per seq") {
    ExperimentConfig cfg;
    cfg.program = "pipe(farm(seq:inc),farm(pipe(seq:sq,seq:neg)))";
    cfg.tasks = 300;
    cfg.workers.assign(4, WorkerSpec::local());
    auto rep = cmd_run(cfg);
    CHECK(rep.exit_code == ExitOk);
    CHECK(rep.emitted == 300);
    auto oracle = cmd_oracle(cfg.program, make_inputs(300, cfg.seed), standard_registry());
    CHECK(ints(rep.results) == ints(oracle));
    CHECK(rep.latencies_ms.size() == 300);
    CHECK(rep.efficiency > 0);

    cfg.normalize = true;
    auto norm = cmd_run(cfg);
    CHECK(ints(norm.results) == ints(oracle));
}

TEST_CASE("run survives scripted worker kills") {
    ExperimentConfig cfg;
    cfg.tasks = 200;
    cfg.grain_ms = 5;
    cfg.workers.assign(4, WorkerSpec::local());
    cfg.faults = {{0.05, 1}, {0.1, 3}};
    auto rep = cmd_run(cfg);
    CHECK(rep.emitted == 200);
    CHECK(rep.failed == 0);
    StandardOpcodeOptions o;
    o.grain_ms = 0;
    CHECK(ints(rep.results) == ints(cmd_oracle(cfg.program, make_inputs(200, cfg.seed), standard_registry(o))));
}

TEST_CASE("run reports task failures and total loss") {
    ExperimentConfig cfg;
    cfg.program = "seq:fail";
    cfg.tasks = 3;
    auto rep = cmd_run(cfg);
    CHECK(rep.failed == 3);
    CHECK(rep.exit_code == ExitTaskFailures);

    ExperimentConfig lost;
    lost.tasks = 50;
    lost.grain_ms = 20;
    lost.workers.assign(1, WorkerSpec::local());
    lost.faults = {{0.05, 1}};
    CHECK(code_of([&] { cmd_run(lost); }) == Errc::ConnectionLost);
}

TEST_CASE("zero tasks and zero workers") {
    ExperimentConfig cfg;
    cfg.tasks = 0;
    auto rep = cmd_run(cfg);
    CHECK(rep.emitted == 0);
    CHECK(rep.exit_code == ExitOk);

    cfg.tasks = 10;
    cfg.workers.clear();
    rep = cmd_run(cfg);
    CHECK(rep.emitted == 10);
    CHECK(rep.workers == 1);
}

TEST_CASE("workflow program") {
    auto dir = temp_dir();
    write_file(dir / "wf.json", R"([
        {"name": "F", "opcode": "split2", "args": ["$input"]},
        {"name": "H", "opcode": "add", "args": ["$F.1", "$F.0"]}
    ])");
    ExperimentConfig cfg;
    cfg.program = "workflow:@" + (dir / "wf.json").string();
    cfg.tasks = 40;
    cfg.workers.assign(2, WorkerSpec::local());
    auto rep = cmd_run(cfg);
    REQUIRE(rep.emitted == 40);
    auto inputs = make_inputs(40, cfg.seed);
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(rep.results[i].value == inputs[i]);
}

TEST_CASE("report json") {
    ExperimentConfig cfg;
    cfg.tasks = 5;
    auto j = cmd_run(cfg).to_json();
    CHECK(j["emitted"] == 5);
    CHECK(j["results"].size() == 5);
    CHECK(j.contains("throughput_series"));
    CHECK(j.contains("efficiency"));
}

TEST_CASE("grain bench shape") {
    BenchGrainOptions o;
    o.grains = {3, 20};
    o.workers = {1, 2};
    o.tasks = 100;
    auto b = cmd_bench_grain(o);
    CHECK(b.rows.size() == 4);
    CHECK(b.checks.size() == 2);
    auto csv = b.csv();
    CHECK(csv.starts_with("grain,workers,efficiency\n"));
    for (const auto &r : b.rows) {
        CHECK(r.efficiency > 0);
        CHECK(r.efficiency <= 1.05);
        if (r.workers == 1)
            CHECK(r.efficiency >= 0.95);
    }
}

TEST_CASE("bench-adapt needs a throughput contract") {
    auto cfg = adapt_defaults();
    cfg.contract = "pardegree:2";
    CHECK(code_of([&] { cmd_bench_adapt(cfg); }) == Errc::Config);
}

TEST_CASE("cli run, oracle and exit codes") {
    auto dir = temp_dir();
    write_file(dir / "in.txt", "1\n2\n3\n");
    auto in = (dir / "in.txt").string();
    auto a = (dir / "a.txt").string(), b = (dir / "b.txt").string();
    CHECK(run_cli({"oracle", "--program", "pipe(seq:inc,seq:sq)", "--in", in, "--out", a}) == 0);
    CHECK(run_cli({"run", "--program", "pipe(farm(seq:inc),farm(seq:sq))", "--in", in, "--workers", "local:2",
                   "--results", b, "--out", (dir / "r.json").string()}) == 0);
    std::ifstream fa(a), fb(b);
    std::string ta((std::istreambuf_iterator<char>(fa)), {}), tb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ta == "0\t4\n1\t9\n2\t16\n");
    CHECK(ta == tb);
    CHECK(run_cli({"run", "--program", "seq:nope", "--tasks", "1"}) == ExitInfrastructure);
    CHECK(run_cli({"run", "--program", "seq:fail", "--tasks", "1"}) == ExitTaskFailures);
}

TEST_CASE("cli worker drains on SIGTERM") {
    auto child = spawn({MDFLOW_CLI, "worker", "--port", "0", "--grain", "300"});
    auto line = read_line(child.out_fd);
    REQUIRE(line.starts_with("listening "));
    auto port = static_cast<std::uint16_t>(std::stoi(line.substr(10)));

    auto reg = std::make_shared<const OpcodeRegistry>(standard_registry());
    auto ex = RemoteExecutor::connect("127.0.0.1", port, reg, 2s);
    std::vector<Payload> out;
    std::thread req([&] {
        Payload x = encode_int(41);
        out = ex->execute("work", std::span(&x, 1), 5s);
    });
    std::this_thread::sleep_for(100ms);
    ::kill(child.pid, SIGTERM);
    req.join();
    REQUIRE(out.size() == 1);
    CHECK(decode_int(out[0]) == 42);
    CHECK(wait_exit(child.pid) == 0);
    ::close(child.out_fd);
    CHECK(code_of([&] { wire::Socket::connect("127.0.0.1", port, 500ms); }) == Errc::Unreachable);
}
