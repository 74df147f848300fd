// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Usage: acceptance [N ...] to run a subset.

#include "gen.hpp"

#include "mdflow/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

using namespace mdf;
using namespace mdf::testing;
using namespace std::chrono_literals;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects failure notes; the criterion passes when none were added.
struct Checker {
    Outcome out;
    void expect(bool ok, const std::string &what) {
        if (!ok) {
            out.pass = false;
            out.detail += (out.detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string &what) {
        if (out.pass)
            out.detail += (out.detail.empty() ? "" : "; ") + what;
    }
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

std::multiset<Payload> values(const std::vector<ResultRecord> &rs) {
    std::multiset<Payload> out;
    for (const auto &r : rs)
        out.insert(r.failed ? Payload{} : r.value);
    return out;
}

Outcome ac1() {
    Checker c;
    auto t = compile(*pipe(farm(seq("f")), farm(seq("g")))).graph;
    auto dump = dump_graph(canonicalize(t));
    c.expect(dump == "1 1 f [_] -> [(1,2,1)]\n2 1 g [_] -> [OUT]\n", "dump was:\n" + dump);
    return c.out;
}

Outcome ac2() {
    Checker c;
    Gen g(20260101);
    std::size_t payloads = 0;
    for (int i = 0; i < 200 && c.out.pass; ++i) {
        auto tree = random_skeleton(g, 6);
        ExperimentConfig cfg;
        cfg.program = to_text(*tree);
        cfg.workers.assign(static_cast<std::size_t>(g.int_in(1, 4)), WorkerSpec::local());
        for (auto n = g.int_in(0, 64); n > 0; --n)
            cfg.inputs.push_back(random_int_payload(g));
        cfg.tasks = cfg.inputs.size();
        payloads += cfg.tasks;
        auto original = cmd_run(cfg);
        cfg.normalize = true;
        auto normalized = cmd_run(cfg);
        c.expect(original.emitted == cfg.tasks && normalized.emitted == cfg.tasks, "missing results for " + cfg.program);
        c.expect(values(original.results) == values(normalized.results), "multisets differ for " + cfg.program);
    }
    c.note("200 trees, " + std::to_string(payloads) + " payloads");
    return c.out;
}

Outcome ac3() {
    Checker c;
    struct Sweep {
        double grain;
        std::vector<std::size_t> workers;
    };
    // grain 200 at one worker alone takes 200 s for 1K tasks; the sweep skips it.
    std::vector<Sweep> sweeps{{3, {1, 2, 3, 4, 5, 6, 7, 8}}, {70, {1, 2, 4, 8}}, {200, {2, 4, 8}}};
    GrainBench all;
    for (const auto &s : sweeps) {
        BenchGrainOptions o;
        o.grains = {s.grain};
        o.workers = s.workers;
        auto b = cmd_bench_grain(o);
        all.rows.insert(all.rows.end(), b.rows.begin(), b.rows.end());
        all.checks.insert(all.checks.end(), b.checks.begin(), b.checks.end());
        all.monotone = all.monotone && b.monotone;
    }
    std::cout << all.csv();
    std::string table;
    for (const auto &r : all.rows) {
        table += " " + fmt(r.grain, 0) + "/" + std::to_string(r.workers) + "=" + fmt(r.efficiency, 2);
        if (r.grain == 200 && r.workers == 8)
            c.expect(r.efficiency >= 0.90, "grain 200 at 8 workers: " + fmt(r.efficiency));
        if (r.grain == 3 && r.workers >= 4)
            c.expect(r.efficiency <= 0.75, "grain 3 at " + std::to_string(r.workers) + " workers: " + fmt(r.efficiency));
    }
    c.expect(all.monotone, "efficiency rises with workers");
    c.note("grain/workers=eff" + table);
    return c.out;
}

Outcome ac4() {
    Checker c;
    ExperimentConfig cfg;
    cfg.tasks = 1000;
    cfg.grain_ms = 20;
    cfg.workers.assign(8, WorkerSpec::local());
    double expected_s = cfg.tasks * cfg.grain_ms / 8 / 1000.0;
    cfg.faults = {{0.25 * expected_s, 3}, {0.5 * expected_s, 6}};
    auto rep = cmd_run(cfg);
    StandardOpcodeOptions o;
    auto oracle = cmd_oracle(cfg.program, make_inputs(cfg.tasks, cfg.seed), standard_registry(o));
    c.expect(rep.emitted == 1000, "emitted " + std::to_string(rep.emitted));
    c.expect(rep.failed == 0, std::to_string(rep.failed) + " failed");
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < std::min(rep.results.size(), oracle.size()); ++i)
        if (rep.results[i].seq != i || rep.results[i].value != oracle[i].value)
            ++mismatched;
    c.expect(mismatched == 0, std::to_string(mismatched) + " results differ from the oracle");
    c.note("completed in " + fmt(rep.completion_ms / 1000, 2) + " s with 2 of 8 workers killed");
    return c.out;
}

// Emissions in the window (t - w, t], per second.
double windowed(const std::vector<double> &emits, double t_ms, double w_s) {
    auto lo = std::upper_bound(emits.begin(), emits.end(), t_ms - w_s * 1000);
    auto hi = std::upper_bound(emits.begin(), emits.end(), t_ms);
    return static_cast<double>(hi - lo) / w_s;
}

Outcome ac5() {
    Checker c;
    auto cfg = adapt_defaults();
    auto rep = cmd_bench_adapt(cfg);
    const double r = 1.5, tick_ms = cfg.manager.tick_s * 1000, w = cfg.throughput_window_s;
    std::vector<double> emits;
    for (const auto &rec : rep.results)
        emits.push_back(rec.complete_ms);
    std::sort(emits.begin(), emits.end());
    double overload_ms = rep.start_ms + cfg.overload.front().t_s * 1000;
    double end_ms = rep.start_ms + cfg.duration_s * 1000;

    std::optional<double> drop;
    for (double t = overload_ms; t <= end_ms && !drop; t += 50)
        if (!(windowed(emits, t, w) > r))
            drop = t;
    c.expect(drop.has_value(), "throughput never fell to the threshold");
    if (!drop)
        return c.out;

    std::optional<double> detected;
    for (const auto &tk : rep.ticks)
        if (tk.ts_ms >= overload_ms && tk.checked && !tk.satisfied) {
            detected = tk.ts_ms;
            break;
        }
    c.expect(detected && *detected - *drop <= 2 * tick_ms,
             detected ? "violation detected " + fmt((*detected - *drop) / 1000, 2) + " s after the drop"
                      : "violation never detected");

    std::optional<double> acted;
    for (const auto &e : rep.events)
        if (e.kind == "add_worker" && e.detail.value("added", 0) > 0) {
            acted = e.ts_ms;
            break;
        }
    c.expect(acted.has_value(), "no add_worker executed");
    if (!acted)
        return c.out;

    std::optional<double> recross;
    for (double t = *acted; t <= end_ms && !recross; t += 50)
        if (windowed(emits, t, w) > r)
            recross = t;
    c.expect(recross && *recross - *acted <= 60000,
             recross ? "re-crossed " + fmt((*recross - *acted) / 1000, 1) + " s after add_worker" : "never re-crossed");

    std::size_t while_satisfied = 0;
    for (const auto &tk : rep.ticks)
        if (!tk.action.empty() && tk.action != "escalate" && tk.satisfied)
            ++while_satisfied;
    std::size_t after_recross = 0;
    if (recross)
        for (const auto &tk : rep.ticks)
            if (tk.ts_ms > *recross && !tk.action.empty() && windowed(emits, tk.ts_ms, w) > r)
                ++after_recross;
    c.expect(while_satisfied == 0 && after_recross == 0,
             std::to_string(while_satisfied + after_recross) + " reconfigurations while satisfied");
    c.note("drop at " + fmt((*drop - rep.start_ms) / 1000, 1) + " s, detected +" +
           fmt((detected.value_or(*drop) - *drop) / 1000, 2) + " s, add_worker at " +
           fmt((*acted - rep.start_ms) / 1000, 1) + " s, re-crossed +" +
           fmt((recross.value_or(*acted) - *acted) / 1000, 1) + " s, " + std::to_string(rep.reconfigurations) +
           " reconfiguration(s)");
    return c.out;
}

Outcome ac6() {
    Checker c;
    TaskPool pool;
    auto reg = std::make_shared<const OpcodeRegistry>(standard_registry({.grain_ms = 5}));
    Runtime rt(pool, reg);
    for (int i = 0; i < 2; ++i)
        rt.recruit(WorkerSpec::local());
    std::mutex mu;
    std::vector<double> dispatches;
    pool.set_dispatch_observer([&](double ts, Id, Id) {
        std::lock_guard lock(mu);
        dispatches.push_back(ts);
    });
    auto tmpl = compile(*farm(seq("work"))).graph;
    for (int i = 0; i < 1000; ++i)
        pool.submit_task(tmpl, encode_int(i));
    Manager m(rt, {WorkerSpec::local()}, {"work"});
    std::this_thread::sleep_for(300ms);
    m.add_worker(1);
    pool.wait_idle(30s);
    rt.shutdown();

    std::vector<std::string> phases;
    std::map<std::string, double> at;
    for (const auto &e : m.log().events()) {
        phases.push_back(e.kind);
        at.emplace(e.kind, e.ts_ms);
    }
    c.expect((phases == std::vector<std::string>{"stop", "new", "bind", "restart", "add_worker"}),
             "phase order wrong");
    std::size_t inside = 0, before = 0, after = 0;
    for (double ts : dispatches) {
        if (ts > at["stop"] && ts < at["restart"])
            ++inside;
        else if (ts <= at["stop"])
            ++before;
        else
            ++after;
    }
    c.expect(inside == 0, std::to_string(inside) + " dispatches inside stop..restart");
    c.expect(before > 0 && after > 0, "dispatches did not straddle the reconfiguration");
    c.note("stop..restart " + fmt(at["restart"] - at["stop"], 3) + " ms, " + std::to_string(before) + " dispatches before, " +
           std::to_string(after) + " after");
    return c.out;
}

Outcome ac7() {
    Checker c;
    Gen g(777);
    std::size_t escalations = 0;
    for (int round = 0; round < 500; ++round) {
        auto e = gen_expr(g, 3);
        std::set<std::string> vars;
        collect_vars(e, vars);
        for (const auto &v : kVars)
            if (g.chance(0.3))
                vars.insert(v);
        if (vars.empty())
            vars.insert("throughput");
        std::string vtext;
        for (const auto &v : vars)
            vtext += (vtext.empty() ? "" : ",") + v;
        auto contract = std::get<QoSContract>(parse_contract("qos: V=" + vtext + "; E=" + render(e)));
        double n = static_cast<double>(g.int_in(1, 8));
        Bindings b{{"throughput", g.real(0, 4)}, {"workers", n}, {"latency", g.real(1, 50)}};

        std::vector<Plan> plans;
        std::vector<std::pair<long, Bindings>> expect;
        for (auto count = g.int_in(0, 5); count > 0; --count) {
            auto k = static_cast<std::size_t>(g.int_in(1, 4));
            if (g.chance(0.6)) {
                plans.push_back(add_worker_plan(k));
                expect.push_back({static_cast<long>(k), {{"throughput", b["throughput"] * (n + k) / n}, {"workers", n + k}}});
            } else {
                plans.push_back(remove_worker_plan(k));
                expect.push_back({-static_cast<long>(k), {{"throughput", b["throughput"] * (n - k) / n}, {"workers", n - k}}});
            }
        }
        std::optional<std::size_t> want;
        for (std::size_t i = 0; i < plans.size(); ++i) {
            Bindings after = b;
            for (const auto &[name, value] : expect[i].second)
                if (vars.contains(name))
                    after[name] = value;
            if (teval(e, after) != 0.0 && (!want || expect[i].first < expect[*want].first))
                want = i;
        }
        if (!want)
            ++escalations;
        auto got = select_plan(plans, b, contract);
        if (got.chosen != want) {
            c.expect(false, "disagreement on E = " + render(e));
            break;
        }
    }
    c.note("500 triples, " + std::to_string(escalations) + " with no valid plan");
    return c.out;
}

Outcome ac8() {
    Checker c;
    auto reg = standard_registry();
    reg.add("F", 1, 2, [](std::span<const Payload> a) {
        sleep_ms(500);
        auto x = decode_int(a[0]);
        return std::vector<Payload>{encode_int(x / 2), encode_int(x - x / 2)};
    });
    reg.add_unary("G1", [](const Payload &p) {
        sleep_ms(500);
        return encode_int(decode_int(p) * 10);
    });
    reg.add("G2", 2, 1, [](std::span<const Payload> a) {
        sleep_ms(500);
        return std::vector<Payload>{encode_int(decode_int(a[0]) - decode_int(a[1]))};
    });
    reg.add("H", 2, 1, [](std::span<const Payload> a) {
        sleep_ms(500);
        return std::vector<Payload>{encode_int(decode_int(a[0]) + decode_int(a[1]))};
    });
    auto shared = std::make_shared<const OpcodeRegistry>(std::move(reg));
    auto spec = parse_workflow(R"([
        {"name": "F", "opcode": "F", "args": ["$input"]},
        {"name": "G1", "opcode": "G1", "args": ["$F.0"]},
        {"name": "G2", "opcode": "G2", "args": ["$F.1", 3]},
        {"name": "H", "opcode": "H", "args": ["$G1", "$G2"]}
    ])",
                               shared.get());
    TaskPool pool;
    Runtime rt(pool, shared);
    rt.recruit(WorkerSpec::local());
    rt.recruit(WorkerSpec::local());
    Workflow wf(pool, shared);

    auto x = encode_int(41);
    auto t0 = now_ms();
    auto f = wf.submit("F", {x});
    auto g1 = wf.submit("G1", {f.part(0)});
    auto g2 = wf.submit("G2", {f.part(1), encode_int(3)});
    auto h = wf.submit("H", {g1, g2});
    auto got = h.get_value(10000ms);
    double elapsed = now_ms() - t0;

    c.expect(g1.dispatch_ms() < g2.complete_ms() && g2.dispatch_ms() < g1.complete_ms(), "G1 and G2 did not overlap");
    c.expect(elapsed < 1600, "end to end " + fmt(elapsed, 0) + " ms");
    c.expect(got == evaluate_workflow(spec, x, *shared), "result differs from the oracle");
    c.expect(decode_int(got) == 20 * 10 + (21 - 3), "result " + std::to_string(decode_int(got)));
    c.note("end to end " + fmt(elapsed, 0) + " ms, G1 [" + fmt(g1.dispatch_ms() - t0, 0) + "," +
           fmt(g1.complete_ms() - t0, 0) + "] G2 [" + fmt(g2.dispatch_ms() - t0, 0) + "," +
           fmt(g2.complete_ms() - t0, 0) + "]");
    return c.out;
}

Outcome ac9() {
    Checker c;
    TaskPool pool;
    auto reg = std::make_shared<const OpcodeRegistry>(standard_registry());
    Runtime rt(pool, reg);
    rt.recruit(WorkerSpec::local());
    auto tmpl = compile(*seq("id")).graph;
    std::vector<double> lat;
    lat.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
        auto p = encode_int(i);
        auto t0 = now_ms();
        pool.submit_task(tmpl, std::move(p));
        lat.push_back(now_ms() - t0);
    }
    c.expect(pool.wait_idle(30s), "pool did not drain");
    rt.shutdown();
    std::sort(lat.begin(), lat.end());
    double median = lat[lat.size() / 2];
    c.expect(median < 1.0, "median " + fmt(median, 4) + " ms");
    c.note("median " + fmt(median * 1000, 1) + " us, p99 " + fmt(lat[lat.size() * 99 / 100] * 1000, 1) + " us");
    return c.out;
}

Outcome ac10() {
    Checker c;
    auto reg = std::make_shared<const OpcodeRegistry>(standard_registry());
    WorkerServer server(reg, 0);
    server.start();
    auto ex = RemoteExecutor::connect("127.0.0.1", server.port(), reg, 2s);
    Gen g(10);
    std::size_t differing = 0;
    for (int i = 0; i < 1000; ++i) {
        auto p = random_bytes(g, 4096);
        auto out = ex->execute("echo", std::span(&p, 1), 5s);
        if (out.size() != 1 || out[0] != p)
            ++differing;
    }
    c.expect(differing == 0, std::to_string(differing) + " echoes differ");
    c.expect(ex->received(wire::FrameType::Fail) == 0, "FAIL frames received");

    OpcodeRegistry small;
    small.add_unary("echo", [](const Payload &p) { return p; });
    WorkerServer partial(std::make_shared<const OpcodeRegistry>(std::move(small)), 0);
    partial.start();
    TaskPool pool;
    Runtime rt(pool, reg);
    bool rejected = false;
    try {
        rt.recruit(WorkerSpec::remote("127.0.0.1", partial.port()), {"echo", "inc"});
    } catch (const Error &e) {
        rejected = e.code() == Errc::OpcodeManifestMismatch;
    }
    c.expect(rejected && rt.workers().empty(), "manifest mismatch not rejected");
    partial.stop();
    server.stop();
    c.note("1000 echoes, " + std::to_string(ex->received(wire::FrameType::Result)) + " RESULT frames");
    return c.out;
}

struct Criterion {
    int n;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char **argv) {
    std::vector<Criterion> all{
        {1, "compiler golden graph", 1, ac1},
        {2, "normal form equivalence", 60, ac2},
        {3, "grain and efficiency", 600, ac3},
        {4, "fault tolerance", 300, ac4},
        {5, "self-optimization", 300, ac5},
        {6, "add_worker protocol", 10, ac6},
        {7, "plan selection oracle", 30, ac7},
        {8, "workflow diamond", 10, ac8},
        {9, "submission overhead", 60, ac9},
        {10, "wire round trip", 30, ac10},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto &cr : all) {
        if (!only.empty() && !only.contains(cr.n))
            continue;
        auto t0 = now_ms();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double s = (now_ms() - t0) / 1000;
        if (s > cr.budget_s) {
            o.pass = false;
            o.detail += "; took " + fmt(s, 1) + " s, budget " + fmt(cr.budget_s, 0) + " s";
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " AC" << cr.n << " " << cr.name << " (" << fmt(s, 2) << " s): " << o.detail
                  << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
