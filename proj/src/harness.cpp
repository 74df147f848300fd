#include "mdflow/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <set>
#include <thread>

namespace mdf {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::string unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        s = s.substr(1, s.size() - 2);
    return std::string(s);
}

template <typename T>
T number(std::string_view s, std::string_view what) {
    s = trim(s);
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(Errc::Config, std::string(what) + ": bad number '" + std::string(s) + "'");
    return v;
}

bool boolean(std::string_view s, std::string_view what) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    throw Error(Errc::Config, std::string(what) + ": expected true or false");
}

/** Splits on newlines and commas; drops blanks and '#' comments. */
std::vector<std::string> items(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    bool comment = false;
    auto flush = [&] {
        auto t = trim(cur);
        if (!t.empty())
            out.emplace_back(t);
        cur.clear();
    };
    for (char c : text) {
        if (c == '\n') {
            comment = false;
            flush();
        } else if (comment) {
            continue;
        } else if (c == '#') {
            comment = true;
        } else if (c == ',') {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

std::vector<std::string> fields(std::string_view item) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : item) {
        if (c == ':' || std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty())
                out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

constexpr std::string_view kWorkflowPrefix = "workflow:@";

struct Program {
    bool is_workflow = false;
    WorkflowSpec workflow;
    SkeletonPtr skeleton;
    Graph graph;
};

Program load_program(const std::string &text, const OpcodeRegistry &registry, bool normalize_first) {
    Program p;
    if (text.starts_with(kWorkflowPrefix)) {
        p.is_workflow = true;
        p.workflow = load_workflow_file(text.substr(kWorkflowPrefix.size()), &registry);
        return p;
    }
    p.skeleton = parse_skeleton(text);
    if (normalize_first)
        p.skeleton = normalize(*p.skeleton);
    p.graph = compile(*p.skeleton).graph;
    for (const auto &op : graph_opcodes(p.graph))
        if (!registry.contains(op))
            throw Error(Errc::UnknownOpcode, op);
    return p;
}

Payload eval_skeleton(const Skeleton &s, Payload x, const OpcodeRegistry &registry) {
    return std::visit(
        [&](const auto &node) -> Payload {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Seq>) {
                auto out = registry.invoke(node.opcode, std::span<const Payload>(&x, 1));
                if (out.size() != 1)
                    throw Error(Errc::ArityMismatch, node.opcode + " must produce one output in a seq stage");
                return std::move(out[0]);
            } else if constexpr (std::is_same_v<T, Farm>) {
                return eval_skeleton(*node.worker, std::move(x), registry);
            } else if constexpr (std::is_same_v<T, Pipe>) {
                return eval_skeleton(*node.second, eval_skeleton(*node.first, std::move(x), registry), registry);
            } else {
                return evaluate_graph(node.graph, x, registry);
            }
        },
        s.node);
}

Payload eval_program(const Program &p, const Payload &input, const OpcodeRegistry &registry) {
    if (p.is_workflow)
        return evaluate_workflow(p.workflow, input, registry);
    return eval_skeleton(*p.skeleton, input, registry);
}

std::vector<std::string> workflow_opcodes(const WorkflowSpec &spec, const OpcodeRegistry &registry) {
    std::set<std::string> names;
    for (const auto &n : spec.nodes) {
        auto info = registry.info(n.opcode);
        names.insert(info && info->out_arity > 1 ? "pack:" + n.opcode : n.opcode);
    }
    return {names.begin(), names.end()};
}

nlohmann::json record_json(const ResultRecord &r) {
    nlohmann::json j{{"seq", r.seq}};
    if (r.failed)
        j["error"] = r.error;
    else
        j["value"] = payload_to_text(r.value);
    return j;
}

} // namespace

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::Config, "cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<WorkerSpec> parse_worker_list(std::string_view text) {
    text = trim(text);
    std::vector<WorkerSpec> out;
    if (text.empty())
        return out;
    if (text.starts_with("local:")) {
        auto n = number<std::size_t>(text.substr(6), "workers");
        out.assign(n, WorkerSpec::local());
        return out;
    }
    for (const auto &item : items(text))
        out.push_back(WorkerSpec::parse(item));
    return out;
}

std::vector<FaultEvent> parse_faults(std::string_view text) {
    std::vector<FaultEvent> out;
    for (const auto &item : items(text)) {
        auto f = fields(item);
        if (f.size() != 2)
            throw Error(Errc::Config, "fault '" + item + "' must be 'time_s worker'");
        out.push_back({number<double>(f[0], "fault time"), number<WorkerId>(f[1], "fault worker")});
    }
    return out;
}

std::vector<OverloadEvent> parse_overload(std::string_view text) {
    std::vector<OverloadEvent> out;
    for (const auto &item : items(text)) {
        auto f = fields(item);
        if (f.size() != 3)
            throw Error(Errc::Config, "overload '" + item + "' must be 'time_s worker factor'");
        OverloadEvent e{number<double>(f[0], "overload time"), number<WorkerId>(f[1], "overload worker"),
                        number<double>(f[2], "overload factor")};
        if (!(e.factor >= 1))
            throw Error(Errc::Config, "overload factor must be >= 1");
        out.push_back(e);
    }
    return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto body = trim(line);
        if (body.empty() || body.front() == '#' || body.front() == '[')
            continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw Error(Errc::Config, "line " + std::to_string(lineno) + ": expected key = value");
        auto key = std::string(trim(body.substr(0, eq)));
        auto value = unquote(body.substr(eq + 1));
        if (key == "program")
            cfg.program = value;
        else if (key == "tasks")
            cfg.tasks = number<std::size_t>(value, key);
        else if (key == "grain")
            cfg.grain_ms = number<double>(value, key);
        else if (key == "comm")
            cfg.comm_ms = number<double>(value, key);
        else if (key == "workers")
            cfg.workers = parse_worker_list(value);
        else if (key == "spare")
            cfg.spare = parse_worker_list(value);
        else if (key == "contract")
            cfg.contract = value;
        else if (key == "normalize")
            cfg.normalize = boolean(value, key);
        else if (key == "faults")
            cfg.faults = parse_faults(value);
        else if (key == "overload")
            cfg.overload = parse_overload(value);
        else if (key == "duration")
            cfg.duration_s = number<double>(value, key);
        else if (key == "backlog")
            cfg.backlog = number<std::size_t>(value, key);
        else if (key == "seed")
            cfg.seed = number<std::uint64_t>(value, key);
        else if (key == "tick")
            cfg.manager.tick_s = number<double>(value, key);
        else if (key == "warmup")
            cfg.manager.warmup_s = number<double>(value, key);
        else if (key == "cooldown")
            cfg.manager.cooldown_ticks = number<int>(value, key);
        else if (key == "reopen")
            cfg.manager.reopen_ticks = number<int>(value, key);
        else if (key == "max_plan_k")
            cfg.manager.max_plan_k = number<std::size_t>(value, key);
        else if (key == "window")
            cfg.throughput_window_s = number<double>(value, key);
        else if (key == "event_log")
            cfg.event_log = value;
        else
            throw Error(Errc::Config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string &path, ExperimentConfig base) {
    return parse_config(read_file(path), std::move(base));
}

Payload input_at(std::size_t i, std::uint64_t seed) {
    // splitmix64 of (seed, i)
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + (static_cast<std::uint64_t>(i) + 1) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return encode_int(static_cast<std::int64_t>(z % 1000000));
}

std::vector<Payload> make_inputs(std::size_t n, std::uint64_t seed) {
    std::vector<Payload> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(input_at(i, seed));
    return out;
}

Payload evaluate_graph(const Graph &tmpl, const Payload &input, const OpcodeRegistry &registry) {
    Graph g = instantiate(tmpl, 1);
    std::deque<Id> ready;
    auto &entry = g.instructions.at(g.input_id);
    store_token(entry, 1, input);
    if (is_fireable(entry))
        ready.push_back(entry.id);
    while (!ready.empty()) {
        auto &instr = g.instructions.at(ready.front());
        ready.pop_front();
        std::vector<Payload> args;
        for (const auto &t : instr.inputs)
            args.push_back(*t.value);
        auto out = registry.invoke(instr.opcode, args);
        if (out.size() != instr.dests.size())
            throw Error(Errc::ArityMismatch, instr.opcode + " produced " + std::to_string(out.size()) +
                                                 " outputs for " + std::to_string(instr.dests.size()) +
                                                 " destinations");
        std::optional<Payload> result;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto &d = instr.dests[i];
            if (d.is_external()) {
                result = std::move(out[i]);
                continue;
            }
            auto &target = g.instructions.at(d.instr);
            store_token(target, d.slot, std::move(out[i]));
            if (is_fireable(target))
                ready.push_back(target.id);
        }
        if (result)
            return *result;
    }
    throw Error(Errc::InvalidCustomGraph, "graph finished without an external output");
}

Payload evaluate_workflow(const WorkflowSpec &spec, const Payload &input, const OpcodeRegistry &registry) {
    std::vector<std::vector<Payload>> outputs;
    outputs.reserve(spec.nodes.size());
    for (const auto &node : spec.nodes) {
        std::vector<Payload> args;
        for (const auto &ref : node.args) {
            switch (ref.kind) {
            case WorkflowNode::Ref::Kind::Literal:
                args.push_back(ref.literal);
                break;
            case WorkflowNode::Ref::Kind::Input:
                args.push_back(input);
                break;
            case WorkflowNode::Ref::Kind::Node: {
                const auto &src = outputs.at(ref.node);
                if (ref.part)
                    args.push_back(src.at(*ref.part));
                else
                    args.push_back(src.size() == 1 ? src[0] : pack_payloads(src));
                break;
            }
            }
        }
        outputs.push_back(registry.invoke(node.opcode, args));
    }
    const auto &last = outputs.back();
    return last.size() == 1 ? last[0] : pack_payloads(last);
}

std::vector<ResultRecord> cmd_oracle(const std::string &program, const std::vector<Payload> &inputs,
                                     const OpcodeRegistry &registry) {
    Program p = load_program(program, registry, false);
    std::vector<ResultRecord> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        ResultRecord r;
        r.seq = i;
        try {
            r.value = eval_program(p, inputs[i], registry);
        } catch (const Error &e) {
            r.failed = true;
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> program_opcodes(const std::string &program, const OpcodeRegistry &registry) {
    Program p = load_program(program, registry, false);
    return p.is_workflow ? workflow_opcodes(p.workflow, registry) : graph_opcodes(p.graph);
}

std::string results_text(const std::vector<ResultRecord> &results) {
    std::string out;
    for (const auto &r : results) {
        out += std::to_string(r.seq);
        out += '\t';
        out += r.failed ? "!" + r.error : payload_to_text(r.value);
        out += '\n';
    }
    return out;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["tasks"] = tasks;
    j["emitted"] = emitted;
    j["failed"] = failed;
    j["workers"] = workers;
    j["completion_ms"] = completion_ms;
    j["t_seq_ms"] = t_seq_ms;
    j["efficiency"] = efficiency;
    j["latencies_ms"] = latencies_ms;
    j["throughput_series"] = throughput_series;
    auto &s = j["samples"] = nlohmann::json::array();
    for (const auto &x : samples)
        s.push_back({{"t_s", x.t_s}, {"workers", x.workers}, {"throughput", x.throughput}});
    auto &ev = j["events"] = nlohmann::json::array();
    for (const auto &e : events)
        ev.push_back({{"ts", e.ts_ms - start_ms}, {"kind", e.kind}, {"detail", e.detail}});
    j["reconfigurations"] = reconfigurations;
    j["escalations"] = escalations;
    j["exit_code"] = exit_code;
    auto &rs = j["results"] = nlohmann::json::array();
    for (const auto &r : results)
        rs.push_back(record_json(r));
    return j;
}

RunReport cmd_run(const ExperimentConfig &cfg) {
    StandardOpcodeOptions sopts;
    sopts.grain_ms = cfg.grain_ms;
    auto registry = std::make_shared<const OpcodeRegistry>(standard_registry(sopts));
    const Program prog = load_program(cfg.program, *registry, cfg.normalize);
    const auto required = prog.is_workflow ? workflow_opcodes(prog.workflow, *registry) : graph_opcodes(prog.graph);
    const bool streaming = cfg.duration_s > 0;
    std::vector<Payload> inputs = cfg.inputs;
    if (inputs.empty() && !streaming)
        inputs = make_inputs(cfg.tasks, cfg.seed);

    RunReport rep;
    std::mutex rmu;
    std::vector<ResultRecord> records;
    TaskPool pool(
        [&](const ResultRecord &r) {
            std::lock_guard lock(rmu);
            records.push_back(r);
        },
        cfg.throughput_window_s);

    RuntimeOptions ropts;
    ropts.comm_delay_ms = cfg.comm_ms;
    Runtime rt(pool, registry, ropts);
    auto initial = cfg.workers;
    if (initial.empty())
        initial.push_back(WorkerSpec::local());  // best effort: run locally
    for (const auto &spec : initial)
        rt.recruit(spec, required);
    rep.workers = initial.size();

    std::ofstream event_file;
    std::unique_ptr<Manager> mgr;
    std::atomic<bool> escalated{false};
    if (!cfg.contract.empty() || !cfg.spare.empty()) {
        mgr = std::make_unique<Manager>(rt, cfg.spare, required, cfg.manager);
        if (!cfg.event_log.empty()) {
            event_file.open(cfg.event_log);
            if (!event_file)
                throw Error(Errc::Config, "cannot write " + cfg.event_log);
            mgr->log().mirror_to(&event_file);
        }
        mgr->set_escalation_handler([&escalated](const EscalationEvent &) { escalated = true; });
        if (!cfg.contract.empty())
            mgr->set_contract(parse_contract(cfg.contract));
    }

    rep.start_ms = now_ms();
    if (mgr)
        mgr->start();

    std::atomic<bool> finished{false};
    std::mutex sample_mu;
    std::thread director([&] {
        struct Step {
            double t_s;
            std::function<void()> apply;
        };
        std::vector<Step> steps;
        for (const auto &f : cfg.faults)
            steps.push_back({f.t_s, [&rt, f] { rt.kill_worker(f.worker); }});
        for (const auto &o : cfg.overload)
            steps.push_back({o.t_s, [&rt, o] { rt.set_slowdown(o.worker, o.factor); }});
        std::stable_sort(steps.begin(), steps.end(), [](const Step &a, const Step &b) { return a.t_s < b.t_s; });
        std::size_t next = 0;
        double next_sample = 1.0;
        while (!finished.load()) {
            double t = (now_ms() - rep.start_ms) / 1000.0;
            while (next < steps.size() && steps[next].t_s <= t) {
                try {
                    steps[next].apply();
                } catch (const Error &e) {
                    if (mgr)
                        mgr->log().append("script_error", {{"error", e.what()}});
                }
                ++next;
            }
            if (t >= next_sample) {
                std::lock_guard lock(sample_mu);
                rep.samples.push_back({t, rt.active_count(), pool.throughput()});
                next_sample += 1.0;
            }
            sleep_ms(5);
        }
    });

    auto alive = [&] { return rt.active_count() > 0 || (mgr && mgr->available_count() > 0); };
    auto finish_threads = [&] {
        finished = true;
        director.join();
        if (mgr)
            mgr->stop();
    };

    try {
        if (prog.is_workflow) {
            // No worker-loss detection here: run_stream blocks until every instance ends.
            Workflow wf(pool, registry);
            auto out = wf.run_stream([&prog](Workflow &w, const Payload &x) { return launch(w, prog.workflow, x); },
                                     inputs, std::max<std::size_t>(1, 4 * initial.size()));
            std::lock_guard lock(rmu);
            records.clear();
            for (auto &r : out) {
                ResultRecord rec;
                rec.seq = r.seq;
                rec.value = std::move(r.value);
                rec.failed = r.failed;
                rec.error = std::move(r.error);
                rec.complete_ms = now_ms();
                records.push_back(std::move(rec));
            }
        } else if (streaming) {
            const std::size_t backlog =
                cfg.backlog ? cfg.backlog : 2 * (initial.size() + cfg.spare.size());
            std::size_t i = 0;
            while ((now_ms() - rep.start_ms) < cfg.duration_s * 1000.0) {
                if (pool.pending_count() < backlog) {
                    Payload x = i < inputs.size() ? inputs[i] : input_at(i, cfg.seed);
                    pool.submit_task(prog.graph, std::move(x));
                    ++i;
                } else {
                    if (!alive())
                        throw Error(Errc::ConnectionLost, "every worker failed");
                    sleep_ms(5);
                }
            }
            const std::size_t given = inputs.size();
            inputs.resize(i);
            for (std::size_t k = given; k < i; ++k)
                inputs[k] = input_at(k, cfg.seed);
        } else {
            for (const auto &x : inputs)
                pool.submit_task(prog.graph, x);
        }
        while (!pool.wait_idle(std::chrono::milliseconds(200)))
            if (!alive())
                throw Error(Errc::ConnectionLost,
                            "every worker failed with " + std::to_string(pool.pending_count()) + " tasks pending");
    } catch (...) {
        finish_threads();
        rt.shutdown();
        throw;
    }
    finish_threads();
    rt.shutdown();
    const double service_ms = rt.service_ms();

    rep.tasks = inputs.size();
    std::sort(records.begin(), records.end(),
              [](const ResultRecord &a, const ResultRecord &b) { return a.seq < b.seq; });
    rep.results = std::move(records);
    rep.emitted = rep.results.size();
    double last = rep.start_ms;
    for (const auto &r : rep.results) {
        if (r.failed)
            ++rep.failed;
        last = std::max(last, r.complete_ms);
        if (!prog.is_workflow)
            rep.latencies_ms.push_back(r.complete_ms - r.submit_ms);
    }
    rep.completion_ms = rep.emitted ? last - rep.start_ms : 0;
    if (!prog.is_workflow && rep.emitted) {
        rep.throughput_series.assign(static_cast<std::size_t>(rep.completion_ms / 1000.0) + 1, 0.0);
        for (const auto &r : rep.results)
            rep.throughput_series[static_cast<std::size_t>((r.complete_ms - rep.start_ms) / 1000.0)] += 1;
    }
    if (mgr) {
        rep.events = mgr->log().events();
        rep.ticks = mgr->ticks();
        rep.reconfigurations = mgr->reconfigurations();
        rep.escalations = mgr->escalations();
    }

    // Sequential time: the service time of every instruction, i.e. compute
    // plus its own messages, without the waits for the shared link.
    rep.t_seq_ms = service_ms;
    if (rep.completion_ms > 0 && rep.workers > 0)
        rep.efficiency = rep.t_seq_ms / (static_cast<double>(rep.workers) * rep.completion_ms);

    if (escalated || rep.escalations > 0)
        rep.exit_code = ExitEscalated;
    else if (rep.failed > 0 || rep.emitted < rep.tasks)
        rep.exit_code = ExitTaskFailures;
    return rep;
}

std::string GrainBench::csv() const {
    std::ostringstream os;
    os << "grain,workers,efficiency\n";
    for (const auto &r : rows)
        os << r.grain << ',' << r.workers << ',' << r.efficiency << '\n';
    for (const auto &c : checks)
        os << "# " << c << '\n';
    return os.str();
}

GrainBench cmd_bench_grain(const BenchGrainOptions &opts) {
    GrainBench bench;
    auto workers = opts.workers;
    std::sort(workers.begin(), workers.end());
    for (double g : opts.grains) {
        std::vector<GrainRow> series;
        for (std::size_t w : workers) {
            ExperimentConfig cfg;
            cfg.program = "farm(seq:work)";
            cfg.tasks = opts.tasks;
            cfg.grain_ms = g * opts.comm_ms;
            cfg.comm_ms = opts.comm_ms;
            cfg.workers.assign(w, WorkerSpec::local());
            auto rep = cmd_run(cfg);
            series.push_back({g, w, rep.efficiency});
        }
        bool ok = true;
        std::string where;
        for (std::size_t i = 1; i < series.size(); ++i)
            if (series[i].efficiency > series[i - 1].efficiency + opts.tolerance) {
                ok = false;
                where += " " + std::to_string(series[i - 1].workers) + "->" + std::to_string(series[i].workers);
            }
        std::ostringstream line;
        line << "grain=" << g << " efficiency non-increasing in workers: " << (ok ? "ok" : "violated at" + where);
        bench.checks.push_back(line.str());
        bench.monotone = bench.monotone && ok;
        bench.rows.insert(bench.rows.end(), series.begin(), series.end());
    }
    return bench;
}

ExperimentConfig adapt_defaults() {
    ExperimentConfig cfg;
    cfg.program = "farm(seq:work)";
    cfg.grain_ms = 2000;
    cfg.workers.assign(4, WorkerSpec::local());
    cfg.spare.assign(4, WorkerSpec::local());
    cfg.contract = "throughput:1.5";
    cfg.overload = {{60, 1, 4}, {60, 2, 4}};
    cfg.duration_s = 180;
    return cfg;
}

RunReport cmd_bench_adapt(const ExperimentConfig &cfg) {
    if (cfg.contract.empty() || !std::holds_alternative<Throughput>(parse_contract(cfg.contract)))
        throw Error(Errc::Config, "bench-adapt needs a throughput contract");
    if (!(cfg.duration_s > 0))
        throw Error(Errc::Config, "bench-adapt needs a positive duration");
    return cmd_run(cfg);
}

} // namespace mdf
