#include "doctest.h"
#include "gen.hpp"

#include "mdflow/manager.hpp"
#include "mdflow/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

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

double eval_text(const std::string &text, const Bindings &b = {}) { return Expr::parse(text).eval(b); }

struct Fixture {
    TaskPool pool;
    Runtime rt;
    explicit Fixture(std::size_t workers)
        : rt(pool, std::make_shared<const OpcodeRegistry>(standard_registry())) {
        for (std::size_t i = 0; i < workers; ++i)
            rt.recruit(WorkerSpec::local());
    }
};

ManagerOptions fast_options() {
    ManagerOptions o;
    o.warmup_s = 0;
    o.tick_s = 0.05;
    return o;
}

std::vector<std::string> kinds(EventLog &log) {
    std::vector<std::string> out;
    for (const auto &e : log.events())
        out.push_back(e.kind);
    return out;
}

} // namespace

TEST_CASE("expressions") {
    CHECK(eval_text("1 + 2 * 3") == 7);
    CHECK(eval_text("(1 + 2) * 3") == 9);
    CHECK(eval_text("-2 - -3") == 1);
    CHECK(eval_text("throughput > 1.5", {{"throughput", 3.5}}) == 1);
    CHECK(eval_text("throughput > 1.5", {{"throughput", 1.5}}) == 0);
    CHECK(eval_text("a > 1 and not (b < 2) || false", {{"a", 2}, {"b", 3}}) == 1);
    CHECK(eval_text("min(3, 4) + max(1, 2) + abs(-5)") == 10);
    CHECK(Expr::parse("x + y * x").variables() == std::set<std::string>{"x", "y"});
    CHECK(code_of([] { eval_text("x + 1"); }) == Errc::UnmonitorableVariable);
    CHECK(code_of([] { Expr::parse("1 +"); }) == Errc::Parse);
    CHECK(code_of([] { Expr::parse("(1"); }) == Errc::Parse);
    CHECK(code_of([] { Expr::parse("foo(1)"); }) == Errc::Parse);
}

TEST_CASE("random expressions agree with an independent evaluator") {
    Gen g(99);
    for (int i = 0; i < 500; ++i) {
        auto e = gen_expr(g, 4);
        Bindings b{{"throughput", g.real(0, 5)}, {"workers", static_cast<double>(g.int_in(1, 8))}, {"latency", g.real(0, 100)}};
        double want = teval(e, b);
        double got = Expr::parse(render(e)).eval(b);
        if (std::isnan(want))
            CHECK(std::isnan(got));
        else
            CHECK(got == want);
    }
}

TEST_CASE("contract parsing") {
    CHECK(std::get<Throughput>(parse_contract("throughput:1.5")).rate == 1.5);
    CHECK(std::get<ParDegree>(parse_contract("pardegree:8")).n == 8);
    auto q = std::get<QoSContract>(parse_contract("qos: V=throughput; E=throughput>1.5"));
    CHECK(q.vars == std::set<std::string>{"throughput"});
    CHECK(code_of([] { parse_contract("qos: V=FPS; E=latency < 3"); }) == Errc::UnmonitorableVariable);
    CHECK(code_of([] { parse_contract("speed:3"); }) == Errc::Parse);
    CHECK(code_of([] { parse_contract("throughput:abc"); }) == Errc::Parse);
    CHECK(as_qos(Throughput{1.5}).predicate.text().find("throughput") != std::string::npos);
}

TEST_CASE("harmonize and windows") {
    CHECK(harmonize(Harmonize::Average, {0.4, 0.4, 0.4}) == doctest::Approx(0.4));
    CHECK(harmonize(Harmonize::Max, {1, 3, 2}) == 3);
    CHECK(harmonize(Harmonize::Min, {1, 3, 2}) == 1);
    CHECK(harmonize(Harmonize::Sum, {1, 3, 2}) == 6);
    MeasureWindow w("x", 10);
    w.add(0, 1);
    w.add(5000, 2);
    w.add(12000, 3);
    w.prune(12000);
    CHECK(w.values() == std::vector<double>{2, 3});
}

TEST_CASE("select_plan examples") {
    auto q = as_qos(Throughput{1.5});
    Bindings b{{"throughput", 1.2}, {"workers", 4}};
    auto s = select_plan({add_worker_plan(2)}, b, q);
    REQUIRE(s.chosen);
    CHECK(s.verdicts[0].forecast.at("throughput") == doctest::Approx(1.8));

    Bindings b2{{"throughput", 1.2}, {"workers", 4}};
    s = select_plan({add_worker_plan(1), add_worker_plan(2)}, b2, q);
    CHECK(s.verdicts[0].forecast.at("throughput") == doctest::Approx(1.5));
    CHECK_FALSE(s.verdicts[0].valid);
    REQUIRE(s.chosen);
    CHECK(*s.chosen == 1);

    Bindings low{{"throughput", 0.2}, {"workers", 4}};
    s = select_plan({add_worker_plan(1), add_worker_plan(2)}, low, q);
    CHECK_FALSE(s.chosen);
}

TEST_CASE("select_plan agrees with brute force") {
    Gen g(2024);
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

        struct Expect {
            long net;
            Bindings forecast;
        };
        std::vector<Plan> plans;
        std::vector<Expect> expect;
        for (auto count = g.int_in(0, 5); count > 0; --count) {
            auto k = static_cast<std::size_t>(g.int_in(1, 4));
            auto kind = g.int_in(0, 2);
            if (kind == 0) {
                plans.push_back(add_worker_plan(k));
                expect.push_back({static_cast<long>(k),
                                  {{"throughput", b["throughput"] * (n + k) / n}, {"workers", n + k}}});
            } else if (kind == 1) {
                plans.push_back(remove_worker_plan(k));
                expect.push_back({-static_cast<long>(k),
                                  {{"throughput", b["throughput"] * (n - k) / n}, {"workers", n - k}}});
            } else {
                double factor = g.real(0.2, 1.0);
                plans.push_back(Plan{"tune", {Action{Action::Kind::Rebind, 1}},
                                     [factor](const Bindings &in) { return Bindings{{"latency", in.at("latency") * factor}}; }});
                expect.push_back({0, {{"latency", b["latency"] * factor}}});
            }
        }

        std::optional<std::size_t> want;
        std::vector<bool> valid;
        for (std::size_t i = 0; i < plans.size(); ++i) {
            Bindings after = b;
            for (const auto &[name, value] : expect[i].forecast)
                if (vars.contains(name))
                    after[name] = value;
            bool ok = teval(e, after) != 0.0;
            valid.push_back(ok);
            if (ok && (!want || expect[i].net < expect[*want].net))
                want = i;
        }

        auto got = select_plan(plans, b, contract);
        INFO("E = ", render(e), " V = ", vtext);
        CHECK(got.chosen == want);
        REQUIRE(got.verdicts.size() == plans.size());
        for (std::size_t i = 0; i < plans.size(); ++i)
            CHECK(got.verdicts[i].valid == valid[i]);
    }
}

TEST_CASE("measures") {
    Fixture f(0);
    Manager m(f.rt, {}, {});
    auto tmpl = compile(*seq("id")).graph;
    for (int i = 0; i < 7; ++i) {
        auto gid = f.pool.submit_task(tmpl, encode_int(i));
        f.pool.fetch_fireable(0ms);
        f.pool.complete(gid, 1, {encode_int(i)});
    }
    CHECK(m.get_measure("throughput") == doctest::Approx(0.7));
    CHECK(m.get_measure("workers") == 0);

    m.register_measure("load4", Harmonize::Average,
                       {[] { return std::optional<std::vector<double>>{{0.4}}; },
                        [] { return std::optional<std::vector<double>>{{0.4, 0.4}}; }});
    CHECK(m.get_measure("load4") == doctest::Approx(0.4));
    m.register_measure("broken", Harmonize::Sum, {[] { return std::optional<std::vector<double>>{}; }});
    CHECK(code_of([&] { m.get_measure("broken"); }) == Errc::SensorUnavailable);
    CHECK(code_of([&] { m.get_measure("nope"); }) == Errc::SensorUnavailable);
    CHECK(m.window("load4")->samples().size() == 1);
}

TEST_CASE("set_contract and check_contract") {
    Fixture f(4);
    Manager m(f.rt, {}, {});
    m.set_contract(Throughput{1.5});
    CHECK(m.check_contract({{"throughput", 3.5}, {"workers", 4}}).satisfied);
    CHECK_FALSE(m.check_contract({{"throughput", 1.2}, {"workers", 4}}).satisfied);
    m.set_contract(ParDegree{4});
    CHECK(m.check_contract({{"workers", 4}, {"recruitable", 4}}).satisfied);
    CHECK(code_of([&] { m.set_contract(parse_contract("qos: V=fps; E=fps > 1")); }) ==
          Errc::UnmonitorableVariable);
}

TEST_CASE("pardegree is best effort") {
    Fixture f(2);
    Manager m(f.rt, std::vector<WorkerSpec>(5, WorkerSpec::local()), {}, fast_options());
    m.set_contract(ParDegree{10});
    m.control_tick();
    CHECK(f.rt.active_count() == 7);
    for (int i = 0; i < 4; ++i)
        m.control_tick();
    CHECK(f.rt.active_count() == 7);
    CHECK(m.log().events("add_worker").size() == 1);
    m.set_contract(ParDegree{3});
    m.control_tick();
    CHECK(f.rt.active_count() == 3);
}

TEST_CASE("add_worker phases") {
    Fixture f(2);
    Manager m(f.rt, {WorkerSpec::local()}, {"inc"});
    CHECK(m.add_worker(1) == 1);
    CHECK(f.rt.active_count() == 3);
    CHECK(kinds(m.log()) == std::vector<std::string>{"stop", "new", "bind", "restart", "add_worker"});
    CHECK(m.reconfigurations() == 1);

    CHECK(code_of([&] { m.add_worker(1); }) == Errc::RecruitmentFailed);
    CHECK(f.rt.active_count() == 3);
    CHECK(m.log().events("stop").size() == 1);
}

TEST_CASE("add_worker with an unverifiable recruit adds what it can") {
    Fixture f(1);
    std::uint16_t dead_port;
    {
        wire::Listener l(0);
        dead_port = l.port();
    }
    Manager m(f.rt, {WorkerSpec::remote("127.0.0.1", dead_port), WorkerSpec::local()}, {"inc"});
    CHECK(code_of([&] { m.add_worker(2); }) == Errc::RecruitmentFailed);
    CHECK(f.rt.active_count() == 2);
    CHECK(m.log().events("new_failed").size() == 1);
}

TEST_CASE("remove_worker") {
    Fixture f(3);
    Manager m(f.rt, {}, {});
    m.remove_worker(1);
    CHECK(f.rt.active_count() == 2);
    CHECK(m.available_count() == 1);
    CHECK(code_of([&] { m.remove_worker(2); }) == Errc::WouldEmptyPool);
    CHECK(f.rt.active_count() == 2);
}

TEST_CASE("control tick: no action while satisfied") {
    Fixture f(2);
    Manager m(f.rt, std::vector<WorkerSpec>(2, WorkerSpec::local()), {}, fast_options());
    m.set_contract(parse_contract("qos: V=workers; E=workers >= 2"));
    for (int i = 0; i < 5; ++i)
        m.control_tick();
    CHECK(m.reconfigurations() == 0);
    CHECK(m.log().events("violation").empty());
}

TEST_CASE("control tick: one plan per violation episode") {
    Fixture f(2);
    auto opts = fast_options();
    Manager m(f.rt, std::vector<WorkerSpec>(4, WorkerSpec::local()), {}, opts);
    m.register_measure("throughput", Harmonize::Sum, {[] { return std::optional<std::vector<double>>{{1.0}}; }});
    m.set_contract(Throughput{1.5});
    for (int i = 0; i < opts.reopen_ticks; ++i)
        m.control_tick();
    auto plans = m.log().events("plan");
    REQUIRE(plans.size() == 1);
    CHECK(plans[0].detail["plan"] == "add_worker(2)");
    CHECK(f.rt.active_count() == 4);
    CHECK(m.log().events("violation").size() == 1);
}

TEST_CASE("control tick: plan restores a workers contract") {
    Fixture f(2);
    Manager m(f.rt, std::vector<WorkerSpec>(4, WorkerSpec::local()), {}, fast_options());
    m.set_contract(parse_contract("qos: V=workers; E=workers >= 4"));
    for (int i = 0; i < 6; ++i)
        m.control_tick();
    CHECK(f.rt.active_count() == 4);
    CHECK(m.reconfigurations() == 1);
    auto ticks = m.ticks();
    CHECK(ticks.back().satisfied);
}

TEST_CASE("control tick: one escalation per episode") {
    Fixture f(2);
    Manager m(f.rt, {WorkerSpec::local()}, {}, fast_options());
    int escalations = 0;
    m.set_escalation_handler([&](const EscalationEvent &ev) {
        ++escalations;
        CHECK(ev.verdicts.size() == 1);
    });
    m.set_contract(parse_contract("qos: V=workers; E=workers >= 100"));
    for (int i = 0; i < 6; ++i)
        m.control_tick();
    CHECK(escalations == 1);
    CHECK(m.escalations() == 1);
    CHECK(m.reconfigurations() == 0);
    CHECK(m.log().events("escalation").size() == 1);
}

TEST_CASE("worker failures are logged") {
    Fixture f(2);
    Manager m(f.rt, {}, {});
    f.rt.kill_worker(f.rt.workers().front().id);
    CHECK(m.log().events("worker_failed").size() == 1);
}

TEST_CASE("event log lines") {
    LogEvent e{12.5, "plan", {{"plan", "add_worker(1)"}}};
    auto line = EventLog::to_line(e);
    auto j = nlohmann::json::parse(line);
    CHECK(j["ts"] == 12.5);
    CHECK(j["kind"] == "plan");
    CHECK(j["detail"]["plan"] == "add_worker(1)");
    std::ostringstream os;
    EventLog log;
    log.mirror_to(&os);
    log.append("x");
    log.append("y");
    auto text = os.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("manager thread ticks on its own") {
    Fixture f(1);
    Manager m(f.rt, {WorkerSpec::local()}, {}, fast_options());
    m.set_contract(ParDegree{2});
    m.start();
    std::this_thread::sleep_for(300ms);
    m.stop();
    CHECK(m.ticks().size() >= 3);
    CHECK(f.rt.active_count() == 2);
}
