#include "mdflow/manager.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mdf {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
    s = trim(s);
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(Errc::Parse, std::string(what) + ": bad number '" + std::string(s) + "'");
    return v;
}

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

nlohmann::json bindings_json(const Bindings &b) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto &[k, v] : b)
        j[k] = v;
    return j;
}

std::string join(const std::set<std::string> &names) {
    std::string out;
    for (const auto &n : names) {
        if (!out.empty())
            out += ',';
        out += n;
    }
    return out;
}

} // namespace

Contract parse_contract(std::string_view text) {
    auto t = trim(text);
    auto colon = t.find(':');
    if (colon == std::string_view::npos)
        throw Error(Errc::Parse, "contract must be pardegree:N, throughput:R or qos: V=...; E=...");
    auto kind = trim(t.substr(0, colon));
    auto rest = trim(t.substr(colon + 1));
    if (kind == "pardegree")
        return ParDegree{parse_number<std::size_t>(rest, "pardegree")};
    if (kind == "throughput") {
        double r = parse_number<double>(rest, "throughput");
        if (!(r > 0) || !std::isfinite(r))
            throw Error(Errc::Parse, "throughput must be positive");
        return Throughput{r};
    }
    if (kind != "qos")
        throw Error(Errc::Parse, "unknown contract kind '" + std::string(kind) + "'");

    QoSContract q;
    std::optional<std::string> expr;
    std::size_t start = 0;
    while (start <= rest.size()) {
        auto semi = rest.find(';', start);
        auto part = trim(rest.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start));
        start = semi == std::string_view::npos ? rest.size() + 1 : semi + 1;
        if (part.empty())
            continue;
        auto eq = part.find('=');
        if (eq == std::string_view::npos)
            throw Error(Errc::Parse, "qos part '" + std::string(part) + "' is not key=value");
        auto key = trim(part.substr(0, eq));
        auto value = trim(part.substr(eq + 1));
        if (key == "V") {
            std::size_t p = 0;
            while (p <= value.size()) {
                auto comma = value.find(',', p);
                auto name = trim(value.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p));
                if (!name.empty())
                    q.vars.emplace(name);
                p = comma == std::string_view::npos ? value.size() + 1 : comma + 1;
            }
        } else if (key == "E") {
            expr = std::string(value);
        } else {
            throw Error(Errc::Parse, "unknown qos key '" + std::string(key) + "'");
        }
    }
    if (q.vars.empty() || !expr)
        throw Error(Errc::Parse, "qos contract needs V and E");
    q.predicate = Expr::parse(*expr);
    for (const auto &v : q.predicate.variables())
        if (!q.vars.contains(v))
            throw Error(Errc::UnmonitorableVariable, "E uses '" + v + "', which is not in V");
    return q;
}

std::string to_string(const Contract &c) {
    return std::visit(
        [](const auto &k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ParDegree>)
                return "pardegree:" + std::to_string(k.n);
            else if constexpr (std::is_same_v<T, Throughput>)
                return "throughput:" + format_number(k.rate);
            else
                return "qos: V=" + join(k.vars) + "; E=" + k.predicate.text();
        },
        c);
}

QoSContract as_qos(const Throughput &t) {
    return {{"throughput"}, Expr::parse("throughput > " + format_number(t.rate))};
}

double harmonize(Harmonize h, const std::vector<double> &samples) {
    if (samples.empty())
        return 0;
    switch (h) {
    case Harmonize::Average:
        return std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    case Harmonize::Max:
        return *std::max_element(samples.begin(), samples.end());
    case Harmonize::Min:
        return *std::min_element(samples.begin(), samples.end());
    case Harmonize::Sum:
        return std::accumulate(samples.begin(), samples.end(), 0.0);
    }
    return 0;
}

MeasureWindow::MeasureWindow(std::string name, double window_s) : name_(std::move(name)), window_s_(window_s) {
    if (!(window_s > 0))
        throw Error(Errc::Config, "measure window must be positive");
}

void MeasureWindow::add(double ts_ms, double value) {
    if (!samples_.empty() && ts_ms < samples_.back().first)
        throw Error(Errc::Config, "measure samples out of order");
    samples_.emplace_back(ts_ms, value);
    prune(ts_ms);
}

void MeasureWindow::prune(double now) {
    while (!samples_.empty() && samples_.front().first <= now - window_s_ * 1000.0)
        samples_.pop_front();
}

std::vector<double> MeasureWindow::values() const {
    std::vector<double> out;
    for (const auto &[ts, v] : samples_)
        out.push_back(v);
    return out;
}

long Plan::net_added() const {
    long n = 0;
    for (const auto &a : actions) {
        if (a.kind == Action::Kind::AddWorker)
            n += static_cast<long>(a.k);
        else if (a.kind == Action::Kind::RemoveWorker)
            n -= static_cast<long>(a.k);
    }
    return n;
}

namespace {

Plan scaling_plan(std::string name, Action::Kind kind, long delta) {
    Plan p;
    p.name = std::move(name);
    p.actions.push_back({kind, static_cast<std::size_t>(std::labs(delta))});
    p.forecast = [delta](const Bindings &b) {
        Bindings out;
        auto n = b.find("workers");
        if (n == b.end() || n->second <= 0)
            return out;
        double after = n->second + static_cast<double>(delta);
        out["workers"] = after;
        if (auto t = b.find("throughput"); t != b.end())
            out["throughput"] = t->second * after / n->second;
        return out;
    };
    return p;
}

} // namespace

Plan add_worker_plan(std::size_t k) {
    return scaling_plan("add_worker(" + std::to_string(k) + ")", Action::Kind::AddWorker, static_cast<long>(k));
}

Plan remove_worker_plan(std::size_t k) {
    return scaling_plan("remove_worker(" + std::to_string(k) + ")", Action::Kind::RemoveWorker,
                        -static_cast<long>(k));
}

Selection select_plan(const std::vector<Plan> &plans, const Bindings &bindings, const QoSContract &contract) {
    Selection sel;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        PlanVerdict v;
        v.plan = plans[i].name;
        v.forecast = bindings;
        if (plans[i].forecast)
            for (const auto &[name, value] : plans[i].forecast(bindings))
                if (contract.vars.contains(name))
                    v.forecast[name] = value;
        try {
            v.valid = contract.predicate.holds(v.forecast);
        } catch (const Error &) {
            v.valid = false;
        }
        if (v.valid && (!sel.chosen || plans[i].net_added() < plans[*sel.chosen].net_added()))
            sel.chosen = i;
        sel.verdicts.push_back(std::move(v));
    }
    return sel;
}

void EventLog::append(std::string kind, nlohmann::json detail) {
    std::lock_guard lock(mu_);
    events_.push_back({now_ms(), std::move(kind), std::move(detail)});
    if (mirror_)
        *mirror_ << to_line(events_.back()) << '\n' << std::flush;
}

std::vector<LogEvent> EventLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::vector<LogEvent> EventLog::events(std::string_view kind) const {
    std::lock_guard lock(mu_);
    std::vector<LogEvent> out;
    for (const auto &e : events_)
        if (e.kind == kind)
            out.push_back(e);
    return out;
}

void EventLog::mirror_to(std::ostream *out) {
    std::lock_guard lock(mu_);
    mirror_ = out;
}

std::string EventLog::to_line(const LogEvent &e) {
    return nlohmann::json{{"ts", e.ts_ms}, {"kind", e.kind}, {"detail", e.detail}}.dump();
}

Manager::Manager(Runtime &runtime, std::vector<WorkerSpec> available, std::vector<std::string> required,
                 ManagerOptions opts)
    : rt_(runtime), opts_(opts), required_(std::move(required)), available_(std::move(available)),
      started_ms_(now_ms()) {
    if (!(opts_.tick_s > 0))
        throw Error(Errc::Config, "tick must be positive");
    register_builtins();
    rt_.set_failure_handler([this](const WorkerFailure &f) { on_worker_failure(f); });
}

Manager::~Manager() {
    stop();
    rt_.set_failure_handler({});
}

void Manager::register_builtins() {
    const double instant = opts_.tick_s;
    register_measure("throughput", Harmonize::Sum,
                     {[this]() -> std::optional<std::vector<double>> {
                         return std::vector<double>{rt_.pool().throughput()};
                     }},
                     instant);
    register_measure("workers", Harmonize::Sum,
                     {[this]() -> std::optional<std::vector<double>> {
                         return std::vector<double>{static_cast<double>(rt_.active_count())};
                     }},
                     instant);
    register_measure("recruitable", Harmonize::Sum,
                     {[this]() -> std::optional<std::vector<double>> {
                         return std::vector<double>{static_cast<double>(rt_.active_count() + available_count())};
                     }},
                     instant);
    register_measure("pending", Harmonize::Sum,
                     {[this]() -> std::optional<std::vector<double>> {
                         return std::vector<double>{static_cast<double>(rt_.pool().pending_count())};
                     }},
                     instant);
    register_measure("service_time", Harmonize::Average,
                     {[this]() -> std::optional<std::vector<double>> {
                         std::vector<double> out;
                         for (const auto &w : rt_.workers())
                             if (w.stats.completed > 0 &&
                                 (w.state == WorkerState::Idle || w.state == WorkerState::Busy))
                                 out.push_back(w.stats.mean_ms);
                         return out;
                     }},
                     instant);
    register_measure("load", Harmonize::Average,
                     {[this]() -> std::optional<std::vector<double>> {
                         double now = now_ms();
                         std::vector<double> out;
                         auto workers = rt_.workers();
                         std::lock_guard lock(mu_);
                         double span = last_load_ms_ < 0 ? 0 : now - last_load_ms_;
                         for (const auto &w : workers) {
                             double prev = last_busy_.contains(w.id) ? last_busy_[w.id] : 0.0;
                             last_busy_[w.id] = w.stats.busy_ms;
                             if (span > 0 && (w.state == WorkerState::Idle || w.state == WorkerState::Busy))
                                 out.push_back(std::clamp((w.stats.busy_ms - prev) / span, 0.0, 1.0));
                         }
                         last_load_ms_ = now;
                         return out;
                     }},
                     instant);
}

void Manager::register_measure(const std::string &name, Harmonize h, std::vector<Sensor> sensors, double window_s) {
    std::lock_guard lock(mu_);
    measures_.insert_or_assign(name, Measure{h, std::move(sensors), MeasureWindow(name, window_s)});
}

double Manager::get_measure(const std::string &name) {
    std::vector<Sensor> sensors;
    Harmonize h;
    {
        std::lock_guard lock(mu_);
        auto it = measures_.find(name);
        if (it == measures_.end())
            throw Error(Errc::SensorUnavailable, "no measure '" + name + "'");
        sensors = it->second.sensors;
        h = it->second.harmonize;
    }
    std::vector<double> samples;
    for (const auto &s : sensors) {
        auto got = s ? s() : std::nullopt;
        if (!got)
            throw Error(Errc::SensorUnavailable, "a source of '" + name + "' is not implemented");
        samples.insert(samples.end(), got->begin(), got->end());
    }
    double value = harmonize(h, samples);
    std::lock_guard lock(mu_);
    if (auto it = measures_.find(name); it != measures_.end())
        it->second.window.add(std::max(now_ms(), it->second.window.samples().empty()
                                                     ? 0.0
                                                     : it->second.window.samples().back().first),
                              value);
    return value;
}

std::vector<std::string> Manager::measures() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto &[name, m] : measures_)
        out.push_back(name);
    return out;
}

const MeasureWindow *Manager::window(const std::string &name) const {
    std::lock_guard lock(mu_);
    auto it = measures_.find(name);
    return it == measures_.end() ? nullptr : &it->second.window;
}

void Manager::set_contract(Contract c) {
    {
        std::lock_guard lock(mu_);
        if (auto *q = std::get_if<QoSContract>(&c)) {
            for (const auto &v : q->predicate.variables())
                if (!q->vars.contains(v))
                    throw Error(Errc::UnmonitorableVariable, "E uses '" + v + "', which is not in V");
            for (const auto &v : q->vars)
                if (!measures_.contains(v))
                    throw Error(Errc::UnmonitorableVariable, "no measure '" + v + "'");
        }
        contract_ = std::move(c);
        in_episode_ = acted_ = escalated_ = false;
        cooldown_ = since_action_ = 0;
    }
    log_.append("contract", {{"contract", to_string(*contract())}});
}

std::optional<Contract> Manager::contract() const {
    std::lock_guard lock(mu_);
    return contract_;
}

std::set<std::string> Manager::contract_vars_locked() const {
    if (!contract_)
        return {};
    if (std::holds_alternative<ParDegree>(*contract_))
        return {"workers", "recruitable"};
    std::set<std::string> vars{"workers"};
    if (std::holds_alternative<Throughput>(*contract_))
        vars.insert("throughput");
    else
        for (const auto &v : std::get<QoSContract>(*contract_).vars)
            vars.insert(v);
    return vars;
}

Bindings Manager::bind_for(const std::set<std::string> &vars) {
    Bindings b;
    for (const auto &v : vars)
        b[v] = get_measure(v);
    return b;
}

CheckResult Manager::check_contract(const Bindings &b) const {
    auto c = contract();
    if (!c)
        return {true, "no contract"};
    if (auto *pd = std::get_if<ParDegree>(&*c)) {
        double workers = b.at("workers");
        double target = std::min(static_cast<double>(pd->n), b.at("recruitable"));
        bool ok = workers == target;
        return {ok, "workers=" + format_number(workers) + " target=" + format_number(target)};
    }
    const QoSContract q = std::holds_alternative<Throughput>(*c) ? as_qos(std::get<Throughput>(*c))
                                                                 : std::get<QoSContract>(*c);
    bool ok = q.predicate.holds(b);
    return {ok, q.predicate.text() + (ok ? " holds" : " fails")};
}

std::vector<Plan> Manager::plans() const {
    std::vector<Plan> out;
    std::size_t max_k = std::min(opts_.max_plan_k, available_count());
    for (std::size_t k = 1; k <= max_k; ++k)
        out.push_back(add_worker_plan(k));
    return out;
}

std::size_t Manager::available_count() const {
    std::lock_guard lock(mu_);
    return available_.size();
}

std::size_t Manager::add_worker(std::size_t k) {
    if (k == 0)
        throw Error(Errc::Config, "add_worker needs k >= 1");
    std::lock_guard reconfig(reconfig_mu_);
    std::vector<WorkerSpec> specs;
    {
        std::lock_guard lock(mu_);
        auto n = std::min(k, available_.size());
        specs.assign(available_.begin(), available_.begin() + static_cast<long>(n));
        available_.erase(available_.begin(), available_.begin() + static_cast<long>(n));
    }
    if (specs.empty()) {
        log_.append("add_worker", {{"requested", k}, {"added", 0}, {"error", "no recruitable workers"}});
        throw Error(Errc::RecruitmentFailed, "added 0 of " + std::to_string(k));
    }

    TaskPool &pool = rt_.pool();
    pool.pause();
    log_.append("stop", {{"requested", k}});
    std::vector<PreparedWorker> ready;
    for (const auto &spec : specs) {
        try {
            ready.push_back(rt_.create_worker(spec, required_));
            log_.append("new", {{"spec", spec.to_string()}, {"manifest", "verified"}});
        } catch (const Error &e) {
            log_.append("new_failed", {{"spec", spec.to_string()}, {"error", e.what()}});
        }
    }
    std::vector<WorkerId> bound;
    for (auto &w : ready) {
        auto spec = w.spec.to_string();
        WorkerId id = rt_.bind_worker(std::move(w));
        bound.push_back(id);
        log_.append("bind", {{"worker", id}, {"spec", spec}});
    }
    log_.append("restart", nlohmann::json::object());
    pool.resume();

    {
        std::lock_guard lock(mu_);
        added_order_.insert(added_order_.end(), bound.begin(), bound.end());
        if (!bound.empty())
            ++reconfigurations_;
    }
    log_.append("add_worker", {{"requested", k}, {"added", bound.size()}});
    if (bound.size() < k)
        throw Error(Errc::RecruitmentFailed, "added " + std::to_string(bound.size()) + " of " + std::to_string(k));
    return bound.size();
}

void Manager::remove_worker(std::size_t k) {
    std::lock_guard reconfig(reconfig_mu_);
    auto workers = rt_.workers();
    std::vector<WorkerId> active;
    for (const auto &w : workers)
        if (w.state == WorkerState::Idle || w.state == WorkerState::Busy)
            active.push_back(w.id);
    if (k == 0)
        return;
    if (k >= active.size())
        throw Error(Errc::WouldEmptyPool,
                    "cannot remove " + std::to_string(k) + " of " + std::to_string(active.size()) + " workers");
    // Most recently added first.
    std::vector<WorkerId> order;
    {
        std::lock_guard lock(mu_);
        for (auto it = added_order_.rbegin(); it != added_order_.rend(); ++it)
            if (std::find(active.begin(), active.end(), *it) != active.end())
                order.push_back(*it);
    }
    for (auto it = active.rbegin(); it != active.rend(); ++it)
        if (std::find(order.begin(), order.end(), *it) == order.end())
            order.push_back(*it);
    order.resize(k);
    for (WorkerId id : order) {
        auto desc = rt_.worker(id);
        rt_.remove_worker(id);
        log_.append("unbind", {{"worker", id}});
        std::lock_guard lock(mu_);
        if (desc && desc->state != WorkerState::Failed)
            available_.insert(available_.begin(), desc->spec);
        std::erase(added_order_, id);
    }
    {
        std::lock_guard lock(mu_);
        ++reconfigurations_;
    }
    log_.append("remove_worker", {{"removed", k}});
}

void Manager::execute_plan(const Plan &p) {
    for (const auto &a : p.actions) {
        switch (a.kind) {
        case Action::Kind::AddWorker:
            add_worker(a.k);
            break;
        case Action::Kind::RemoveWorker:
            remove_worker(a.k);
            break;
        case Action::Kind::Rebind:
            break;
        }
    }
}

void Manager::on_worker_failure(const WorkerFailure &f) {
    log_.append("worker_failed", {{"worker", f.worker}, {"error", f.message}});
}

void Manager::control_tick() {
    std::lock_guard reconfig(reconfig_mu_);
    const double t0 = now_ms();
    TickRecord rec;
    rec.ts_ms = t0;
    auto finish = [&] {
        rec.duration_ms = now_ms() - t0;
        std::lock_guard lock(mu_);
        ticks_.push_back(std::move(rec));
    };

    std::optional<Contract> c;
    std::set<std::string> vars;
    {
        std::lock_guard lock(mu_);
        c = contract_;
        vars = contract_vars_locked();
    }
    if (!c)
        return finish();
    try {
        rec.bindings = bind_for(vars);
    } catch (const Error &e) {
        log_.append("sensor_error", {{"error", e.what()}});
        return finish();
    }

    const bool pardegree = std::holds_alternative<ParDegree>(*c);
    bool skip = true;
    {
        std::lock_guard lock(mu_);
        bool warming = !pardegree && t0 - started_ms_ < opts_.warmup_s * 1000.0;
        if (!warming && cooldown_ > 0)
            --cooldown_;
        else if (!warming)
            skip = false;
    }
    if (skip)
        return finish();

    auto verdict = check_contract(rec.bindings);
    rec.checked = true;
    rec.satisfied = verdict.satisfied;
    bool open = false;
    {
        std::lock_guard lock(mu_);
        if (verdict.satisfied) {
            in_episode_ = acted_ = escalated_ = false;
            since_action_ = 0;
        } else if (!in_episode_) {
            open = true;
        } else if (acted_ && ++since_action_ >= opts_.reopen_ticks) {
            open = true;
        }
        if (open) {
            in_episode_ = true;
            acted_ = escalated_ = false;
            since_action_ = 0;
        }
    }
    if (!open)
        return finish();

    log_.append("violation", {{"contract", to_string(*c)}, {"bindings", bindings_json(rec.bindings)},
                              {"details", verdict.details}});

    if (auto *pd = std::get_if<ParDegree>(&*c)) {
        long workers = std::lround(rec.bindings.at("workers"));
        long target = std::min(static_cast<long>(pd->n), std::lround(rec.bindings.at("recruitable")));
        try {
            if (target > workers) {
                rec.action = "add_worker(" + std::to_string(target - workers) + ")";
                add_worker(static_cast<std::size_t>(target - workers));
            } else if (target < workers) {
                rec.action = "remove_worker(" + std::to_string(workers - target) + ")";
                remove_worker(static_cast<std::size_t>(workers - std::max(target, 1L)));
            }
        } catch (const Error &e) {
            log_.append("reconfiguration_failed", {{"action", rec.action}, {"error", e.what()}});
        }
        {
            std::lock_guard lock(mu_);
            acted_ = true;
            cooldown_ = opts_.cooldown_ticks;
        }
        return finish();
    }

    const QoSContract q = std::holds_alternative<Throughput>(*c) ? as_qos(std::get<Throughput>(*c))
                                                                 : std::get<QoSContract>(*c);
    auto candidates = plans();
    auto sel = select_plan(candidates, rec.bindings, q);
    if (sel.chosen) {
        const Plan &p = candidates[*sel.chosen];
        rec.action = p.name;
        log_.append("plan", {{"plan", p.name}, {"forecast", bindings_json(sel.verdicts[*sel.chosen].forecast)}});
        try {
            execute_plan(p);
        } catch (const Error &e) {
            log_.append("reconfiguration_failed", {{"action", p.name}, {"error", e.what()}});
        }
        {
            std::lock_guard lock(mu_);
            acted_ = true;
            cooldown_ = opts_.cooldown_ticks;
        }
        return finish();
    }

    EscalationEvent ev{to_string(*c), rec.bindings, sel.verdicts, now_ms()};
    rec.action = "escalate";
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto &v : ev.verdicts)
        verdicts.push_back({{"plan", v.plan}, {"valid", v.valid}, {"forecast", bindings_json(v.forecast)}});
    log_.append("escalation", {{"contract", ev.contract}, {"bindings", bindings_json(ev.bindings)},
                               {"plans", verdicts}});
    EscalationHandler h;
    {
        std::lock_guard lock(mu_);
        escalated_ = true;
        ++escalations_;
        h = on_escalation_;
    }
    if (h)
        h(ev);
    finish();
}

void Manager::start() {
    std::lock_guard lock(run_mu_);
    if (running_)
        return;
    running_ = true;
    thread_ = std::thread([this] {
        auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(opts_.tick_s));
        auto next = std::chrono::steady_clock::now() + period;
        std::unique_lock lk(run_mu_);
        while (running_) {
            if (run_cv_.wait_until(lk, next, [this] { return !running_; }))
                break;
            lk.unlock();
            try {
                control_tick();
            } catch (const std::exception &e) {
                log_.append("tick_error", {{"error", e.what()}});
            }
            lk.lock();
            next += period;
        }
    });
}

void Manager::stop() {
    {
        std::lock_guard lock(run_mu_);
        running_ = false;
        run_cv_.notify_all();
    }
    if (thread_.joinable())
        thread_.join();
}

void Manager::set_escalation_handler(EscalationHandler h) {
    std::lock_guard lock(mu_);
    on_escalation_ = std::move(h);
}

std::vector<TickRecord> Manager::ticks() const {
    std::lock_guard lock(mu_);
    return ticks_;
}

std::size_t Manager::reconfigurations() const {
    std::lock_guard lock(mu_);
    return reconfigurations_;
}

std::size_t Manager::escalations() const {
    std::lock_guard lock(mu_);
    return escalations_;
}

} // namespace mdf
