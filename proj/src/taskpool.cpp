#include "mdflow/taskpool.hpp"

#include <iostream>

#include "json.hpp"

namespace mdf {

double now_ms() {
    static const auto epoch = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch).count();
}

std::string PoolMetrics::to_json() const {
    nlohmann::json j{{"submitted", submitted},     {"emitted", emitted},
                     {"in_flight", in_flight},     {"fireable", fireable},
                     {"live_graphs", live_graphs}, {"throughput_window", throughput_window}};
    return j.dump();
}

TaskPool::TaskPool(Sink sink, double throughput_window_s)
    : sink_(std::move(sink)), window_s_(throughput_window_s) {
    if (window_s_ <= 0)
        throw Error(Errc::Config, "throughput window must be positive");
}

Id TaskPool::submit_task(const Graph &tmpl, Payload task, Sink on_emit) {
    std::vector<Payload> inputs;
    inputs.push_back(std::move(task));
    return submit_task(tmpl, std::move(inputs), std::move(on_emit));
}

Id TaskPool::submit_task(const Graph &tmpl, std::vector<Payload> inputs, Sink on_emit) {
    if (!tmpl.instructions.contains(tmpl.input_id))
        throw Error(Errc::InvalidCustomGraph, "template without input instruction");
    std::lock_guard lock(mu_);
    if (closed_)
        throw Error(Errc::PoolClosed, "submit after close");
    Id gid = next_gid_;
    Live live;
    live.graph = instantiate(tmpl, gid);
    auto &entry = live.graph.instructions.at(tmpl.input_id);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        store_token(entry, i + 1, std::move(inputs[i]));
    bool fire = is_fireable(entry);
    live.seq = next_seq_++;
    live.submit_ms = now_ms();
    live.on_emit = std::move(on_emit);
    ++next_gid_;
    ++submitted_;
    live_.emplace(gid, std::move(live));
    if (fire) {
        fireable_.emplace_back(gid, tmpl.input_id);
        work_cv_.notify_one();
    }
    return gid;
}

void TaskPool::route_locked(Live &live, const Dest &d, Payload value, std::vector<Emission> &out) {
    Id gid = live.graph.gid;
    if (d.is_external()) {
        ResultRecord rec;
        rec.value = std::move(value);
        retire_locked(gid, std::move(rec), out);
        return;
    }
    auto it = live.graph.instructions.find(d.instr);
    if (it == live.graph.instructions.end())
        throw Error(Errc::UnknownGraph, "instruction " + id_text(d.instr) + " of graph " + id_text(gid));
    store_token(it->second, d.slot, std::move(value));
    if (is_fireable(it->second)) {
        fireable_.emplace_back(gid, d.instr);
        work_cv_.notify_one();
    }
}

void TaskPool::retire_locked(Id gid, ResultRecord rec, std::vector<Emission> &out) {
    auto it = live_.find(gid);
    auto &live = it->second;
    rec.seq = live.seq;
    rec.gid = gid;
    rec.submit_ms = live.submit_ms;
    rec.dispatch_ms = live.dispatch_ms < 0 ? live.submit_ms : live.dispatch_ms;
    rec.complete_ms = now_ms();
    Sink sink = live.on_emit ? std::move(live.on_emit) : sink_;
    live_.erase(it);
    ++emitted_;
    emission_times_.push_back(rec.complete_ms);
    if (sink)
        ++sinks_running_;
    out.push_back({std::move(rec), std::move(sink)});
    if (live_.empty())
        idle_cv_.notify_all();
}

void TaskPool::flush(std::vector<Emission> &emissions) {
    for (auto &e : emissions) {
        if (!e.sink)
            continue;
        try {
            e.sink(e.record);
        } catch (const std::exception &ex) {
            std::cerr << "mdflow: result sink threw: " << ex.what() << '\n';
        }
        std::lock_guard lock(mu_);
        if (--sinks_running_ == 0)
            idle_cv_.notify_all();
    }
}

void TaskPool::deliver_token(Id gid, const Dest &d, Payload value) {
    std::vector<Emission> emissions;
    {
        std::lock_guard lock(mu_);
        auto it = live_.find(gid);
        if (it == live_.end())
            throw Error(Errc::UnknownGraph, "graph " + id_text(gid) + " is not live");
        route_locked(it->second, d, std::move(value), emissions);
    }
    flush(emissions);
}

std::optional<Fireable> TaskPool::fetch_fireable(std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(mu_);
    for (;;) {
        if (!work_cv_.wait_until(lock, deadline, [this] { return !paused_ && !fireable_.empty(); }))
            return std::nullopt;
        auto [gid, id] = fireable_.front();
        fireable_.pop_front();
        auto it = live_.find(gid);
        if (it == live_.end() || it->second.completed.contains(id))
            continue;  // stale entry
        auto &live = it->second;
        ++live.in_flight[id];
        double ts = now_ms();
        if (live.dispatch_ms < 0)
            live.dispatch_ms = ts;
        if (on_dispatch_)
            on_dispatch_(ts, gid, id);
        return Fireable{gid, live.seq, live.graph.instructions.at(id)};
    }
}

bool TaskPool::complete(Id gid, Id instr, std::vector<Payload> outputs) {
    std::vector<Emission> emissions;
    {
        std::lock_guard lock(mu_);
        auto it = live_.find(gid);
        if (it == live_.end())
            return false;
        auto &live = it->second;
        if (auto f = live.in_flight.find(instr); f != live.in_flight.end() && --f->second == 0)
            live.in_flight.erase(f);
        if (live.completed.contains(instr))
            return false;
        const auto &dests = live.graph.instructions.at(instr).dests;
        if (outputs.size() != dests.size())
            throw Error(Errc::ArityMismatch, "instruction " + id_text(instr) + " has " +
                                                 std::to_string(dests.size()) + " destinations, got " +
                                                 std::to_string(outputs.size()) + " outputs");
        live.completed.insert(instr);
        // Internal tokens first: emitting retires the graph.
        std::optional<Payload> external;
        auto dests_copy = dests;
        for (std::size_t i = 0; i < dests_copy.size(); ++i) {
            if (dests_copy[i].is_external())
                external = std::move(outputs[i]);
            else
                route_locked(live, dests_copy[i], std::move(outputs[i]), emissions);
        }
        if (external)
            route_locked(live, Dest::out(), std::move(*external), emissions);
    }
    flush(emissions);
    return true;
}

bool TaskPool::fail(Id gid, Id instr, const std::string &error) {
    std::vector<Emission> emissions;
    {
        std::lock_guard lock(mu_);
        auto it = live_.find(gid);
        if (it == live_.end() || it->second.completed.contains(instr))
            return false;
        it->second.completed.insert(instr);
        ResultRecord rec;
        rec.failed = true;
        rec.error = error;
        retire_locked(gid, std::move(rec), emissions);
    }
    flush(emissions);
    return true;
}

void TaskPool::requeue(Id gid, Id instr) {
    std::lock_guard lock(mu_);
    auto it = live_.find(gid);
    if (it == live_.end())
        throw Error(Errc::NotInFlight, "graph " + id_text(gid) + " is not live");
    auto &live = it->second;
    auto f = live.in_flight.find(instr);
    if (f == live.in_flight.end())
        throw Error(Errc::NotInFlight, "instruction " + id_text(instr) + " of graph " + id_text(gid));
    if (--f->second == 0)
        live.in_flight.erase(f);
    if (live.completed.contains(instr))
        return;  // another copy already finished
    fireable_.emplace_front(gid, instr);
    work_cv_.notify_one();
}

std::size_t TaskPool::pending_count() const {
    std::lock_guard lock(mu_);
    return live_.size();
}

bool TaskPool::wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return idle_cv_.wait_for(lock, timeout, [this] { return live_.empty() && sinks_running_ == 0; });
}

void TaskPool::close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    work_cv_.notify_all();
}

bool TaskPool::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

void TaskPool::pause() {
    std::lock_guard lock(mu_);
    paused_ = true;
}

void TaskPool::resume() {
    std::lock_guard lock(mu_);
    paused_ = false;
    work_cv_.notify_all();
}

bool TaskPool::paused() const {
    std::lock_guard lock(mu_);
    return paused_;
}

void TaskPool::prune_window_locked(double now) const {
    while (!emission_times_.empty() && emission_times_.front() <= now - window_s_ * 1000.0)
        emission_times_.pop_front();
}

double TaskPool::throughput() const {
    std::lock_guard lock(mu_);
    prune_window_locked(now_ms());
    return static_cast<double>(emission_times_.size()) / window_s_;
}

PoolMetrics TaskPool::metrics() const {
    std::lock_guard lock(mu_);
    prune_window_locked(now_ms());
    PoolMetrics m;
    m.submitted = submitted_;
    m.emitted = emitted_;
    for (const auto &[gid, live] : live_)
        for (const auto &[id, n] : live.in_flight)
            m.in_flight += n;
    m.fireable = fireable_.size();
    m.live_graphs = live_.size();
    m.throughput_window = static_cast<double>(emission_times_.size()) / window_s_;
    return m;
}

void TaskPool::set_dispatch_observer(DispatchObserver obs) {
    std::lock_guard lock(mu_);
    on_dispatch_ = std::move(obs);
}

} // namespace mdf
