#include "mdflow/runtime.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>
#include <numeric>

namespace mdf {

namespace {

constexpr std::size_t kRecentDurations = 32;

std::chrono::milliseconds to_ms(double ms) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(ms, 1.0)));
}

} // namespace

WorkerSpec WorkerSpec::parse(std::string_view text) {
    if (text == "local")
        return local();
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
        throw Error(Errc::Parse, "worker spec must be 'local' or host:port, got '" + std::string(text) + "'");
    unsigned port = 0;
    auto digits = text.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || port == 0 || port > 65535)
        throw Error(Errc::Parse, "bad port in worker spec '" + std::string(text) + "'");
    return remote(std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port));
}

std::string WorkerSpec::to_string() const {
    return is_local() ? "local" : host + ":" + std::to_string(port);
}

std::string_view to_string(WorkerState s) {
    switch (s) {
    case WorkerState::Idle:
        return "idle";
    case WorkerState::Busy:
        return "busy";
    case WorkerState::Stopped:
        return "stopped";
    case WorkerState::Failed:
        return "failed";
    }
    return "?";
}

std::vector<Payload> LocalExecutor::execute(const std::string &opcode, std::span<const Payload> args,
                                            std::chrono::milliseconds) {
    try {
        return registry_->invoke(opcode, args);
    } catch (const Error &) {
        throw;
    } catch (const std::exception &e) {
        throw Error(Errc::OpcodeFailed, opcode + ": " + e.what());
    }
}

bool LocalExecutor::supports(const std::string &opcode, std::string *missing) const {
    if (registry_->contains(opcode))
        return true;
    if (missing)
        *missing = opcode;
    return false;
}

RemoteExecutor::RemoteExecutor(wire::Socket sock, Manifest manifest, std::shared_ptr<const OpcodeRegistry> local)
    : sock_(std::move(sock)), manifest_(std::move(manifest)), local_(std::move(local)) {}

std::unique_ptr<RemoteExecutor> RemoteExecutor::connect(const std::string &host, std::uint16_t port,
                                                        std::shared_ptr<const OpcodeRegistry> local,
                                                        std::chrono::milliseconds timeout) {
    auto sock = wire::Socket::connect(host, port, timeout);
    try {
        sock.send_frame(wire::encode(wire::Hello{}));
        auto reply = sock.recv_frame(timeout);
        if (reply.type == wire::FrameType::Error)
            throw Error(Errc::Protocol, "worker refused handshake: " + wire::decode_error(reply).message);
        auto ready = wire::decode_ready(reply);
        return std::unique_ptr<RemoteExecutor>(
            new RemoteExecutor(std::move(sock), std::move(ready.manifest), std::move(local)));
    } catch (const Error &e) {
        if (e.code() == Errc::Protocol)
            throw;
        throw Error(Errc::Unreachable, host + ":" + std::to_string(port) + " handshake: " + e.what());
    }
}

std::vector<Payload> RemoteExecutor::execute(const std::string &opcode, std::span<const Payload> args,
                                             std::chrono::milliseconds deadline) {
    wire::Exec req;
    req.request = next_request_++;
    req.opcode = opcode;
    req.args.assign(args.begin(), args.end());
    sock_.send_frame(wire::encode(req));
    auto until = std::chrono::steady_clock::now() + deadline;
    for (;;) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
        auto f = sock_.recv_frame(std::max(left, std::chrono::milliseconds(0)));
        ++received_[f.type];
        switch (f.type) {
        case wire::FrameType::Result: {
            auto r = wire::decode_result(f);
            if (r.request != req.request)
                throw Error(Errc::Protocol, "reply for request " + std::to_string(r.request));
            return std::move(r.outputs);
        }
        case wire::FrameType::Fail: {
            auto r = wire::decode_fail(f);
            if (r.request != req.request)
                throw Error(Errc::Protocol, "failure for request " + std::to_string(r.request));
            throw Error(Errc::OpcodeFailed, r.message);
        }
        case wire::FrameType::Pong:
            continue;
        case wire::FrameType::Error:
            throw Error(Errc::Protocol, "worker error: " + wire::decode_error(f).message);
        default:
            throw Error(Errc::Protocol, "unexpected frame from worker");
        }
    }
}

bool RemoteExecutor::supports(const std::string &opcode, std::string *missing) const {
    return manifest_covers(manifest_, *local_, opcode, missing);
}

void RemoteExecutor::abort() { sock_.shutdown(); }

std::uint64_t RemoteExecutor::received(wire::FrameType t) const {
    auto it = received_.find(t);
    return it == received_.end() ? 0 : it->second;
}

Runtime::Runtime(TaskPool &pool, std::shared_ptr<const OpcodeRegistry> registry, RuntimeOptions opts)
    : pool_(pool), registry_(std::move(registry)), opts_(opts) {}

Runtime::~Runtime() { shutdown(); }

PreparedWorker Runtime::create_worker(const WorkerSpec &spec, const std::vector<std::string> &required) const {
    PreparedWorker w{spec, nullptr};
    if (spec.is_local())
        w.executor = std::make_unique<LocalExecutor>(registry_);
    else
        w.executor = RemoteExecutor::connect(spec.host, spec.port, registry_, to_ms(opts_.connect_timeout_ms));
    for (const auto &op : required) {
        std::string missing;
        if (!w.executor->supports(op, &missing))
            throw Error(Errc::OpcodeManifestMismatch,
                        spec.to_string() + " cannot run '" + op + "' (missing '" + missing + "')");
    }
    return w;
}

WorkerId Runtime::bind_worker(PreparedWorker w) {
    if (!w.executor)
        throw Error(Errc::BadState, "worker has no executor");
    std::lock_guard lock(mu_);
    auto slot = std::make_unique<Slot>();
    slot->desc.id = next_id_++;
    slot->desc.spec = w.spec;
    slot->exec = std::move(w.executor);
    Slot &s = *slot;
    slots_.emplace(s.desc.id, std::move(slot));
    s.thread = std::thread([this, &s] { loop(s); });
    return s.desc.id;
}

WorkerId Runtime::recruit(const WorkerSpec &spec, const std::vector<std::string> &required) {
    return bind_worker(create_worker(spec, required));
}

Runtime::Slot &Runtime::slot_locked(WorkerId id) {
    auto it = slots_.find(id);
    if (it == slots_.end())
        throw Error(Errc::BadState, "no worker " + std::to_string(id));
    return *it->second;
}

void Runtime::stop_worker(WorkerId id, bool wait) {
    std::unique_lock lock(mu_);
    Slot &s = slot_locked(id);
    if (s.desc.state == WorkerState::Failed)
        throw Error(Errc::BadState, "worker " + std::to_string(id) + " has failed");
    s.stop_requested = true;
    if (s.desc.state == WorkerState::Idle)
        s.desc.state = WorkerState::Stopped;
    cv_.notify_all();
    if (wait)
        cv_.wait(lock, [&s] {
            return s.desc.state == WorkerState::Stopped || s.desc.state == WorkerState::Failed;
        });
}

void Runtime::restart_worker(WorkerId id) {
    std::lock_guard lock(mu_);
    Slot &s = slot_locked(id);
    if (s.desc.state != WorkerState::Stopped)
        throw Error(Errc::BadState,
                    "worker " + std::to_string(id) + " is " + std::string(to_string(s.desc.state)));
    s.stop_requested = false;
    s.desc.state = WorkerState::Idle;
    cv_.notify_all();
}

void Runtime::kill_worker(WorkerId id) {
    WorkerFailure failure{id, NoId, NoId, Errc::ConnectionLost, "worker killed"};
    FailureHandler h;
    {
        std::lock_guard lock(mu_);
        Slot &s = slot_locked(id);
        if (s.desc.state == WorkerState::Failed)
            return;
        s.kill_requested = true;
        s.desc.state = WorkerState::Failed;
        if (s.current) {
            failure.gid = s.current->first;
            failure.instr = s.current->second;
            s.current.reset();
        }
        s.exec->abort();
        cv_.notify_all();
        h = on_failure_;
    }
    if (failure.gid != NoId) {
        try {
            pool_.requeue(failure.gid, failure.instr);
        } catch (const Error &) {
            // graph already retired
        }
    }
    if (h)
        h(failure);
}

void Runtime::remove_worker(WorkerId id) {
    std::unique_ptr<Slot> slot;
    {
        std::unique_lock lock(mu_);
        Slot &s = slot_locked(id);
        if (s.desc.state != WorkerState::Failed) {
            s.stop_requested = true;
            if (s.desc.state == WorkerState::Idle)
                s.desc.state = WorkerState::Stopped;
            cv_.notify_all();
            cv_.wait(lock, [&s] {
                return s.desc.state == WorkerState::Stopped || s.desc.state == WorkerState::Failed;
            });
        }
        s.terminate = true;
        cv_.notify_all();
    }
    std::thread t;
    {
        std::lock_guard lock(mu_);
        t = std::move(slot_locked(id).thread);
    }
    if (t.joinable())
        t.join();
    std::lock_guard lock(mu_);
    auto it = slots_.find(id);
    slot = std::move(it->second);
    slots_.erase(it);
}

void Runtime::set_slowdown(WorkerId id, double factor) {
    if (!(factor >= 1.0))
        throw Error(Errc::Config, "slowdown must be >= 1");
    std::lock_guard lock(mu_);
    slot_locked(id).desc.slowdown = factor;
}

std::vector<WorkerDescriptor> Runtime::workers() const {
    std::lock_guard lock(mu_);
    std::vector<WorkerDescriptor> out;
    for (const auto &[id, s] : slots_)
        out.push_back(s->desc);
    return out;
}

double Runtime::service_ms() const {
    std::lock_guard lock(mu_);
    return service_ms_;
}

std::optional<WorkerDescriptor> Runtime::worker(WorkerId id) const {
    std::lock_guard lock(mu_);
    auto it = slots_.find(id);
    if (it == slots_.end())
        return std::nullopt;
    return it->second->desc;
}

std::size_t Runtime::active_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto &kv) {
        auto st = kv.second->desc.state;
        return st == WorkerState::Idle || st == WorkerState::Busy;
    }));
}

void Runtime::set_failure_handler(FailureHandler h) {
    std::lock_guard lock(mu_);
    on_failure_ = std::move(h);
}

void Runtime::shutdown() {
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(mu_);
        for (auto &[id, s] : slots_) {
            s->terminate = true;
            if (s->thread.joinable())
                threads.push_back(std::move(s->thread));
        }
        cv_.notify_all();
    }
    for (auto &t : threads)
        t.join();
}

std::chrono::milliseconds Runtime::deadline_for(const Slot &s) const {
    return to_ms(std::max(opts_.min_deadline_ms, opts_.deadline_factor * s.desc.stats.mean_ms));
}

double Runtime::inject_comm_delay() {
    if (opts_.comm_delay_ms <= 0)
        return 0;
    std::unique_lock<std::mutex> link;
    if (opts_.serialize_comm)
        link = std::unique_lock(link_mu_);
    double t0 = now_ms();
    sleep_ms(opts_.comm_delay_ms);
    return now_ms() - t0;
}

void Runtime::loop(Slot &s) {
    const auto poll = to_ms(opts_.poll_ms);
    for (;;) {
        {
            std::unique_lock lock(mu_);
            if (s.kill_requested || s.terminate)
                break;
            if (s.stop_requested) {
                s.desc.state = WorkerState::Stopped;
                cv_.notify_all();
                cv_.wait(lock, [&s] { return !s.stop_requested || s.terminate || s.kill_requested; });
                continue;
            }
        }
        auto f = pool_.fetch_fireable(poll);
        if (!f)
            continue;
        bool give_back = false;
        {
            std::lock_guard lock(mu_);
            if (s.stop_requested || s.kill_requested || s.terminate)
                give_back = true;
            else
                s.desc.state = WorkerState::Busy;
        }
        if (give_back) {
            pool_.requeue(f->gid, f->instr.id);
            continue;
        }
        run_one(s, std::move(*f));
        std::lock_guard lock(mu_);
        if (s.desc.state == WorkerState::Failed)
            break;
        s.desc.state = WorkerState::Idle;
    }
    std::lock_guard lock(mu_);
    s.exited = true;
    cv_.notify_all();
}

void Runtime::run_one(Slot &s, Fireable f) {
    const Id gid = f.gid;
    const Id instr = f.instr.id;
    std::vector<Payload> args;
    args.reserve(f.instr.inputs.size());
    for (auto &t : f.instr.inputs)
        args.push_back(std::move(*t.value));

    std::chrono::milliseconds deadline;
    double slowdown;
    {
        std::lock_guard lock(mu_);
        deadline = deadline_for(s);
        slowdown = s.desc.slowdown;
        s.current.emplace(gid, instr);
    }
    // After a kill the instruction already went back to the pool.
    auto killed = [this, &s] {
        std::lock_guard lock(mu_);
        return s.kill_requested;
    };

    double comm = inject_comm_delay();
    const double t0 = now_ms();
    std::vector<Payload> outputs;
    try {
        outputs = s.exec->execute(f.instr.opcode, args, deadline);
    } catch (const Error &e) {
        if (killed())
            return;
        if (is_transport_failure(e.code()))
            fail_worker(s, {s.desc.id, gid, instr, e.code(), e.what()});
        else
            finish_failed(s, gid, instr, e.what());
        return;
    } catch (const std::exception &e) {
        if (!killed())
            finish_failed(s, gid, instr, e.what());
        return;
    }
    double elapsed = now_ms() - t0;
    if (slowdown > 1.0) {
        sleep_ms((slowdown - 1.0) * elapsed);
        elapsed = now_ms() - t0;
    }
    if (killed())
        return;
    comm += inject_comm_delay();

    {
        std::lock_guard lock(mu_);
        s.current.reset();
        s.desc.state = WorkerState::Idle;
        auto &st = s.desc.stats;
        ++st.completed;
        st.busy_ms += elapsed;
        st.comm_ms += comm;
        service_ms_ += elapsed + comm;
        if (s.recent.size() < kRecentDurations)
            s.recent.push_back(elapsed);
        else
            s.recent[s.recent_next] = elapsed;
        s.recent_next = (s.recent_next + 1) % kRecentDurations;
        st.mean_ms = std::accumulate(s.recent.begin(), s.recent.end(), 0.0) / static_cast<double>(s.recent.size());
    }
    try {
        pool_.complete(gid, instr, std::move(outputs));
    } catch (const Error &e) {
        pool_.fail(gid, instr, e.what());
    }
}

void Runtime::finish_failed(Slot &s, Id gid, Id instr, const std::string &error) {
    {
        std::lock_guard lock(mu_);
        s.current.reset();
        s.desc.state = WorkerState::Idle;
    }
    pool_.fail(gid, instr, error);
}

void Runtime::fail_worker(Slot &s, const WorkerFailure &failure) {
    try {
        pool_.requeue(failure.gid, failure.instr);
    } catch (const Error &) {
        // graph already retired
    }
    FailureHandler h;
    {
        std::lock_guard lock(mu_);
        s.current.reset();
        s.desc.state = WorkerState::Failed;
        cv_.notify_all();
        h = on_failure_;
    }
    if (h)
        h(failure);
}

WorkerServer::WorkerServer(std::shared_ptr<const OpcodeRegistry> registry, std::uint16_t port)
    : registry_(std::move(registry)), listener_(port) {}

WorkerServer::~WorkerServer() { stop(); }

void WorkerServer::start() {
    acceptor_ = std::thread([this] { serve(); });
}

void WorkerServer::serve() {
    while (!stopping_.load()) {
        auto sock = listener_.accept(std::chrono::milliseconds(100));
        if (!sock)
            continue;
        std::lock_guard lock(mu_);
        connections_.emplace_back([this, s = std::move(*sock)]() mutable { handle(std::move(s)); });
    }
}

void WorkerServer::stop() {
    stopping_.store(true);
    if (acceptor_.joinable())
        acceptor_.join();
    std::vector<std::thread> conns;
    {
        std::lock_guard lock(mu_);
        conns.swap(connections_);
    }
    for (auto &t : conns)
        t.join();
    listener_.close();
}

void WorkerServer::handle(wire::Socket sock) {
    using namespace std::chrono_literals;
    auto refuse = [&sock](const std::string &why) {
        try {
            sock.send_frame(wire::encode(wire::ErrorMsg{why}));
        } catch (const Error &) {
        }
    };
    bool greeted = false;
    try {
        while (!stopping_.load()) {
            if (!sock.wait_readable(100ms))
                continue;
            auto f = sock.recv_frame(10s);
            if (!greeted) {
                if (f.type != wire::FrameType::Hello)
                    return refuse("expected HELLO");
                auto hello = wire::decode_hello(f);
                if (hello.version != wire::kProtocolVersion)
                    return refuse("unsupported protocol version " + std::to_string(hello.version));
                sock.send_frame(wire::encode(wire::Ready{registry_->manifest()}));
                greeted = true;
                continue;
            }
            switch (f.type) {
            case wire::FrameType::Exec: {
                auto req = wire::decode_exec(f);
                try {
                    auto out = registry_->invoke(req.opcode, req.args);
                    sock.send_frame(wire::encode(wire::Result{req.request, std::move(out)}));
                } catch (const Error &e) {
                    if (e.code() == Errc::ConnectionLost)
                        throw;
                    sock.send_frame(wire::encode(wire::Fail{req.request, e.what()}));
                } catch (const std::exception &e) {
                    sock.send_frame(wire::encode(wire::Fail{req.request, e.what()}));
                }
                ++executed_;
                break;
            }
            case wire::FrameType::Ping:
                sock.send_frame(wire::pong());
                break;
            default:
                return refuse("unexpected frame type " + std::to_string(static_cast<int>(f.type)));
            }
        }
    } catch (const Error &e) {
        if (e.code() == Errc::Protocol)
            refuse(e.what());
    }
}

} // namespace mdf
