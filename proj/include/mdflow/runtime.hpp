#ifndef MDFLOW_RUNTIME_HPP
#define MDFLOW_RUNTIME_HPP

#include "mdflow/opcodes.hpp"
#include "mdflow/taskpool.hpp"
#include "mdflow/wire.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mdf {

using WorkerId = std::uint64_t;

struct WorkerSpec {
    enum class Kind { Local, Remote };
    Kind kind = Kind::Local;
    std::string host;
    std::uint16_t port = 0;

    static WorkerSpec local() { return {}; }
    static WorkerSpec remote(std::string host, std::uint16_t port) {
        return {Kind::Remote, std::move(host), port};
    }
    bool is_local() const { return kind == Kind::Local; }
    /** "local" or "host:port". Throws Parse. */
    static WorkerSpec parse(std::string_view text);
    std::string to_string() const;

    friend bool operator==(const WorkerSpec &, const WorkerSpec &) = default;
};

enum class WorkerState { Idle, Busy, Stopped, Failed };
std::string_view to_string(WorkerState s);

struct WorkerStats {
    std::uint64_t completed = 0;
    double busy_ms = 0;
    double comm_ms = 0;  // link time of its own messages
    double mean_ms = 0;  // rolling mean of recent instruction durations
};

struct WorkerDescriptor {
    WorkerId id = 0;
    WorkerSpec spec;
    WorkerState state = WorkerState::Idle;
    WorkerStats stats;
    double slowdown = 1.0;
};

struct WorkerFailure {
    WorkerId worker = 0;
    Id gid = NoId;  // NoId when the worker failed between instructions
    Id instr = NoId;
    Errc code = Errc::ConnectionLost;
    std::string message;
};

/** Something that runs opcodes: in-process or behind a socket. */
class Executor {
public:
    virtual ~Executor() = default;
    /**
     * Throws OpcodeFailed for failures of the opcode itself; transport
     * failures (RemoteTimeout, ConnectionLost, Protocol) mean the executor
     * is lost.
     */
    virtual std::vector<Payload> execute(const std::string &opcode, std::span<const Payload> args,
                                         std::chrono::milliseconds deadline) = 0;
    /** Whether `opcode` (possibly derived) can run here. */
    virtual bool supports(const std::string &opcode, std::string *missing) const = 0;
    /** Breaks a blocked execute(); used for fault injection. */
    virtual void abort() {}
};

class LocalExecutor : public Executor {
public:
    explicit LocalExecutor(std::shared_ptr<const OpcodeRegistry> registry) : registry_(std::move(registry)) {}
    std::vector<Payload> execute(const std::string &opcode, std::span<const Payload> args,
                                 std::chrono::milliseconds deadline) override;
    bool supports(const std::string &opcode, std::string *missing) const override;

private:
    std::shared_ptr<const OpcodeRegistry> registry_;
};

class RemoteExecutor : public Executor {
public:
    /** Connects and completes HELLO/READY. Throws Unreachable, Protocol. */
    static std::unique_ptr<RemoteExecutor> connect(const std::string &host, std::uint16_t port,
                                                   std::shared_ptr<const OpcodeRegistry> local,
                                                   std::chrono::milliseconds timeout);

    std::vector<Payload> execute(const std::string &opcode, std::span<const Payload> args,
                                 std::chrono::milliseconds deadline) override;
    bool supports(const std::string &opcode, std::string *missing) const override;
    void abort() override;

    const Manifest &manifest() const { return manifest_; }
    /** Frames of each type received so far. */
    std::uint64_t received(wire::FrameType t) const;

private:
    RemoteExecutor(wire::Socket sock, Manifest manifest, std::shared_ptr<const OpcodeRegistry> local);

    wire::Socket sock_;
    Manifest manifest_;
    std::shared_ptr<const OpcodeRegistry> local_;
    std::uint64_t next_request_ = 1;
    std::map<wire::FrameType, std::uint64_t> received_;
};

/** A connected, verified worker that is not yet taking instructions. */
struct PreparedWorker {
    WorkerSpec spec;
    std::unique_ptr<Executor> executor;
};

struct RuntimeOptions {
    /// Delay injected on every message: the instruction out and its result back.
    double comm_delay_ms = 0;
    /// Message delays share one link: at most one is in progress at a time.
    bool serialize_comm = true;
    /// Per-dispatch deadline = max(min_deadline_ms, deadline_factor * mean duration).
    double min_deadline_ms = 10000;
    double deadline_factor = 8;
    double connect_timeout_ms = 3000;
    /// How often idle control loops re-check their stop/kill flags.
    double poll_ms = 20;
};

/**
 * The distributed interpreter: one control thread per worker fetching
 * fireable instructions from the pool (auto-scheduling), executing them on
 * its executor and delivering the outputs.
 *
 * An opcode failure retires the task with an error record and the worker
 * carries on. A transport failure requeues the instruction, marks the
 * worker failed and notifies the failure handler.
 */
class Runtime {
public:
    using FailureHandler = std::function<void(const WorkerFailure &)>;

    Runtime(TaskPool &pool, std::shared_ptr<const OpcodeRegistry> registry, RuntimeOptions opts = {});
    ~Runtime();
    Runtime(const Runtime &) = delete;
    Runtime &operator=(const Runtime &) = delete;

    /**
     * Connects to (or creates) a worker and checks that it can run every
     * opcode in `required`. Throws Unreachable, OpcodeManifestMismatch.
     */
    PreparedWorker create_worker(const WorkerSpec &spec, const std::vector<std::string> &required = {}) const;
    /** Adds a prepared worker to the pool in idle state and starts its loop. */
    WorkerId bind_worker(PreparedWorker w);
    WorkerId recruit(const WorkerSpec &spec, const std::vector<std::string> &required = {});

    /** Idle: stopped at once. Busy: stopped after the current instruction. Throws BadState if failed. */
    void stop_worker(WorkerId id, bool wait = true);
    /** Throws BadState unless stopped. */
    void restart_worker(WorkerId id);
    /** Fault injection: the worker fails now; its in-flight instruction is rescheduled. */
    void kill_worker(WorkerId id);
    /** Drains (if alive) and unbinds the worker. */
    void remove_worker(WorkerId id);
    /** Every later instruction on `id` takes `factor` times as long. Throws Config if factor < 1. */
    void set_slowdown(WorkerId id, double factor);

    std::vector<WorkerDescriptor> workers() const;
    std::optional<WorkerDescriptor> worker(WorkerId id) const;
    /** Compute plus link time of every completed instruction, removed workers included. */
    double service_ms() const;
    /** Workers that are idle or busy. */
    std::size_t active_count() const;

    void set_failure_handler(FailureHandler h);

    /** Lets running instructions finish, then joins every control thread. */
    void shutdown();

    TaskPool &pool() { return pool_; }
    const OpcodeRegistry &registry() const { return *registry_; }
    std::shared_ptr<const OpcodeRegistry> registry_ptr() const { return registry_; }
    const RuntimeOptions &options() const { return opts_; }

private:
    struct Slot {
        WorkerDescriptor desc;
        std::unique_ptr<Executor> exec;
        std::thread thread;
        bool stop_requested = false;
        bool kill_requested = false;
        bool terminate = false;
        bool exited = false;
        std::optional<std::pair<Id, Id>> current;  // (gid, instr) being executed
        std::vector<double> recent;  // ring of recent durations
        std::size_t recent_next = 0;
    };

    void loop(Slot &s);
    void run_one(Slot &s, Fireable f);
    void fail_worker(Slot &s, const WorkerFailure &failure);
    void finish_failed(Slot &s, Id gid, Id instr, const std::string &error);
    std::chrono::milliseconds deadline_for(const Slot &s) const;
    /** Returns the time spent on the link, excluding the wait for it. */
    double inject_comm_delay();
    Slot &slot_locked(WorkerId id);

    TaskPool &pool_;
    std::shared_ptr<const OpcodeRegistry> registry_;
    RuntimeOptions opts_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<WorkerId, std::unique_ptr<Slot>> slots_;
    WorkerId next_id_ = 1;
    FailureHandler on_failure_;
    std::mutex link_mu_;
    double service_ms_ = 0;
};

/**
 * The worker daemon: serves the wire protocol, one thread per connection,
 * EXEC requests answered in order.
 */
class WorkerServer {
public:
    /** Binds immediately. Throws BindFailed. */
    WorkerServer(std::shared_ptr<const OpcodeRegistry> registry, std::uint16_t port);
    ~WorkerServer();

    std::uint16_t port() const { return listener_.port(); }
    /** Serves on a background thread. */
    void start();
    /** Serves on the calling thread until stop(). */
    void serve();
    /** Stops accepting, lets in-flight requests answer, closes connections. Idempotent. */
    void stop();

    std::uint64_t executed() const { return executed_.load(); }

private:
    void handle(wire::Socket sock);

    std::shared_ptr<const OpcodeRegistry> registry_;
    wire::Listener listener_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> executed_{0};
    std::thread acceptor_;
    std::mutex mu_;
    std::vector<std::thread> connections_;
};

} // namespace mdf

#endif // MDFLOW_RUNTIME_HPP
