#ifndef MDFLOW_TASKPOOL_HPP
#define MDFLOW_TASKPOOL_HPP

#include "mdflow/mdf.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mdf {

/** Milliseconds on the process-wide steady clock. */
double now_ms();

struct ResultRecord {
    std::uint64_t seq = 0;
    Id gid = NoId;
    Payload value;
    bool failed = false;
    std::string error;
    double submit_ms = 0;
    double dispatch_ms = 0;  // first dispatch of any instruction of the graph
    double complete_ms = 0;
};

/** An instruction handed to a worker: a snapshot, not a reference into the pool. */
struct Fireable {
    Id gid = NoId;
    std::uint64_t seq = 0;
    Instruction instr;
};

struct PoolMetrics {
    std::uint64_t submitted = 0;
    std::uint64_t emitted = 0;
    std::size_t in_flight = 0;
    std::size_t fireable = 0;
    std::size_t live_graphs = 0;
    double throughput_window = 0;  // emissions per second over the window

    std::string to_json() const;
};

/**
 * Instruction repository and matching unit.
 *
 * Each submitted task instantiates a private copy of a template. Tokens are
 * matched against waiting instructions; an instruction enters the FIFO
 * fireable queue once, when its last token arrives. Workers fetch, execute
 * and complete instructions; failed dispatches are requeued at the head.
 * Completions are deduplicated per (gid, instruction), so a requeued
 * instruction that ends up running twice is emitted once.
 *
 * All members are thread-safe. Result sinks run outside the pool lock and
 * may call back into the pool.
 */
class TaskPool {
public:
    using Sink = std::function<void(const ResultRecord &)>;
    using DispatchObserver = std::function<void(double ts_ms, Id gid, Id instr)>;

    explicit TaskPool(Sink sink = {}, double throughput_window_s = 10.0);

    TaskPool(const TaskPool &) = delete;
    TaskPool &operator=(const TaskPool &) = delete;

    /** Instantiates `tmpl` with `task` in slot 1 of its input instruction. */
    Id submit_task(const Graph &tmpl, Payload task, Sink on_emit = {});

    /** Same, filling input slots 1..inputs.size(). */
    Id submit_task(const Graph &tmpl, std::vector<Payload> inputs, Sink on_emit = {});

    /**
     * Routes one token of graph `gid`. The external destination emits a
     * result and retires the graph; an internal one stores the token and
     * enqueues the target when it becomes fireable. Throws UnknownGraph,
     * SlotOccupied.
     */
    void deliver_token(Id gid, const Dest &d, Payload value);

    /** Oldest fireable instruction, now in flight; nullopt on timeout or pause. */
    std::optional<Fireable> fetch_fireable(std::chrono::milliseconds timeout);

    /**
     * Delivers an instruction's outputs, one per destination, atomically.
     * Returns false (and delivers nothing) if the instruction was already
     * completed or its graph retired.
     */
    bool complete(Id gid, Id instr, std::vector<Payload> outputs);

    /** The opcode itself failed: the graph is retired with an error record. */
    bool fail(Id gid, Id instr, const std::string &error);

    /** Returns an in-flight instruction to the head of the queue. Throws NotInFlight. */
    void requeue(Id gid, Id instr);

    std::size_t pending_count() const;

    /** Waits until no graph is live and no sink is running. */
    bool wait_idle(std::chrono::milliseconds timeout) const;

    void close();
    bool closed() const;

    /** While paused, fetch_fireable hands out nothing. */
    void pause();
    void resume();
    bool paused() const;

    PoolMetrics metrics() const;
    /** Emissions per second over the last window ending now. */
    double throughput() const;
    double throughput_window_s() const { return window_s_; }

    void set_dispatch_observer(DispatchObserver obs);

private:
    struct Live {
        Graph graph;
        std::uint64_t seq = 0;
        double submit_ms = 0;
        double dispatch_ms = -1;
        std::set<Id> completed;
        std::map<Id, std::size_t> in_flight;
        Sink on_emit;
    };
    struct Emission {
        ResultRecord record;
        Sink sink;
    };
    using Key = std::pair<Id, Id>;

    void route_locked(Live &live, const Dest &d, Payload value, std::vector<Emission> &out);
    void retire_locked(Id gid, ResultRecord rec, std::vector<Emission> &out);
    void flush(std::vector<Emission> &emissions);
    void prune_window_locked(double now) const;

    mutable std::mutex mu_;
    std::condition_variable work_cv_;
    mutable std::condition_variable idle_cv_;
    std::map<Id, Live> live_;
    std::deque<Key> fireable_;
    Sink sink_;
    DispatchObserver on_dispatch_;
    Id next_gid_ = 1;
    std::uint64_t next_seq_ = 0;
    std::uint64_t submitted_ = 0;
    std::uint64_t emitted_ = 0;
    std::size_t in_flight_ = 0;
    std::size_t sinks_running_ = 0;
    bool closed_ = false;
    bool paused_ = false;
    double window_s_;
    mutable std::deque<double> emission_times_;
};

} // namespace mdf

#endif // MDFLOW_TASKPOOL_HPP
