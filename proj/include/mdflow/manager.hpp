#ifndef MDFLOW_MANAGER_HPP
#define MDFLOW_MANAGER_HPP

#include "mdflow/expr.hpp"
#include "mdflow/runtime.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

namespace mdf {

struct ParDegree {
    std::size_t n = 0;
};
struct Throughput {
    double rate = 0;  // minimum tasks per second
};
struct QoSContract {
    std::set<std::string> vars;
    Expr predicate;
};

using Contract = std::variant<ParDegree, Throughput, QoSContract>;

/**
 * "pardegree:N", "throughput:R" or "qos: V=a,b; E=<expr>". Throws Parse,
 * or UnmonitorableVariable when E mentions a name outside V.
 */
Contract parse_contract(std::string_view text);
std::string to_string(const Contract &c);

/** Throughput(r) is the QoS contract V={throughput}, E: throughput > r. */
QoSContract as_qos(const Throughput &t);

enum class Harmonize { Average, Max, Min, Sum };
double harmonize(Harmonize h, const std::vector<double> &samples);

/** Timestamped samples of one measure, oldest first, covering the last window. */
class MeasureWindow {
public:
    MeasureWindow(std::string name, double window_s);

    /** Samples must arrive in time order. */
    void add(double ts_ms, double value);
    /** Drops samples older than the window ending at `now_ms`. */
    void prune(double now_ms);

    const std::string &name() const { return name_; }
    double window_s() const { return window_s_; }
    const std::deque<std::pair<double, double>> &samples() const { return samples_; }
    std::vector<double> values() const;

private:
    std::string name_;
    double window_s_;
    std::deque<std::pair<double, double>> samples_;
};

/** Returns current samples, or nullopt when the source is not implemented. */
using Sensor = std::function<std::optional<std::vector<double>>()>;

struct Action {
    enum class Kind { AddWorker, RemoveWorker, Rebind };
    Kind kind = Kind::AddWorker;
    std::size_t k = 1;
};

struct Plan {
    std::string name;
    std::vector<Action> actions;
    std::function<Bindings(const Bindings &)> forecast;

    /** Workers added minus workers removed. */
    long net_added() const;
};

/** Linear farm forecast: throughput' = throughput * (n + k) / n, workers' = n + k. */
Plan add_worker_plan(std::size_t k);
/** Linear farm forecast: throughput' = throughput * (n - k) / n, workers' = n - k. */
Plan remove_worker_plan(std::size_t k);

struct PlanVerdict {
    std::string plan;
    bool valid = false;
    Bindings forecast;  // bindings after overriding with the plan's forecast
};

struct Selection {
    std::optional<std::size_t> chosen;  // index into the plan list
    std::vector<PlanVerdict> verdicts;
};

/**
 * Each plan's forecast overrides the bindings of the variables in V it
 * predicts; the plan is valid when E holds on the result. Picks the valid
 * plan with the fewest added workers, the first declared on ties.
 */
Selection select_plan(const std::vector<Plan> &plans, const Bindings &bindings, const QoSContract &contract);

struct CheckResult {
    bool satisfied = true;
    std::string details;
};

struct EscalationEvent {
    std::string contract;
    Bindings bindings;
    std::vector<PlanVerdict> verdicts;
    double ts_ms = 0;
};

struct LogEvent {
    double ts_ms = 0;
    std::string kind;
    nlohmann::json detail;
};

/** Append-only event log, optionally mirrored as JSON lines to a stream. */
class EventLog {
public:
    void append(std::string kind, nlohmann::json detail = nlohmann::json::object());
    std::vector<LogEvent> events() const;
    std::vector<LogEvent> events(std::string_view kind) const;
    void mirror_to(std::ostream *out);
    static std::string to_line(const LogEvent &e);

private:
    mutable std::mutex mu_;
    std::vector<LogEvent> events_;
    std::ostream *mirror_ = nullptr;
};

struct ManagerOptions {
    double tick_s = 1.0;
    /// No contract checks before one throughput window has elapsed.
    double warmup_s = 10.0;
    /// Ticks without checks after a reconfiguration.
    int cooldown_ticks = 2;
    /// After acting, a violation lasting this many further ticks opens a new episode.
    int reopen_ticks = 10;
    /// Largest k among the generated add_worker plans.
    std::size_t max_plan_k = 4;
};

struct TickRecord {
    double ts_ms = 0;
    Bindings bindings;
    bool checked = false;
    bool satisfied = true;
    std::string action;  // empty, plan name, or "escalate"
    double duration_ms = 0;
};

/**
 * Autonomic manager for a farm of workers: monitors measures, checks the
 * contract once per tick, and executes the selected reconfiguration plan.
 * Escalates when no plan can restore the contract.
 *
 * The add/remove operations are also callable directly; every
 * reconfiguration is serialized on one mutex.
 */
class Manager {
public:
    using EscalationHandler = std::function<void(const EscalationEvent &)>;

    /**
     * `available` lists the specs that may be recruited later; `required`
     * are the opcodes each recruit must support.
     */
    Manager(Runtime &runtime, std::vector<WorkerSpec> available, std::vector<std::string> required,
            ManagerOptions opts = {});
    ~Manager();
    Manager(const Manager &) = delete;
    Manager &operator=(const Manager &) = delete;

    /**
     * Built-in measures: throughput (emissions per second over the pool
     * window), workers, recruitable, pending, load (per-worker busy
     * fraction, average) and service_time (per-worker mean ms, average).
     */
    void register_measure(const std::string &name, Harmonize h, std::vector<Sensor> sensors,
                          double window_s = 10.0);
    /** Throws SensorUnavailable. */
    double get_measure(const std::string &name);
    std::vector<std::string> measures() const;
    const MeasureWindow *window(const std::string &name) const;

    /** Throws UnmonitorableVariable. Takes effect at the next tick. */
    void set_contract(Contract c);
    std::optional<Contract> contract() const;

    CheckResult check_contract(const Bindings &b) const;
    /** Plans considered for the current contract and resources. */
    std::vector<Plan> plans() const;

    /** Throws RecruitmentFailed (after adding what it could). */
    std::size_t add_worker(std::size_t k);
    /** Throws WouldEmptyPool. */
    void remove_worker(std::size_t k);

    void control_tick();

    /** Runs control_tick every tick_s on a dedicated thread. */
    void start();
    void stop();

    void set_escalation_handler(EscalationHandler h);
    EventLog &log() { return log_; }
    std::vector<TickRecord> ticks() const;
    std::size_t reconfigurations() const;
    std::size_t escalations() const;
    std::size_t available_count() const;

private:
    struct Measure {
        Harmonize harmonize;
        std::vector<Sensor> sensors;
        MeasureWindow window;
    };

    Bindings bind_for(const std::set<std::string> &vars);
    std::set<std::string> contract_vars_locked() const;
    void execute_plan(const Plan &p);
    void register_builtins();
    void on_worker_failure(const WorkerFailure &f);

    Runtime &rt_;
    ManagerOptions opts_;
    std::vector<std::string> required_;

    mutable std::mutex mu_;  // contract, measures, episode state, records
    std::recursive_mutex reconfig_mu_;
    std::vector<WorkerSpec> available_;
    std::vector<WorkerId> added_order_;
    std::map<std::string, Measure, std::less<>> measures_;
    std::optional<Contract> contract_;
    EscalationHandler on_escalation_;
    EventLog log_;
    std::vector<TickRecord> ticks_;
    std::size_t reconfigurations_ = 0;
    std::size_t escalations_ = 0;

    double started_ms_;
    bool in_episode_ = false;
    bool acted_ = false;
    bool escalated_ = false;
    int cooldown_ = 0;
    int since_action_ = 0;

    std::map<WorkerId, double> last_busy_;
    double last_load_ms_ = -1;

    std::thread thread_;
    std::mutex run_mu_;
    std::condition_variable run_cv_;
    bool running_ = false;
};

} // namespace mdf

#endif // MDFLOW_MANAGER_HPP
