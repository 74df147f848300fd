#ifndef MDFLOW_WORKFLOW_HPP
#define MDFLOW_WORKFLOW_HPP

#include "mdflow/opcodes.hpp"
#include "mdflow/taskpool.hpp"

#include <chrono>
#include <condition_variable>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mdf {

/**
 * Handle to the result of a submitted computation. Copies share state.
 * part(i) addresses output i of a multi-output opcode; the whole future of
 * such an opcode yields its outputs packed with pack_payloads.
 */
class Future {
public:
    struct State;
    using Callback = std::function<void()>;

    Future() = default;

    bool valid() const { return st_ != nullptr; }
    /** Non-blocking; true once completed, successfully or not. Never flips back. */
    bool is_ready() const;
    bool failed() const;
    /** Blocks until ready. Throws Timeout or UpstreamFailed; repeated calls return the same payload. */
    Payload get_value(std::chrono::milliseconds timeout = std::chrono::milliseconds::max()) const;
    Future part(std::size_t i) const;
    std::uint64_t seq() const;
    std::size_t out_arity() const;

    /** Pool timestamps of the backing instruction (ms, now_ms clock); -1 until known. */
    double dispatch_ms() const;
    double complete_ms() const;

    /** Runs `cb` once completed (immediately if already), outside any lock. */
    void on_complete(Callback cb) const;

private:
    friend class Workflow;
    Future(std::shared_ptr<State> st, std::size_t part) : st_(std::move(st)), part_(part) {}

    static constexpr std::size_t kWhole = std::numeric_limits<std::size_t>::max();
    std::shared_ptr<State> st_;
    std::size_t part_ = kWhole;
};

using Arg = std::variant<Payload, Future>;

struct StreamResult {
    std::uint64_t seq = 0;
    Payload value;
    bool failed = false;
    std::string error;
};

/**
 * Futures frontend over a task pool. Each submission becomes a
 * single-instruction graph submitted once all its future arguments are
 * ready; readiness is event-driven, no thread waits on pending arguments.
 */
class Workflow {
public:
    Workflow(TaskPool &pool, std::shared_ptr<const OpcodeRegistry> registry);
    ~Workflow();

    /** Returns at once with a pending future. Throws UnknownOpcode, ArityMismatch. */
    Future submit(const std::string &opcode, std::vector<Arg> args);

    using Body = std::function<Future(Workflow &, const Payload &input)>;
    /**
     * Launches one body instance per input, at most `window` unfinished at a
     * time, and returns every final result ordered by input position.
     */
    std::vector<StreamResult> run_stream(const Body &body, const std::vector<Payload> &inputs, std::size_t window);

    /** Submissions not yet completed. */
    std::size_t outstanding() const;
    bool wait_all(std::chrono::milliseconds timeout) const;

private:
    using State = Future::State;
    struct Pending;
    const Graph &template_for(const std::string &opcode, std::size_t in_arity);
    void dispatch(const std::shared_ptr<Pending> &p);
    void complete(const std::shared_ptr<State> &st, const ResultRecord &rec);
    void fail(const std::shared_ptr<State> &st, const std::string &error);
    void retire();

    TaskPool &pool_;
    std::shared_ptr<const OpcodeRegistry> registry_;
    mutable std::mutex mu_;
    mutable std::condition_variable idle_cv_;
    std::map<std::pair<std::string, std::size_t>, Graph> templates_;
    std::uint64_t next_seq_ = 0;
    std::size_t outstanding_ = 0;
};

/** One node of a workflow description. */
struct WorkflowNode {
    struct Ref {
        enum class Kind { Literal, Input, Node };
        Kind kind = Kind::Literal;
        Payload literal;
        std::size_t node = 0;  // index of an earlier node
        std::optional<std::size_t> part;
    };
    std::string name;
    std::string opcode;
    std::vector<Ref> args;
};

/** Nodes in topological order; the last node is the result. */
struct WorkflowSpec {
    std::vector<WorkflowNode> nodes;
};

/**
 * JSON list of {name, opcode, args}. An argument is a literal JSON value or
 * a string "$input", "$node" or "$node.k" naming an earlier node. Checks
 * topological order and, with a registry, opcode arities. Throws Parse,
 * UnknownOpcode, ArityMismatch.
 */
WorkflowSpec parse_workflow(std::string_view json_text, const OpcodeRegistry *registry = nullptr);
WorkflowSpec load_workflow_file(const std::string &path, const OpcodeRegistry *registry = nullptr);

/** Submits every node for one input; returns the result node's future. */
Future launch(Workflow &wf, const WorkflowSpec &spec, const Payload &input);

} // namespace mdf

#endif // MDFLOW_WORKFLOW_HPP
