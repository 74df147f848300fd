#ifndef MDFLOW_MDF_HPP
#define MDFLOW_MDF_HPP

#include "mdflow/codec.hpp"
#include "mdflow/error.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mdf {

/** Instruction and graph identifier. Generated ids start at 1. */
using Id = std::uint64_t;
inline constexpr Id NoId = 0;

/** Single-assignment input slot: absent until a value is stored. */
struct Token {
    std::optional<Payload> value;

    bool present() const { return value.has_value(); }
    friend bool operator==(const Token &, const Token &) = default;
};

/**
 * Destination of an output token: (graph, instruction, 1-based slot).
 *
 * All three NoId is the external output stream. Inside templates the graph
 * field of internal destinations is NoId, meaning "the enclosing graph";
 * instantiation stamps the concrete gid.
 */
struct Dest {
    Id graph = NoId;
    Id instr = NoId;
    std::uint32_t slot = 0;

    static Dest out() { return {}; }
    static Dest to(Id instr, std::uint32_t slot, Id graph = NoId) { return {graph, instr, slot}; }

    bool is_external() const { return graph == NoId && instr == NoId && slot == 0; }
    friend bool operator==(const Dest &, const Dest &) = default;
    friend auto operator<=>(const Dest &, const Dest &) = default;
};

struct Instruction {
    Id id = NoId;
    Id gid = NoId;
    std::string opcode;
    std::vector<Token> inputs;
    std::vector<Dest> dests;

    std::size_t in_arity() const { return inputs.size(); }
    friend bool operator==(const Instruction &, const Instruction &) = default;
};

struct Graph {
    Id gid = NoId;
    Id input_id = NoId;
    std::map<Id, Instruction> instructions;

    friend bool operator==(const Graph &, const Graph &) = default;
};

/** Builds an instruction with every input token absent. */
Instruction make_instruction(Id id, Id gid, std::string opcode, std::size_t in_arity,
                             std::vector<Dest> dests);

/** Stores a value into a 1-based slot; throws SlotOutOfRange or SlotOccupied. */
void store_token(Instruction &instr, std::size_t slot, Payload value);

bool is_fireable(const Instruction &instr);

enum class Rule {
    MissingInput,     // input_id names no instruction
    ZeroArity,
    EmptyDests,
    GidMismatch,      // instruction gid differs from the graph gid
    DanglingDest,     // destination instruction does not exist
    BadSlot,          // slot 0 or beyond the target's arity
    MalformedDest,    // NoId instruction with a graph or slot set
    ForeignGraph,     // destination names a different graph
    DuplicateWriter,  // two destinations feed the same slot
    MissingOutput,
    MultipleOutputs,
    // liveness_violations only
    UnfedSlot,
    InputFed,
    Cycle,
};

std::string_view to_string(Rule r);

struct Violation {
    Id instr = NoId;
    Rule rule;
    std::string message;

    friend bool operator==(const Violation &a, const Violation &b) {
        return a.instr == b.instr && a.rule == b.rule;
    }
};

struct ValidateOptions {
    /// Destination exempt from the reference and output-uniqueness rules;
    /// used when a fragment has been linked toward a graph not yet merged.
    std::optional<Dest> open_successor;
};

/** Structural invariants of a graph. Violations are returned, never thrown. */
std::vector<Violation> validate_graph(const Graph &g, const ValidateOptions &opts = {});

/**
 * Execution-level checks on top of validate_graph: every slot except the
 * input's first is fed, the input's first slot is not fed internally, and
 * the graph is acyclic. A graph failing these would never drain.
 */
std::vector<Violation> liveness_violations(const Graph &g);

/** Copies a template, stamping gid on the graph, its instructions and internal dests. */
Graph instantiate(const Graph &tmpl, Id gid);

/**
 * Deterministic renumbering: instructions get ids 1..n in breadth-first
 * order from the input (dest order), unreachable ones after in id order,
 * and the graph id becomes 1. Isomorphic graphs canonicalize identically.
 */
Graph canonicalize(const Graph &g);

/**
 * Debug dump, one instruction per line, ascending id:
 *   id gid opcode [t1,t2,...] -> [(g,i,s),...]
 * "_" marks an absent token, "OUT" the external destination and "NoId" the
 * reserved identifier.
 */
std::string dump_graph(const Graph &g);

/** Inverse of dump_graph. The input instruction is the lowest id. */
Graph parse_graph(std::string_view text);

std::string id_text(Id id);

} // namespace mdf

#endif // MDFLOW_MDF_HPP
