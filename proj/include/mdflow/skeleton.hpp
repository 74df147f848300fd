#ifndef MDFLOW_SKELETON_HPP
#define MDFLOW_SKELETON_HPP

#include "mdflow/mdf.hpp"
#include "mdflow/opcodes.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mdf {

struct Skeleton;
using SkeletonPtr = std::shared_ptr<const Skeleton>;

struct Seq {
    std::string opcode;
};
struct Pipe {
    SkeletonPtr first;
    SkeletonPtr second;
};
struct Farm {
    SkeletonPtr worker;
};
/** Programmer-defined graph: a template with one input and one output. */
struct Custom {
    Graph graph;
    std::string origin;
};

/** Stream-parallel skeleton tree over sequential opcodes and custom graphs. */
struct Skeleton {
    std::variant<Seq, Pipe, Farm, Custom> node;
};

SkeletonPtr seq(std::string opcode);
SkeletonPtr pipe(SkeletonPtr first, SkeletonPtr second);
/** Right-nested pipeline of two or more stages. */
SkeletonPtr pipe(std::vector<SkeletonPtr> stages);
SkeletonPtr farm(SkeletonPtr worker);
SkeletonPtr custom(Graph graph, std::string origin = {});

/** Compiled, never-instantiated graph: gid NoId and every token absent. */
struct GraphTemplate {
    Graph graph;
    std::string provenance;
};

/**
 * Compiles a skeleton into a template. Instruction ids come from a counter
 * starting at 1, assigned left to right; a pipe links its first stage's
 * output to the second stage's input instruction, slot 1, and a farm adds
 * nothing to the graph. Throws InvalidCustomGraph when an embedded graph
 * fails validation.
 */
GraphTemplate compile(const Skeleton &s);

/**
 * Normal form: farm over one sequential chain of every Seq leaf, taken
 * left to right. The chain is the derived opcode "a|b|c". Throws
 * NotNormalizable for trees containing Custom nodes.
 */
SkeletonPtr normalize(const Skeleton &s);

/**
 * Replaces the unique external destination of `g` by `successor` and
 * re-validates (the successor is exempt from reference and output rules).
 * Linking to Dest::out() is the identity. Throws NoExternalDest.
 */
GraphTemplate link_custom(GraphTemplate g, Dest successor);

/**
 * Map over `parts` partitions: split (1 -> parts) feeds `parts` workers
 * (1 -> 1) whose results meet in merge (parts -> 1). Throws ArityMismatch
 * when the registry declares other arities, UnknownOpcode when absent.
 */
GraphTemplate build_map_graph(const OpcodeRegistry &registry, const std::string &split,
                              const std::string &worker, const std::string &merge, std::size_t parts);

/** Seq opcodes of the tree, left to right. */
std::vector<std::string> seq_leaves(const Skeleton &s);

/** Every distinct opcode a graph references. */
std::vector<std::string> graph_opcodes(const Graph &g);

using GraphLoader = std::function<Graph(const std::string &path)>;

/** Reads a graph file in debug-dump form. */
Graph load_graph_file(const std::string &path);

/**
 * CLI skeleton text: seq:NAME | pipe(A,B[,C...]) | farm(A) | custom:@FILE.
 * Throws Parse.
 */
SkeletonPtr parse_skeleton(std::string_view text, const GraphLoader &loader = load_graph_file);
std::string to_text(const Skeleton &s);

} // namespace mdf

#endif // MDFLOW_SKELETON_HPP
