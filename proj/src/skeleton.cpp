#include "mdflow/skeleton.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace mdf {

SkeletonPtr seq(std::string opcode) { return std::make_shared<Skeleton>(Skeleton{Seq{std::move(opcode)}}); }

SkeletonPtr pipe(SkeletonPtr first, SkeletonPtr second) {
    return std::make_shared<Skeleton>(Skeleton{Pipe{std::move(first), std::move(second)}});
}

SkeletonPtr pipe(std::vector<SkeletonPtr> stages) {
    if (stages.size() < 2)
        throw Error(Errc::Parse, "pipe needs at least two stages");
    SkeletonPtr tail = stages.back();
    for (auto it = stages.rbegin() + 1; it != stages.rend(); ++it)
        tail = pipe(*it, tail);
    return tail;
}

SkeletonPtr farm(SkeletonPtr worker) { return std::make_shared<Skeleton>(Skeleton{Farm{std::move(worker)}}); }

SkeletonPtr custom(Graph graph, std::string origin) {
    return std::make_shared<Skeleton>(Skeleton{Custom{std::move(graph), std::move(origin)}});
}

namespace {

std::string describe(const std::vector<Violation> &vs) {
    std::string s;
    for (const auto &v : vs) {
        if (!s.empty())
            s += "; ";
        s += std::string(to_string(v.rule)) + "(" + id_text(v.instr) + ")";
    }
    return s;
}

Dest external_dest_of(const Graph &g, Id *owner) {
    for (const auto &[id, instr] : g.instructions)
        for (const auto &d : instr.dests)
            if (d.is_external()) {
                *owner = id;
                return d;
            }
    *owner = NoId;
    return {};
}

/** Copies a custom template into the id space starting at `next`, preserving id order. */
Graph renumber_custom(const Graph &g, Id &next) {
    std::map<Id, Id> renum;
    for (const auto &[id, instr] : g.instructions)
        renum[id] = next++;
    Graph out;
    out.input_id = renum.at(g.input_id);
    for (const auto &[id, instr] : g.instructions) {
        Instruction copy = instr;
        copy.id = renum[id];
        copy.gid = NoId;
        for (auto &t : copy.inputs)
            t.value.reset();
        for (auto &d : copy.dests)
            if (!d.is_external())
                d = Dest::to(renum.at(d.instr), d.slot);
        out.instructions.emplace(copy.id, std::move(copy));
    }
    return out;
}

void check_custom(const Graph &g) {
    auto vs = validate_graph(g);
    if (vs.empty() && g.gid != NoId)
        throw Error(Errc::InvalidCustomGraph, "custom template must have gid NoId");
    if (vs.empty())
        vs = liveness_violations(g);
    if (!vs.empty())
        throw Error(Errc::InvalidCustomGraph, describe(vs));
}

Graph compile_fragment(const Skeleton &s, Id &next) {
    return std::visit(
        [&next](const auto &node) -> Graph {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Seq>) {
                Graph g;
                Id id = next++;
                g.input_id = id;
                g.instructions.emplace(id, make_instruction(id, NoId, node.opcode, 1, {Dest::out()}));
                return g;
            } else if constexpr (std::is_same_v<T, Farm>) {
                return compile_fragment(*node.worker, next);
            } else if constexpr (std::is_same_v<T, Pipe>) {
                Graph head = compile_fragment(*node.first, next);
                Graph tail = compile_fragment(*node.second, next);
                Graph linked = link_custom({std::move(head), {}}, Dest::to(tail.input_id, 1)).graph;
                linked.instructions.merge(tail.instructions);
                return linked;
            } else {
                check_custom(node.graph);
                return renumber_custom(node.graph, next);
            }
        },
        s.node);
}

void collect_leaves(const Skeleton &s, std::vector<std::string> &out, bool &has_custom) {
    std::visit(
        [&](const auto &node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Seq>) {
                out.push_back(node.opcode);
            } else if constexpr (std::is_same_v<T, Farm>) {
                collect_leaves(*node.worker, out, has_custom);
            } else if constexpr (std::is_same_v<T, Pipe>) {
                collect_leaves(*node.first, out, has_custom);
                collect_leaves(*node.second, out, has_custom);
            } else {
                has_custom = true;
            }
        },
        s.node);
}

} // namespace

GraphTemplate compile(const Skeleton &s) {
    Id next = 1;
    Graph g = compile_fragment(s, next);
    if (auto vs = validate_graph(g); !vs.empty())
        throw Error(Errc::InvalidCustomGraph, describe(vs));
    return {std::move(g), to_text(s)};
}

SkeletonPtr normalize(const Skeleton &s) {
    std::vector<std::string> leaves;
    bool has_custom = false;
    collect_leaves(s, leaves, has_custom);
    if (has_custom)
        throw Error(Errc::NotNormalizable, "custom graphs have no normal form: " + to_text(s));
    std::string chain;
    for (const auto &leaf : leaves) {
        if (!chain.empty())
            chain += '|';
        chain += leaf;
    }
    return farm(seq(std::move(chain)));
}

GraphTemplate link_custom(GraphTemplate g, Dest successor) {
    Id owner = NoId;
    external_dest_of(g.graph, &owner);
    if (owner == NoId)
        throw Error(Errc::NoExternalDest, "graph has no external destination");
    if (successor.is_external())
        return g;
    for (auto &d : g.graph.instructions.at(owner).dests)
        if (d.is_external()) {
            d = successor;
            break;
        }
    if (auto vs = validate_graph(g.graph, {successor}); !vs.empty())
        throw Error(Errc::InvalidCustomGraph, describe(vs));
    return g;
}

GraphTemplate build_map_graph(const OpcodeRegistry &registry, const std::string &split,
                              const std::string &worker, const std::string &merge, std::size_t parts) {
    if (parts < 1)
        throw Error(Errc::ArityMismatch, "map needs at least one partition");
    auto need = [&registry](const std::string &name, std::size_t in, std::size_t out) {
        auto info = registry.info(name);
        if (!info)
            throw Error(Errc::UnknownOpcode, name);
        if (info->in_arity != in || info->out_arity != out)
            throw Error(Errc::ArityMismatch,
                        name + " is " + std::to_string(info->in_arity) + "->" +
                            std::to_string(info->out_arity) + ", map needs " + std::to_string(in) +
                            "->" + std::to_string(out));
    };
    need(split, 1, parts);
    need(worker, 1, 1);
    need(merge, parts, 1);

    Graph g;
    const Id split_id = 1;
    const Id merge_id = parts + 2;
    std::vector<Dest> fan_out;
    for (std::size_t i = 0; i < parts; ++i) {
        Id w = 2 + i;
        fan_out.push_back(Dest::to(w, 1));
        g.instructions.emplace(
            w, make_instruction(w, NoId, worker, 1, {Dest::to(merge_id, static_cast<std::uint32_t>(i + 1))}));
    }
    g.instructions.emplace(split_id, make_instruction(split_id, NoId, split, 1, std::move(fan_out)));
    g.instructions.emplace(merge_id, make_instruction(merge_id, NoId, merge, parts, {Dest::out()}));
    g.input_id = split_id;
    if (auto vs = validate_graph(g); !vs.empty())
        throw Error(Errc::InvalidCustomGraph, describe(vs));
    return {std::move(g), "map(" + split + "," + worker + "," + merge + "," + std::to_string(parts) + ")"};
}

std::vector<std::string> seq_leaves(const Skeleton &s) {
    std::vector<std::string> out;
    bool has_custom = false;
    collect_leaves(s, out, has_custom);
    return out;
}

std::vector<std::string> graph_opcodes(const Graph &g) {
    std::set<std::string> names;
    for (const auto &[id, instr] : g.instructions)
        names.insert(instr.opcode);
    return {names.begin(), names.end()};
}

Graph load_graph_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::Config, "cannot read graph file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_graph(buf.str());
}

namespace {

class SkeletonParser {
public:
    SkeletonParser(std::string_view text, const GraphLoader &loader) : s_(text), loader_(loader) {}

    SkeletonPtr parse_all() {
        auto node = parse();
        skip_ws();
        if (pos_ != s_.size())
            fail("trailing text");
        return node;
    }

private:
    SkeletonPtr parse() {
        skip_ws();
        if (accept("seq:"))
            return seq(std::string(atom()));
        if (accept("custom:")) {
            if (!accept("@"))
                fail("custom graphs are referenced as custom:@file");
            std::string path(atom());
            Graph g = loader_(path);
            return custom(std::move(g), path);
        }
        if (accept("farm(")) {
            auto inner = parse();
            expect(')');
            return farm(inner);
        }
        if (accept("pipe(")) {
            std::vector<SkeletonPtr> stages{parse()};
            while (accept(","))
                stages.push_back(parse());
            expect(')');
            if (stages.size() < 2)
                fail("pipe needs at least two stages");
            return pipe(std::move(stages));
        }
        fail("expected seq:, pipe(, farm( or custom:");
    }

    std::string_view atom() {
        skip_ws();
        auto start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ')' &&
               !std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
        if (start == pos_)
            fail("empty name");
        return s_.substr(start, pos_ - start);
    }

    bool accept(std::string_view lit) {
        skip_ws();
        if (s_.substr(pos_, lit.size()) == lit) {
            pos_ += lit.size();
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c)
            fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }

    [[noreturn]] void fail(const std::string &what) const {
        throw Error(Errc::Parse, "skeleton at " + std::to_string(pos_) + ": " + what);
    }

    std::string_view s_;
    const GraphLoader &loader_;
    std::size_t pos_ = 0;
};

} // namespace

SkeletonPtr parse_skeleton(std::string_view text, const GraphLoader &loader) {
    return SkeletonParser(text, loader).parse_all();
}

std::string to_text(const Skeleton &s) {
    return std::visit(
        [](const auto &node) -> std::string {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, Seq>)
                return "seq:" + node.opcode;
            else if constexpr (std::is_same_v<T, Farm>)
                return "farm(" + to_text(*node.worker) + ")";
            else if constexpr (std::is_same_v<T, Pipe>)
                return "pipe(" + to_text(*node.first) + "," + to_text(*node.second) + ")";
            else
                return node.origin.empty() ? "custom:<inline>" : "custom:@" + node.origin;
        },
        s.node);
}

} // namespace mdf
