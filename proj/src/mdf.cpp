#include "mdflow/mdf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <set>
#include <sstream>

namespace mdf {

Instruction make_instruction(Id id, Id gid, std::string opcode, std::size_t in_arity,
                             std::vector<Dest> dests) {
    if (in_arity == 0)
        throw Error(Errc::ZeroArity, "instruction " + id_text(id));
    if (dests.empty())
        throw Error(Errc::EmptyDests, "instruction " + id_text(id));
    Instruction instr;
    instr.id = id;
    instr.gid = gid;
    instr.opcode = std::move(opcode);
    instr.inputs.resize(in_arity);
    instr.dests = std::move(dests);
    return instr;
}

void store_token(Instruction &instr, std::size_t slot, Payload value) {
    if (slot < 1 || slot > instr.inputs.size())
        throw Error(Errc::SlotOutOfRange, "slot " + std::to_string(slot) + " of instruction " +
                                              id_text(instr.id));
    auto &token = instr.inputs[slot - 1];
    if (token.present())
        throw Error(Errc::SlotOccupied, "slot " + std::to_string(slot) + " of instruction " +
                                            id_text(instr.id));
    token.value = std::move(value);
}

bool is_fireable(const Instruction &instr) {
    return std::all_of(instr.inputs.begin(), instr.inputs.end(),
                       [](const Token &t) { return t.present(); });
}

std::string_view to_string(Rule r) {
    switch (r) {
    case Rule::MissingInput: return "MissingInput";
    case Rule::ZeroArity: return "ZeroArity";
    case Rule::EmptyDests: return "EmptyDests";
    case Rule::GidMismatch: return "GidMismatch";
    case Rule::DanglingDest: return "DanglingDest";
    case Rule::BadSlot: return "BadSlot";
    case Rule::MalformedDest: return "MalformedDest";
    case Rule::ForeignGraph: return "ForeignGraph";
    case Rule::DuplicateWriter: return "DuplicateWriter";
    case Rule::MissingOutput: return "MissingOutput";
    case Rule::MultipleOutputs: return "MultipleOutputs";
    case Rule::UnfedSlot: return "UnfedSlot";
    case Rule::InputFed: return "InputFed";
    case Rule::Cycle: return "Cycle";
    }
    return "?";
}

std::string id_text(Id id) { return id == NoId ? "NoId" : std::to_string(id); }

std::vector<Violation> validate_graph(const Graph &g, const ValidateOptions &opts) {
    std::vector<Violation> out;
    auto add = [&out](Id id, Rule r, std::string msg) { out.push_back({id, r, std::move(msg)}); };

    if (!g.instructions.contains(g.input_id))
        add(NoId, Rule::MissingInput, "input instruction " + id_text(g.input_id) + " not in graph");

    std::size_t externals = 0;
    bool successor_seen = false;
    std::map<std::pair<Id, std::uint32_t>, Id> writers;

    for (const auto &[id, instr] : g.instructions) {
        if (instr.inputs.empty())
            add(id, Rule::ZeroArity, "no input tokens");
        if (instr.dests.empty())
            add(id, Rule::EmptyDests, "no destinations");
        if (instr.gid != g.gid)
            add(id, Rule::GidMismatch, "gid " + id_text(instr.gid) + " in graph " + id_text(g.gid));

        for (const auto &d : instr.dests) {
            if (d.is_external()) {
                ++externals;
                continue;
            }
            if (opts.open_successor && d == *opts.open_successor) {
                successor_seen = true;
                continue;
            }
            if (d.instr == NoId) {
                add(id, Rule::MalformedDest, "destination without instruction");
                continue;
            }
            if (d.graph != NoId && d.graph != g.gid) {
                add(id, Rule::ForeignGraph, "targets graph " + id_text(d.graph));
                continue;
            }
            auto target = g.instructions.find(d.instr);
            if (target == g.instructions.end()) {
                add(id, Rule::DanglingDest, "targets missing instruction " + id_text(d.instr));
                continue;
            }
            if (d.slot < 1 || d.slot > target->second.inputs.size()) {
                add(id, Rule::BadSlot, "slot " + std::to_string(d.slot) + " of instruction " +
                                           id_text(d.instr));
                continue;
            }
            auto [it, fresh] = writers.emplace(std::pair{d.instr, d.slot}, id);
            if (!fresh)
                add(id, Rule::DuplicateWriter,
                    "slot " + std::to_string(d.slot) + " of instruction " + id_text(d.instr) +
                        " already fed by " + id_text(it->second));
        }
    }

    if (externals == 0 && !successor_seen)
        add(NoId, Rule::MissingOutput, "no external destination");
    if (externals > 1)
        add(NoId, Rule::MultipleOutputs, std::to_string(externals) + " external destinations");
    return out;
}

std::vector<Violation> liveness_violations(const Graph &g) {
    std::vector<Violation> out;
    std::set<std::pair<Id, std::uint32_t>> fed;
    std::map<Id, std::size_t> indegree;
    std::map<Id, std::vector<Id>> succ;
    for (const auto &[id, instr] : g.instructions) {
        indegree.try_emplace(id, 0);
        for (const auto &d : instr.dests) {
            if (d.is_external() || !g.instructions.contains(d.instr))
                continue;
            fed.emplace(d.instr, d.slot);
            succ[id].push_back(d.instr);
            ++indegree[d.instr];
        }
    }
    for (const auto &[id, instr] : g.instructions) {
        for (std::uint32_t s = 1; s <= instr.inputs.size(); ++s) {
            bool is_task_slot = id == g.input_id && s == 1;
            if (is_task_slot && fed.contains({id, s}))
                out.push_back({id, Rule::InputFed, "task slot fed internally"});
            if (!is_task_slot && !fed.contains({id, s}))
                out.push_back({id, Rule::UnfedSlot, "slot " + std::to_string(s) + " never fed"});
        }
    }
    // Kahn: whatever is left has a cycle through it.
    std::deque<Id> ready;
    for (const auto &[id, deg] : indegree)
        if (deg == 0)
            ready.push_back(id);
    std::size_t visited = 0;
    while (!ready.empty()) {
        Id id = ready.front();
        ready.pop_front();
        ++visited;
        for (Id next : succ[id])
            if (--indegree[next] == 0)
                ready.push_back(next);
    }
    if (visited != g.instructions.size()) {
        for (const auto &[id, deg] : indegree)
            if (deg > 0) {
                out.push_back({id, Rule::Cycle, "instruction on a cycle"});
                break;
            }
    }
    return out;
}

Graph instantiate(const Graph &tmpl, Id gid) {
    Graph g = tmpl;
    g.gid = gid;
    for (auto &[id, instr] : g.instructions) {
        instr.gid = gid;
        for (auto &d : instr.dests)
            if (!d.is_external())
                d.graph = gid;
    }
    return g;
}

Graph canonicalize(const Graph &g) {
    std::map<Id, Id> renum;
    Id next = 1;
    std::deque<Id> queue;
    if (g.instructions.contains(g.input_id)) {
        renum[g.input_id] = next++;
        queue.push_back(g.input_id);
    }
    while (!queue.empty()) {
        const auto &instr = g.instructions.at(queue.front());
        queue.pop_front();
        for (const auto &d : instr.dests) {
            if (d.is_external() || !g.instructions.contains(d.instr) || renum.contains(d.instr))
                continue;
            renum[d.instr] = next++;
            queue.push_back(d.instr);
        }
    }
    for (const auto &[id, instr] : g.instructions)
        if (!renum.contains(id))
            renum[id] = next++;

    Graph out;
    out.gid = 1;
    out.input_id = renum.contains(g.input_id) ? renum[g.input_id] : NoId;
    for (const auto &[id, instr] : g.instructions) {
        Instruction copy = instr;
        copy.id = renum[id];
        copy.gid = 1;
        for (auto &d : copy.dests) {
            if (d.is_external())
                continue;
            if (auto it = renum.find(d.instr); it != renum.end())
                d.instr = it->second;
            d.graph = 1;
        }
        out.instructions.emplace(copy.id, std::move(copy));
    }
    return out;
}

std::string dump_graph(const Graph &g) {
    std::ostringstream os;
    for (const auto &[id, instr] : g.instructions) {
        os << id_text(instr.id) << ' ' << id_text(instr.gid) << ' ' << instr.opcode << " [";
        for (std::size_t i = 0; i < instr.inputs.size(); ++i) {
            if (i)
                os << ',';
            const auto &t = instr.inputs[i];
            os << (t.present() ? payload_to_text(*t.value) : "_");
        }
        os << "] -> [";
        for (std::size_t i = 0; i < instr.dests.size(); ++i) {
            if (i)
                os << ',';
            const auto &d = instr.dests[i];
            if (d.is_external())
                os << "OUT";
            else
                os << '(' << id_text(d.graph) << ',' << id_text(d.instr) << ','
                   << (d.slot == 0 ? std::string("NoId") : std::to_string(d.slot)) << ')';
        }
        os << "]\n";
    }
    return os.str();
}

namespace {

class LineParser {
public:
    LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }
    std::string_view word() {
        skip_ws();
        auto start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
        if (start == pos_)
            fail("expected a word");
        return s_.substr(start, pos_ - start);
    }
    void expect(std::string_view lit) {
        skip_ws();
        if (s_.substr(pos_, lit.size()) != lit)
            fail("expected '" + std::string(lit) + "'");
        pos_ += lit.size();
    }
    /** Returns the comma-separated items of a bracketed list, nesting aware. */
    std::vector<std::string_view> bracket_items() {
        expect("[");
        std::vector<std::string_view> items;
        int depth = 0;
        bool in_string = false;
        auto start = pos_;
        for (; pos_ < s_.size(); ++pos_) {
            char c = s_[pos_];
            if (in_string) {
                if (c == '\\')
                    ++pos_;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '[' || c == '(')
                ++depth;
            else if ((c == ']' || c == ')') && depth > 0)
                --depth;
            else if (c == ',' && depth == 0) {
                items.push_back(trim(s_.substr(start, pos_ - start)));
                start = pos_ + 1;
            } else if (c == ']' && depth == 0) {
                auto last = trim(s_.substr(start, pos_ - start));
                if (!last.empty() || !items.empty())
                    items.push_back(last);
                ++pos_;
                return items;
            }
        }
        fail("unterminated list");
    }
    bool at_end() {
        skip_ws();
        return pos_ == s_.size();
    }
    [[noreturn]] void fail(const std::string &what) const {
        throw Error(Errc::Parse, "graph line " + std::to_string(line_) + ": " + what);
    }

    static std::string_view trim(std::string_view v) {
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front())))
            v.remove_prefix(1);
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back())))
            v.remove_suffix(1);
        return v;
    }

private:
    std::string_view s_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

std::uint64_t parse_number(std::string_view v, const LineParser &p) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        p.fail("bad number '" + std::string(v) + "'");
    return out;
}

Id parse_id(std::string_view v, const LineParser &p) {
    if (v == "NoId")
        return NoId;
    Id id = parse_number(v, p);
    if (id == NoId)
        p.fail("0 is reserved");
    return id;
}

} // namespace

Graph parse_graph(std::string_view text) {
    Graph g;
    bool first = true;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = LineParser::trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#')
            continue;

        LineParser p(line, line_no);
        Instruction instr;
        instr.id = parse_id(p.word(), p);
        instr.gid = parse_id(p.word(), p);
        instr.opcode = std::string(p.word());
        for (auto item : p.bracket_items()) {
            Token t;
            if (item != "_")
                t.value = payload_from_text(item);
            instr.inputs.push_back(std::move(t));
        }
        p.expect("->");
        for (auto item : p.bracket_items()) {
            if (item == "OUT") {
                instr.dests.push_back(Dest::out());
                continue;
            }
            if (item.size() < 2 || item.front() != '(' || item.back() != ')')
                p.fail("bad destination '" + std::string(item) + "'");
            auto inner = item.substr(1, item.size() - 2);
            std::vector<std::string_view> parts;
            for (std::size_t start = 0;;) {
                auto comma = inner.find(',', start);
                parts.push_back(LineParser::trim(inner.substr(start, comma - start)));
                if (comma == std::string_view::npos)
                    break;
                start = comma + 1;
            }
            if (parts.size() != 3)
                p.fail("destination needs three fields");
            Dest d;
            d.graph = parse_id(parts[0], p);
            d.instr = parse_id(parts[1], p);
            d.slot = parts[2] == "NoId" ? 0 : static_cast<std::uint32_t>(parse_number(parts[2], p));
            instr.dests.push_back(d);
        }
        if (!p.at_end())
            p.fail("trailing text");
        if (first) {
            g.gid = instr.gid;
            first = false;
        }
        Id id = instr.id;
        if (!g.instructions.emplace(id, std::move(instr)).second)
            p.fail("duplicate instruction id " + id_text(id));
    }
    if (!g.instructions.empty())
        g.input_id = g.instructions.begin()->first;
    return g;
}

} // namespace mdf
