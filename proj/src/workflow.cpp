#include "mdflow/workflow.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mdf {

struct Future::State {
    std::mutex mu;
    std::condition_variable cv;
    bool done = false;
    bool failed = false;
    std::vector<Payload> outputs;
    Payload packed;  // whole value of a multi-output opcode
    std::string error;
    std::vector<Callback> callbacks;
    std::uint64_t seq = 0;
    std::size_t out_arity = 1;
    double dispatch_ms = -1;
    double complete_ms = -1;
};

bool Future::is_ready() const {
    std::lock_guard lock(st_->mu);
    return st_->done;
}

bool Future::failed() const {
    std::lock_guard lock(st_->mu);
    return st_->done && st_->failed;
}

Payload Future::get_value(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(st_->mu);
    auto ready = [this] { return st_->done; };
    if (timeout == std::chrono::milliseconds::max())
        st_->cv.wait(lock, ready);
    else if (!st_->cv.wait_for(lock, timeout, ready))
        throw Error(Errc::Timeout, "future " + std::to_string(st_->seq) + " not ready");
    if (st_->failed)
        throw Error(Errc::UpstreamFailed, st_->error);
    if (part_ == kWhole)
        return st_->out_arity == 1 ? st_->outputs.at(0) : st_->packed;
    return st_->outputs.at(part_);
}

Future Future::part(std::size_t i) const {
    if (i >= st_->out_arity)
        throw Error(Errc::ArityMismatch,
                    "part " + std::to_string(i) + " of a " + std::to_string(st_->out_arity) + "-output future");
    return Future(st_, i);
}

std::uint64_t Future::seq() const { return st_->seq; }
std::size_t Future::out_arity() const { return part_ == kWhole ? st_->out_arity : 1; }

double Future::dispatch_ms() const {
    std::lock_guard lock(st_->mu);
    return st_->dispatch_ms;
}

double Future::complete_ms() const {
    std::lock_guard lock(st_->mu);
    return st_->complete_ms;
}

void Future::on_complete(Callback cb) const {
    {
        std::lock_guard lock(st_->mu);
        if (!st_->done) {
            st_->callbacks.push_back(std::move(cb));
            return;
        }
    }
    cb();
}

struct Workflow::Pending {
    std::shared_ptr<State> result;
    std::string opcode;
    std::vector<std::optional<Payload>> values;
    std::size_t missing = 0;
    bool failed = false;
    std::mutex mu;
};

Workflow::Workflow(TaskPool &pool, std::shared_ptr<const OpcodeRegistry> registry)
    : pool_(pool), registry_(std::move(registry)) {}

Workflow::~Workflow() = default;

const Graph &Workflow::template_for(const std::string &opcode, std::size_t in_arity) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(opcode, in_arity);
    auto it = templates_.find(key);
    if (it == templates_.end()) {
        Graph g;
        g.input_id = 1;
        g.instructions.emplace(1, make_instruction(1, NoId, opcode, in_arity, {Dest::out()}));
        it = templates_.emplace(std::move(key), std::move(g)).first;
    }
    return it->second;
}

Future Workflow::submit(const std::string &opcode, std::vector<Arg> args) {
    auto info = registry_->info(opcode);
    if (!info)
        throw Error(Errc::UnknownOpcode, opcode);
    if (args.size() != info->in_arity)
        throw Error(Errc::ArityMismatch, opcode + " takes " + std::to_string(info->in_arity) + " arguments, got " +
                                             std::to_string(args.size()));
    auto st = std::make_shared<State>();
    st->out_arity = info->out_arity;
    {
        std::lock_guard lock(mu_);
        st->seq = next_seq_++;
        ++outstanding_;
    }
    auto p = std::make_shared<Pending>();
    p->result = st;
    p->opcode = info->out_arity == 1 ? opcode : "pack:" + opcode;
    p->values.resize(args.size());
    std::vector<std::pair<std::size_t, Future>> waits;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (auto *v = std::get_if<Payload>(&args[i]))
            p->values[i] = std::move(*v);
        else
            waits.emplace_back(i, std::get<Future>(args[i]));
    }
    p->missing = waits.size() + 1;  // +1 keeps dispatch from racing the registration loop
    auto arrive = [this, p](std::size_t slot, const Future &f) {
        bool go = false;
        bool upstream_failed = false;
        std::string error;
        Payload v;
        try {
            v = f.get_value(std::chrono::milliseconds(0));
        } catch (const Error &e) {
            upstream_failed = true;
            error = e.what();
        }
        {
            std::lock_guard lock(p->mu);
            if (p->failed)
                return;
            if (upstream_failed) {
                p->failed = true;
            } else {
                p->values[slot] = std::move(v);
                go = --p->missing == 0;
            }
        }
        if (upstream_failed)
            fail(p->result, "argument " + std::to_string(slot + 1) + " of " + p->opcode + ": " + error);
        else if (go)
            dispatch(p);
    };
    for (auto &[slot, f] : waits) {
        if (!f.valid())
            throw Error(Errc::ArityMismatch, "argument " + std::to_string(slot + 1) + " is an empty future");
        f.on_complete([arrive, slot = slot, f = f] { arrive(slot, f); });
    }
    bool go = false;
    {
        std::lock_guard lock(p->mu);
        go = !p->failed && --p->missing == 0;
    }
    if (go)
        dispatch(p);
    return Future(st, Future::kWhole);
}

void Workflow::dispatch(const std::shared_ptr<Pending> &p) {
    std::vector<Payload> inputs;
    inputs.reserve(p->values.size());
    for (auto &v : p->values)
        inputs.push_back(std::move(*v));
    const Graph &tmpl = template_for(p->opcode, inputs.size());
    auto st = p->result;
    try {
        pool_.submit_task(tmpl, std::move(inputs), [this, st](const ResultRecord &rec) { complete(st, rec); });
    } catch (const Error &e) {
        fail(st, e.what());
    }
}

void Workflow::complete(const std::shared_ptr<State> &st, const ResultRecord &rec) {
    if (rec.failed)
        return fail(st, rec.error);
    std::vector<Future::Callback> cbs;
    {
        std::lock_guard lock(st->mu);
        if (st->out_arity == 1) {
            st->outputs = {rec.value};
        } else {
            try {
                st->outputs = unpack_payloads(rec.value);
                st->packed = rec.value;
            } catch (const Error &e) {
                st->failed = true;
                st->error = e.what();
            }
        }
        st->dispatch_ms = rec.dispatch_ms;
        st->complete_ms = rec.complete_ms;
        st->done = true;
        cbs.swap(st->callbacks);
    }
    st->cv.notify_all();
    for (auto &cb : cbs)
        cb();
    retire();
}

void Workflow::fail(const std::shared_ptr<State> &st, const std::string &error) {
    std::vector<Future::Callback> cbs;
    {
        std::lock_guard lock(st->mu);
        if (st->done)
            return;
        st->failed = true;
        st->error = error;
        st->complete_ms = now_ms();
        st->done = true;
        cbs.swap(st->callbacks);
    }
    st->cv.notify_all();
    for (auto &cb : cbs)
        cb();
    retire();
}

void Workflow::retire() {
    std::lock_guard lock(mu_);
    if (--outstanding_ == 0)
        idle_cv_.notify_all();
}

std::size_t Workflow::outstanding() const {
    std::lock_guard lock(mu_);
    return outstanding_;
}

bool Workflow::wait_all(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return idle_cv_.wait_for(lock, timeout, [this] { return outstanding_ == 0; });
}

std::vector<StreamResult> Workflow::run_stream(const Body &body, const std::vector<Payload> &inputs,
                                               std::size_t window) {
    if (window == 0)
        throw Error(Errc::Config, "stream window must be at least 1");
    std::vector<StreamResult> results(inputs.size());
    std::mutex mu;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::size_t finished = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return in_flight < window; });
            ++in_flight;
        }
        results[i].seq = i;
        Future f;
        try {
            f = body(*this, inputs[i]);
        } catch (const std::exception &e) {
            results[i].failed = true;
            results[i].error = e.what();
            std::lock_guard lock(mu);
            --in_flight;
            ++finished;
            continue;
        }
        f.on_complete([&, i, f] {
            try {
                results[i].value = f.get_value(std::chrono::milliseconds(0));
            } catch (const Error &e) {
                results[i].failed = true;
                results[i].error = e.what();
            }
            std::lock_guard lock(mu);
            --in_flight;
            ++finished;
            cv.notify_all();
        });
    }
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return finished == inputs.size(); });
    return results;
}

namespace {

Payload literal_payload(const nlohmann::json &j) { return encode(parse_value_text(j.dump())); }

} // namespace

WorkflowSpec parse_workflow(std::string_view json_text, const OpcodeRegistry *registry) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception &e) {
        throw Error(Errc::Parse, std::string("workflow: ") + e.what());
    }
    if (!doc.is_array() || doc.empty())
        throw Error(Errc::Parse, "workflow must be a non-empty JSON list of nodes");
    WorkflowSpec spec;
    std::map<std::string, std::size_t> index;
    for (const auto &jn : doc) {
        if (!jn.is_object() || !jn.contains("name") || !jn.contains("opcode") || !jn["name"].is_string() ||
            !jn["opcode"].is_string())
            throw Error(Errc::Parse, "workflow node needs string name and opcode: " + jn.dump());
        WorkflowNode node;
        node.name = jn["name"].get<std::string>();
        node.opcode = jn["opcode"].get<std::string>();
        if (node.name.empty() || node.name.find('.') != std::string::npos)
            throw Error(Errc::Parse, "bad node name '" + node.name + "'");
        if (index.contains(node.name))
            throw Error(Errc::Parse, "duplicate node '" + node.name + "'");
        const auto args = jn.value("args", nlohmann::json::array());
        if (!args.is_array())
            throw Error(Errc::Parse, "args of '" + node.name + "' must be a list");
        for (const auto &ja : args) {
            WorkflowNode::Ref ref;
            if (ja.is_string() && ja.get<std::string>().starts_with("$")) {
                auto text = ja.get<std::string>().substr(1);
                if (text == "input") {
                    ref.kind = WorkflowNode::Ref::Kind::Input;
                } else {
                    auto dot = text.find('.');
                    auto target = text.substr(0, dot);
                    auto it = index.find(target);
                    if (it == index.end())
                        throw Error(Errc::Parse, "node '" + node.name + "' uses '" + target +
                                                     "' before it is defined");
                    ref.kind = WorkflowNode::Ref::Kind::Node;
                    ref.node = it->second;
                    if (dot != std::string::npos) {
                        try {
                            std::size_t used = 0;
                            ref.part = std::stoul(text.substr(dot + 1), &used);
                            if (used != text.size() - dot - 1)
                                throw std::invalid_argument("trailing");
                        } catch (const std::exception &) {
                            throw Error(Errc::Parse, "bad part in '" + ja.get<std::string>() + "'");
                        }
                    }
                }
            } else {
                ref.literal = literal_payload(ja);
            }
            node.args.push_back(std::move(ref));
        }
        if (registry) {
            auto info = registry->info(node.opcode);
            if (!info)
                throw Error(Errc::UnknownOpcode, node.opcode);
            if (info->in_arity != node.args.size())
                throw Error(Errc::ArityMismatch, node.name + ": " + node.opcode + " takes " +
                                                     std::to_string(info->in_arity) + " arguments");
            for (const auto &ref : node.args)
                if (ref.part) {
                    auto src = registry->info(spec.nodes[ref.node].opcode);
                    if (src && *ref.part >= src->out_arity)
                        throw Error(Errc::ArityMismatch, node.name + ": part " + std::to_string(*ref.part) +
                                                             " of " + spec.nodes[ref.node].name);
                }
        }
        index.emplace(node.name, spec.nodes.size());
        spec.nodes.push_back(std::move(node));
    }
    return spec;
}

WorkflowSpec load_workflow_file(const std::string &path, const OpcodeRegistry *registry) {
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::Config, "cannot read workflow file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_workflow(buf.str(), registry);
}

Future launch(Workflow &wf, const WorkflowSpec &spec, const Payload &input) {
    std::vector<Future> futures;
    futures.reserve(spec.nodes.size());
    for (const auto &node : spec.nodes) {
        std::vector<Arg> args;
        for (const auto &ref : node.args) {
            switch (ref.kind) {
            case WorkflowNode::Ref::Kind::Literal:
                args.emplace_back(ref.literal);
                break;
            case WorkflowNode::Ref::Kind::Input:
                args.emplace_back(input);
                break;
            case WorkflowNode::Ref::Kind::Node:
                args.emplace_back(ref.part ? futures[ref.node].part(*ref.part) : futures[ref.node]);
                break;
            }
        }
        futures.push_back(wf.submit(node.opcode, std::move(args)));
    }
    return futures.back();
}

} // namespace mdf
