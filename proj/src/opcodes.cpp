#include "mdflow/opcodes.hpp"
#include "mdflow/error.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace mdf {

namespace {

constexpr std::string_view kPackPrefix = "pack:";

std::vector<std::string_view> split_chain(std::string_view name) {
    std::vector<std::string_view> parts;
    for (std::size_t start = 0;;) {
        auto bar = name.find('|', start);
        parts.push_back(name.substr(start, bar - start));
        if (bar == std::string_view::npos)
            break;
        start = bar + 1;
    }
    return parts;
}

std::uint64_t as_u64(const Payload &p) { return static_cast<std::uint64_t>(decode_int(p)); }
Payload from_u64(std::uint64_t v) { return encode_int(static_cast<std::int64_t>(v)); }

} // namespace

void OpcodeRegistry::add(std::string name, std::size_t in_arity, std::size_t out_arity, OpFn fn) {
    if (name.empty() || name.find('|') != std::string::npos || name.starts_with(kPackPrefix))
        throw Error(Errc::Config, "reserved opcode name '" + name + "'");
    if (in_arity == 0 || out_arity == 0)
        throw Error(Errc::ZeroArity, "opcode " + name);
    OpcodeInfo info{name, in_arity, out_arity};
    entries_.insert_or_assign(std::move(name), Entry{std::move(info), std::move(fn)});
}

void OpcodeRegistry::add_unary(std::string name, std::function<Payload(const Payload &)> fn) {
    add(std::move(name), 1, 1, [fn = std::move(fn)](std::span<const Payload> args) {
        return std::vector<Payload>{fn(args[0])};
    });
}

std::optional<OpcodeRegistry::Resolved> OpcodeRegistry::resolve(std::string_view name) const {
    if (name.starts_with(kPackPrefix)) {
        auto inner = resolve(name.substr(kPackPrefix.size()));
        if (!inner || inner->packed)
            return std::nullopt;
        inner->info = {std::string(name), inner->info.in_arity, 1};
        inner->packed = true;
        return inner;
    }
    if (name.find('|') != std::string_view::npos) {
        Resolved r{{std::string(name), 1, 1}, {}, false};
        for (auto part : split_chain(name)) {
            auto it = entries_.find(part);
            if (it == entries_.end() || it->second.info.in_arity != 1 || it->second.info.out_arity != 1)
                return std::nullopt;
            r.chain.push_back(&it->second);
        }
        return r;
    }
    auto it = entries_.find(name);
    if (it == entries_.end())
        return std::nullopt;
    return Resolved{it->second.info, {&it->second}, false};
}

std::optional<OpcodeInfo> OpcodeRegistry::info(std::string_view name) const {
    auto r = resolve(name);
    if (!r)
        return std::nullopt;
    return r->info;
}

std::vector<Payload> OpcodeRegistry::invoke(std::string_view name, std::span<const Payload> args) const {
    auto r = resolve(name);
    if (!r)
        throw Error(Errc::UnknownOpcode, std::string(name));
    if (args.size() != r->info.in_arity)
        throw Error(Errc::ArityMismatch, std::string(name) + " takes " +
                                             std::to_string(r->info.in_arity) + " inputs, got " +
                                             std::to_string(args.size()));
    std::vector<Payload> values(args.begin(), args.end());
    try {
        for (const Entry *e : r->chain) {
            auto out = e->fn(std::span<const Payload>(values));
            if (out.size() != e->info.out_arity)
                throw Error(Errc::OpcodeFailed, e->info.name + " returned " +
                                                    std::to_string(out.size()) + " outputs, declared " +
                                                    std::to_string(e->info.out_arity));
            values = std::move(out);
        }
    } catch (const Error &e) {
        if (e.code() == Errc::OpcodeFailed)
            throw;
        throw Error(Errc::OpcodeFailed, std::string(name) + ": " + e.what());
    } catch (const std::exception &e) {
        throw Error(Errc::OpcodeFailed, std::string(name) + ": " + e.what());
    }
    if (r->packed)
        return {pack_payloads(values)};
    return values;
}

Manifest OpcodeRegistry::manifest() const {
    Manifest m;
    for (const auto &[name, entry] : entries_)
        m.push_back(entry.info);
    return m;
}

std::vector<std::string> opcode_components(std::string_view name) {
    if (name.starts_with(kPackPrefix))
        name.remove_prefix(kPackPrefix.size());
    std::vector<std::string> out;
    for (auto part : split_chain(name))
        out.emplace_back(part);
    return out;
}

bool manifest_covers(const Manifest &remote, const OpcodeRegistry &local, std::string_view name,
                     std::string *missing) {
    bool chained = opcode_components(name).size() > 1;
    for (const auto &part : opcode_components(name)) {
        auto it = std::find_if(remote.begin(), remote.end(),
                               [&](const OpcodeInfo &i) { return i.name == part; });
        bool ok = it != remote.end();
        if (ok && chained)
            ok = it->in_arity == 1 && it->out_arity == 1;
        if (ok) {
            if (auto mine = local.info(part))
                ok = mine->in_arity == it->in_arity && mine->out_arity == it->out_arity;
        }
        if (!ok) {
            if (missing)
                *missing = part;
            return false;
        }
    }
    return true;
}

Payload pack_payloads(std::span<const Payload> parts) {
    Payload out;
    auto put_u32 = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put_u32(static_cast<std::uint32_t>(parts.size()));
    for (const auto &p : parts) {
        put_u32(static_cast<std::uint32_t>(p.size()));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<Payload> unpack_payloads(std::span<const std::uint8_t> packed) {
    std::size_t pos = 0;
    auto get_u32 = [&]() {
        if (packed.size() - pos < 4)
            throw Error(Errc::Codec, "truncated packed payloads");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(packed[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    std::uint32_t n = get_u32();
    std::vector<Payload> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t len = get_u32();
        if (packed.size() - pos < len)
            throw Error(Errc::Codec, "truncated packed payloads");
        out.emplace_back(packed.begin() + pos, packed.begin() + pos + len);
        pos += len;
    }
    if (pos != packed.size())
        throw Error(Errc::Codec, "trailing bytes after packed payloads");
    return out;
}

void sleep_ms(double ms) {
    if (ms <= 0)
        return;
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

OpcodeRegistry standard_registry(const StandardOpcodeOptions &opts) {
    OpcodeRegistry r;
    r.add_unary("id", [](const Payload &p) { return from_u64(as_u64(p)); });
    r.add_unary("echo", [](const Payload &p) { return p; });
    r.add_unary("inc", [](const Payload &p) { return from_u64(as_u64(p) + 1); });
    r.add_unary("dec", [](const Payload &p) { return from_u64(as_u64(p) - 1); });
    r.add_unary("dbl", [](const Payload &p) { return from_u64(as_u64(p) * 2); });
    r.add_unary("sq", [](const Payload &p) {
        auto x = as_u64(p);
        return from_u64(x * x);
    });
    r.add_unary("neg", [](const Payload &p) { return from_u64(~as_u64(p) + 1); });
    r.add_unary("work", [grain = opts.grain_ms](const Payload &p) {
        auto x = as_u64(p);
        sleep_ms(grain);
        return from_u64(x + 1);
    });
    r.add("fork", 1, 2, [](std::span<const Payload> a) {
        auto x = from_u64(as_u64(a[0]));
        return std::vector<Payload>{x, x};
    });
    r.add("split2", 1, 2, [](std::span<const Payload> a) {
        auto x = decode_int(a[0]);
        return std::vector<Payload>{encode_int(x / 2), encode_int(x - x / 2)};
    });
    r.add("add", 2, 1, [](std::span<const Payload> a) {
        return std::vector<Payload>{from_u64(as_u64(a[0]) + as_u64(a[1]))};
    });
    r.add("mul", 2, 1, [](std::span<const Payload> a) {
        return std::vector<Payload>{from_u64(as_u64(a[0]) * as_u64(a[1]))};
    });
    r.add_unary("fail", [](const Payload &) -> Payload { throw std::runtime_error("fail opcode"); });
    return r;
}

} // namespace mdf
