#ifndef MDFLOW_OPCODES_HPP
#define MDFLOW_OPCODES_HPP

#include "mdflow/codec.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdf {

using OpFn = std::function<std::vector<Payload>(std::span<const Payload>)>;

struct OpcodeInfo {
    std::string name;
    std::size_t in_arity = 1;
    std::size_t out_arity = 1;

    friend bool operator==(const OpcodeInfo &, const OpcodeInfo &) = default;
};

using Manifest = std::vector<OpcodeInfo>;

/**
 * Named pure computations shared by the client and every worker.
 *
 * Besides registered names the registry resolves two derived forms, so
 * both ends of the wire agree on them without shipping code:
 *   "a|b|c"   sequential chain of 1->1 opcodes, applied left to right
 *   "pack:f"  f with its k outputs packed into one payload (see pack_payloads)
 */
class OpcodeRegistry {
public:
    void add(std::string name, std::size_t in_arity, std::size_t out_arity, OpFn fn);

    /** Convenience for the common 1 -> 1 case. */
    void add_unary(std::string name, std::function<Payload(const Payload &)> fn);

    bool contains(std::string_view name) const { return resolve(name).has_value(); }
    std::optional<OpcodeInfo> info(std::string_view name) const;

    /**
     * Runs an opcode on a deep copy of its arguments. Throws UnknownOpcode,
     * ArityMismatch, or OpcodeFailed when the function itself throws or
     * returns the wrong number of outputs.
     */
    std::vector<Payload> invoke(std::string_view name, std::span<const Payload> args) const;

    /** Registered (base) entries, sorted by name. */
    Manifest manifest() const;

private:
    struct Entry {
        OpcodeInfo info;
        OpFn fn;
    };
    struct Resolved {
        OpcodeInfo info;
        std::vector<const Entry *> chain;
        bool packed = false;
    };
    std::optional<Resolved> resolve(std::string_view name) const;

    std::map<std::string, Entry, std::less<>> entries_;
};

/** Base opcode names a (possibly derived) name depends on. */
std::vector<std::string> opcode_components(std::string_view name);

/**
 * True when every component of `name` is in the remote manifest and, where
 * the local registry knows the component too, declares the same arities.
 * Otherwise false and `missing` names the first offender.
 */
bool manifest_covers(const Manifest &remote, const OpcodeRegistry &local, std::string_view name,
                     std::string *missing = nullptr);

/** u32 count, then (u32 length, bytes) per payload; little-endian. */
Payload pack_payloads(std::span<const Payload> parts);
std::vector<Payload> unpack_payloads(std::span<const std::uint8_t> packed);

struct StandardOpcodeOptions {
    /// Duration of the synthetic "work" opcode.
    double grain_ms = 0;
};

/**
 * The opcodes bundled with the CLI and the worker daemon. Integer opcodes
 * operate on codec-encoded 64-bit integers with wrap-around arithmetic.
 *
 *   id inc dec dbl sq neg   1 -> 1
 *   echo                    1 -> 1, raw bytes, no decoding
 *   work                    1 -> 1, sleeps grain_ms then x + 1
 *   fork                    1 -> 2, (x, x)
 *   split2                  1 -> 2, (x / 2, x - x / 2)
 *   add mul                 2 -> 1
 *   fail                    1 -> 1, always throws
 */
OpcodeRegistry standard_registry(const StandardOpcodeOptions &opts = {});

/** Sleeps for a fractional number of milliseconds. */
void sleep_ms(double ms);

} // namespace mdf

#endif // MDFLOW_OPCODES_HPP
