#ifndef MDFLOW_CODEC_HPP
#define MDFLOW_CODEC_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mdf {

/** Opaque token payload. The runtime never looks inside. */
using Payload = std::vector<std::uint8_t>;

/**
 * Self-describing value used by the bundled opcodes, the CLI and the tests.
 *
 * Binary layout (all integers little-endian):
 *   0x00                      null
 *   0x01 i64                  integer
 *   0x02 f64                  real
 *   0x03 u32 len, bytes       string
 *   0x04 u32 count, values    list
 */
class Value {
public:
    using List = std::vector<Value>;
    using Storage = std::variant<std::monostate, std::int64_t, double, std::string, List>;

    Value() = default;
    Value(std::int64_t v) : v_(v) {}
    Value(int v) : v_(static_cast<std::int64_t>(v)) {}
    Value(double v) : v_(v) {}
    Value(std::string v) : v_(std::move(v)) {}
    Value(const char *v) : v_(std::string(v)) {}
    Value(List v) : v_(std::move(v)) {}

    bool is_null() const { return std::holds_alternative<std::monostate>(v_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_real() const { return std::holds_alternative<double>(v_); }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }
    bool is_list() const { return std::holds_alternative<List>(v_); }

    std::int64_t as_int() const;
    double as_real() const;
    const std::string &as_string() const;
    const List &as_list() const;

    const Storage &storage() const { return v_; }

    friend bool operator==(const Value &, const Value &) = default;

private:
    Storage v_;
};

Payload encode(const Value &v);
/** Throws Error(Codec) on truncated input, unknown tags or trailing bytes. */
Value decode(std::span<const std::uint8_t> bytes);

Payload encode_int(std::int64_t v);
std::int64_t decode_int(std::span<const std::uint8_t> bytes);

/** JSON text form: 42, 1.5, "s", [1,2], null. */
std::string to_text(const Value &v);
Value parse_value_text(std::string_view text);

/**
 * Human-readable form of an arbitrary payload: the JSON text when it decodes,
 * otherwise "0x" followed by lowercase hex.
 */
std::string payload_to_text(std::span<const std::uint8_t> bytes);
Payload payload_from_text(std::string_view text);

} // namespace mdf

#endif // MDFLOW_CODEC_HPP
