#include "mdflow/codec.hpp"
#include "mdflow/error.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

namespace mdf {

namespace {

enum Tag : std::uint8_t { TagNull = 0, TagInt = 1, TagReal = 2, TagString = 3, TagList = 4 };

constexpr int kMaxDepth = 64;

void put_u32(Payload &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Payload &out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void encode_into(Payload &out, const Value &v) {
    std::visit(
        [&out](const auto &x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                out.push_back(TagNull);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                out.push_back(TagInt);
                put_u64(out, static_cast<std::uint64_t>(x));
            } else if constexpr (std::is_same_v<T, double>) {
                out.push_back(TagReal);
                put_u64(out, std::bit_cast<std::uint64_t>(x));
            } else if constexpr (std::is_same_v<T, std::string>) {
                out.push_back(TagString);
                put_u32(out, static_cast<std::uint32_t>(x.size()));
                out.insert(out.end(), x.begin(), x.end());
            } else {
                out.push_back(TagList);
                put_u32(out, static_cast<std::uint32_t>(x.size()));
                for (const auto &item : x)
                    encode_into(out, item);
            }
        },
        v.storage());
}

class Cursor {
public:
    explicit Cursor(std::span<const std::uint8_t> b) : b_(b) {}

    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string str(std::uint32_t n) {
        need(n);
        std::string s(reinterpret_cast<const char *>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n)
            throw Error(Errc::Codec, "truncated value");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

Value decode_from(Cursor &c, int depth) {
    if (depth > kMaxDepth)
        throw Error(Errc::Codec, "nesting too deep");
    switch (c.u8()) {
    case TagNull: return Value{};
    case TagInt: return Value{static_cast<std::int64_t>(c.u64())};
    case TagReal: return Value{std::bit_cast<double>(c.u64())};
    case TagString: return Value{c.str(c.u32())};
    case TagList: {
        std::uint32_t n = c.u32();
        // every element takes at least one byte
        if (n > c.remaining())
            throw Error(Errc::Codec, "list count exceeds input");
        Value::List items;
        items.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            items.push_back(decode_from(c, depth + 1));
        return Value{std::move(items)};
    }
    default: throw Error(Errc::Codec, "unknown tag");
    }
}

nlohmann::json to_json(const Value &v) {
    return std::visit(
        [](const auto &x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, Value::List>) {
                auto arr = nlohmann::json::array();
                for (const auto &item : x)
                    arr.push_back(to_json(item));
                return arr;
            } else {
                return x;
            }
        },
        v.storage());
}

Value from_json(const nlohmann::json &j) {
    switch (j.type()) {
    case nlohmann::json::value_t::null: return Value{};
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned: return Value{j.get<std::int64_t>()};
    case nlohmann::json::value_t::number_float: return Value{j.get<double>()};
    case nlohmann::json::value_t::string: return Value{j.get<std::string>()};
    case nlohmann::json::value_t::array: {
        Value::List items;
        for (const auto &e : j)
            items.push_back(from_json(e));
        return Value{std::move(items)};
    }
    default: throw Error(Errc::Parse, "unsupported value: " + j.dump());
    }
}

} // namespace

std::int64_t Value::as_int() const {
    if (!is_int())
        throw Error(Errc::Codec, "value is not an integer");
    return std::get<std::int64_t>(v_);
}

double Value::as_real() const {
    if (is_int())
        return static_cast<double>(std::get<std::int64_t>(v_));
    if (!is_real())
        throw Error(Errc::Codec, "value is not a number");
    return std::get<double>(v_);
}

const std::string &Value::as_string() const {
    if (!is_string())
        throw Error(Errc::Codec, "value is not a string");
    return std::get<std::string>(v_);
}

const Value::List &Value::as_list() const {
    if (!is_list())
        throw Error(Errc::Codec, "value is not a list");
    return std::get<List>(v_);
}

Payload encode(const Value &v) {
    Payload out;
    encode_into(out, v);
    return out;
}

Value decode(std::span<const std::uint8_t> bytes) {
    Cursor c(bytes);
    Value v = decode_from(c, 0);
    if (!c.done())
        throw Error(Errc::Codec, "trailing bytes");
    return v;
}

Payload encode_int(std::int64_t v) { return encode(Value{v}); }

std::int64_t decode_int(std::span<const std::uint8_t> bytes) { return decode(bytes).as_int(); }

std::string to_text(const Value &v) { return to_json(v).dump(); }

Value parse_value_text(std::string_view text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw Error(Errc::Parse, "bad value text: " + std::string(text));
    return from_json(j);
}

std::string payload_to_text(std::span<const std::uint8_t> bytes) {
    try {
        return to_text(decode(bytes));
    } catch (const Error &) {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s = "0x";
        for (auto b : bytes) {
            s.push_back(digits[b >> 4]);
            s.push_back(digits[b & 0xf]);
        }
        return s;
    }
}

Payload payload_from_text(std::string_view text) {
    if (text.starts_with("0x")) {
        auto hex = text.substr(2);
        if (hex.size() % 2 != 0)
            throw Error(Errc::Parse, "odd hex length");
        auto nibble = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            throw Error(Errc::Parse, "bad hex digit");
        };
        Payload p;
        for (std::size_t i = 0; i < hex.size(); i += 2)
            p.push_back(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
        return p;
    }
    return encode(parse_value_text(text));
}

} // namespace mdf
