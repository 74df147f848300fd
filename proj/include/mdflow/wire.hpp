#ifndef MDFLOW_WIRE_HPP
#define MDFLOW_WIRE_HPP

#include "mdflow/codec.hpp"
#include "mdflow/opcodes.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdf::wire {

inline constexpr std::uint32_t kProtocolVersion = 1;
/** Upper bound on one frame (type byte + body). Larger lengths are malformed. */
inline constexpr std::uint32_t kMaxFrame = 64u << 20;

/*
 * Frame: u32 length | u8 type | body, length covering type and body.
 * Integers are fixed-width little-endian; strings and payloads carry a u32
 * length prefix.
 *
 *   HELLO  u32 version
 *   READY  u32 n, n x (str name, u32 in_arity, u32 out_arity)
 *   EXEC   u64 request, str opcode, u32 n, n x payload
 *   RESULT u64 request, u32 n, n x payload
 *   FAIL   u64 request, str message
 *   PING / PONG  empty
 *   ERROR  str message; the sender closes afterwards
 */
enum class FrameType : std::uint8_t {
    Hello = 1,
    Ready = 2,
    Exec = 3,
    Result = 4,
    Fail = 5,
    Ping = 6,
    Pong = 7,
    Error = 8,
};

struct Frame {
    FrameType type;
    std::vector<std::uint8_t> body;
};

struct Hello {
    std::uint32_t version = kProtocolVersion;
};
struct Ready {
    Manifest manifest;
};
struct Exec {
    std::uint64_t request = 0;
    std::string opcode;
    std::vector<Payload> args;
};
struct Result {
    std::uint64_t request = 0;
    std::vector<Payload> outputs;
};
struct Fail {
    std::uint64_t request = 0;
    std::string message;
};
struct ErrorMsg {
    std::string message;
};

Frame encode(const Hello &m);
Frame encode(const Ready &m);
Frame encode(const Exec &m);
Frame encode(const Result &m);
Frame encode(const Fail &m);
Frame encode(const ErrorMsg &m);
Frame ping();
Frame pong();

/** Decoders throw Error(Protocol) on truncated or over-long bodies. */
Hello decode_hello(const Frame &f);
Ready decode_ready(const Frame &f);
Exec decode_exec(const Frame &f);
Result decode_result(const Frame &f);
Fail decode_fail(const Frame &f);
ErrorMsg decode_error(const Frame &f);

/** Whole frame including the length prefix. */
std::vector<std::uint8_t> serialize(const Frame &f);

/** Connected TCP stream. Move-only; closes on destruction. */
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket &&o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket &operator=(Socket &&o) noexcept;
    ~Socket();

    /** Throws Unreachable. */
    static Socket connect(const std::string &host, std::uint16_t port, std::chrono::milliseconds timeout);

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    /** Throws ConnectionLost. */
    void send_frame(const Frame &f);
    /**
     * Waits up to `timeout` for a full frame. Throws RemoteTimeout,
     * ConnectionLost (peer closed, I/O error) or Protocol (bad length/type).
     */
    Frame recv_frame(std::chrono::milliseconds timeout);
    /** True when data (or EOF) is readable within `timeout`. */
    bool wait_readable(std::chrono::milliseconds timeout) const;

    void shutdown();
    void close();

private:
    void read_exact(std::uint8_t *dst, std::size_t n, std::chrono::steady_clock::time_point deadline);
    int fd_ = -1;
};

class Listener {
public:
    /** Binds 0.0.0.0:port (0 = ephemeral). Throws BindFailed. */
    explicit Listener(std::uint16_t port);
    ~Listener();
    Listener(const Listener &) = delete;
    Listener &operator=(const Listener &) = delete;

    std::uint16_t port() const { return port_; }
    /** nullopt on timeout or after close(). */
    std::optional<Socket> accept(std::chrono::milliseconds timeout);
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

} // namespace mdf::wire

#endif // MDFLOW_WIRE_HPP
