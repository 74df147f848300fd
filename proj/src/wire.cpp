#include "mdflow/wire.hpp"
#include "mdflow/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>

namespace mdf::wire {

namespace {

class Writer {
public:
    explicit Writer(FrameType t) : f_{t, {}} {}
    Writer &u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            f_.body.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        return *this;
    }
    Writer &u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i)
            f_.body.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        return *this;
    }
    Writer &bytes(std::span<const std::uint8_t> b) {
        u32(static_cast<std::uint32_t>(b.size()));
        f_.body.insert(f_.body.end(), b.begin(), b.end());
        return *this;
    }
    Writer &str(const std::string &s) {
        return bytes({reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
    }
    Frame done() { return std::move(f_); }

private:
    Frame f_;
};

class Reader {
public:
    Reader(const Frame &f, FrameType expected) : b_(f.body) {
        if (f.type != expected)
            throw Error(Errc::Protocol, "unexpected frame type " + std::to_string(int(f.type)));
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
    Payload bytes() {
        auto n = u32();
        need(n);
        Payload p(b_.begin() + pos_, b_.begin() + pos_ + n);
        pos_ += n;
        return p;
    }
    std::string str() {
        auto p = bytes();
        return {p.begin(), p.end()};
    }
    std::vector<Payload> payloads() {
        auto n = u32();
        // each payload needs at least its length prefix
        if (n > (b_.size() - pos_) / 4)
            throw Error(Errc::Protocol, "payload count exceeds frame");
        std::vector<Payload> out;
        out.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            out.push_back(bytes());
        return out;
    }
    void end() const {
        if (pos_ != b_.size())
            throw Error(Errc::Protocol, "trailing bytes in frame");
    }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n)
            throw Error(Errc::Protocol, "truncated frame");
    }
    const std::vector<std::uint8_t> &b_;
    std::size_t pos_ = 0;
};

Writer &payloads(Writer &w, const std::vector<Payload> &ps) {
    w.u32(static_cast<std::uint32_t>(ps.size()));
    for (const auto &p : ps)
        w.bytes(p);
    return w;
}

bool known_type(std::uint8_t t) { return t >= 1 && t <= 8; }

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

} // namespace

Frame encode(const Hello &m) { return Writer(FrameType::Hello).u32(m.version).done(); }

Frame encode(const Ready &m) {
    Writer w(FrameType::Ready);
    w.u32(static_cast<std::uint32_t>(m.manifest.size()));
    for (const auto &op : m.manifest)
        w.str(op.name).u32(static_cast<std::uint32_t>(op.in_arity)).u32(static_cast<std::uint32_t>(op.out_arity));
    return w.done();
}

Frame encode(const Exec &m) {
    Writer w(FrameType::Exec);
    w.u64(m.request).str(m.opcode);
    return payloads(w, m.args).done();
}

Frame encode(const Result &m) {
    Writer w(FrameType::Result);
    w.u64(m.request);
    return payloads(w, m.outputs).done();
}

Frame encode(const Fail &m) { return Writer(FrameType::Fail).u64(m.request).str(m.message).done(); }
Frame encode(const ErrorMsg &m) { return Writer(FrameType::Error).str(m.message).done(); }
Frame ping() { return {FrameType::Ping, {}}; }
Frame pong() { return {FrameType::Pong, {}}; }

Hello decode_hello(const Frame &f) {
    Reader r(f, FrameType::Hello);
    Hello h{r.u32()};
    r.end();
    return h;
}

Ready decode_ready(const Frame &f) {
    Reader r(f, FrameType::Ready);
    Ready m;
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        OpcodeInfo info;
        info.name = r.str();
        info.in_arity = r.u32();
        info.out_arity = r.u32();
        m.manifest.push_back(std::move(info));
    }
    r.end();
    return m;
}

Exec decode_exec(const Frame &f) {
    Reader r(f, FrameType::Exec);
    Exec m;
    m.request = r.u64();
    m.opcode = r.str();
    m.args = r.payloads();
    r.end();
    return m;
}

Result decode_result(const Frame &f) {
    Reader r(f, FrameType::Result);
    Result m;
    m.request = r.u64();
    m.outputs = r.payloads();
    r.end();
    return m;
}

Fail decode_fail(const Frame &f) {
    Reader r(f, FrameType::Fail);
    Fail m;
    m.request = r.u64();
    m.message = r.str();
    r.end();
    return m;
}

ErrorMsg decode_error(const Frame &f) {
    Reader r(f, FrameType::Error);
    ErrorMsg m{r.str()};
    r.end();
    return m;
}

std::vector<std::uint8_t> serialize(const Frame &f) {
    std::uint32_t len = static_cast<std::uint32_t>(f.body.size() + 1);
    std::vector<std::uint8_t> out;
    out.reserve(len + 4);
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.push_back(static_cast<std::uint8_t>(f.type));
    out.insert(out.end(), f.body.begin(), f.body.end());
    return out;
}

Socket &Socket::operator=(Socket &&o) noexcept {
    if (this != &o) {
        close();
        fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
}

Socket::~Socket() { close(); }

Socket Socket::connect(const std::string &host, std::uint16_t port, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw Error(Errc::Unreachable, "cannot resolve " + host);
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

    Socket s(::socket(res->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid())
        throw Error(Errc::Unreachable, std::strerror(errno));
    int flags = ::fcntl(s.fd_, F_GETFL, 0);
    ::fcntl(s.fd_, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd_, res->ai_addr, res->ai_addrlen);
    if (rc != 0 && errno != EINPROGRESS)
        throw Error(Errc::Unreachable, host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    if (rc != 0) {
        pollfd p{s.fd_, POLLOUT, 0};
        if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0)
            throw Error(Errc::Unreachable, host + ":" + std::to_string(port) + ": connect timeout");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd_, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0)
            throw Error(Errc::Unreachable, host + ":" + std::to_string(port) + ": " + std::strerror(err));
    }
    ::fcntl(s.fd_, F_SETFL, flags & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

void Socket::send_frame(const Frame &f) {
    auto bytes = serialize(f);
    std::size_t off = 0;
    while (off < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            throw Error(Errc::ConnectionLost, std::string("send: ") + std::strerror(errno));
        off += static_cast<std::size_t>(n);
    }
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

void Socket::read_exact(std::uint8_t *dst, std::size_t n, std::chrono::steady_clock::time_point deadline) {
    std::size_t got = 0;
    while (got < n) {
        pollfd p{fd_, POLLIN, 0};
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc < 0 && errno == EINTR)
            continue;
        if (rc == 0)
            throw Error(Errc::RemoteTimeout, "no reply before deadline");
        if (rc < 0)
            throw Error(Errc::ConnectionLost, std::string("poll: ") + std::strerror(errno));
        ssize_t r = ::recv(fd_, dst + got, n - got, 0);
        if (r < 0 && errno == EINTR)
            continue;
        if (r <= 0)
            throw Error(Errc::ConnectionLost, r == 0 ? "peer closed" : std::strerror(errno));
        got += static_cast<std::size_t>(r);
    }
}

Frame Socket::recv_frame(std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    std::uint8_t hdr[4];
    read_exact(hdr, 4, deadline);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i)
        len |= static_cast<std::uint32_t>(hdr[i]) << (8 * i);
    if (len == 0 || len > kMaxFrame)
        throw Error(Errc::Protocol, "bad frame length " + std::to_string(len));
    std::vector<std::uint8_t> buf(len);
    read_exact(buf.data(), len, deadline);
    if (!known_type(buf[0]))
        throw Error(Errc::Protocol, "unknown frame type " + std::to_string(buf[0]));
    Frame f{static_cast<FrameType>(buf[0]), {}};
    f.body.assign(buf.begin() + 1, buf.end());
    return f;
}

void Socket::shutdown() {
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Listener::Listener(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0)
        throw Error(Errc::BindFailed, std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
        std::string why = std::strerror(errno);
        ::close(fd_);
        fd_ = -1;
        throw Error(Errc::BindFailed, "port " + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener() { close(); }

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
    if (fd_ < 0)
        return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0)
        return std::nullopt;
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0)
        return std::nullopt;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
}

void Listener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

} // namespace mdf::wire
