#ifndef MDFLOW_ERROR_HPP
#define MDFLOW_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdf {

/**
 * Error codes shared by every module. Each operation documents which of
 * these it may raise; callers switch on code() rather than on message text.
 */
enum class Errc {
    // instructions and graphs
    ZeroArity,
    EmptyDests,
    SlotOutOfRange,
    SlotOccupied,
    // compiler
    InvalidCustomGraph,
    NotNormalizable,
    NoExternalDest,
    ArityMismatch,
    // task pool
    PoolClosed,
    UnknownGraph,
    NotInFlight,
    // runtime and wire
    Unreachable,
    OpcodeManifestMismatch,
    RemoteTimeout,
    ConnectionLost,
    OpcodeFailed,
    BadState,
    Protocol,
    BindFailed,
    // manager
    UnmonitorableVariable,
    SensorUnavailable,
    RecruitmentFailed,
    StopTimeout,
    WouldEmptyPool,
    // workflow
    UnknownOpcode,
    Timeout,
    UpstreamFailed,
    // text inputs
    Parse,
    Codec,
    Config,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/** Transport-level failures: the worker is considered lost. */
inline bool is_transport_failure(Errc c) {
    return c == Errc::RemoteTimeout || c == Errc::ConnectionLost || c == Errc::Protocol;
}

} // namespace mdf

#endif // MDFLOW_ERROR_HPP
