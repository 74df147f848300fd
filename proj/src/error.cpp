#include "mdflow/error.hpp"

namespace mdf {

std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::ZeroArity: return "ZeroArity";
    case Errc::EmptyDests: return "EmptyDests";
    case Errc::SlotOutOfRange: return "SlotOutOfRange";
    case Errc::SlotOccupied: return "SlotOccupied";
    case Errc::InvalidCustomGraph: return "InvalidCustomGraph";
    case Errc::NotNormalizable: return "NotNormalizable";
    case Errc::NoExternalDest: return "NoExternalDest";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::PoolClosed: return "PoolClosed";
    case Errc::UnknownGraph: return "UnknownGraph";
    case Errc::NotInFlight: return "NotInFlight";
    case Errc::Unreachable: return "Unreachable";
    case Errc::OpcodeManifestMismatch: return "OpcodeManifestMismatch";
    case Errc::RemoteTimeout: return "RemoteFailure(timeout)";
    case Errc::ConnectionLost: return "RemoteFailure(connection lost)";
    case Errc::OpcodeFailed: return "OpcodeFailed";
    case Errc::BadState: return "BadState";
    case Errc::Protocol: return "Protocol";
    case Errc::BindFailed: return "BindFailed";
    case Errc::UnmonitorableVariable: return "UnmonitorableVariable";
    case Errc::SensorUnavailable: return "SensorUnavailable";
    case Errc::RecruitmentFailed: return "RecruitmentFailed";
    case Errc::StopTimeout: return "StopTimeout";
    case Errc::WouldEmptyPool: return "WouldEmptyPool";
    case Errc::UnknownOpcode: return "UnknownOpcode";
    case Errc::Timeout: return "Timeout";
    case Errc::UpstreamFailed: return "UpstreamFailed";
    case Errc::Parse: return "Parse";
    case Errc::Codec: return "Codec";
    case Errc::Config: return "Config";
    }
    return "Unknown";
}

} // namespace mdf
