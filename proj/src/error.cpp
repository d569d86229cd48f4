#include "wap/error.hpp"

namespace wap {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::OversizeDatagram: return "OversizeDatagram";
    case Errc::BearerClosed: return "BearerClosed";
    case Errc::InvalidProfile: return "InvalidProfile";
    case Errc::PortInUse: return "PortInUse";
    case Errc::InvalidPort: return "InvalidPort";
    case Errc::TruncatedDatagram: return "TruncatedDatagram";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EndpointClosed: return "EndpointClosed";
    case Errc::HandshakeTimeout: return "HandshakeTimeout";
    case Errc::AuthenticationFailure: return "AuthenticationFailure";
    case Errc::SuiteMismatch: return "SuiteMismatch";
    case Errc::SequenceExhausted: return "SequenceExhausted";
    case Errc::MacFailure: return "MacFailure";
    case Errc::ReplayDetected: return "ReplayDetected";
    case Errc::UnknownContentType: return "UnknownContentType";
    case Errc::MalformedPdu: return "MalformedPdu";
    case Errc::MalformedConcat: return "MalformedConcat";
    case Errc::TransactionTimeout: return "TransactionTimeout";
    case Errc::Aborted: return "Aborted";
    case Errc::UnknownTid: return "UnknownTid";
    case Errc::WrongClass: return "WrongClass";
    case Errc::WrongState: return "WrongState";
    case Errc::UserAckNotRequested: return "UserAckNotRequested";
    case Errc::AlreadyCompleted: return "AlreadyCompleted";
    case Errc::MalformedHeaders: return "MalformedHeaders";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::ConnectRefused: return "ConnectRefused";
    case Errc::SessionNotConnected: return "SessionNotConnected";
    case Errc::MethodAborted: return "MethodAborted";
    case Errc::ResumeRefused: return "ResumeRefused";
    case Errc::Timeout: return "Timeout";
    case Errc::ParseError: return "ParseError";
    case Errc::UnencodableText: return "UnencodableText";
    case Errc::MalformedBinary: return "MalformedBinary";
    case Errc::BadUri: return "BadUri";
    case Errc::ContentEncodeFailure: return "ContentEncodeFailure";
    case Errc::OriginUnreachable: return "OriginUnreachable";
    case Errc::OriginTimeout: return "OriginTimeout";
    case Errc::ConfigError: return "ConfigError";
    case Errc::EmptyDeck: return "EmptyDeck";
    case Errc::NoSuchLink: return "NoSuchLink";
  }
  return "Unknown";
}

}  // namespace wap
