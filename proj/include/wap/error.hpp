#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wap {

enum class Errc {
  // bearer
  OversizeDatagram,
  BearerClosed,
  InvalidProfile,
  // wdp
  PortInUse,
  InvalidPort,
  TruncatedDatagram,
  LengthMismatch,
  EndpointClosed,
  // wtls
  HandshakeTimeout,
  AuthenticationFailure,
  SuiteMismatch,
  SequenceExhausted,
  MacFailure,
  ReplayDetected,
  UnknownContentType,
  // wtp
  MalformedPdu,
  MalformedConcat,
  TransactionTimeout,
  Aborted,
  UnknownTid,
  WrongClass,
  WrongState,
  UserAckNotRequested,
  AlreadyCompleted,
  // wsp
  MalformedHeaders,
  MalformedMessage,
  ConnectRefused,
  SessionNotConnected,
  MethodAborted,
  ResumeRefused,
  Timeout,
  // content codec
  ParseError,
  UnencodableText,
  MalformedBinary,
  // gateway
  BadUri,
  ContentEncodeFailure,
  OriginUnreachable,
  OriginTimeout,
  ConfigError,
  // user agent
  EmptyDeck,
  NoSuchLink,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  explicit Error(Errc code) : std::runtime_error(std::string(to_string(code))), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error(Errc::ParseError,
              std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Carries the abort reason byte from a WTP Abort PDU.
class AbortedError : public Error {
 public:
  explicit AbortedError(std::uint8_t reason)
      : Error(Errc::Aborted, "reason " + std::to_string(reason)), reason_(reason) {}

  std::uint8_t reason() const noexcept { return reason_; }

 private:
  std::uint8_t reason_;
};

}  // namespace wap
