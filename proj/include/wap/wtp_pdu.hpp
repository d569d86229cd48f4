#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "wap/bytes.hpp"

namespace wap::wtp {

enum class PduType : std::uint8_t { Invoke = 0x1, Result = 0x2, Ack = 0x3, Abort = 0x4 };

enum class TransactionClass : std::uint8_t {
  Unreliable = 0,   // one-way, fire and forget
  Reliable = 1,     // one-way, acknowledged
  WithResult = 2,   // request/response
};

inline constexpr std::size_t kMaxOob = 64;

/// Byte 0: type in bits 7..4, RID in bit 3, UAK in bit 2, bits 1..0 zero.
/// Bytes 1..2: TID. Invoke byte 3 is the class, Abort byte 3 the reason; the
/// rest is payload (Invoke, Result) or out-of-band data (Ack).
struct Pdu {
  PduType type = PduType::Invoke;
  bool rid = false;
  bool uak = false;
  std::uint16_t tid = 0;
  TransactionClass tclass = TransactionClass::Unreliable;
  std::uint8_t abort_reason = 0;
  Bytes oob;
  Bytes payload;

  bool operator==(const Pdu&) const = default;
};

std::string_view to_string(PduType type);

/// Throws Error(MalformedPdu) for fields that do not belong to the type.
Bytes encode(const Pdu& pdu);
/// Throws Error(MalformedPdu).
Pdu decode(BytesView bytes);

/// 0x00 marker followed by {uint16 length, pdu} per entry.
Bytes concat(const std::vector<Bytes>& pdus);
/// A first byte other than 0x00 is a single bare PDU. Throws
/// Error(MalformedConcat).
std::vector<Bytes> split(BytesView bytes);

}  // namespace wap::wtp
