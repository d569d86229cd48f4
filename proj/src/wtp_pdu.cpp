#include "wap/wtp_pdu.hpp"

#include "wap/error.hpp"

namespace wap::wtp {

std::string_view to_string(PduType type) {
  switch (type) {
    case PduType::Invoke: return "Invoke";
    case PduType::Result: return "Result";
    case PduType::Ack: return "Ack";
    case PduType::Abort: return "Abort";
  }
  return "?";
}

Bytes encode(const Pdu& pdu) {
  const bool invoke_or_result = pdu.type == PduType::Invoke || pdu.type == PduType::Result;
  if (!invoke_or_result && !pdu.payload.empty())
    throw Error(Errc::MalformedPdu, "payload only travels on Invoke and Result");
  if (pdu.type != PduType::Ack && !pdu.oob.empty())
    throw Error(Errc::MalformedPdu, "out-of-band data only travels on Ack");
  if (pdu.oob.size() > kMaxOob) throw Error(Errc::MalformedPdu, "out-of-band data over 64 bytes");
  if (pdu.type != PduType::Invoke && pdu.tclass != TransactionClass::Unreliable)
    throw Error(Errc::MalformedPdu, "class only travels on Invoke");
  if (pdu.type != PduType::Abort && pdu.abort_reason != 0)
    throw Error(Errc::MalformedPdu, "reason only travels on Abort");
  if (static_cast<std::uint8_t>(pdu.tclass) > 2) throw Error(Errc::MalformedPdu, "bad class");

  Bytes out;
  out.reserve(4 + pdu.payload.size() + pdu.oob.size());
  put_u8(out, static_cast<std::uint8_t>((static_cast<std::uint8_t>(pdu.type) << 4) |
                                        (pdu.rid ? 0x08 : 0) | (pdu.uak ? 0x04 : 0)));
  put_u16(out, pdu.tid);
  switch (pdu.type) {
    case PduType::Invoke:
      put_u8(out, static_cast<std::uint8_t>(pdu.tclass));
      append(out, pdu.payload);
      break;
    case PduType::Result: append(out, pdu.payload); break;
    case PduType::Ack: append(out, pdu.oob); break;
    case PduType::Abort: put_u8(out, pdu.abort_reason); break;
  }
  return out;
}

Pdu decode(BytesView bytes) {
  if (bytes.size() < 3) throw Error(Errc::MalformedPdu, "shorter than 3 bytes");
  const std::uint8_t head = bytes[0];
  if ((head & 0x03) != 0) throw Error(Errc::MalformedPdu, "reserved bits set");
  const std::uint8_t type = head >> 4;
  if (type < 1 || type > 4) throw Error(Errc::MalformedPdu, "unknown pdu type");
  Pdu pdu;
  pdu.type = static_cast<PduType>(type);
  pdu.rid = head & 0x08;
  pdu.uak = head & 0x04;
  pdu.tid = get_u16(bytes, 1);
  const auto rest = bytes.subspan(3);
  switch (pdu.type) {
    case PduType::Invoke:
      if (rest.empty()) throw Error(Errc::MalformedPdu, "Invoke without class");
      if (rest[0] > 2) throw Error(Errc::MalformedPdu, "bad class");
      pdu.tclass = static_cast<TransactionClass>(rest[0]);
      pdu.payload.assign(rest.begin() + 1, rest.end());
      break;
    case PduType::Result: pdu.payload.assign(rest.begin(), rest.end()); break;
    case PduType::Ack:
      if (rest.size() > kMaxOob) throw Error(Errc::MalformedPdu, "out-of-band data over 64 bytes");
      pdu.oob.assign(rest.begin(), rest.end());
      break;
    case PduType::Abort:
      if (rest.size() != 1) throw Error(Errc::MalformedPdu, "Abort needs exactly one reason byte");
      pdu.abort_reason = rest[0];
      break;
  }
  return pdu;
}

Bytes concat(const std::vector<Bytes>& pdus) {
  Bytes out{0x00};
  for (const auto& pdu : pdus) {
    if (pdu.empty() || pdu.size() > 0xFFFF)
      throw Error(Errc::MalformedConcat, "pdu length out of range");
    put_u16(out, static_cast<std::uint16_t>(pdu.size()));
    append(out, pdu);
  }
  return out;
}

std::vector<Bytes> split(BytesView bytes) {
  if (bytes.empty()) throw Error(Errc::MalformedConcat, "empty datagram");
  if (bytes[0] != 0x00) return {Bytes(bytes.begin(), bytes.end())};
  std::vector<Bytes> pdus;
  std::size_t at = 1;
  while (at < bytes.size()) {
    if (bytes.size() - at < 2) throw Error(Errc::MalformedConcat, "truncated length");
    const std::size_t len = get_u16(bytes, at);
    at += 2;
    if (len == 0 || bytes.size() - at < len) throw Error(Errc::MalformedConcat, "truncated pdu");
    pdus.emplace_back(bytes.begin() + at, bytes.begin() + at + len);
    at += len;
  }
  if (pdus.empty()) throw Error(Errc::MalformedConcat, "marker without pdus");
  return pdus;
}

}  // namespace wap::wtp
