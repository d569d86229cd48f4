#include "wap/wsp_codec.hpp"

#include <algorithm>
#include <cctype>

#include "wap/error.hpp"

namespace wap::wsp {

std::string_view to_string(PduType type) {
  switch (type) {
    case PduType::Connect: return "Connect";
    case PduType::ConnectReply: return "ConnectReply";
    case PduType::Reply: return "Reply";
    case PduType::Disconnect: return "Disconnect";
    case PduType::Suspend: return "Suspend";
    case PduType::Resume: return "Resume";
    case PduType::Get: return "Get";
    case PduType::Post: return "Post";
  }
  return "?";
}

namespace {

template <std::size_t N>
std::optional<std::uint8_t> lookup_code(const std::pair<std::string_view, std::uint8_t> (&table)[N],
                                        std::string_view key) {
  for (const auto& [name, code] : table)
    if (name == key) return code;
  return std::nullopt;
}

template <std::size_t N>
std::optional<std::string_view> lookup_name(
    const std::pair<std::string_view, std::uint8_t> (&table)[N], std::uint8_t code) {
  for (const auto& [name, c] : table)
    if (c == code) return name;
  return std::nullopt;
}

void put_text(Bytes& out, std::string_view text, bool allow_empty) {
  if (!allow_empty && text.empty()) throw Error(Errc::MalformedHeaders, "empty header name");
  for (unsigned char c : text)
    if (c == 0 || c >= 0x80) throw Error(Errc::MalformedHeaders, "header text must be NUL-free ASCII");
  append(out, text);
  put_u8(out, 0);
}

std::string read_text(BytesView b, std::size_t& at) {
  std::string text;
  while (true) {
    if (at >= b.size()) throw Error(Errc::MalformedHeaders, "unterminated text");
    const std::uint8_t c = b[at++];
    if (c == 0) return text;
    if (c >= 0x80) throw Error(Errc::MalformedHeaders, "byte >= 0x80 inside text");
    text.push_back(static_cast<char>(c));
  }
}

bool is_pdu_type(std::uint8_t v) {
  switch (static_cast<PduType>(v)) {
    case PduType::Connect:
    case PduType::ConnectReply:
    case PduType::Reply:
    case PduType::Disconnect:
    case PduType::Suspend:
    case PduType::Resume:
    case PduType::Get:
    case PduType::Post: return true;
  }
  return false;
}

}  // namespace

std::optional<std::uint8_t> header_code(std::string_view name) { return lookup_code(kHeaderNames, name); }

std::optional<std::uint8_t> content_type_code(std::string_view value) {
  return lookup_code(kContentTypes, value);
}

std::string canonical_header_name(std::string_view name) {
  for (const auto& [known, _] : kHeaderNames) {
    if (known.size() == name.size() &&
        std::equal(known.begin(), known.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        }))
      return std::string(known);
  }
  return std::string(name);
}

Bytes encode_headers(const Headers& headers) {
  Bytes out;
  for (const auto& [name, value] : headers) {
    if (auto code = header_code(name))
      put_u8(out, 0x80 | *code);
    else
      put_text(out, name, false);
    if (auto code = content_type_code(value))
      put_u8(out, 0x80 | *code);
    else
      put_text(out, value, true);
  }
  return out;
}

Headers decode_headers(BytesView bytes) {
  Headers headers;
  std::size_t at = 0;
  while (at < bytes.size()) {
    std::string name;
    if (bytes[at] >= 0x80) {
      auto known = lookup_name(kHeaderNames, bytes[at] & 0x7F);
      if (!known) throw Error(Errc::MalformedHeaders, "unknown header code");
      name = *known;
      ++at;
    } else if (bytes[at] == 0) {
      throw Error(Errc::MalformedHeaders, "empty header name");
    } else {
      name = read_text(bytes, at);
    }
    if (at >= bytes.size()) throw Error(Errc::MalformedHeaders, "header without value");
    std::string value;
    if (bytes[at] >= 0x80) {
      auto known = lookup_name(kContentTypes, bytes[at] & 0x7F);
      if (!known) throw Error(Errc::MalformedHeaders, "unknown value code");
      value = *known;
      ++at;
    } else {
      value = read_text(bytes, at);
    }
    headers.emplace_back(std::move(name), std::move(value));
  }
  return headers;
}

Bytes compact_status(std::uint16_t code) {
  const unsigned hundreds = code / 100;
  const unsigned rest = code % 100;
  if (rest <= 15 && hundreds <= 14) return Bytes{static_cast<std::uint8_t>((hundreds << 4) | rest)};
  Bytes out{0xFF};
  put_u16(out, code);
  return out;
}

std::pair<std::uint16_t, std::size_t> expand_status(BytesView bytes) {
  if (bytes.empty()) throw Error(Errc::MalformedMessage, "missing status");
  if (bytes[0] != 0xFF)
    return {static_cast<std::uint16_t>((bytes[0] >> 4) * 100 + (bytes[0] & 0x0F)), 1};
  if (bytes.size() < 3) throw Error(Errc::MalformedMessage, "truncated escaped status");
  return {get_u16(bytes, 1), 3};
}

bool carries_session_id(PduType type) {
  return type == PduType::Connect || type == PduType::ConnectReply || type == PduType::Suspend ||
         type == PduType::Resume;
}

Bytes encode(const Message& message) {
  Bytes out{static_cast<std::uint8_t>(message.type)};
  if (carries_session_id(message.type)) put_u32(out, message.session_id);
  if (message.type == PduType::Reply) append(out, compact_status(message.status));
  if (message.type == PduType::Get || message.type == PduType::Post) {
    if (message.uri.find('\0') != std::string::npos)
      throw Error(Errc::MalformedMessage, "uri contains NUL");
    append(out, message.uri);
    put_u8(out, 0);
  }
  const Bytes block = encode_headers(message.headers);
  if (block.size() > 0xFFFF) throw Error(Errc::MalformedMessage, "header block too long");
  put_u16(out, static_cast<std::uint16_t>(block.size()));
  append(out, block);
  append(out, message.body);
  return out;
}

Message decode(BytesView bytes) {
  if (bytes.empty()) throw Error(Errc::MalformedMessage, "empty");
  if (!is_pdu_type(bytes[0])) throw Error(Errc::MalformedMessage, "unknown pdu type");
  Message m;
  m.type = static_cast<PduType>(bytes[0]);
  std::size_t at = 1;
  if (carries_session_id(m.type)) {
    if (bytes.size() < at + 4) throw Error(Errc::MalformedMessage, "truncated session id");
    m.session_id = get_u32(bytes, at);
    at += 4;
  }
  if (m.type == PduType::Reply) {
    auto [status, used] = expand_status(bytes.subspan(at));
    m.status = status;
    at += used;
  }
  if (m.type == PduType::Get || m.type == PduType::Post) {
    auto nul = std::find(bytes.begin() + at, bytes.end(), 0);
    if (nul == bytes.end()) throw Error(Errc::MalformedMessage, "unterminated uri");
    m.uri.assign(bytes.begin() + at, nul);
    at = static_cast<std::size_t>(nul - bytes.begin()) + 1;
  }
  if (bytes.size() < at + 2) throw Error(Errc::MalformedMessage, "truncated header length");
  const std::size_t block_len = get_u16(bytes, at);
  at += 2;
  if (bytes.size() < at + block_len) throw Error(Errc::MalformedMessage, "truncated header block");
  try {
    m.headers = decode_headers(bytes.subspan(at, block_len));
  } catch (const Error& e) {
    throw Error(Errc::MalformedMessage, e.what());
  }
  at += block_len;
  m.body.assign(bytes.begin() + at, bytes.end());
  return m;
}

}  // namespace wap::wsp
