#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wap/bytes.hpp"

namespace wap::wsp {

using Header = std::pair<std::string, std::string>;
using Headers = std::vector<Header>;

enum class PduType : std::uint8_t {
  Connect = 0x01,
  ConnectReply = 0x02,
  Reply = 0x04,
  Disconnect = 0x05,
  Suspend = 0x07,
  Resume = 0x08,
  Get = 0x40,
  Post = 0x60,
};

std::string_view to_string(PduType type);

// Well-known header names and Content-Type values. Codes stay below 0x80 and
// are sent as 0x80 | code.
inline constexpr std::pair<std::string_view, std::uint8_t> kHeaderNames[] = {
    {"Accept", 0x00},     {"Content-Type", 0x01}, {"Content-Length", 0x02},
    {"Host", 0x03},       {"User-Agent", 0x04},   {"Location", 0x05},
};
inline constexpr std::pair<std::string_view, std::uint8_t> kContentTypes[] = {
    {"text/plain", 0x01},
    {"text/vnd.wap.wml", 0x02},
    {"application/wmlc", 0x03},
};

std::optional<std::uint8_t> header_code(std::string_view name);
std::optional<std::uint8_t> content_type_code(std::string_view value);

/// Maps any capitalisation of a well-known header name to its table
/// spelling; other names are returned unchanged.
std::string canonical_header_name(std::string_view name);

/// Throws Error(MalformedHeaders) for empty names, NULs or non-ASCII text.
Bytes encode_headers(const Headers& headers);
/// Throws Error(MalformedHeaders).
Headers decode_headers(BytesView bytes);

/// 200 -> 0x20, 404 -> 0x44: (code / 100) << 4 | code % 100 while code % 100
/// is at most 15; otherwise 0xFF followed by the code as uint16.
Bytes compact_status(std::uint16_t code);
/// Returns the code and the number of bytes consumed. Throws
/// Error(MalformedMessage) on truncation.
std::pair<std::uint16_t, std::size_t> expand_status(BytesView bytes);

struct Message {
  PduType type = PduType::Get;
  std::uint32_t session_id = 0;  // Connect, ConnectReply, Suspend, Resume
  std::uint16_t status = 0;      // Reply; an HTTP status code
  std::string uri;               // Get, Post
  Headers headers;
  Bytes body;

  bool operator==(const Message&) const = default;
};

bool carries_session_id(PduType type);

/// Layout: type, [session_id u32], [status], [uri NUL], u16 header block
/// length, header block, body.
Bytes encode(const Message& message);
/// Throws Error(MalformedMessage).
Message decode(BytesView bytes);

}  // namespace wap::wsp
