#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "wap/bytes.hpp"

namespace wap::wml {

enum class Tag : std::uint8_t {
  Wml = 0x05,
  Card = 0x06,
  P = 0x07,
  Br = 0x08,
  A = 0x09,
  Do = 0x0A,
  Template = 0x0B,
};

enum class Attr : std::uint8_t { Id = 0x05, Title = 0x06, Href = 0x07 };

namespace token {
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::uint8_t kEnd = 0x01;
inline constexpr std::uint8_t kStrI = 0x03;
inline constexpr std::uint8_t kHasContent = 0x40;
inline constexpr std::uint8_t kHasAttrs = 0x80;
}  // namespace token

std::string_view name(Tag tag);
std::string_view name(Attr attr);
std::optional<Tag> tag_named(std::string_view name);
std::optional<Attr> attr_named(std::string_view name);

/// Which element may appear inside which, and where text may appear.
bool allows_child(Tag parent, Tag child);
bool allows_text(Tag parent);

struct Node;

struct Text {
  std::string value;
  bool operator==(const Text&) const = default;
};

struct Attribute {
  Attr name;
  std::string value;
  bool operator==(const Attribute&) const = default;
};

struct Element {
  Tag tag = Tag::Wml;
  std::vector<Attribute> attributes;
  std::vector<Node> children;

  const std::string* attribute(Attr a) const;
  bool operator==(const Element& other) const;
};

struct Node {
  std::variant<Element, Text> value;

  Node(Element e) : value(std::move(e)) {}
  Node(Text t) : value(std::move(t)) {}

  const Element* element() const { return std::get_if<Element>(&value); }
  const Text* text() const { return std::get_if<Text>(&value); }
  bool operator==(const Node&) const = default;
};

inline bool Element::operator==(const Element& other) const {
  return tag == other.tag && attributes == other.attributes && children == other.children;
}

struct Document {
  Element root;
  bool operator==(const Document&) const = default;
};

/// Throws wap::ParseError with the line and column of the fault.
Document parse(std::string_view text);

/// Canonical text: double-quoted attributes in stored order, `<`, `&` and `"`
/// escaped, no inserted whitespace, `<br/>` for line breaks.
std::string serialize(const Document& doc);

/// Tokenized form: version, uint16 string-table length (always 0), then a
/// pre-order token stream. Throws Error(UnencodableText) for embedded NULs and
/// std::invalid_argument for trees that break the nesting rules.
Bytes encode(const Document& doc);

/// Throws Error(MalformedBinary).
Document decode(BytesView bytes);

/// Throws std::invalid_argument describing the first violation.
void validate(const Document& doc);

std::size_t element_count(const Document& doc);

}  // namespace wap::wml
