#include "wap/wml.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "wap/error.hpp"

namespace wap::wml {

namespace {

constexpr std::pair<std::string_view, Tag> kTags[] = {
    {"wml", Tag::Wml}, {"card", Tag::Card}, {"p", Tag::P},           {"br", Tag::Br},
    {"a", Tag::A},     {"do", Tag::Do},     {"template", Tag::Template},
};
constexpr std::pair<std::string_view, Attr> kAttrs[] = {
    {"id", Attr::Id}, {"title", Attr::Title}, {"href", Attr::Href}};

bool is_tag_code(std::uint8_t code) { return code >= 0x05 && code <= 0x0B; }
bool is_attr_code(std::uint8_t code) { return code >= 0x05 && code <= 0x07; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool whitespace_only(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

}  // namespace

std::string_view name(Tag tag) {
  for (const auto& [n, t] : kTags)
    if (t == tag) return n;
  return "?";
}

std::string_view name(Attr attr) {
  for (const auto& [n, a] : kAttrs)
    if (a == attr) return n;
  return "?";
}

std::optional<Tag> tag_named(std::string_view n) {
  for (const auto& [k, t] : kTags)
    if (k == n) return t;
  return std::nullopt;
}

std::optional<Attr> attr_named(std::string_view n) {
  for (const auto& [k, a] : kAttrs)
    if (k == n) return a;
  return std::nullopt;
}

bool allows_child(Tag parent, Tag child) {
  switch (parent) {
    case Tag::Wml: return child == Tag::Card || child == Tag::Template;
    case Tag::Template: return child == Tag::Do;
    case Tag::Card: return child == Tag::P || child == Tag::Do;
    case Tag::P: return child == Tag::Br || child == Tag::A;
    case Tag::A:
    case Tag::Do:
    case Tag::Br: return false;
  }
  return false;
}

bool allows_text(Tag parent) { return parent == Tag::P || parent == Tag::A || parent == Tag::Do; }

const std::string* Element::attribute(Attr a) const {
  for (const auto& attr : attributes)
    if (attr.name == a) return &attr.value;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_text(std::string_view s, bool allow_empty) {
  if (!allow_empty && s.empty()) throw std::invalid_argument("empty text node");
  for (unsigned char c : s) {
    if (c == 0) throw Error(Errc::UnencodableText, "embedded NUL");
    if (c >= 0x80) throw std::invalid_argument("non-ASCII text");
  }
}

void validate_element(const Element& e) {
  for (std::size_t i = 0; i < e.attributes.size(); ++i) {
    check_text(e.attributes[i].value, true);
    for (std::size_t j = 0; j < i; ++j)
      if (e.attributes[j].name == e.attributes[i].name)
        throw std::invalid_argument("duplicate attribute " + std::string(name(e.attributes[i].name)));
  }
  bool previous_text = false;
  for (const auto& child : e.children) {
    if (const Text* t = child.text()) {
      if (!allows_text(e.tag)) throw std::invalid_argument("text inside " + std::string(name(e.tag)));
      check_text(t->value, false);
      if (whitespace_only(t->value)) throw std::invalid_argument("whitespace-only text node");
      if (previous_text) throw std::invalid_argument("adjacent text nodes");
      previous_text = true;
    } else {
      const Element& c = *child.element();
      if (!allows_child(e.tag, c.tag))
        throw std::invalid_argument(std::string(name(c.tag)) + " inside " + std::string(name(e.tag)));
      validate_element(c);
      previous_text = false;
    }
  }
}

std::size_t count(const Element& e) {
  std::size_t n = 1;
  for (const auto& c : e.children)
    if (const Element* el = c.element()) n += count(*el);
  return n;
}

}  // namespace

void validate(const Document& doc) {
  if (doc.root.tag != Tag::Wml) throw std::invalid_argument("root must be wml");
  validate_element(doc.root);
}

std::size_t element_count(const Document& doc) { return count(doc.root); }

// ---------------------------------------------------------------------------
// Text parser

namespace {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Document run() {
    skip_prolog();
    skip_space();
    if (peek() != '<') fail("expected <wml>");
    Element root = element();
    if (root.tag != Tag::Wml) fail_at(root_line_, root_col_, "root element must be wml");
    skip_space();
    if (!at_end()) fail("content after the root element");
    return Document{std::move(root)};
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, col_, what); }
  [[noreturn]] void fail_at(std::size_t line, std::size_t col, const std::string& what) const {
    throw ParseError(line, col, what);
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }
  bool starts_with(std::string_view s) const { return src_.substr(pos_).starts_with(s); }

  char next() {
    if (at_end()) fail("unexpected end of input");
    const char c = src_[pos_++];
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x80) {
      --pos_;
      fail("non-ASCII byte");
    }
    if (u < 0x20 && !is_space(c)) {
      --pos_;
      fail("control character");
    }
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void expect(char c) {
    if (peek() != c || at_end()) fail(std::string("expected '") + c + "'");
    next();
  }

  void skip_space() {
    while (!at_end() && is_space(peek())) next();
  }

  void skip_prolog() {
    skip_space();
    if (starts_with("<?")) {
      while (!at_end() && !starts_with("?>")) next();
      if (at_end()) fail("unterminated <? ... ?>");
      next();
      next();
    }
    skip_space();
    if (starts_with("<!DOCTYPE") || starts_with("<!doctype")) {
      while (!at_end() && peek() != '>') next();
      expect('>');
    }
  }

  std::string name_token() {
    std::string out;
    while (!at_end() && std::isalnum(static_cast<unsigned char>(peek()))) out.push_back(next());
    if (out.empty()) fail("expected a name");
    return out;
  }

  char entity() {
    // At '&'.
    const std::size_t line = line_, col = col_;
    next();
    std::string ent;
    while (!at_end() && peek() != ';' && ent.size() < 8) ent.push_back(next());
    if (peek() != ';') fail_at(line, col, "bad escape");
    next();
    if (ent == "lt") return '<';
    if (ent == "amp") return '&';
    if (ent == "quot") return '"';
    fail_at(line, col, "bad escape &" + ent + ";");
  }

  std::string attribute_value() {
    const char quote = at_end() ? '\0' : peek();
    if (quote != '"' && quote != '\'') fail("expected a quoted attribute value");
    next();
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated attribute value");
      const char c = peek();
      if (c == quote) break;
      if (c == '<') fail("'<' in attribute value");
      if (c == '&')
        out.push_back(entity());
      else
        out.push_back(next());
    }
    next();
    return out;
  }

  Element element() {
    const std::size_t start_line = line_, start_col = col_;
    if (depth_ == 0) {
      root_line_ = start_line;
      root_col_ = start_col;
    }
    expect('<');
    const std::string tag_text = name_token();
    auto tag = tag_named(tag_text);
    if (!tag) fail_at(start_line, start_col, "unknown tag <" + tag_text + ">");
    Element e{*tag, {}, {}};

    while (true) {
      const bool had_space = !at_end() && is_space(peek());
      skip_space();
      if (peek() == '>' || peek() == '/') break;
      if (!had_space) fail("expected whitespace before attribute");
      const std::size_t attr_line = line_, attr_col = col_;
      const std::string attr_text = name_token();
      auto attr = attr_named(attr_text);
      if (!attr) fail_at(attr_line, attr_col, "unknown attribute " + attr_text);
      if (e.attribute(*attr)) fail_at(attr_line, attr_col, "duplicate attribute " + attr_text);
      skip_space();
      expect('=');
      skip_space();
      e.attributes.push_back(Attribute{*attr, attribute_value()});
    }

    if (peek() == '/') {
      next();
      expect('>');
      return e;
    }
    expect('>');

    ++depth_;
    std::string text;
    std::size_t text_line = line_, text_col = col_;
    auto flush_text = [&] {
      if (text.empty()) return;
      if (!whitespace_only(text)) {
        if (!allows_text(e.tag))
          fail_at(text_line, text_col, "text is not allowed inside <" + tag_text + ">");
        e.children.emplace_back(Text{std::move(text)});
      }
      text.clear();
    };

    while (true) {
      if (at_end()) fail("missing </" + tag_text + ">");
      const char c = peek();
      if (c == '<') {
        flush_text();
        if (peek(1) == '/') {
          const std::size_t close_line = line_, close_col = col_;
          next();
          next();
          const std::string closing = name_token();
          skip_space();
          expect('>');
          if (closing != tag_text)
            fail_at(close_line, close_col,
                    "mismatched tag: </" + closing + "> closes <" + tag_text + ">");
          break;
        }
        const std::size_t child_line = line_, child_col = col_;
        Element child = element();
        if (!allows_child(e.tag, child.tag))
          fail_at(child_line, child_col,
                  "<" + std::string(name(child.tag)) + "> is not allowed inside <" + tag_text + ">");
        e.children.emplace_back(std::move(child));
        text_line = line_;
        text_col = col_;
      } else {
        if (text.empty()) {
          text_line = line_;
          text_col = col_;
        }
        text.push_back(c == '&' ? entity() : next());
      }
    }
    --depth_;
    if (e.tag == Tag::Br && !e.children.empty()) fail_at(start_line, start_col, "br cannot have content");
    return e;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
  std::size_t depth_ = 0;
  std::size_t root_line_ = 1;
  std::size_t root_col_ = 1;
};

void escape_into(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
}

void serialize_element(std::string& out, const Element& e) {
  out.push_back('<');
  out += name(e.tag);
  for (const auto& a : e.attributes) {
    out.push_back(' ');
    out += name(a.name);
    out += "=\"";
    escape_into(out, a.value);
    out.push_back('"');
  }
  if (e.tag == Tag::Br && e.children.empty()) {
    out += "/>";
    return;
  }
  out.push_back('>');
  for (const auto& child : e.children) {
    if (const Text* t = child.text())
      escape_into(out, t->value);
    else
      serialize_element(out, *child.element());
  }
  out += "</";
  out += name(e.tag);
  out.push_back('>');
}

// ---------------------------------------------------------------------------
// Binary

void put_inline_string(Bytes& out, std::string_view s) {
  put_u8(out, token::kStrI);
  append(out, s);
  put_u8(out, 0);
}

void encode_element(Bytes& out, const Element& e) {
  std::uint8_t head = static_cast<std::uint8_t>(e.tag);
  if (!e.attributes.empty()) head |= token::kHasAttrs;
  if (!e.children.empty()) head |= token::kHasContent;
  put_u8(out, head);
  if (!e.attributes.empty()) {
    for (const auto& a : e.attributes) {
      put_u8(out, static_cast<std::uint8_t>(a.name));
      put_inline_string(out, a.value);
    }
    put_u8(out, token::kEnd);
  }
  if (!e.children.empty()) {
    for (const auto& child : e.children) {
      if (const Text* t = child.text())
        put_inline_string(out, t->value);
      else
        encode_element(out, *child.element());
    }
    put_u8(out, token::kEnd);
  }
}

class Decoder {
 public:
  explicit Decoder(BytesView b) : b_(b) {}

  Document run() {
    if (b_.size() < 3) fail("truncated header");
    if (b_[0] != token::kVersion) fail("unsupported version");
    const std::size_t table_len = get_u16(b_, 1);
    if (table_len != 0) fail("string table must be empty");
    at_ = 3;
    Element root = element(std::nullopt);
    if (root.tag != Tag::Wml) fail("root must be wml");
    if (at_ != b_.size()) fail("trailing bytes");
    return Document{std::move(root)};
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::MalformedBinary, what + " at offset " + std::to_string(at_));
  }

  std::uint8_t byte() {
    if (at_ >= b_.size()) fail("truncated");
    return b_[at_++];
  }

  std::string inline_string() {
    std::string out;
    while (true) {
      const std::uint8_t c = byte();
      if (c == 0) return out;
      if (c >= 0x80) fail("non-ASCII string byte");
      out.push_back(static_cast<char>(c));
    }
  }

  Element element(std::optional<Tag> parent) {
    const std::uint8_t head = byte();
    const std::uint8_t code = head & 0x3F;
    if (!is_tag_code(code)) {
      --at_;
      fail("unknown token");
    }
    Element e{static_cast<Tag>(code), {}, {}};
    if (parent && !allows_child(*parent, e.tag)) fail("element not allowed here");
    if (head & token::kHasAttrs) {
      while (true) {
        const std::uint8_t t = byte();
        if (t == token::kEnd) break;
        if (!is_attr_code(t)) fail("unknown attribute token");
        const auto attr = static_cast<Attr>(t);
        if (e.attribute(attr)) fail("duplicate attribute");
        if (byte() != token::kStrI) fail("attribute value must be STR_I");
        e.attributes.push_back(Attribute{attr, inline_string()});
      }
    }
    if (head & token::kHasContent) {
      bool previous_text = false;
      while (true) {
        if (at_ >= b_.size()) fail("missing END");
        const std::uint8_t t = b_[at_];
        if (t == token::kEnd) {
          ++at_;
          break;
        }
        if (t == token::kStrI) {
          ++at_;
          std::string s = inline_string();
          if (!allows_text(e.tag)) fail("text not allowed here");
          if (s.empty() || whitespace_only(s) || previous_text) fail("invalid text node");
          e.children.emplace_back(Text{std::move(s)});
          previous_text = true;
        } else {
          e.children.emplace_back(element(e.tag));
          previous_text = false;
        }
      }
    }
    return e;
  }

  BytesView b_;
  std::size_t at_ = 0;
};

}  // namespace

Document parse(std::string_view text) { return Parser(text).run(); }

std::string serialize(const Document& doc) {
  std::string out;
  serialize_element(out, doc.root);
  return out;
}

Bytes encode(const Document& doc) {
  validate(doc);
  Bytes out{token::kVersion, 0x00, 0x00};
  encode_element(out, doc.root);
  return out;
}

Document decode(BytesView bytes) { return Decoder(bytes).run(); }

}  // namespace wap::wml
