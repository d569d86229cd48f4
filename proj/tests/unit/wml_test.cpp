#include <gtest/gtest.h>

#include <random>

#include "deck_generator.hpp"
#include "harness.hpp"
#include "wap/error.hpp"
#include "wap/wml.hpp"

using namespace wap;
using namespace wap::wml;

namespace {

struct Fault {
  std::size_t line = 0;
  std::size_t column = 0;
};

Fault parse_fault(std::string_view text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return {e.line(), e.column()};
  }
  ADD_FAILURE() << "parsed: " << text;
  return {};
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::ConfigError;
}

}  // namespace

TEST(Wml, FrozenEncodings) {
  EXPECT_EQ(to_hex(encode(parse("<wml></wml>"))), "01000005");
  EXPECT_EQ(to_hex(encode(parse(R"(<wml><card id="c1"><p>Hi</p></card></wml>)"))),
            "01000045c60503633100014703486900010101");
  EXPECT_EQ(to_hex(encode(parse(R"(<wml><card><p>a<br/>b</p></card></wml>)"))),
            "01000045464703610008036200010101");
}

TEST(Wml, ParseBuildsTheTree) {
  const Document d = parse(R"(<wml><card id="c1" title="T"><p>one &amp; <a href="x.wml">two</a></p></card></wml>)");
  ASSERT_EQ(d.root.children.size(), 1u);
  const Element& card = *d.root.children[0].element();
  EXPECT_EQ(card.tag, Tag::Card);
  EXPECT_EQ(*card.attribute(Attr::Id), "c1");
  EXPECT_EQ(*card.attribute(Attr::Title), "T");
  EXPECT_EQ(card.attribute(Attr::Href), nullptr);
  const Element& p = *card.children[0].element();
  EXPECT_EQ(p.children[0].text()->value, "one & ");
  EXPECT_EQ(*p.children[1].element()->attribute(Attr::Href), "x.wml");
  EXPECT_EQ(element_count(d), 4u);
}

TEST(Wml, ProloguesSelfClosingAndWhitespace) {
  const Document a = parse(
      "<?xml version=\"1.0\"?>\n<!DOCTYPE wml PUBLIC \"-//WAPFORUM//DTD WML 1.1//EN\" \"x\">\n"
      "<wml>\n  <card>\n    <p>x<br/>y<br></br></p>\n  </card>\n</wml>\n");
  const Document b = parse("<wml><card><p>x<br/>y<br/></p></card></wml>");
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize(a), "<wml><card><p>x<br/>y<br/></p></card></wml>");
  EXPECT_EQ(parse("<wml/>"), parse("<wml></wml>"));
  EXPECT_EQ(parse("<wml><card title='single'/></wml>"), parse(R"(<wml><card title="single"></card></wml>)"));
}

TEST(Wml, SerializeEscapes) {
  Element p{Tag::P, {}, {Node(Text{"a<b & \"c\" >"})}};
  Element card{Tag::Card, {{Attr::Title, "x\"<&y"}}, {Node(std::move(p))}};
  const Document d{Element{Tag::Wml, {}, {Node(std::move(card))}}};
  const std::string s = serialize(d);
  EXPECT_EQ(s, R"(<wml><card title="x&quot;&lt;&amp;y"><p>a&lt;b &amp; &quot;c&quot; ></p></card></wml>)");
  EXPECT_EQ(parse(s), d);
}

TEST(Wml, ParseErrorsCarryPosition) {
  struct Case {
    const char* text;
    std::size_t line, column;
  };
  const Case cases[] = {
      {"", 1, 1},
      {"<wml>", 1, 6},
      {"<card></card>", 1, 1},
      {"<wml><bogus/></wml>", 1, 6},
      {"<wml>\n<card>\n<p>hi</card>\n</wml>", 3, 6},
      {"<wml><card colour=\"red\"/></wml>", 1, 12},
      {"<wml><card id=\"a\" id=\"b\"/></wml>", 1, 19},
      {"<wml>text</wml>", 1, 6},
      {"<wml><p>x</p></wml>", 1, 6},
      {"<wml><card><p>&nbsp;</p></card></wml>", 1, 15},
      {"<wml><card><p>caf\xc3\xa9</p></card></wml>", 1, 18},
      {"<wml></wml><wml></wml>", 1, 12},
      {"<wml><card><p>a<br>b</br></p></card></wml>", 1, 20},
      {"<wml><card title=\"a<b\"/></wml>", 1, 20},
  };
  for (const Case& c : cases) {
    const Fault f = parse_fault(c.text);
    EXPECT_EQ(f.line, c.line) << c.text;
    EXPECT_EQ(f.column, c.column) << c.text;
  }
}

TEST(Wml, EncodeRejectsInvalidTrees) {
  const Document nul{Element{Tag::Wml, {}, {Node(Element{Tag::Card, {}, {Node(Element{Tag::P, {}, {Node(Text{std::string("a\0b", 3)})}})}})}}};
  EXPECT_EQ(code_of([&] { encode(nul); }), Errc::UnencodableText);
  const Document wrong_root{Element{Tag::Card, {}, {}}};
  EXPECT_THROW(encode(wrong_root), std::invalid_argument);
  const Document p_in_wml{Element{Tag::Wml, {}, {Node(Element{Tag::P, {}, {}})}}};
  EXPECT_THROW(encode(p_in_wml), std::invalid_argument);
  const Document twin_text{Element{Tag::Wml, {}, {Node(Element{Tag::Card, {}, {Node(Element{Tag::P, {}, {Node(Text{"a"}), Node(Text{"b"})}})}})}}};
  EXPECT_THROW(encode(twin_text), std::invalid_argument);
}

TEST(Wml, DecodeRejectsMalformed) {
  for (const char* hex : {"", "0100", "02000005", "01000105", "01000006", "0100004546", "01000045",
                          "0100000501", "01000045c60903", "010000454703616201", "0100004599"}) {
    EXPECT_EQ(code_of([&] { decode(from_hex(hex)); }), Errc::MalformedBinary) << hex;
  }
}

TEST(Wml, GeneratedDocumentsRoundTrip) {
  testsupport::DeckGenerator gen(2024);
  std::size_t elements = 0;
  for (int i = 0; i < 1000; ++i) {
    const Document d = gen.deck();
    elements += element_count(d);
    ASSERT_EQ(decode(encode(d)), d) << serialize(d);
    ASSERT_EQ(parse(serialize(d)), d) << serialize(d);
    ASSERT_EQ(serialize(parse(serialize(d))), serialize(d));
  }
  EXPECT_GT(elements, 5000u);
}

TEST(Wml, CorpusEncodesSmallerThanText) {
  for (const auto& page : testsupport::kPages) {
    const std::string text = testsupport::read_file(testsupport::pages_dir() / page);
    const Document d = parse(text);
    ASSERT_GE(element_count(d), 10u) << page;
    const Bytes wire = encode(d);
    EXPECT_LT(wire.size(), text.size()) << page;
    EXPECT_LT(wire.size(), serialize(d).size()) << page;
    EXPECT_EQ(decode(wire), d) << page;
  }
}

TEST(Wml, NestingRulesTable) {
  EXPECT_TRUE(allows_child(Tag::Wml, Tag::Card));
  EXPECT_TRUE(allows_child(Tag::Wml, Tag::Template));
  EXPECT_TRUE(allows_child(Tag::Template, Tag::Do));
  EXPECT_TRUE(allows_child(Tag::Card, Tag::P));
  EXPECT_TRUE(allows_child(Tag::P, Tag::A));
  EXPECT_FALSE(allows_child(Tag::A, Tag::Br));
  EXPECT_FALSE(allows_child(Tag::Card, Tag::Card));
  EXPECT_FALSE(allows_text(Tag::Card));
  EXPECT_TRUE(allows_text(Tag::Do));
  EXPECT_EQ(tag_named("template"), Tag::Template);
  EXPECT_EQ(attr_named("href"), Attr::Href);
  EXPECT_EQ(tag_named("WML"), std::nullopt);
}
