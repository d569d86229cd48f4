#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "wap/wml.hpp"

namespace testsupport {

namespace wml = wap::wml;

/// Random decks that respect the nesting rules, with text drawn from an
/// alphabet heavy in characters that need escaping.
class DeckGenerator {
 public:
  explicit DeckGenerator(std::uint32_t seed) : rng_(seed) {}

  wml::Document deck() {
    wml::Element root{wml::Tag::Wml, {}, {}};
    const int n = pick(0, 4);
    for (int i = 0; i < n; ++i) root.children.emplace_back(chance(4) ? template_() : card());
    return wml::Document{std::move(root)};
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(int one_in) { return pick(1, one_in) == 1; }

  std::string text(bool allow_empty) {
    static constexpr std::string_view alphabet = "abcXYZ019 <>&\"'.,;:/?=-_!";
    std::string s;
    const int len = pick(allow_empty ? 0 : 1, 14);
    while (static_cast<int>(s.size()) < len) s.push_back(alphabet[pick(0, alphabet.size() - 1)]);
    if (!allow_empty && s.find_first_not_of(' ') == std::string::npos) s.back() = 'w';
    return s;
  }

  std::vector<wml::Attribute> attributes(std::initializer_list<wml::Attr> allowed) {
    std::vector<wml::Attribute> out;
    for (wml::Attr a : allowed)
      if (chance(2)) out.push_back({a, text(true)});
    std::shuffle(out.begin(), out.end(), rng_);
    return out;
  }

  void maybe_text(wml::Element& e) {
    if (chance(2)) e.children.emplace_back(wml::Text{text(false)});
  }

  wml::Element do_() {
    wml::Element e{wml::Tag::Do, attributes({wml::Attr::Title, wml::Attr::Href}), {}};
    maybe_text(e);
    return e;
  }

  wml::Element template_() {
    wml::Element e{wml::Tag::Template, attributes({wml::Attr::Id}), {}};
    for (int i = pick(0, 2); i > 0; --i) e.children.emplace_back(do_());
    return e;
  }

  wml::Element paragraph() {
    wml::Element e{wml::Tag::P, {}, {}};
    bool last_text = false;
    for (int i = pick(0, 6); i > 0; --i) {
      const int kind = pick(0, 2);
      if (kind == 0 && !last_text) {
        e.children.emplace_back(wml::Text{text(false)});
        last_text = true;
        continue;
      }
      if (kind == 1) {
        e.children.emplace_back(wml::Element{wml::Tag::Br, {}, {}});
      } else {
        wml::Element a{wml::Tag::A, attributes({wml::Attr::Href, wml::Attr::Title}), {}};
        maybe_text(a);
        e.children.emplace_back(std::move(a));
      }
      last_text = false;
    }
    return e;
  }

  wml::Element card() {
    wml::Element e{wml::Tag::Card, attributes({wml::Attr::Id, wml::Attr::Title}), {}};
    for (int i = pick(0, 4); i > 0; --i) e.children.emplace_back(chance(3) ? do_() : paragraph());
    return e;
  }

  std::mt19937 rng_;
};

}  // namespace testsupport
