#include "wap/useragent.hpp"

#include <sstream>

namespace wap::ua {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

class Renderer {
 public:
  RenderedDeck run(const wml::Document& doc) {
    const wml::Element* card = nullptr;
    std::vector<const wml::Element*> templates;
    for (const auto& node : doc.root.children) {
      const wml::Element* e = node.element();
      if (!e) continue;
      if (e->tag == wml::Tag::Card && !card) card = e;
      if (e->tag == wml::Tag::Template) templates.push_back(e);
    }
    if (!card) throw Error(Errc::EmptyDeck, "deck has no card");

    for (const auto& node : card->children) {
      const wml::Element* e = node.element();
      if (!e) continue;
      if (e->tag == wml::Tag::P)
        paragraph(*e);
      else if (e->tag == wml::Tag::Do)
        action(*e);
    }
    for (const wml::Element* t : templates)
      for (const auto& node : t->children)
        if (const wml::Element* e = node.element(); e && e->tag == wml::Tag::Do) action(*e);
    return std::move(deck_);
  }

 private:
  void add_text(std::string_view text) {
    for (char c : text) {
      if (is_space(c)) {
        pending_space_ = !line_.empty();
      } else {
        if (pending_space_) line_.push_back(' ');
        pending_space_ = false;
        line_.push_back(c);
      }
    }
  }

  void end_line() {
    deck_.lines.push_back(std::move(line_));
    line_.clear();
    pending_space_ = false;
  }

  static std::string collapsed_text(const wml::Element& e) {
    std::string out;
    bool space = false;
    for (const auto& node : e.children) {
      const wml::Text* t = node.text();
      if (!t) {
        space = !out.empty();
        continue;
      }
      for (char c : t->value) {
        if (is_space(c)) {
          space = !out.empty();
        } else {
          if (space) out.push_back(' ');
          space = false;
          out.push_back(c);
        }
      }
    }
    return out;
  }

  void paragraph(const wml::Element& p) {
    for (const auto& node : p.children) {
      if (const wml::Text* t = node.text()) {
        add_text(t->value);
        continue;
      }
      const wml::Element& e = *node.element();
      if (e.tag == wml::Tag::Br) {
        end_line();
      } else if (e.tag == wml::Tag::A) {
        const std::size_t index = deck_.links.size() + 1;
        const std::string* href = e.attribute(wml::Attr::Href);
        std::string label = collapsed_text(e);
        // Whitespace-only text between links is gone after parsing.
        pending_space_ = !line_.empty();
        add_text("[" + std::to_string(index) + "]");
        line_.push_back(' ');
        line_ += label;
        pending_space_ = false;
        deck_.links.push_back(Link{index, href ? *href : std::string(), std::move(label)});
      }
    }
    end_line();
  }

  void action(const wml::Element& d) {
    std::string label = collapsed_text(d);
    if (label.empty()) {
      const std::string* title = d.attribute(wml::Attr::Title);
      label = title ? *title : "action";
    }
    deck_.lines.push_back("[action] " + label);
  }

  RenderedDeck deck_;
  std::string line_;
  bool pending_space_ = false;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

RenderedDeck render(const wml::Document& doc) { return Renderer{}.run(doc); }

RenderedDeck render_text(std::string_view text) {
  RenderedDeck deck;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      deck.lines.push_back(std::move(line));
      line.clear();
    } else {
      line.push_back(c);
    }
  }
  if (!line.empty()) deck.lines.push_back(std::move(line));
  return deck;
}

std::string resolve_url(const std::string& base, const std::string& href) {
  if (href.find("://") != std::string::npos) return href;
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) return href;
  const auto path_start = base.find('/', scheme_end + 3);
  const std::string origin = base.substr(0, path_start);
  if (href.empty()) return base;
  if (href.front() == '/') return origin + href;
  std::string dir = path_start == std::string::npos ? "/" : base.substr(path_start);
  dir = dir.substr(0, dir.find_first_of("?#"));
  dir = dir.substr(0, dir.rfind('/') + 1);
  return origin + dir + href;
}

// ---------------------------------------------------------------------------

TracedService::TracedService(std::shared_ptr<DatagramService> inner, TraceSink sink, std::string layer)
    : inner_(std::move(inner)), sink_(std::move(sink)), layer_(std::move(layer)) {}

void TracedService::send_to(const WdpAddress& dst, BytesView payload) {
  if (sink_) sink_(layer_ + " tx " + dst.to_string() + " len=" + std::to_string(payload.size()));
  inner_->send_to(dst, payload);
}

void TracedService::set_receive_handler(Handler handler) {
  inner_->set_receive_handler([this, handler = std::move(handler)](const WdpAddress& src, Bytes payload) {
    if (sink_) sink_(layer_ + " rx " + src.to_string() + " len=" + std::to_string(payload.size()));
    if (handler) handler(src, std::move(payload));
  });
}

// ---------------------------------------------------------------------------

std::string FetchResult::content_type() const {
  auto ct = reply.header("Content-Type");
  return ct ? *ct : std::string();
}

RenderedDeck render_result(const FetchResult& result) {
  if (result.document) return render(*result.document);
  return render_text(to_string(result.reply.body));
}

UserAgent::UserAgent(std::shared_ptr<wdp::Wdp> wdp, bearer::BearerAddress gateway, FetchOptions options)
    : wdp_(std::move(wdp)), gateway_(std::move(gateway)), options_(std::move(options)) {}

UserAgent::~UserAgent() {
  if (client_ && client_->state() != wsp::SessionState::Closed) {
    try {
      client_->disconnect();
    } catch (const std::exception&) {
    }
  }
}

std::shared_ptr<DatagramService> UserAgent::secure(std::shared_ptr<DatagramService> lower,
                                                   std::uint16_t port) {
  if (options_.trace) lower = std::make_shared<TracedService>(lower, options_.trace);
  if (options_.security == wtls::SecurityMode::Off) return lower;
  auto endpoint = wtls::SecureEndpoint::connect(lower, WdpAddress{gateway_, port}, options_.identity,
                                                options_.psk, options_.security, options_.handshake);
  if (options_.trace)
    options_.trace("wtls session established with " + WdpAddress{gateway_, port}.to_string() +
                   (options_.security == wtls::SecurityMode::Full ? " suite=0x01" : " suite=0x00"));
  return endpoint;
}

void UserAgent::open_session() {
  if (!client_) {
    auto port = wdp_->bind(options_.local_port);
    provider_ = wtp::Provider::create(secure(port, options_.gateway_session_port), options_.policy);
    if (options_.trace)
      provider_->set_trace([sink = options_.trace](const wtp::TraceEvent& e) { sink("wtp " + e.to_string()); });
    client_ = std::make_unique<wsp::Client>(provider_, WdpAddress{gateway_, options_.gateway_session_port});
  }
  if (client_->state() == wsp::SessionState::Closed) {
    if (options_.trace) options_.trace("wsp tx Connect");
    client_->connect(options_.capabilities);
    if (options_.trace) options_.trace("wsp session " + std::to_string(client_->session_id()));
  } else if (client_->state() == wsp::SessionState::Suspended) {
    client_->resume();
  }
}

FetchResult UserAgent::finish(std::string url, wsp::Reply reply) {
  if (options_.trace) options_.trace("wsp rx Reply " + std::to_string(reply.status));
  FetchResult result{std::move(url), std::move(reply), std::nullopt};
  if (lower(result.content_type()) == "application/wmlc") result.document = wml::decode(result.reply.body);
  last_url_ = result.url;
  return result;
}

FetchResult UserAgent::fetch(const std::string& url) {
  if (options_.trace) options_.trace("wsp tx Get " + url);
  if (options_.connectionless) {
    if (!connectionless_) {
      auto port = wdp_->bind(static_cast<std::uint16_t>(options_.local_port + 1));
      connectionless_service_ = secure(port, options_.gateway_connectionless_port);
      connectionless_ = std::make_unique<wsp::ConnectionlessClient>(connectionless_service_);
    }
    return finish(url, connectionless_->get(WdpAddress{gateway_, options_.gateway_connectionless_port},
                                            url, options_.headers, options_.timeout));
  }
  open_session();
  return finish(url, client_->get(url, options_.headers));
}

std::pair<FetchResult, RenderedDeck> UserAgent::navigate(const RenderedDeck& deck, std::size_t index) {
  if (index == 0 || index > deck.links.size())
    throw Error(Errc::NoSuchLink, "no link " + std::to_string(index));
  const Link& link = deck.links[index - 1];
  FetchResult result = fetch(last_url_.empty() ? link.href : resolve_url(last_url_, link.href));
  RenderedDeck next = render_result(result);
  return {std::move(result), std::move(next)};
}

void UserAgent::suspend() {
  if (!client_) throw Error(Errc::WrongState, "no session");
  client_->suspend();
}

void UserAgent::resume() {
  if (!client_) throw Error(Errc::WrongState, "no session");
  client_->resume();
}

void UserAgent::disconnect() {
  if (client_) client_->disconnect();
}

}  // namespace wap::ua
