#include "wap/wtls.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "wap/crypto.hpp"
#include "wap/error.hpp"

namespace wap::wtls {

namespace {

enum HandshakeMessage : std::uint8_t {
  kClientHello = 0x01,
  kServerHello = 0x02,
  kClientFinished = 0x03,
  kServerAccept = 0x04,
};

enum AlertCode : std::uint8_t {
  kAlertSuiteMismatch = 40,
  kAlertAuthFailure = 51,
};

Bytes label_input(std::string_view label, std::initializer_list<BytesView> parts) {
  Bytes input = to_bytes(label);
  for (auto part : parts) append(input, part);
  return input;
}

Bytes tag_bytes(const crypto::Digest& d) { return Bytes(d.begin(), d.end()); }

Bytes transcript_mac(BytesView key, std::string_view label,
                     std::initializer_list<BytesView> parts) {
  return tag_bytes(crypto::hmac_sha256(key, label_input(label, parts)));
}

Bytes build_client_hello(const Nonce& nonce, const std::string& identity,
                         const std::vector<Suite>& suites) {
  Bytes out{kClientHello};
  append(out, nonce);
  put_u8(out, static_cast<std::uint8_t>(identity.size()));
  append(out, identity);
  put_u8(out, static_cast<std::uint8_t>(suites.size()));
  for (auto s : suites) put_u8(out, static_cast<std::uint8_t>(s));
  return out;
}

struct ClientHello {
  Nonce nonce;
  std::string identity;
  std::vector<Suite> suites;
};

std::optional<ClientHello> parse_client_hello(BytesView b) {
  if (b.size() < 1 + kNonceSize + 1 || b[0] != kClientHello) return std::nullopt;
  ClientHello hello;
  std::copy_n(b.begin() + 1, kNonceSize, hello.nonce.begin());
  std::size_t at = 1 + kNonceSize;
  const std::size_t id_len = b[at++];
  if (b.size() < at + id_len + 1) return std::nullopt;
  hello.identity.assign(b.begin() + at, b.begin() + at + id_len);
  at += id_len;
  const std::size_t n = b[at++];
  if (b.size() != at + n) return std::nullopt;
  for (std::size_t i = 0; i < n; ++i) hello.suites.push_back(static_cast<Suite>(b[at + i]));
  return hello;
}

Bytes encode_plain(ContentType type, BytesView body) {
  return encode_record(WtlsRecord{static_cast<std::uint8_t>(type), 0, Bytes(body.begin(), body.end()),
                                  std::nullopt});
}

}  // namespace

Bytes encode_record(const WtlsRecord& record) {
  if (record.body.size() > 0xFFFF) throw Error(Errc::OversizeDatagram, "record body too long");
  Bytes out;
  out.reserve(kRecordOverhead + record.body.size());
  put_u8(out, record.content_type);
  put_u32(out, record.seq);
  put_u16(out, static_cast<std::uint16_t>(record.body.size()));
  append(out, record.body);
  if (record.mac) append(out, *record.mac);
  return out;
}

WtlsRecord decode_record(BytesView bytes, bool with_mac) {
  if (bytes.size() < kHeaderSize) throw Error(Errc::MacFailure, "record shorter than header");
  WtlsRecord record;
  record.content_type = bytes[0];
  record.seq = get_u32(bytes, 1);
  const std::size_t body_len = get_u16(bytes, 5);
  const std::size_t expected = kHeaderSize + body_len + (with_mac ? kMacSize : 0);
  if (bytes.size() != expected) throw Error(Errc::MacFailure, "record length inconsistent");
  record.body.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + body_len);
  if (with_mac) {
    Mac mac;
    std::copy_n(bytes.begin() + kHeaderSize + body_len, kMacSize, mac.begin());
    record.mac = mac;
  }
  return record;
}

KeyBlock derive_keys(BytesView psk, BytesView client_nonce, BytesView server_nonce) {
  auto derive = [&](std::string_view label) {
    return tag_bytes(crypto::hmac_sha256(psk, label_input(label, {client_nonce, server_nonce})));
  };
  return KeyBlock{derive("c-mac"), derive("s-mac"), derive("c-key"), derive("s-key")};
}

bool ReplayWindow::admissible(std::uint32_t seq) const {
  if (!any_ || seq > highest_) return true;
  const std::uint32_t age = highest_ - seq;
  if (age >= kReplayWindow) return false;
  return (bits_ & (std::uint64_t{1} << age)) == 0;
}

void ReplayWindow::mark(std::uint32_t seq) {
  if (!any_) {
    any_ = true;
    highest_ = seq;
    bits_ = 1;
    return;
  }
  if (seq > highest_) {
    const std::uint32_t shift = seq - highest_;
    bits_ = shift >= kReplayWindow ? 0 : bits_ << shift;
    bits_ |= 1;
    highest_ = seq;
    return;
  }
  const std::uint32_t age = highest_ - seq;
  if (age < kReplayWindow) bits_ |= std::uint64_t{1} << age;
}

SecureSession::SecureSession(Role role, Suite suite, KeyBlock keys, std::uint32_t first_seq)
    : role_(role), suite_(suite), keys_(std::move(keys)), next_seq_(first_seq) {}

Mac SecureSession::compute_mac(BytesView mac_key, std::uint32_t seq, std::uint8_t type,
                               BytesView plaintext) const {
  Bytes input;
  input.reserve(7 + plaintext.size());
  put_u32(input, seq);
  put_u8(input, type);
  put_u16(input, static_cast<std::uint16_t>(plaintext.size()));
  append(input, plaintext);
  return crypto::hmac_sha256(mac_key, input);
}

WtlsRecord SecureSession::seal(std::uint8_t content_type, BytesView plaintext) {
  if (next_seq_ > 0xFFFFFFFFull) throw Error(Errc::SequenceExhausted);
  if (plaintext.size() > 0xFFFF) throw Error(Errc::OversizeDatagram, "plaintext too long");
  const bool client = role_ == Role::Client;
  const auto seq = static_cast<std::uint32_t>(next_seq_);
  WtlsRecord record;
  record.content_type = content_type;
  record.seq = seq;
  record.mac = compute_mac(client ? keys_.client_mac : keys_.server_mac, seq, content_type, plaintext);
  record.body.assign(plaintext.begin(), plaintext.end());
  if (suite_ == Suite::StreamCipherMac) {
    const Bytes ks = crypto::keystream(client ? keys_.client_key : keys_.server_key, seq,
                                       plaintext.size());
    for (std::size_t i = 0; i < ks.size(); ++i) record.body[i] ^= ks[i];
  }
  ++next_seq_;
  return record;
}

Bytes SecureSession::open(const WtlsRecord& record) {
  if (!record.mac) throw Error(Errc::MacFailure, "record carries no MAC");
  const bool from_client = role_ == Role::Server;
  Bytes plaintext = record.body;
  if (suite_ == Suite::StreamCipherMac) {
    const Bytes ks = crypto::keystream(from_client ? keys_.client_key : keys_.server_key,
                                       record.seq, plaintext.size());
    for (std::size_t i = 0; i < ks.size(); ++i) plaintext[i] ^= ks[i];
  }
  const Mac expected = compute_mac(from_client ? keys_.client_mac : keys_.server_mac, record.seq,
                                   record.content_type, plaintext);
  if (!crypto::equal_tags(expected, *record.mac)) throw Error(Errc::MacFailure);
  if (!window_.admissible(record.seq))
    throw Error(Errc::ReplayDetected, "seq " + std::to_string(record.seq));
  window_.mark(record.seq);
  if (record.content_type < 1 || record.content_type > 3)
    throw Error(Errc::UnknownContentType, std::to_string(record.content_type));
  return plaintext;
}

Bytes SecureSession::open(BytesView wire) { return open(decode_record(wire, true)); }

PskTable PskTable::parse(std::string_view text) {
  PskTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto trim = [](std::string_view s) {
      const auto first = s.find_first_not_of(" \t\r");
      if (first == std::string_view::npos) return std::string();
      return std::string(s.substr(first, s.find_last_not_of(" \t\r") - first + 1));
    };
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    const std::string identity = colon == std::string::npos ? std::string() : trim(line.substr(0, colon));
    if (identity.empty())
      throw Error(Errc::ConfigError, "psk line " + std::to_string(line_no) + ": expected identity:hex");
    if (identity.size() > 255)
      throw Error(Errc::ConfigError, "psk line " + std::to_string(line_no) + ": identity too long");
    try {
      table.add(identity, from_hex(trim(line.substr(colon + 1))));
    } catch (const std::invalid_argument& e) {
      throw Error(Errc::ConfigError, "psk line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

PskTable PskTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read psk file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<std::string> PskTable::identities() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

const Bytes* PskTable::find(const std::string& identity) const {
  auto it = entries_.find(identity);
  return it == entries_.end() ? nullptr : &it->second;
}

Nonce random_nonce() {
  Nonce n;
  crypto::random_bytes(n);
  return n;
}

std::vector<Suite> offered_suites(SecurityMode mode) {
  switch (mode) {
    case SecurityMode::Integrity: return {Suite::NullCipherMac};
    case SecurityMode::Full: return {Suite::StreamCipherMac};
    case SecurityMode::Off: break;
  }
  return {};
}

namespace {

struct ClientState {
  enum class Phase { AwaitServerHello, AwaitAccept, Done, Failed } phase = Phase::AwaitServerHello;
  std::optional<Error> error;
  Bytes client_hello;
  Bytes server_hello;
  Bytes client_finished;
  Suite suite = Suite::NullCipherMac;
  KeyBlock keys;
  int retries = 0;
  TimerId timer = 0;
};

}  // namespace

SecureSession client_handshake(DatagramService& lower, const WdpAddress& peer,
                               const std::string& identity, BytesView psk,
                               SecurityMode requested, const HandshakeOptions& options) {
  if (requested == SecurityMode::Off)
    throw std::invalid_argument("a handshake needs a security mode other than Off");
  if (identity.empty() || identity.size() > 255)
    throw std::invalid_argument("psk identity must be 1..255 bytes");

  EventLoop& loop = lower.loop();
  const auto offered = offered_suites(requested);
  const Nonce client_nonce = options.nonce_source();
  const Bytes psk_copy(psk.begin(), psk.end());
  auto state = std::make_shared<ClientState>();
  state->client_hello = build_client_hello(client_nonce, identity, offered);

  using Phase = ClientState::Phase;
  auto fail = [state](Errc code, const std::string& why) {
    state->phase = Phase::Failed;
    state->error = Error(code, why);
  };
  auto current_message = [state]() -> const Bytes& {
    return state->phase == Phase::AwaitAccept ? state->client_finished : state->client_hello;
  };

  std::function<void()> arm;
  arm = [&, state] {
    state->timer = loop.schedule(options.retry_interval, [&, state] {
      if (state->phase != Phase::AwaitServerHello && state->phase != Phase::AwaitAccept) return;
      if (state->retries >= options.max_retries) {
        fail(Errc::HandshakeTimeout, "no answer from " + peer.to_string());
        return;
      }
      ++state->retries;
      lower.send_to(peer, encode_plain(ContentType::Handshake, current_message()));
      arm();
    });
  };

  lower.set_receive_handler([&, state](const WdpAddress& src, Bytes payload) {
    if (src != peer || payload.empty()) return;
    WtlsRecord record;
    try {
      record = decode_record(payload, false);
    } catch (const Error&) {
      return;
    }
    if (record.content_type == static_cast<std::uint8_t>(ContentType::Alert)) {
      if (record.body.size() != 1) return;
      if (state->phase != Phase::AwaitServerHello && state->phase != Phase::AwaitAccept) return;
      if (record.body[0] == kAlertSuiteMismatch)
        fail(Errc::SuiteMismatch, "server accepts none of the offered suites");
      else
        fail(Errc::AuthenticationFailure, "server rejected the handshake");
      return;
    }
    if (record.content_type != static_cast<std::uint8_t>(ContentType::Handshake) ||
        record.body.empty())
      return;
    const Bytes& body = record.body;

    if (body[0] == kServerHello && state->phase == Phase::AwaitServerHello) {
      if (body.size() != 1 + kNonceSize + 1 + kMacSize) return;
      const auto suite = static_cast<Suite>(body[1 + kNonceSize]);
      if (std::find(offered.begin(), offered.end(), suite) == offered.end()) {
        fail(Errc::SuiteMismatch, "server chose a suite that was not offered");
        return;
      }
      const BytesView prefix(body.data(), 1 + kNonceSize + 1);
      const BytesView server_nonce(body.data() + 1, kNonceSize);
      const BytesView verify(body.data() + prefix.size(), kMacSize);
      KeyBlock keys = derive_keys(psk_copy, client_nonce, server_nonce);
      const Bytes expected =
          transcript_mac(keys.server_mac, "server finished", {state->client_hello, prefix});
      if (!crypto::equal_tags(expected, verify)) {
        fail(Errc::AuthenticationFailure, "server Finished MAC mismatch");
        return;
      }
      state->suite = suite;
      state->keys = std::move(keys);
      state->server_hello = body;
      state->client_finished = {kClientFinished};
      append(state->client_finished, transcript_mac(state->keys.client_mac, "client finished",
                                                    {state->client_hello, state->server_hello}));
      state->phase = Phase::AwaitAccept;
      state->retries = 0;
      loop.cancel(state->timer);
      lower.send_to(peer, encode_plain(ContentType::Handshake, state->client_finished));
      arm();
      return;
    }

    if (body[0] == kServerAccept && state->phase == Phase::AwaitAccept) {
      if (body.size() != 1 + kMacSize) return;
      const Bytes expected =
          transcript_mac(state->keys.server_mac, "server accept",
                         {state->client_hello, state->server_hello, state->client_finished});
      if (!crypto::equal_tags(expected, BytesView(body).subspan(1))) return;
      state->phase = Phase::Done;
      loop.cancel(state->timer);
    }
  });

  lower.send_to(peer, encode_plain(ContentType::Handshake, state->client_hello));
  arm();
  loop.run_until([&] { return state->phase == Phase::Done || state->phase == Phase::Failed; },
                 Millis::max());
  loop.cancel(state->timer);
  lower.set_receive_handler(nullptr);
  if (state->phase != Phase::Done) {
    if (state->error) throw *state->error;
    throw Error(Errc::HandshakeTimeout, "loop stopped");
  }
  return SecureSession(Role::Client, state->suite, std::move(state->keys));
}

SecureEndpoint::SecureEndpoint(std::shared_ptr<DatagramService> lower, Role role)
    : lower_(std::move(lower)), role_(role) {}

SecureEndpoint::~SecureEndpoint() { lower_->set_receive_handler(nullptr); }

void SecureEndpoint::install() {
  std::weak_ptr<SecureEndpoint> weak = weak_from_this();
  lower_->set_receive_handler([weak](const WdpAddress& src, Bytes payload) {
    if (auto self = weak.lock()) self->on_datagram(src, std::move(payload));
  });
}

std::shared_ptr<SecureEndpoint> SecureEndpoint::connect(std::shared_ptr<DatagramService> lower,
                                                        const WdpAddress& peer,
                                                        const std::string& identity,
                                                        BytesView psk, SecurityMode requested,
                                                        const HandshakeOptions& options) {
  SecureSession session = client_handshake(*lower, peer, identity, psk, requested, options);
  std::shared_ptr<SecureEndpoint> endpoint(new SecureEndpoint(std::move(lower), Role::Client));
  endpoint->peers_[peer].session.emplace(std::move(session));
  endpoint->stats_.handshakes_completed = 1;
  endpoint->install();
  return endpoint;
}

std::shared_ptr<SecureEndpoint> SecureEndpoint::serve(std::shared_ptr<DatagramService> lower,
                                                      PskTable psks, std::vector<Suite> accepted,
                                                      NonceSource nonce_source) {
  std::shared_ptr<SecureEndpoint> endpoint(new SecureEndpoint(std::move(lower), Role::Server));
  endpoint->psks_ = std::move(psks);
  endpoint->accepted_ = std::move(accepted);
  endpoint->nonce_source_ = std::move(nonce_source);
  endpoint->install();
  return endpoint;
}

void SecureEndpoint::send_plain(const WdpAddress& dst, ContentType type, BytesView body) {
  lower_->send_to(dst, encode_plain(type, body));
}

void SecureEndpoint::send_to(const WdpAddress& dst, BytesView payload) {
  if (payload.size() > max_payload())
    throw Error(Errc::OversizeDatagram, std::to_string(payload.size()) + " > " +
                                            std::to_string(max_payload()));
  Bytes wire;
  {
    std::lock_guard lock(mu_);
    auto it = peers_.find(dst);
    if (it == peers_.end() || !it->second.session)
      throw Error(Errc::WrongState, "no secure session with " + dst.to_string());
    wire = encode_record(it->second.session->seal(ContentType::Application, payload));
  }
  lower_->send_to(dst, wire);
}

void SecureEndpoint::set_receive_handler(Handler handler) {
  std::lock_guard lock(mu_);
  handler_ = std::move(handler);
}

std::size_t SecureEndpoint::max_payload() const {
  const std::size_t lower = lower_->max_payload();
  return lower > kRecordOverhead ? lower - kRecordOverhead : 0;
}

bool SecureEndpoint::has_session(const WdpAddress& peer) const {
  std::lock_guard lock(mu_);
  auto it = peers_.find(peer);
  return it != peers_.end() && it->second.session.has_value();
}

std::size_t SecureEndpoint::session_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(peers_.begin(), peers_.end(), [](const auto& p) { return p.second.session.has_value(); }));
}

SecureStats SecureEndpoint::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void SecureEndpoint::on_datagram(const WdpAddress& src, Bytes payload) {
  if (payload.empty()) return;
  const std::uint8_t type = payload[0];
  if (type == static_cast<std::uint8_t>(ContentType::Handshake) ||
      type == static_cast<std::uint8_t>(ContentType::Alert)) {
    if (role_ != Role::Server || type != static_cast<std::uint8_t>(ContentType::Handshake))
      return;
    WtlsRecord record;
    try {
      record = decode_record(payload, false);
    } catch (const Error&) {
      return;
    }
    on_server_handshake(src, record);
    return;
  }

  Bytes plaintext;
  Handler handler;
  {
    std::lock_guard lock(mu_);
    auto it = peers_.find(src);
    if (it == peers_.end() || !it->second.session) {
      ++stats_.no_session;
      return;
    }
    try {
      WtlsRecord record = decode_record(payload, true);
      plaintext = it->second.session->open(record);
      if (record.content_type != static_cast<std::uint8_t>(ContentType::Application)) return;
    } catch (const Error& e) {
      if (e.code() == Errc::ReplayDetected)
        ++stats_.replays;
      else
        ++stats_.mac_failures;
      return;
    }
    handler = handler_;
  }
  if (handler) handler(src, std::move(plaintext));
}

void SecureEndpoint::on_server_handshake(const WdpAddress& src, const WtlsRecord& record) {
  const Bytes& body = record.body;
  if (body.empty()) return;
  std::optional<std::pair<ContentType, Bytes>> reply;
  {
    std::lock_guard lock(mu_);
    Peer& peer = peers_[src];

    if (body[0] == kClientHello) {
      auto hello = parse_client_hello(body);
      if (!hello) return;
      if (peer.pending && peer.pending->client_nonce == hello->nonce) {
        reply.emplace(ContentType::Handshake, peer.pending->server_hello);
      } else if (const Bytes* psk = psks_.find(hello->identity); psk == nullptr) {
        peer.pending.reset();
        ++stats_.handshakes_failed;
        reply.emplace(ContentType::Alert, Bytes{kAlertAuthFailure});
      } else {
        auto chosen = std::find_if(accepted_.begin(), accepted_.end(), [&](Suite s) {
          return std::find(hello->suites.begin(), hello->suites.end(), s) != hello->suites.end();
        });
        if (chosen == accepted_.end()) {
          peer.pending.reset();
          ++stats_.handshakes_failed;
          reply.emplace(ContentType::Alert, Bytes{kAlertSuiteMismatch});
        } else {
          const Nonce server_nonce = nonce_source_();
          PendingHandshake pending{body, {}, hello->nonce, *chosen,
                                   derive_keys(*psk, hello->nonce, server_nonce)};
          Bytes server_hello{kServerHello};
          append(server_hello, server_nonce);
          put_u8(server_hello, static_cast<std::uint8_t>(*chosen));
          append(server_hello, transcript_mac(pending.keys.server_mac, "server finished",
                                              {pending.client_hello, server_hello}));
          pending.server_hello = server_hello;
          peer.pending = std::move(pending);
          reply.emplace(ContentType::Handshake, std::move(server_hello));
        }
      }
    } else if (body[0] == kClientFinished && body.size() == 1 + kMacSize) {
      if (peer.pending) {
        const PendingHandshake& p = *peer.pending;
        const Bytes expected =
            transcript_mac(p.keys.client_mac, "client finished", {p.client_hello, p.server_hello});
        if (!crypto::equal_tags(expected, BytesView(body).subspan(1))) {
          peer.pending.reset();
          ++stats_.handshakes_failed;
          reply.emplace(ContentType::Alert, Bytes{kAlertAuthFailure});
        } else {
          Bytes accept{kServerAccept};
          append(accept, transcript_mac(p.keys.server_mac, "server accept",
                                        {p.client_hello, p.server_hello, body}));
          peer.session.emplace(Role::Server, p.suite, p.keys);
          peer.accept_message = accept;
          peer.finished_seen = body;
          peer.pending.reset();
          ++stats_.handshakes_completed;
          reply.emplace(ContentType::Handshake, std::move(accept));
        }
      } else if (peer.session && body == peer.finished_seen) {
        reply.emplace(ContentType::Handshake, peer.accept_message);
      }
    }
    if (!peer.pending && !peer.session) peers_.erase(src);
  }
  if (reply) send_plain(src, reply->first, reply->second);
}

}  // namespace wap::wtls
