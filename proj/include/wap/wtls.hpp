#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "wap/datagram_service.hpp"

namespace wap::wtls {

enum class SecurityMode { Off, Integrity, Full };

enum class ContentType : std::uint8_t { Handshake = 1, Alert = 2, Application = 3 };

enum class Suite : std::uint8_t { NullCipherMac = 0x00, StreamCipherMac = 0x01 };

enum class Role { Client, Server };

inline constexpr std::size_t kHeaderSize = 7;
inline constexpr std::size_t kMacSize = 32;
inline constexpr std::size_t kNonceSize = 16;
inline constexpr std::size_t kReplayWindow = 64;
inline constexpr std::size_t kRecordOverhead = kHeaderSize + kMacSize;

using Mac = std::array<std::uint8_t, kMacSize>;
using Nonce = std::array<std::uint8_t, kNonceSize>;

/// Wire layout: content_type (1), seq (4, BE), body_len (2, BE), body, then a
/// 32-byte MAC on protected records. Handshake and alert records exchanged
/// before keys exist carry no MAC.
struct WtlsRecord {
  std::uint8_t content_type = 0;
  std::uint32_t seq = 0;
  Bytes body;
  std::optional<Mac> mac;

  bool operator==(const WtlsRecord&) const = default;
};

Bytes encode_record(const WtlsRecord& record);
/// `with_mac` selects the protected layout. Any length inconsistency is
/// reported as Error(MacFailure): a record that does not parse cannot be
/// authentic.
WtlsRecord decode_record(BytesView bytes, bool with_mac);

struct KeyBlock {
  Bytes client_mac;
  Bytes server_mac;
  Bytes client_key;
  Bytes server_key;

  bool operator==(const KeyBlock&) const = default;
};

/// Each key is HMAC-SHA256(psk, label || client_nonce || server_nonce) for the
/// labels "c-mac", "s-mac", "c-key", "s-key".
KeyBlock derive_keys(BytesView psk, BytesView client_nonce, BytesView server_nonce);

/// Sliding 64-entry anti-replay bitmap.
class ReplayWindow {
 public:
  /// True if `seq` would be admitted: newer than anything seen, or within the
  /// window behind the highest and not yet seen.
  bool admissible(std::uint32_t seq) const;
  void mark(std::uint32_t seq);

 private:
  bool any_ = false;
  std::uint32_t highest_ = 0;
  std::uint64_t bits_ = 0;  // bit i set <=> highest_ - i seen
};

/// Record protection state for one established session. One sealer and one
/// opener; not safe for concurrent sealing.
class SecureSession {
 public:
  SecureSession(Role role, Suite suite, KeyBlock keys, std::uint32_t first_seq = 0);

  WtlsRecord seal(std::uint8_t content_type, BytesView plaintext);
  WtlsRecord seal(ContentType type, BytesView plaintext) {
    return seal(static_cast<std::uint8_t>(type), plaintext);
  }
  /// Verifies the MAC before anything else, then the replay window, then the
  /// content type. Throws Error(MacFailure | ReplayDetected |
  /// UnknownContentType).
  Bytes open(const WtlsRecord& record);
  /// Decodes the protected layout first; malformed bytes are MacFailure.
  Bytes open(BytesView wire);

  Role role() const { return role_; }
  Suite suite() const { return suite_; }
  SecurityMode mode() const {
    return suite_ == Suite::StreamCipherMac ? SecurityMode::Full : SecurityMode::Integrity;
  }
  const KeyBlock& keys() const { return keys_; }
  std::uint64_t next_send_seq() const { return next_seq_; }

 private:
  Mac compute_mac(BytesView mac_key, std::uint32_t seq, std::uint8_t type,
                  BytesView plaintext) const;

  Role role_;
  Suite suite_;
  KeyBlock keys_;
  std::uint64_t next_seq_;
  ReplayWindow window_;
};

/// Identity to pre-shared secret. File format: one `identity:hex-secret` per
/// line; blank lines and lines starting with '#' are ignored.
class PskTable {
 public:
  static PskTable parse(std::string_view text);
  static PskTable load(const std::filesystem::path& path);

  void add(std::string identity, Bytes secret) { entries_[std::move(identity)] = std::move(secret); }
  const Bytes* find(const std::string& identity) const;
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> identities() const;

 private:
  std::map<std::string, Bytes> entries_;
};

using NonceSource = std::function<Nonce()>;
Nonce random_nonce();

struct HandshakeOptions {
  Millis retry_interval{500};
  int max_retries = 4;
  NonceSource nonce_source = random_nonce;
};

/// The suites a client offers for a requested mode.
std::vector<Suite> offered_suites(SecurityMode mode);

/// Client side of the PSK handshake over `lower`, which must not be in use by
/// anything else while this runs (its receive handler is borrowed). Drives the
/// loop until done. Throws Error(HandshakeTimeout | AuthenticationFailure |
/// SuiteMismatch).
SecureSession client_handshake(DatagramService& lower, const WdpAddress& peer,
                               const std::string& identity, BytesView psk,
                               SecurityMode requested, const HandshakeOptions& options = {});

struct SecureStats {
  std::uint64_t mac_failures = 0;
  std::uint64_t replays = 0;
  std::uint64_t no_session = 0;
  std::uint64_t handshakes_completed = 0;
  std::uint64_t handshakes_failed = 0;
};

/// A DatagramService whose payloads travel as protected application records.
/// A client instance talks to one peer; a server instance answers handshakes
/// from any peer and keeps one session per peer address.
class SecureEndpoint : public DatagramService,
                       public std::enable_shared_from_this<SecureEndpoint> {
 public:
  /// Runs client_handshake() and returns the wrapped endpoint.
  static std::shared_ptr<SecureEndpoint> connect(std::shared_ptr<DatagramService> lower,
                                                 const WdpAddress& peer,
                                                 const std::string& identity, BytesView psk,
                                                 SecurityMode requested,
                                                 const HandshakeOptions& options = {});
  /// `accepted` lists the suites this server agrees to, in preference order.
  static std::shared_ptr<SecureEndpoint> serve(std::shared_ptr<DatagramService> lower,
                                               PskTable psks, std::vector<Suite> accepted,
                                               NonceSource nonce_source = random_nonce);

  ~SecureEndpoint() override;

  /// Throws Error(WrongState) if there is no session with `dst`.
  void send_to(const WdpAddress& dst, BytesView payload) override;
  void set_receive_handler(Handler handler) override;
  std::size_t max_payload() const override;
  WdpAddress local_address() const override { return lower_->local_address(); }
  EventLoop& loop() override { return lower_->loop(); }

  bool has_session(const WdpAddress& peer) const;
  std::size_t session_count() const;
  SecureStats stats() const;

 private:
  struct PendingHandshake {
    Bytes client_hello;
    Bytes server_hello;
    Nonce client_nonce;
    Suite suite;
    KeyBlock keys;
  };
  struct Peer {
    std::optional<PendingHandshake> pending;
    std::optional<SecureSession> session;
    Bytes accept_message;  // resent on a duplicate ClientFinished
    Bytes finished_seen;
  };

  SecureEndpoint(std::shared_ptr<DatagramService> lower, Role role);
  void install();
  void on_datagram(const WdpAddress& src, Bytes payload);
  void on_server_handshake(const WdpAddress& src, const WtlsRecord& record);
  void send_plain(const WdpAddress& dst, ContentType type, BytesView body);

  std::shared_ptr<DatagramService> lower_;
  Role role_;
  PskTable psks_;
  std::vector<Suite> accepted_;
  NonceSource nonce_source_;

  mutable std::mutex mu_;
  std::unordered_map<WdpAddress, Peer> peers_;
  Handler handler_;
  SecureStats stats_;
};

}  // namespace wap::wtls
