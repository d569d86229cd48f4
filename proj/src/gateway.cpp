#include "wap/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <system_error>
#include <thread>

#include "wap/udp_bearer.hpp"
#include "wap/wml.hpp"

namespace wap::gateway {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void config_error(const std::string& what) { throw Error(Errc::ConfigError, what); }

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) config_error(key + ": not a number: '" + value + "'");
  return out;
}

std::uint16_t parse_port(const std::string& key, const std::string& value) {
  const long port = parse_number<long>(key, value);
  if (port < 1 || port > 65535) config_error(key + ": port out of range");
  return static_cast<std::uint16_t>(port);
}

const std::string* find_header(const wsp::Headers& headers, std::string_view name) {
  for (const auto& [n, v] : headers)
    if (lower(n) == lower(name)) return &v;
  return nullptr;
}

bool hop_by_hop(std::string_view name) {
  static constexpr std::string_view kNames[] = {
      "connection", "keep-alive",          "proxy-authenticate", "proxy-authorization",
      "te",         "trailer",             "transfer-encoding",  "upgrade",
      "content-length",
  };
  const std::string n = lower(name);
  return std::find(std::begin(kNames), std::end(kNames), n) != std::end(kNames);
}

wsp::Reply text_reply(std::uint16_t status, const std::string& text) {
  wsp::Reply reply;
  reply.status = status;
  reply.headers = {{"Content-Type", "text/plain"}};
  reply.body = to_bytes(text);
  return reply;
}

std::string timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0')
      << ms.count() << 'Z';
  return out.str();
}

std::string_view level_name(Logger::Level level) {
  switch (level) {
    case Logger::Level::Debug: return "debug";
    case Logger::Level::Info: return "info";
    case Logger::Level::Warn: return "warn";
    case Logger::Level::Error: return "error";
  }
  return "info";
}

}  // namespace

std::string_view to_string(BearerKind kind) { return kind == BearerKind::Sim ? "sim" : "udp"; }

std::string_view to_string(Security security) {
  switch (security) {
    case Security::Off: return "off";
    case Security::Mac: return "mac";
    case Security::Full: return "full";
  }
  return "off";
}

// ---------------------------------------------------------------------------
// Config

void GatewayConfig::validate() const {
  if (listen_port == 0 || connectionless_port == 0) config_error("ports must be nonzero");
  if (listen_port == connectionless_port) config_error("listen_port and connectionless_port must differ");
  if (security != Security::Off && psk_file.empty()) config_error("psk_file is required when security is on");
  if (http_timeout_ms <= 0) config_error("http_timeout_ms must be positive");
  if (session_ttl_s <= 0) config_error("session_ttl_s must be positive");
  Logger::parse_level(log_level);
  try {
    impairments.validate();
  } catch (const Error& e) {
    config_error(std::string("impairments: ") + e.what());
  }
  const bearer::ImpairmentProfile clean;
  if (bearer == BearerKind::Udp &&
      (impairments.loss_prob != clean.loss_prob || impairments.dup_prob != clean.dup_prob ||
       impairments.reorder_prob != clean.reorder_prob || impairments.delay_ms != clean.delay_ms ||
       impairments.jitter_ms != clean.jitter_ms))
    config_error("impairments apply to the sim bearer only");
}

void apply_setting(GatewayConfig& c, const std::string& key, const std::string& value) {
  if (key == "listen_port") {
    c.listen_port = parse_port(key, value);
  } else if (key == "connectionless_port") {
    c.connectionless_port = parse_port(key, value);
  } else if (key == "bearer") {
    if (value == "sim")
      c.bearer = BearerKind::Sim;
    else if (value == "udp")
      c.bearer = BearerKind::Udp;
    else
      config_error("bearer must be sim or udp");
  } else if (key == "security") {
    if (value == "off")
      c.security = Security::Off;
    else if (value == "mac")
      c.security = Security::Mac;
    else if (value == "full")
      c.security = Security::Full;
    else
      config_error("security must be off, mac or full");
  } else if (key == "psk_file") {
    c.psk_file = value;
  } else if (key == "http_timeout_ms") {
    c.http_timeout_ms = parse_number<int>(key, value);
  } else if (key == "session_ttl_s") {
    c.session_ttl_s = parse_number<int>(key, value);
  } else if (key == "log_level") {
    c.log_level = value;
  } else if (key == "bind_address") {
    c.bind_address = value;
  } else if (key == "content_root") {
    c.content_root = value;
  } else if (key == "loss_prob") {
    c.impairments.loss_prob = parse_number<double>(key, value);
  } else if (key == "dup_prob") {
    c.impairments.dup_prob = parse_number<double>(key, value);
  } else if (key == "reorder_prob") {
    c.impairments.reorder_prob = parse_number<double>(key, value);
  } else if (key == "delay_ms") {
    c.impairments.delay_ms = parse_number<int>(key, value);
  } else if (key == "jitter_ms") {
    c.impairments.jitter_ms = parse_number<int>(key, value);
  } else if (key == "mtu_bytes") {
    c.impairments.mtu_bytes = parse_number<std::size_t>(key, value);
  } else if (key == "seed") {
    c.impairments.seed = parse_number<std::uint64_t>(key, value);
  } else {
    config_error("unknown key '" + key + "'");
  }
}

GatewayConfig parse_config(std::string_view text, GatewayConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      config_error("line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(base, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    } catch (const Error& e) {
      config_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

GatewayConfig load_config(const std::filesystem::path& path, GatewayConfig base) {
  std::ifstream in(path);
  if (!in) config_error("cannot read config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::move(base));
}

// ---------------------------------------------------------------------------
// Translation

HttpUrl parse_http_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.size() <= kScheme.size() || lower(url.substr(0, kScheme.size())) != kScheme)
    throw Error(Errc::BadUri, "not an absolute http URL: " + url);
  const std::string rest = url.substr(kScheme.size());
  const auto slash = rest.find_first_of("/?");
  std::string authority = rest.substr(0, slash);
  HttpUrl out;
  out.target = slash == std::string::npos ? "/" : rest.substr(slash);
  if (out.target.front() == '?') out.target.insert(0, "/");
  if (authority.find('@') != std::string::npos) throw Error(Errc::BadUri, "userinfo not supported");
  if (const auto colon = authority.rfind(':'); colon != std::string::npos) {
    const std::string port = authority.substr(colon + 1);
    authority.resize(colon);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (port.empty() || ec != std::errc{} || ptr != port.data() + port.size() || value == 0 ||
        value > 65535)
      throw Error(Errc::BadUri, "bad port in " + url);
    out.port = static_cast<std::uint16_t>(value);
  }
  if (authority.empty()) throw Error(Errc::BadUri, "missing host in " + url);
  out.host = authority;
  return out;
}

HttpExchange translate_request(const wsp::Request& request) {
  parse_http_url(request.uri);
  HttpExchange ex;
  switch (request.method) {
    case wsp::PduType::Get: ex.method = "GET"; break;
    case wsp::PduType::Post: ex.method = "POST"; break;
    default: throw Error(Errc::BadUri, "unsupported method");
  }
  ex.url = request.uri;
  for (const auto& [name, value] : request.headers)
    if (!hop_by_hop(name)) ex.request_headers.emplace_back(name, value);
  ex.request_headers.emplace_back("Via", "wap-gateway/1");
  ex.request_body = request.body;
  return ex;
}

wsp::Reply translate_response(const HttpExchange& ex) {
  wsp::Reply reply;
  reply.status = static_cast<std::uint16_t>(ex.status);
  reply.body = ex.response_body;

  std::string media_type;
  if (const std::string* ct = find_header(ex.response_headers, "Content-Type"))
    media_type = lower(trim(ct->substr(0, ct->find(';'))));
  const bool wml_body = media_type == "text/vnd.wap.wml";

  if (wml_body) {
    try {
      reply.body = wml::encode(wml::parse(wap::to_string(ex.response_body)));
    } catch (const std::exception& e) {
      return text_reply(502, std::string("content encoding failed: ") + e.what());
    }
  }

  for (const auto& [name, value] : ex.response_headers) {
    if (hop_by_hop(name)) continue;
    const std::string canonical = wsp::canonical_header_name(name);
    if (canonical == "Content-Type") {
      // Bare media types compact to one byte; parameters would force text.
      reply.headers.emplace_back(canonical, wml_body ? "application/wmlc"
                                            : wsp::content_type_code(media_type) ? media_type
                                                                                 : value);
    } else {
      reply.headers.emplace_back(canonical, value);
    }
  }
  reply.headers.emplace_back("Content-Length", std::to_string(reply.body.size()));
  return reply;
}

wsp::Reply failure_reply(const Error& error) {
  switch (error.code()) {
    case Errc::BadUri: return text_reply(400, error.what());
    case Errc::OriginTimeout: return text_reply(504, error.what());
    default: return text_reply(502, error.what());
  }
}

OriginFn http_origin() { return fetch_origin; }

OriginFn static_origin(std::filesystem::path root) {
  return [root = std::move(root)](HttpExchange& ex, Millis) {
    const HttpUrl url = parse_http_url(ex.url);
    std::string path = url.target.substr(0, url.target.find('?'));
    std::filesystem::path rel = std::filesystem::path(path).relative_path().lexically_normal();
    const bool escapes = !rel.empty() && *rel.begin() == "..";
    std::filesystem::path file = root / rel;
    if (!escapes && std::filesystem::is_directory(file)) file /= "index.wml";
    std::ifstream in(file, std::ios::binary);
    if (escapes || !in) {
      ex.status = 404;
      ex.response_headers = {{"Content-Type", "text/plain"}};
      ex.response_body = to_bytes("not found: " + path);
      return;
    }
    std::stringstream data;
    data << in.rdbuf();
    const std::string ext = file.extension().string();
    ex.status = 200;
    ex.response_headers = {{"Content-Type", ext == ".wml"   ? "text/vnd.wap.wml"
                                            : ext == ".txt" ? "text/plain"
                                                            : "application/octet-stream"}};
    ex.response_body = to_bytes(data.str());
  };
}

// ---------------------------------------------------------------------------
// Logging

Logger::Level Logger::parse_level(std::string_view name) {
  if (name == "debug") return Level::Debug;
  if (name == "info") return Level::Info;
  if (name == "warn") return Level::Warn;
  if (name == "error") return Level::Error;
  config_error("unknown log_level '" + std::string(name) + "'");
}

void Logger::log(Level level, const std::string& message) {
  if (level < level_) return;
  std::lock_guard lock(mu_);
  out_ << timestamp() << ' ' << level_name(level) << ' ' << message << '\n' << std::flush;
}

void Logger::request(const wsp::RequestRecord& r) {
  if (Level::Info < level_) return;
  std::string method(wsp::to_string(r.method));
  std::transform(method.begin(), method.end(), method.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::lock_guard lock(mu_);
  out_ << timestamp() << " info " << r.session_id << ' ' << r.tid << ' ' << method << ' ' << r.uri
       << ' ' << r.status << ' ' << r.duration.count() << '\n'
       << std::flush;
}

// ---------------------------------------------------------------------------
// Gateway

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n) {
    for (std::size_t i = 0; i < std::max<std::size_t>(n, 1); ++i)
      threads_.emplace_back([this] { work(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  void submit(std::function<void()> job) {
    {
      std::lock_guard lock(mu_);
      jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

 private:
  void work() {
    while (true) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
        if (jobs_.empty()) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      job();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> jobs_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

Gateway::Gateway(std::shared_ptr<DatagramService> session_service,
                 std::shared_ptr<DatagramService> connectionless_service, GatewayOptions options)
    : options_(std::move(options)) {
  if (!options_.origin) options_.origin = http_origin();
  provider_ = wtp::Provider::create(std::move(session_service), options_.policy);
  wsp::ServerOptions server_options;
  server_options.session_ttl = options_.session_ttl;
  server_options.on_request_done = options_.on_request_done;
  server_ = wsp::Server::create(
      provider_, std::move(connectionless_service),
      [this](const wsp::Request& request, wsp::Responder respond) { handle(request, std::move(respond)); },
      server_options);
  pool_ = std::make_unique<WorkerPool>(options_.workers);
}

Gateway::~Gateway() {
  // Joins the workers; their replies are posted to a loop that may not run
  // again, which is harmless because the server is held weakly there.
  pool_.reset();
}

bool Gateway::idle() const { return in_flight_.load() == 0 && provider_->active_transactions() == 0; }

void Gateway::handle(const wsp::Request& request, wsp::Responder respond) {
  if (draining_) {
    respond(text_reply(503, "gateway shutting down"));
    return;
  }
  HttpExchange exchange;
  try {
    exchange = translate_request(request);
  } catch (const Error& e) {
    respond(failure_reply(e));
    return;
  }
  ++in_flight_;
  auto hold = std::make_shared<EventLoop::Hold>(provider_->loop().hold());
  pool_->submit([this, exchange = std::move(exchange), respond = std::move(respond), hold]() mutable {
    wsp::Reply reply;
    try {
      options_.origin(exchange, options_.http_timeout);
      reply = translate_response(exchange);
    } catch (const Error& e) {
      reply = failure_reply(e);
    } catch (const std::exception& e) {
      reply = text_reply(502, e.what());
    }
    respond(std::move(reply));
    --in_flight_;
    hold->release();
  });
}

// ---------------------------------------------------------------------------
// Service assembly

std::unique_ptr<GatewayService> GatewayService::start(const GatewayConfig& config,
                                                      std::shared_ptr<bearer::Bearer> bearer,
                                                      Logger* log, OriginFn origin,
                                                      wtp::RetransmissionPolicy policy) {
  config.validate();
  std::unique_ptr<GatewayService> svc(new GatewayService());
  svc->bearer_ = bearer;
  svc->wdp_ = wdp::Wdp::create(std::move(bearer));
  svc->session_port_ = svc->wdp_->bind(config.listen_port);
  svc->connectionless_port_ = svc->wdp_->bind(config.connectionless_port);

  std::shared_ptr<DatagramService> sessions = svc->session_port_;
  std::shared_ptr<DatagramService> connectionless = svc->connectionless_port_;
  if (config.security != Security::Off) {
    const wtls::PskTable psks = wtls::PskTable::load(config.psk_file);
    const std::vector<wtls::Suite> suites = config.security == Security::Full
                                                ? std::vector{wtls::Suite::StreamCipherMac}
                                                : std::vector{wtls::Suite::NullCipherMac};
    svc->secure_sessions_ = wtls::SecureEndpoint::serve(sessions, psks, suites);
    svc->secure_connectionless_ = wtls::SecureEndpoint::serve(connectionless, psks, suites);
    sessions = svc->secure_sessions_;
    connectionless = svc->secure_connectionless_;
  }

  GatewayOptions options;
  options.http_timeout = Millis{config.http_timeout_ms};
  options.session_ttl = std::chrono::seconds{config.session_ttl_s};
  options.policy = policy;
  if (origin)
    options.origin = std::move(origin);
  else if (!config.content_root.empty())
    options.origin = static_origin(config.content_root);
  else
    options.origin = http_origin();
  if (log) options.on_request_done = [log](const wsp::RequestRecord& r) { log->request(r); };
  svc->gateway_ = std::make_unique<Gateway>(sessions, connectionless, std::move(options));
  return svc;
}

bool GatewayService::drain(Millis limit) {
  gateway_->begin_drain();
  return loop().run_until([this] { return gateway_->idle(); }, limit);
}

int run_gateway(const GatewayConfig& config, const std::atomic<bool>& stop, std::ostream& out) {
  Logger::Level level = Logger::Level::Info;
  try {
    config.validate();
    level = Logger::parse_level(config.log_level);
  } catch (const Error& e) {
    out << "wapgw: " << e.what() << '\n';
    return 1;
  }
  Logger log(out, level);
  if (config.bearer == BearerKind::Sim) {
    log.log(Logger::Level::Error,
            "the sim bearer only exists inside one process; run wapgw with --bearer udp");
    return 1;
  }
  if (config.security != Security::Off) {
    try {
      wtls::PskTable::load(config.psk_file);
    } catch (const Error& e) {
      log.log(Logger::Level::Error, e.what());
      return 1;
    }
  }

  EventLoop loop(EventLoop::Clock::Realtime);
  std::shared_ptr<bearer::Bearer> bearer;
  std::unique_ptr<GatewayService> service;
  const std::string address = config.bind_address + ":" + std::to_string(config.listen_port);
  try {
    bearer = std::make_shared<bearer::UdpBearer>(loop, address, config.impairments.mtu_bytes);
    service = GatewayService::start(config, bearer, &log);
  } catch (const Error& e) {
    log.log(Logger::Level::Error, e.what());
    return e.code() == Errc::ConfigError ? 1 : 2;
  } catch (const std::system_error& e) {
    log.log(Logger::Level::Error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log.log(Logger::Level::Error, e.what());
    return 1;
  }

  log.log(Logger::Level::Info, "listening on udp " + address + " session port " +
                                   std::to_string(config.listen_port) + " connectionless port " +
                                   std::to_string(config.connectionless_port) + " security " +
                                   std::string(to_string(config.security)));
  while (!stop.load()) loop.run_until([&] { return stop.load(); }, Millis{200});

  log.log(Logger::Level::Info, "shutting down");
  const bool drained = service->drain(Millis{2000});
  if (!drained) log.log(Logger::Level::Warn, "drain limit reached with work in flight");
  service.reset();
  bearer->close();
  return 0;
}

}  // namespace wap::gateway
