#include "codetrail/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include "codetrail/error.hpp"
#include "httplib.h"

namespace codetrail {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

long parse_int(const std::string& text, const char* what, long lo, long hi) {
  char* end = nullptr;
  long v = std::strtol(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0' || v < lo || v > hi) {
    throw Error(ErrorCode::InvalidConfig, std::string(what) + ": '" + text + "'");
  }
  return v;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    auto tok = s.substr(pos, next - pos);
    const auto first = tok.find_first_not_of(" \t");
    tok = first == std::string::npos ? std::string() : tok.substr(first, tok.find_last_not_of(" \t") - first + 1);
    if (!tok.empty()) out.push_back(tok);
    pos = next + 1;
  }
  return out;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else if (s[i] == '+') {
      out += ' ';
    } else {
      out += s[i];
    }
  }
  return out;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownFile:
    case ErrorCode::UnknownQuestion:
      return 404;
    case ErrorCode::Unauthorized:
      return 401;
    default:
      return 400;
  }
}

Json error_body(ErrorCode code, const std::string& message) {
  Json j;
  j["code"] = std::string(to_string(code));
  j["message"] = message;
  return j;
}

// Routes one GET request against the hub.
std::pair<int, Json> route(MonitorHub& hub, std::string_view target, std::string_view auth) {
  std::string_view path = target;
  Json params = Json::object();
  std::string token;
  if (auto q = target.find('?'); q != std::string_view::npos) {
    path = target.substr(0, q);
    auto query = target.substr(q + 1);
    while (!query.empty()) {
      auto amp = query.find('&');
      auto pair = query.substr(0, amp);
      auto eq = pair.find('=');
      auto key = url_decode(pair.substr(0, eq));
      auto value = eq == std::string_view::npos ? std::string() : url_decode(pair.substr(eq + 1));
      if (key == "token") {
        token = value;
      } else if (key == "t") {
        params[key] = std::stoll(value);
      } else if (key == "first_visible_line" || key == "visible_lines" || key == "excerpt_length") {
        params[key] = static_cast<std::size_t>(std::stoull(value));
      } else {
        params[key] = value;
      }
      if (amp == std::string_view::npos) break;
      query = query.substr(amp + 1);
    }
  }
  if (path == "/healthz") return {200, Json{{"status", "ok"}}};
  if (!hub.config().tokens.empty()) {
    if (auth.starts_with("Bearer ")) token = std::string(auth.substr(7));
    const auto& tokens = hub.config().tokens;
    if (std::find(tokens.begin(), tokens.end(), token) == tokens.end()) {
      return {401, error_body(ErrorCode::Unauthorized, "bad or missing token")};
    }
  }
  if (path == "/sessions" || path == "/sessions/") return {200, hub.sessions_json()};
  constexpr std::string_view kPrefix = "/sessions/";
  if (path.starts_with(kPrefix)) {
    auto rest = path.substr(kPrefix.size());
    auto slash = rest.rfind('/');
    if (slash != std::string_view::npos) {
      auto id = url_decode(rest.substr(0, slash));
      auto what = rest.substr(slash + 1);
      if (what == "timeline") return {200, hub.timeline_json(id, params)};
      if (what == "metrics") return {200, hub.metrics_json(id)};
      if (what == "snapshot") return {200, hub.snapshot_json(id, params)};
    }
  }
  return {404, error_body(ErrorCode::UnknownSession, "no route for " + std::string(path))};
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, MonitorHub& hub) : ws_(std::move(socket)), hub_(hub) {}

  ~WsSession() {
    if (id_ != 0) hub_.disconnect(id_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = weak_from_this();
    auto executor = ws_.get_executor();
    id_ = hub_.connect([weak, executor](std::string text) {
      net::post(executor, [weak, text = std::move(text)]() mutable {
        if (auto self = weak.lock()) self->enqueue(std::move(text));
      });
    });
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (!hub_.receive(id_, text)) {
      // The bye reply is already posted; stay alive until it is flushed.
      closing_ = true;
      keepalive_ = shared_from_this();
      net::post(ws_.get_executor(), [self = shared_from_this()] {
        if (self->queue_.empty()) self->close();
      });
      return;
    }
    do_read();
  }

  void enqueue(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      keepalive_.reset();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) {
      do_write();
    } else if (closing_) {
      close();
    }
  }

  void close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {
      self->keepalive_.reset();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  MonitorHub& hub_;
  ConnectionId id_ = 0;
  bool closing_ = false;
  std::shared_ptr<WsSession> keepalive_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, MonitorHub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_)->run(std::move(req_));
      return;
    }
    int status = 200;
    Json body;
    if (req_.method() != http::verb::get) {
      status = 405;
      body = error_body(ErrorCode::SchemaViolation, "only GET is supported");
    } else {
      try {
        std::tie(status, body) =
            route(hub_, std::string_view(req_.target().data(), req_.target().size()),
                  std::string_view(req_[http::field::authorization].data(),
                                   req_[http::field::authorization].size()));
      } catch (const Error& e) {
        status = http_status(e.code());
        body = error_body(e.code(), e.what());
      } catch (const std::exception& e) {
        status = 400;
        body = error_body(ErrorCode::SchemaViolation, e.what());
      }
    }
    res_ = {};
    res_.result(static_cast<http::status>(status));
    res_.version(req_.version());
    res_.set(http::field::content_type, "application/json");
    res_.set(http::field::access_control_allow_origin, "*");
    res_.keep_alive(req_.keep_alive());
    res_.body() = body.dump();
    res_.prepare_payload();
    http::async_write(stream_, res_,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!res_.keep_alive()) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    do_read();
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  http::response<http::string_body> res_;
  MonitorHub& hub_;
};

}  // namespace

ServerConfig server_config_from_env(ServerConfig base) {
  if (auto v = env("CODETRAIL_ADDRESS")) base.address = *v;
  if (auto v = env("CODETRAIL_PORT")) base.port = static_cast<std::uint16_t>(parse_int(*v, "CODETRAIL_PORT", 0, 65535));
  if (auto v = env("CODETRAIL_THREADS")) base.threads = static_cast<int>(parse_int(*v, "CODETRAIL_THREADS", 1, 256));
  if (auto v = env("CODETRAIL_TOKENS")) base.hub.tokens = split_tokens(*v);
  if (auto v = env("CODETRAIL_JOURNAL_DIR")) base.hub.journal_dir = *v;
  if (auto v = env("CODETRAIL_PROVIDER")) base.hub.provider = *v;
  return base;
}

ServerConfig server_config_from_json(const Json& j, ServerConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config: expected object");
  try {
    if (auto it = j.find("provenance"); it != j.end()) {
      base.hub.provenance = provenance_config_from_json(*it);
    }
    if (auto it = j.find("server"); it != j.end()) {
      const auto& s = *it;
      if (!s.is_object()) throw Error(ErrorCode::InvalidConfig, "server: expected object");
      for (const auto& [key, value] : s.items()) {
        if (key == "address") base.address = value.get<std::string>();
        else if (key == "port") base.port = value.get<std::uint16_t>();
        else if (key == "threads") base.threads = value.get<int>();
        else if (key == "tokens") base.hub.tokens = value.get<std::vector<std::string>>();
        else if (key == "journal_dir") base.hub.journal_dir = value.get<std::string>();
        else if (key == "provider") base.hub.provider = value.get<std::string>();
        else if (key == "model") base.hub.chat_completion.model = value.get<std::string>();
        else if (key == "base_url") base.hub.chat_completion.base_url = value.get<std::string>();
        else throw Error(ErrorCode::InvalidConfig, "server: unknown key '" + key + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (base.threads < 1) throw Error(ErrorCode::InvalidConfig, "server.threads must be >= 1");
  return base;
}

struct MonitorServer::Impl {
  explicit Impl(ServerConfig c)
      : config(std::move(c)), hub(config.hub), acceptor(ioc), signals(ioc) {}

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpSession>(std::move(socket), hub)->run();
      do_accept();
    });
  }

  ServerConfig config;
  MonitorHub hub;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::signal_set signals;
  std::vector<std::thread> threads;
  std::mutex m;
  std::condition_variable cv;
  bool stopped = false;
  bool started = false;
};

MonitorServer::MonitorServer(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

MonitorServer::~MonitorServer() { stop(); }

void MonitorServer::start() {
  impl_->hub.load_journals();
  beast::error_code ec;
  auto address = net::ip::make_address(impl_->config.address, ec);
  if (ec) throw Error(ErrorCode::InvalidConfig, "address '" + impl_->config.address + "'");
  tcp::endpoint ep(address, impl_->config.port);
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::ConnectionFailed,
                "listen on " + impl_->config.address + ":" + std::to_string(impl_->config.port) +
                    ": " + ec.message());
  }
  impl_->do_accept();
  impl_->started = true;
  for (int i = 0; i < impl_->config.threads; ++i) {
    impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  }
}

void MonitorServer::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->m);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  impl_->ioc.stop();
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
  impl_->cv.notify_all();
}

void MonitorServer::wait() {
  impl_->signals.add(SIGINT);
  impl_->signals.add(SIGTERM);
  impl_->signals.async_wait([this](beast::error_code, int) {
    std::thread([this] { stop(); }).detach();
  });
  std::unique_lock lock(impl_->m);
  impl_->cv.wait(lock, [this] { return impl_->stopped; });
}

std::uint16_t MonitorServer::port() const { return impl_->acceptor.local_endpoint().port(); }

MonitorHub& MonitorServer::hub() { return impl_->hub; }

Endpoint parse_endpoint(std::string_view text) {
  Endpoint ep;
  if (text.starts_with("ws://")) text.remove_prefix(5);
  if (text.starts_with("http://")) text.remove_prefix(7);
  while (text.ends_with('/')) text.remove_suffix(1);
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    if (!text.empty()) ep.host = std::string(text);
    return ep;
  }
  if (colon > 0) ep.host = std::string(text.substr(0, colon));
  ep.port = static_cast<std::uint16_t>(
      parse_int(std::string(text.substr(colon + 1)), "port", 1, 65535));
  return ep;
}

struct StreamClient::Impl {
  net::io_context ioc;
  websocket::stream<beast::tcp_stream> ws{ioc};
  beast::flat_buffer buffer;
  std::deque<std::string> out;
  std::thread thread;
  std::uint64_t next_seq = 1;

  std::mutex m;
  std::condition_variable cv;
  std::deque<ProtocolFrame> in;
  bool closed = false;

  void do_read() {
    ws.async_read(buffer, [this](beast::error_code ec, std::size_t) {
      if (ec) {
        mark_closed();
        return;
      }
      auto text = beast::buffers_to_string(buffer.data());
      buffer.consume(buffer.size());
      try {
        auto f = decode_frame(text);
        std::lock_guard lock(m);
        in.push_back(std::move(f));
      } catch (const Error&) {
      }
      cv.notify_all();
      do_read();
    });
  }

  void mark_closed() {
    std::lock_guard lock(m);
    closed = true;
    cv.notify_all();
  }

  void enqueue(std::string text) {
    out.push_back(std::move(text));
    if (out.size() == 1) do_write();
  }

  void do_write() {
    ws.text(true);
    ws.async_write(net::buffer(out.front()), [this](beast::error_code ec, std::size_t) {
      if (ec) {
        mark_closed();
        return;
      }
      out.pop_front();
      if (!out.empty()) do_write();
    });
  }
};

StreamClient::StreamClient(const Endpoint& endpoint) : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    auto results = resolver.resolve(endpoint.host, std::to_string(endpoint.port));
    beast::get_lowest_layer(impl_->ws).expires_after(std::chrono::seconds(10));
    beast::get_lowest_layer(impl_->ws).connect(results);
    beast::get_lowest_layer(impl_->ws).expires_never();
    impl_->ws.handshake(endpoint.host + ":" + std::to_string(endpoint.port), "/");
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ConnectionFailed,
                endpoint.host + ":" + std::to_string(endpoint.port) + ": " + e.what());
  }
  impl_->do_read();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

StreamClient::~StreamClient() { close(); }

std::uint64_t StreamClient::send(FrameType type, const std::string& session_id, Json payload) {
  ProtocolFrame f{type, session_id, 0, std::move(payload)};
  f.frame_seq = impl_->next_seq++;
  send_text(encode_frame(f));
  return f.frame_seq;
}

void StreamClient::send_text(std::string text) {
  net::post(impl_->ioc, [impl = impl_.get(), text = std::move(text)]() mutable {
    impl->enqueue(std::move(text));
  });
}

std::optional<ProtocolFrame> StreamClient::read(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->m);
  impl_->cv.wait_for(lock, timeout, [this] { return !impl_->in.empty() || impl_->closed; });
  if (impl_->in.empty()) return std::nullopt;
  auto f = std::move(impl_->in.front());
  impl_->in.pop_front();
  return f;
}

std::optional<ProtocolFrame> StreamClient::read_until(FrameType type,
                                                      std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    auto f = read(left);
    if (!f) return std::nullopt;
    if (f->type == type || f->type == FrameType::Error) return f;
  }
}

bool StreamClient::closed() const {
  std::lock_guard lock(impl_->m);
  return impl_->closed;
}

void StreamClient::close() {
  if (!impl_ || !impl_->thread.joinable()) return;
  net::post(impl_->ioc, [impl = impl_.get()] {
    if (impl->ws.is_open()) {
      impl->ws.async_close(websocket::close_code::normal, [impl](beast::error_code) {
        beast::error_code ignored;
        beast::get_lowest_layer(impl->ws).socket().close(ignored);
      });
    }
  });
  // The read loop ends once the close handshake completes or the peer drops.
  {
    std::unique_lock lock(impl_->m);
    impl_->cv.wait_for(lock, std::chrono::seconds(2), [this] { return impl_->closed; });
  }
  impl_->ioc.stop();
  impl_->thread.join();
}

std::pair<int, std::string> http_get(const Endpoint& endpoint, const std::string& target,
                                     const std::string& token) {
  httplib::Client client(endpoint.host, endpoint.port);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  auto res = client.Get(target, headers);
  if (!res) {
    throw Error(ErrorCode::ConnectionFailed, endpoint.host + ":" + std::to_string(endpoint.port) +
                                                 ": " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

}  // namespace codetrail
