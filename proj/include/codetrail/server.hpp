#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "codetrail/monitor.hpp"

namespace codetrail {

struct ServerConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 picks an ephemeral port
  int threads = 2;
  HubConfig hub;
};

/// Reads CODETRAIL_ADDRESS, CODETRAIL_PORT, CODETRAIL_THREADS,
/// CODETRAIL_TOKENS (comma separated), CODETRAIL_JOURNAL_DIR and
/// CODETRAIL_PROVIDER over `base`. Throws InvalidConfig.
ServerConfig server_config_from_env(ServerConfig base = {});

/// Overlays a JSON config object ({"server": {...}, "provenance": {...}}).
ServerConfig server_config_from_json(const Json& j, ServerConfig base = {});

/// WebSocket frames and the read-only HTTP API share one listening port.
///   GET /healthz
///   GET /sessions
///   GET /sessions/{id}/timeline[?file_path=&first_visible_line=&visible_lines=]
///   GET /sessions/{id}/metrics
///   GET /sessions/{id}/snapshot[?file_path=&t=]
class MonitorServer {
 public:
  explicit MonitorServer(ServerConfig config);
  ~MonitorServer();

  MonitorServer(const MonitorServer&) = delete;
  MonitorServer& operator=(const MonitorServer&) = delete;

  /// Loads journals, binds and starts the worker threads.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

  std::uint16_t port() const;
  MonitorHub& hub();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;
};

/// Accepts "host:port", "ws://host:port[/]" or ":port".
Endpoint parse_endpoint(std::string_view text);

/// Synchronous-facing WebSocket client. A background thread owns the socket;
/// received frames are queued for read().
class StreamClient {
 public:
  /// Throws ConnectionFailed.
  explicit StreamClient(const Endpoint& endpoint);
  ~StreamClient();

  StreamClient(const StreamClient&) = delete;
  StreamClient& operator=(const StreamClient&) = delete;

  /// Assigns the next frame_seq and queues the frame. Returns the seq.
  std::uint64_t send(FrameType type, const std::string& session_id, Json payload);
  /// Raw text, for protocol tests.
  void send_text(std::string text);
  /// Next received frame, or nullopt on timeout or closed connection.
  std::optional<ProtocolFrame> read(std::chrono::milliseconds timeout);
  /// Waits for a frame of `type` (or an error frame), queueing nothing else.
  std::optional<ProtocolFrame> read_until(FrameType type, std::chrono::milliseconds timeout);
  bool closed() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ReplayOptions {
  double speed = 0.0;  // 0 = as fast as possible
  std::string token;
  /// When set, questions delivered during the replay are answered with it.
  std::optional<std::string> auto_answer;
  std::chrono::milliseconds drain_timeout{15000};
};

struct ReplayReport {
  std::size_t frames_sent = 0;
  std::size_t questions_answered = 0;
  std::chrono::milliseconds elapsed{0};
};

/// Streams `log` as the session's student, pacing frames by the log's
/// timestamp deltas divided by `speed`, then says bye and waits for the
/// server to acknowledge. Throws ConnectionFailed or ServerRejectedFrame.
ReplayReport replay_session(const SessionLog& log, const Endpoint& endpoint,
                            const ReplayOptions& options = {});

/// Simple blocking HTTP GET; returns status and body. Throws ConnectionFailed.
std::pair<int, std::string> http_get(const Endpoint& endpoint, const std::string& target,
                                     const std::string& token = {});

}  // namespace codetrail
