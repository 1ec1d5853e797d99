#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "codetrail/error.hpp"
#include "codetrail/metrics.hpp"
#include "codetrail/provenance.hpp"
#include "codetrail/question.hpp"
#include "codetrail/timeline.hpp"

namespace codetrail {

inline constexpr int kProtocolVersion = 1;

enum class FrameType {
  Hello,
  Edit,
  Chat,
  TestRun,
  SnapshotRequest,
  Snapshot,
  TimelineRequest,
  Timeline,
  MetricsRequest,
  Metrics,
  QuestionCreate,
  QuestionDeliver,
  AnswerSubmit,
  AnswerDeliver,
  Relabel,
  Error,
  Bye,
};

std::string_view to_string(FrameType type);
std::optional<FrameType> frame_type_from_string(std::string_view name);

struct ProtocolFrame {
  FrameType type = FrameType::Hello;
  std::string session_id;
  std::uint64_t frame_seq = 0;
  Json payload = Json::object();
};

std::string encode_frame(const ProtocolFrame& frame);
/// Throws MalformedJson or SchemaViolation.
ProtocolFrame decode_frame(std::string_view text);

enum class Role { Student, Instructor };

struct HubConfig {
  /// Accepted shared tokens; empty disables authentication.
  std::vector<std::string> tokens;
  ProvenanceConfig provenance;
  SegmentationRules segmentation;
  std::optional<std::filesystem::path> journal_dir;
  std::string provider = "stub";
  ChatCompletionSettings chat_completion;
};

using ConnectionId = std::uint64_t;
/// Must not block; transports queue the text for asynchronous delivery.
using SendFn = std::function<void(std::string)>;

/// Live session state machine. Frames for one session are processed under
/// that session's lock in arrival order; distinct sessions never share a
/// lock beyond registry lookups.
class MonitorHub {
 public:
  explicit MonitorHub(HubConfig config);
  ~MonitorHub();

  MonitorHub(const MonitorHub&) = delete;
  MonitorHub& operator=(const MonitorHub&) = delete;

  ConnectionId connect(SendFn send);
  void disconnect(ConnectionId id);

  /// Decodes and handles one text frame. Returns false when the connection
  /// should close after flushing (bye).
  bool receive(ConnectionId id, std::string_view text);
  bool handle(ConnectionId id, const ProtocolFrame& frame);

  /// Rebuilds sessions from journal files; returns the count loaded.
  std::size_t load_journals();

  // Query surface shared by frames and HTTP. Throw UnknownSession.
  Json sessions_json() const;
  Json snapshot_json(const std::string& session_id, const Json& params = Json::object()) const;
  Json timeline_json(const std::string& session_id, const Json& params = Json::object()) const;
  Json metrics_json(const std::string& session_id) const;
  /// Live question record (tests and HTTP).
  std::optional<Question> question(const std::string& session_id, const std::string& question_id) const;
  /// Labeled state as of now with any open typed run closed.
  LabeledSession labeled(const std::string& session_id) const;

  const HubConfig& config() const { return config_; }

 private:
  struct Connection;
  struct Session;

  std::shared_ptr<Connection> connection(ConnectionId id) const;
  std::shared_ptr<Session> find_session(const std::string& id) const;
  std::shared_ptr<Session> get_or_create_session(const std::string& id);

  void send(ConnectionId id, FrameType type, const std::string& session_id, Json payload);
  void send_error(ConnectionId id, const std::string& session_id, ErrorCode code,
                  const std::string& message, std::uint64_t rejected_seq);
  void broadcast(Session& s, FrameType type, const Json& payload);

  void on_hello(ConnectionId id, Connection& conn, const ProtocolFrame& frame);
  void on_record(ConnectionId id, Connection& conn, const ProtocolFrame& frame);
  void on_question_create(ConnectionId id, Connection& conn, const ProtocolFrame& frame);
  void on_answer(ConnectionId id, Connection& conn, const ProtocolFrame& frame);
  void deliver_pending(Session& s);
  void journal(Session& s, const SessionEvent& event);

  HubConfig config_;
  std::unique_ptr<GenerationProvider> provider_;
  std::mutex provider_mutex_;

  mutable std::shared_mutex connections_mutex_;
  std::map<ConnectionId, std::shared_ptr<Connection>> connections_;
  std::atomic<ConnectionId> next_connection_{1};

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace codetrail
