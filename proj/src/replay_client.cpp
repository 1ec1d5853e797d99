#include <thread>

#include "codetrail/error.hpp"
#include "codetrail/server.hpp"

namespace codetrail {

namespace {

FrameType frame_type_of(const SessionEvent& event) {
  if (std::holds_alternative<EditEvent>(event)) return FrameType::Edit;
  if (std::holds_alternative<ChatEvent>(event)) return FrameType::Chat;
  return FrameType::TestRun;
}

[[noreturn]] void rejected(const ProtocolFrame& f) {
  throw Error(ErrorCode::ServerRejectedFrame,
              "frame " + f.payload.value("rejected_frame_seq", Json(0)).dump() + ": " +
                  f.payload.value("message", std::string("(no message)")));
}

}  // namespace

ReplayReport replay_session(const SessionLog& log, const Endpoint& endpoint,
                            const ReplayOptions& options) {
  if (options.speed < 0) throw Error(ErrorCode::InvalidConfig, "speed must be >= 0");
  using clock = std::chrono::steady_clock;
  const auto begin = clock::now();
  ReplayReport report;
  StreamClient client(endpoint);
  const auto& sid = log.session_id;

  Json hello;
  hello["role"] = "student";
  hello["protocol_version"] = kProtocolVersion;
  if (!options.token.empty()) hello["token"] = options.token;
  auto header = header_json(log);
  hello["metadata"] = header["metadata"];
  hello["starter"] = header["starter"];
  client.send(FrameType::Hello, sid, std::move(hello));
  ++report.frames_sent;
  auto ack = client.read_until(FrameType::Hello, options.drain_timeout);
  if (!ack) throw Error(ErrorCode::ConnectionFailed, "no hello acknowledgement");
  if (ack->type == FrameType::Error) rejected(*ack);

  // Handles whatever the server pushed so far; errors abort the replay.
  auto drain = [&](std::chrono::milliseconds wait) {
    while (auto f = client.read(wait)) {
      wait = std::chrono::milliseconds(0);
      if (f->type == FrameType::Error) rejected(*f);
      if (f->type == FrameType::QuestionDeliver && options.auto_answer) {
        Json answer;
        answer["question_id"] = f->payload.value("question_id", std::string());
        answer["answer"] = *options.auto_answer;
        client.send(FrameType::AnswerSubmit, sid, std::move(answer));
        ++report.frames_sent;
        ++report.questions_answered;
      }
    }
  };

  const auto t0 = log.events.empty() ? 0 : timestamp_of(log.events.front());
  const auto start = clock::now();
  for (const auto& event : log.events) {
    if (options.speed > 0) {
      const double delay_ms = static_cast<double>(timestamp_of(event) - t0) / options.speed;
      std::this_thread::sleep_until(
          start + std::chrono::microseconds(static_cast<std::int64_t>(delay_ms * 1000.0)));
    }
    client.send(frame_type_of(event), sid, to_json(event, true));
    ++report.frames_sent;
    drain(std::chrono::milliseconds(0));
    if (client.closed()) throw Error(ErrorCode::ConnectionFailed, "server closed the connection");
  }

  client.send(FrameType::Bye, sid, Json::object());
  ++report.frames_sent;
  const auto deadline = clock::now() + options.drain_timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) throw Error(ErrorCode::ConnectionFailed, "no bye acknowledgement");
    auto f = client.read(left);
    if (!f) throw Error(ErrorCode::ConnectionFailed, "connection closed before bye acknowledgement");
    if (f->type == FrameType::Error) rejected(*f);
    if (f->type == FrameType::Bye) break;
  }
  client.close();
  report.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - begin);
  return report;
}

}  // namespace codetrail
