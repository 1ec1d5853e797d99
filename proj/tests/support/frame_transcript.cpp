// Drives the hub in-process through a scripted session and prints every
// frame, in both directions, one JSON object per line.
//   frame_transcript <session-log>
#include <iostream>

#include "codetrail/monitor.hpp"

using namespace codetrail;

namespace {

struct Peer {
  MonitorHub& hub;
  ConnectionId id = 0;
  std::uint64_t seq = 0;
  std::string session;
  std::vector<Json> inbox;

  Peer(MonitorHub& h, std::string sid) : hub(h), session(std::move(sid)) {
    id = hub.connect([this](std::string text) {
      std::cout << text << '\n';
      inbox.push_back(Json::parse(text));
    });
  }

  void send(FrameType type, Json payload = Json::object()) {
    ProtocolFrame f{type, session, ++seq, std::move(payload)};
    std::cout << encode_frame(f) << '\n';
    hub.handle(id, f);
  }
};

FrameType frame_for(const SessionEvent& ev) {
  if (std::holds_alternative<EditEvent>(ev)) return FrameType::Edit;
  if (std::holds_alternative<ChatEvent>(ev)) return FrameType::Chat;
  return FrameType::TestRun;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: frame_transcript <session-log>\n";
    return 1;
  }
  try {
    auto log = load_session_file(argv[1]);
    MonitorHub hub({});
    Peer inst(hub, log.session_id);
    inst.send(FrameType::Hello, {{"role", "instructor"}, {"protocol_version", kProtocolVersion}});
    Peer student(hub, log.session_id);
    auto header = header_json(log);
    student.send(FrameType::Hello, {{"role", "student"},
                                    {"protocol_version", kProtocolVersion},
                                    {"metadata", header["metadata"]},
                                    {"starter", header["starter"]}});
    for (const auto& ev : log.events) student.send(frame_for(ev), to_json(ev));

    const auto t_end = log.events.empty() ? 0 : timestamp_of(log.events.back());
    inst.send(FrameType::SnapshotRequest, {{"t", t_end / 2}});
    inst.send(FrameType::SnapshotRequest, Json::object());
    inst.send(FrameType::TimelineRequest,
              {{"zoom", {{"t0", 0}, {"t1", t_end / 3}}}, {"pick", {{"t", t_end / 2}, {"line", 1}}}});
    inst.send(FrameType::MetricsRequest);
    for (const char* mode : {"multiple_choice", "open_ended"}) {
      inst.send(FrameType::QuestionCreate,
                {{"action", "generate"},
                 {"anchor", {{"timestamp_ms", t_end}, {"line_start", 1}, {"line_end", 3}}},
                 {"mode", mode},
                 {"constraints", "keep it short"},
                 {"seed", 11}});
    }
    inst.send(FrameType::QuestionCreate,
              {{"action", "send"}, {"question_id", "q2"}, {"edits", {{"expected_answer", "It sums."}}}});
    student.send(FrameType::AnswerSubmit, {{"question_id", "q2"}, {"answer", "It adds things up."}});
    inst.send(FrameType::SnapshotRequest, {{"file_path", "missing.py"}});  // error frame
    student.send(FrameType::Bye);
    inst.send(FrameType::Bye);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
