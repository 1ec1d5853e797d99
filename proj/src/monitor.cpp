#include "codetrail/monitor.hpp"

#include <algorithm>
#include <array>

#include "codetrail/error.hpp"

namespace codetrail {

namespace {

constexpr std::array<std::pair<FrameType, std::string_view>, 17> kFrameNames = {{
    {FrameType::Hello, "hello"},
    {FrameType::Edit, "edit"},
    {FrameType::Chat, "chat"},
    {FrameType::TestRun, "test_run"},
    {FrameType::SnapshotRequest, "snapshot_request"},
    {FrameType::Snapshot, "snapshot"},
    {FrameType::TimelineRequest, "timeline_request"},
    {FrameType::Timeline, "timeline"},
    {FrameType::MetricsRequest, "metrics_request"},
    {FrameType::Metrics, "metrics"},
    {FrameType::QuestionCreate, "question_create"},
    {FrameType::QuestionDeliver, "question_deliver"},
    {FrameType::AnswerSubmit, "answer_submit"},
    {FrameType::AnswerDeliver, "answer_deliver"},
    {FrameType::Relabel, "relabel"},
    {FrameType::Error, "error"},
    {FrameType::Bye, "bye"},
}};

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorCode::SchemaViolation, msg); }

std::string journal_name(const std::string& session_id) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : session_id) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out + ".ndjson";
}

template <class T>
std::optional<T> opt_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->template get<T>();
  } catch (const Json::exception&) {
    schema(std::string("payload/") + key + ": wrong type");
  }
}

std::size_t opt_size(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return 0;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
    schema(std::string("payload/") + key + ": expected non-negative integer");
  }
  return it->get<std::size_t>();
}

std::string pick_file(const LabeledSession& s, const Json& params) {
  auto file = opt_field<std::string>(params, "file_path").value_or("");
  if (file.empty()) file = default_file(s.log);
  if (file.empty() || !s.log.has_file(file)) {
    throw Error(ErrorCode::UnknownFile, "no file '" + file + "' in session " + s.log.session_id);
  }
  return file;
}

Json relabel_json(const Relabel& r) {
  Json j;
  j["file_path"] = r.file_path;
  j["start_seq"] = r.start_seq;
  j["end_seq"] = r.end_seq;
  j["member_seqs"] = r.member_seqs;
  j["source"] = std::string(to_string(r.label.source));
  j["chat_ref"] = r.label.chat_ref ? to_json(*r.label.chat_ref) : Json();
  return j;
}

}  // namespace

std::string_view to_string(FrameType type) {
  for (const auto& [t, name] : kFrameNames) {
    if (t == type) return name;
  }
  return "unknown";
}

std::optional<FrameType> frame_type_from_string(std::string_view name) {
  for (const auto& [t, n] : kFrameNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

std::string encode_frame(const ProtocolFrame& frame) {
  Json j;
  j["frame_type"] = std::string(to_string(frame.type));
  j["session_id"] = frame.session_id;
  j["frame_seq"] = frame.frame_seq;
  j["payload"] = frame.payload;
  return j.dump();
}

ProtocolFrame decode_frame(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
  if (!j.is_object()) schema("frame: expected object");
  ProtocolFrame f;
  auto type = j.find("frame_type");
  if (type == j.end() || !type->is_string()) schema("frame/frame_type: expected string");
  auto t = frame_type_from_string(type->get<std::string>());
  if (!t) schema("frame/frame_type: unknown '" + type->get<std::string>() + "'");
  f.type = *t;
  if (auto it = j.find("session_id"); it != j.end()) {
    if (!it->is_string()) schema("frame/session_id: expected string");
    f.session_id = it->get<std::string>();
  }
  auto seq = j.find("frame_seq");
  if (seq == j.end() || !seq->is_number_unsigned()) {
    schema("frame/frame_seq: expected non-negative integer");
  }
  f.frame_seq = seq->get<std::uint64_t>();
  if (auto it = j.find("payload"); it != j.end()) {
    if (!it->is_object()) schema("frame/payload: expected object");
    f.payload = *it;
  }
  return f;
}

struct MonitorHub::Connection {
  SendFn send_fn;
  std::mutex send_mutex;
  std::uint64_t out_seq = 0;
  std::optional<std::uint64_t> last_in_seq;
  std::optional<Role> role;
  std::string session_id;
};

struct MonitorHub::Session {
  explicit Session(SessionLabeler l) : labeler(std::move(l)) {}

  std::mutex m;
  SessionLabeler labeler;
  bool started = false;  // a student said hello; starter is fixed
  bool any_edit = false;
  std::optional<ConnectionId> student;
  std::set<ConnectionId> instructors;
  std::map<std::string, Question> questions;
  std::map<std::string, ConnectionId> origin;
  std::vector<std::string> pending;  // sent while the student was away
  std::uint64_t next_question = 1;
  std::ofstream journal;
};

MonitorHub::MonitorHub(HubConfig config) : config_(std::move(config)) {
  config_.provenance.validate();
  provider_ = make_provider(config_.provider, config_.chat_completion);
  if (config_.journal_dir) std::filesystem::create_directories(*config_.journal_dir);
}

MonitorHub::~MonitorHub() = default;

ConnectionId MonitorHub::connect(SendFn send) {
  auto conn = std::make_shared<Connection>();
  conn->send_fn = std::move(send);
  const auto id = next_connection_++;
  std::unique_lock lock(connections_mutex_);
  connections_[id] = std::move(conn);
  return id;
}

void MonitorHub::disconnect(ConnectionId id) {
  std::shared_ptr<Connection> conn;
  {
    std::unique_lock lock(connections_mutex_);
    auto it = connections_.find(id);
    if (it == connections_.end()) return;
    conn = it->second;
    connections_.erase(it);
  }
  if (conn->session_id.empty()) return;
  if (auto s = find_session(conn->session_id)) {
    std::lock_guard lock(s->m);
    if (s->student == id) s->student.reset();
    s->instructors.erase(id);
  }
}

std::shared_ptr<MonitorHub::Connection> MonitorHub::connection(ConnectionId id) const {
  std::shared_lock lock(connections_mutex_);
  auto it = connections_.find(id);
  return it == connections_.end() ? nullptr : it->second;
}

std::shared_ptr<MonitorHub::Session> MonitorHub::find_session(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<MonitorHub::Session> MonitorHub::get_or_create_session(const std::string& id) {
  if (auto s = find_session(id)) return s;
  std::unique_lock lock(sessions_mutex_);
  auto& slot = sessions_[id];
  if (!slot) slot = std::make_shared<Session>(SessionLabeler(id, {}, {}, config_.provenance));
  return slot;
}

void MonitorHub::send(ConnectionId id, FrameType type, const std::string& session_id, Json payload) {
  auto conn = connection(id);
  if (!conn) return;
  std::lock_guard lock(conn->send_mutex);
  ProtocolFrame f{type, session_id, ++conn->out_seq, std::move(payload)};
  conn->send_fn(encode_frame(f));
}

void MonitorHub::send_error(ConnectionId id, const std::string& session_id, ErrorCode code,
                            const std::string& message, std::uint64_t rejected_seq) {
  Json p;
  p["code"] = std::string(to_string(code));
  p["message"] = message;
  p["rejected_frame_seq"] = rejected_seq;
  send(id, FrameType::Error, session_id, std::move(p));
}

void MonitorHub::broadcast(Session& s, FrameType type, const Json& payload) {
  for (auto id : s.instructors) send(id, type, s.labeler.log().session_id, payload);
}

bool MonitorHub::receive(ConnectionId id, std::string_view text) {
  ProtocolFrame frame;
  try {
    frame = decode_frame(text);
  } catch (const Error& e) {
    send_error(id, "", e.code(), e.what(), 0);
    return true;
  }
  return handle(id, frame);
}

bool MonitorHub::handle(ConnectionId id, const ProtocolFrame& frame) {
  auto conn = connection(id);
  if (!conn) return false;
  if (conn->last_in_seq && frame.frame_seq <= *conn->last_in_seq) {
    send_error(id, frame.session_id, ErrorCode::SeqOrderViolation,
               "frame_seq " + std::to_string(*conn->last_in_seq) + " -> " +
                   std::to_string(frame.frame_seq),
               frame.frame_seq);
    return true;
  }
  conn->last_in_seq = frame.frame_seq;
  try {
    if (frame.type == FrameType::Hello) {
      on_hello(id, *conn, frame);
      return true;
    }
    if (frame.type == FrameType::Bye) {
      send(id, FrameType::Bye, conn->session_id, Json::object());
      return false;
    }
    if (!conn->role) throw Error(ErrorCode::RoleViolation, "hello required first");
    if (!frame.session_id.empty() && frame.session_id != conn->session_id) {
      throw Error(ErrorCode::RoleViolation, "connection is bound to session " + conn->session_id);
    }
    const auto& sid = conn->session_id;
    switch (frame.type) {
      case FrameType::Edit:
      case FrameType::Chat:
      case FrameType::TestRun:
        on_record(id, *conn, frame);
        break;
      case FrameType::AnswerSubmit:
        on_answer(id, *conn, frame);
        break;
      case FrameType::QuestionCreate:
        on_question_create(id, *conn, frame);
        break;
      case FrameType::SnapshotRequest:
        send(id, FrameType::Snapshot, sid, snapshot_json(sid, frame.payload));
        break;
      case FrameType::TimelineRequest:
        send(id, FrameType::Timeline, sid, timeline_json(sid, frame.payload));
        break;
      case FrameType::MetricsRequest:
        send(id, FrameType::Metrics, sid, metrics_json(sid));
        break;
      default:
        throw Error(ErrorCode::SchemaViolation,
                    "frame_type '" + std::string(to_string(frame.type)) + "' is server-only");
    }
  } catch (const Error& e) {
    send_error(id, frame.session_id, e.code(), e.what(), frame.frame_seq);
  }
  return true;
}

void MonitorHub::on_hello(ConnectionId id, Connection& conn, const ProtocolFrame& frame) {
  const auto& p = frame.payload;
  if (conn.role) throw Error(ErrorCode::RoleViolation, "hello already received");
  if (!config_.tokens.empty()) {
    auto token = opt_field<std::string>(p, "token").value_or("");
    if (std::find(config_.tokens.begin(), config_.tokens.end(), token) == config_.tokens.end()) {
      throw Error(ErrorCode::Unauthorized, "bad or missing token");
    }
  }
  if (frame.session_id.empty()) schema("hello: session_id required");
  auto role_name = opt_field<std::string>(p, "role").value_or("");
  Role role;
  if (role_name == "student") {
    role = Role::Student;
  } else if (role_name == "instructor") {
    role = Role::Instructor;
  } else {
    schema("hello/role: expected 'student' or 'instructor'");
  }

  // Parse the header part before touching any state.
  SessionLog header;
  if (role == Role::Student) {
    Json h = Json::object();
    h["session_id"] = frame.session_id;
    if (p.contains("metadata")) h["metadata"] = p["metadata"];
    if (p.contains("starter")) h["starter"] = p["starter"];
    apply_header(header, h, "hello");
  }

  auto s = get_or_create_session(frame.session_id);
  std::lock_guard lock(s->m);
  Json ack;
  ack["role"] = role_name;
  ack["protocol_version"] = kProtocolVersion;
  if (role == Role::Student) {
    if (s->student && *s->student != id) {
      throw Error(ErrorCode::RoleViolation, "session " + frame.session_id + " already has a student");
    }
    if (!s->started && s->labeler.log().events.empty()) {
      s->labeler = SessionLabeler(header.session_id, header.metadata, header.starter,
                                  config_.provenance);
      if (config_.journal_dir) {
        s->journal.open(*config_.journal_dir / journal_name(frame.session_id), std::ios::trunc);
        s->journal << header_json(s->labeler.log()).dump() << '\n' << std::flush;
      }
    }
    s->started = true;
    s->student = id;
  } else {
    s->instructors.insert(id);
  }
  conn.role = role;
  conn.session_id = frame.session_id;
  ack["last_seq"] = s->labeler.last_seq();
  ack["event_count"] = s->labeler.log().events.size();
  send(id, FrameType::Hello, frame.session_id, std::move(ack));
  if (role == Role::Student) deliver_pending(*s);
}

void MonitorHub::journal(Session& s, const SessionEvent& event) {
  if (!s.journal.is_open()) return;
  s.journal << to_json(event, true).dump() << '\n' << std::flush;
}

void MonitorHub::on_record(ConnectionId, Connection& conn, const ProtocolFrame& frame) {
  if (conn.role != Role::Student) throw Error(ErrorCode::RoleViolation, "only the student streams events");
  auto s = find_session(conn.session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, conn.session_id);

  SessionEvent event;
  const std::string where = "payload";
  switch (frame.type) {
    case FrameType::Edit:
      event = edit_from_json(frame.payload, where);
      break;
    case FrameType::Chat:
      event = chat_from_json(frame.payload, where);
      break;
    default:
      event = test_run_from_json(frame.payload, where);
      break;
  }
  std::visit(
      [&](auto& e) {
        if (!e.session_id.empty() && e.session_id != conn.session_id) {
          schema("payload/session_id: does not match the connection");
        }
        e.session_id = conn.session_id;
      },
      event);

  std::lock_guard lock(s->m);
  auto& labeler = s->labeler;
  if (const auto* edit = std::get_if<EditEvent>(&event)) {
    if (s->any_edit && edit->seq != labeler.last_seq() + 1) {
      throw Error(ErrorCode::SeqOrderViolation, "expected seq " +
                                                    std::to_string(labeler.last_seq() + 1) +
                                                    ", got " + std::to_string(edit->seq));
    }
  }
  labeler.validate(event);
  auto outcome = labeler.feed(event);
  if (std::holds_alternative<EditEvent>(event)) s->any_edit = true;
  journal(*s, event);

  if (outcome.relabel) broadcast(*s, FrameType::Relabel, relabel_json(*outcome.relabel));
  Json payload;
  payload["event"] = to_json(event, true);
  if (std::holds_alternative<EditEvent>(event)) {
    if (outcome.label) {
      payload["source"] = std::string(to_string(outcome.label->source));
      payload["chat_ref"] = outcome.label->chat_ref ? to_json(*outcome.label->chat_ref) : Json();
    } else {
      payload["source"] = nullptr;
      payload["chat_ref"] = nullptr;
    }
    payload["provisional"] = outcome.provisional;
  }
  broadcast(*s, frame.type, payload);
}

void MonitorHub::deliver_pending(Session& s) {
  if (!s.student) return;
  for (const auto& qid : s.pending) {
    send(*s.student, FrameType::QuestionDeliver, s.labeler.log().session_id,
         to_student_json(s.questions.at(qid)));
  }
  s.pending.clear();
}

void MonitorHub::on_question_create(ConnectionId id, Connection& conn, const ProtocolFrame& frame) {
  if (conn.role != Role::Instructor) throw Error(ErrorCode::RoleViolation, "only instructors create questions");
  auto s = find_session(conn.session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, conn.session_id);
  const auto& p = frame.payload;
  const auto action = opt_field<std::string>(p, "action").value_or("generate");

  std::lock_guard lock(s->m);
  Json reply;
  if (action == "generate") {
    auto it = p.find("anchor");
    if (it == p.end()) schema("payload/anchor: required");
    auto anchor = anchor_from_json(*it);
    auto mode = question_mode_from_string(opt_field<std::string>(p, "mode").value_or("open_ended"));
    if (!mode) schema("payload/mode: expected 'multiple_choice' or 'open_ended'");
    const auto constraints = opt_field<std::string>(p, "constraints").value_or("");

    auto labeled = s->labeler.result();
    const auto file = pick_file(labeled, p);
    auto snap = snapshot_at(labeled.log, file, anchor.timestamp_ms, labeled.lookup());

    Question q;
    q.id = "q" + std::to_string(s->next_question);
    q.session_id = conn.session_id;
    q.anchor = anchor;
    q.mode = *mode;
    q.constraints = constraints;
    const auto prompt = assemble_prompt(snap, anchor, *mode, constraints, conn.session_id);
    q.code_context = code_context(snap, anchor);
    const auto seed = opt_field<std::uint64_t>(p, "seed").value_or(s->next_question);
    Generation g;
    {
      std::lock_guard plock(provider_mutex_);
      g = generate_question(prompt, *provider_, seed, *mode);
    }
    q.generated_text = g.question;
    q.expected_answer = g.expected_answer;
    ++s->next_question;
    s->origin[q.id] = id;
    reply["question"] = to_json(q);
    s->questions[q.id] = std::move(q);
  } else if (action == "send") {
    const auto qid = opt_field<std::string>(p, "question_id").value_or("");
    auto it = s->questions.find(qid);
    if (it == s->questions.end()) throw Error(ErrorCode::UnknownQuestion, "'" + qid + "'");
    QuestionEdits edits;
    if (auto e = p.find("edits"); e != p.end()) {
      if (!e->is_object()) schema("payload/edits: expected object");
      edits.generated_text = opt_field<std::string>(*e, "generated_text");
      edits.expected_answer = opt_field<std::string>(*e, "expected_answer");
    }
    Question q = it->second;
    edit_and_send(q, edits);
    it->second = q;
    s->origin[qid] = id;
    reply["question"] = to_json(q);
    s->pending.push_back(qid);
    deliver_pending(*s);
  } else {
    schema("payload/action: expected 'generate' or 'send'");
  }
  send(id, FrameType::QuestionCreate, conn.session_id, std::move(reply));
}

void MonitorHub::on_answer(ConnectionId, Connection& conn, const ProtocolFrame& frame) {
  if (conn.role != Role::Student) throw Error(ErrorCode::RoleViolation, "only the student answers");
  auto s = find_session(conn.session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, conn.session_id);
  const auto qid = opt_field<std::string>(frame.payload, "question_id").value_or("");
  auto answer = opt_field<std::string>(frame.payload, "answer");
  if (!answer) schema("payload/answer: required");

  std::lock_guard lock(s->m);
  auto it = s->questions.find(qid);
  if (it == s->questions.end()) throw Error(ErrorCode::UnknownQuestion, "'" + qid + "'");
  record_answer(it->second, *answer);
  Json p;
  p["question_id"] = qid;
  p["answer"] = *answer;
  p["question"] = to_json(it->second);
  send(s->origin.at(qid), FrameType::AnswerDeliver, conn.session_id, std::move(p));
}

std::size_t MonitorHub::load_journals() {
  if (!config_.journal_dir) return 0;
  std::size_t loaded = 0;
  for (const auto& entry : std::filesystem::directory_iterator(*config_.journal_dir)) {
    if (entry.path().extension() != ".ndjson") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto log = parse_session_ndjson(bytes);
    auto s = std::make_shared<Session>(
        SessionLabeler(log.session_id, log.metadata, log.starter, config_.provenance));
    for (const auto& ev : log.events) {
      s->labeler.feed(ev);
      if (std::holds_alternative<EditEvent>(ev)) s->any_edit = true;
    }
    s->started = true;
    s->journal.open(entry.path(), std::ios::app);
    std::unique_lock lock(sessions_mutex_);
    sessions_[log.session_id] = std::move(s);
    ++loaded;
  }
  return loaded;
}

LabeledSession MonitorHub::labeled(const std::string& session_id) const {
  auto s = find_session(session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, "'" + session_id + "'");
  std::lock_guard lock(s->m);
  return s->labeler.result();
}

Json MonitorHub::sessions_json() const {
  std::vector<std::pair<std::string, std::shared_ptr<Session>>> all;
  {
    std::shared_lock lock(sessions_mutex_);
    all.assign(sessions_.begin(), sessions_.end());
  }
  Json list = Json::array();
  for (const auto& [id, s] : all) {
    std::lock_guard lock(s->m);
    Json j;
    j["session_id"] = id;
    j["student_connected"] = s->student.has_value();
    j["instructors"] = s->instructors.size();
    j["event_count"] = s->labeler.log().events.size();
    j["last_seq"] = s->labeler.last_seq();
    list.push_back(std::move(j));
  }
  Json out;
  out["sessions"] = std::move(list);
  return out;
}

Json MonitorHub::snapshot_json(const std::string& session_id, const Json& params) const {
  auto labeled_session = labeled(session_id);
  const auto file = pick_file(labeled_session, params);
  auto t = opt_field<std::int64_t>(params, "t");
  const auto& events = labeled_session.log.events;
  if (!t || events.empty() || *t >= timestamp_of(events.back())) {
    return to_json(labeled_session.finals.at(file));
  }
  return to_json(snapshot_at(labeled_session.log, file, *t, labeled_session.lookup()));
}

Json MonitorHub::timeline_json(const std::string& session_id, const Json& params) const {
  auto shared = std::make_shared<const LabeledSession>(labeled(session_id));
  const auto file = pick_file(*shared, params);
  ViewportHints hints;
  if (params.contains("first_visible_line")) hints.first_visible_line = opt_size(params, "first_visible_line");
  if (params.contains("visible_lines")) hints.visible_lines = opt_size(params, "visible_lines");
  if (params.contains("excerpt_length")) hints.excerpt_length = opt_size(params, "excerpt_length");
  Timeline timeline(shared, file, hints);
  Json out = to_json(timeline.model());
  if (auto z = params.find("zoom"); z != params.end()) {
    auto t0 = opt_field<std::int64_t>(*z, "t0");
    auto t1 = opt_field<std::int64_t>(*z, "t1");
    if (!t0 || !t1) schema("payload/zoom: t0 and t1 required");
    out["zoom"] = to_json(timeline.zoom(*t0, *t1));
  }
  if (auto pk = params.find("pick"); pk != params.end()) {
    auto t = opt_field<std::int64_t>(*pk, "t");
    if (!t || !pk->contains("line")) schema("payload/pick: t and line required");
    out["pick"] = to_json(timeline.hit_test(*t, opt_size(*pk, "line")));
  }
  return out;
}

Json MonitorHub::metrics_json(const std::string& session_id) const {
  return to_json(compute_metrics(labeled(session_id), config_.segmentation));
}

std::optional<Question> MonitorHub::question(const std::string& session_id,
                                             const std::string& question_id) const {
  auto s = find_session(session_id);
  if (!s) throw Error(ErrorCode::UnknownSession, "'" + session_id + "'");
  std::lock_guard lock(s->m);
  auto it = s->questions.find(question_id);
  if (it == s->questions.end()) return std::nullopt;
  return it->second;
}

}  // namespace codetrail
