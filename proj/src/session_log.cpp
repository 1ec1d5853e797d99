#include "codetrail/session_log.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"

namespace codetrail {

namespace {

[[noreturn]] void schema(std::string_view where, std::string_view what) {
  throw Error(ErrorCode::SchemaViolation, std::string(where) + ": " + std::string(what));
}

std::string at(std::string_view where, std::string_view field) {
  return std::string(where) + "/" + std::string(field);
}

const Json& require(const Json& record, std::string_view where, const char* field) {
  auto it = record.find(field);
  if (it == record.end()) schema(at(where, field), "missing required field");
  return *it;
}

std::string get_string(const Json& record, std::string_view where, const char* field,
                       std::optional<std::string> fallback = std::nullopt) {
  auto it = record.find(field);
  if (it == record.end()) {
    if (fallback) return *fallback;
    schema(at(where, field), "missing required field");
  }
  if (!it->is_string()) schema(at(where, field), "expected string");
  auto value = it->get<std::string>();
  if (!utf8::is_valid(value)) schema(at(where, field), "invalid UTF-8");
  return value;
}

std::int64_t get_nonneg(const Json& record, std::string_view where, const char* field,
                        std::optional<std::int64_t> fallback = std::nullopt) {
  auto it = record.find(field);
  if (it == record.end()) {
    if (fallback) return *fallback;
    schema(at(where, field), "missing required field");
  }
  if (!it->is_number_integer()) schema(at(where, field), "expected integer");
  if (it->is_number_unsigned()) {
    return static_cast<std::int64_t>(it->get<std::uint64_t>());
  }
  auto v = it->get<std::int64_t>();
  if (v < 0) schema(at(where, field), "expected non-negative integer");
  return v;
}

template <typename Enum, std::size_t N>
Enum get_enum(const Json& record, std::string_view where, const char* field,
              const std::pair<std::string_view, Enum> (&table)[N],
              std::optional<Enum> fallback = std::nullopt) {
  auto it = record.find(field);
  if (it == record.end()) {
    if (fallback) return *fallback;
    schema(at(where, field), "missing required field");
  }
  if (!it->is_string()) schema(at(where, field), "expected string");
  const auto& s = it->get_ref<const std::string&>();
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  schema(at(where, field), "unknown value '" + s + "'");
}

constexpr std::pair<std::string_view, EditKind> kKinds[] = {
    {"insert", EditKind::Insert},
    {"delete", EditKind::Delete},
    {"replace", EditKind::Replace},
    {"file_action", EditKind::FileAction},
};
constexpr std::pair<std::string_view, InputHint> kHints[] = {
    {"keystroke", InputHint::Keystroke},
    {"paste", InputHint::Paste},
    {"completion_accept", InputHint::CompletionAccept},
    {"unknown", InputHint::Unknown},
};
constexpr std::pair<std::string_view, FileAction> kActions[] = {
    {"save", FileAction::Save},
    {"open", FileAction::Open},
    {"close", FileAction::Close},
};
constexpr std::pair<std::string_view, ChatRole> kRoles[] = {
    {"student", ChatRole::Student},
    {"assistant", ChatRole::Assistant},
};

void check_session_id(const Json& record, std::string_view where, std::string& out) {
  auto it = record.find("session_id");
  if (it == record.end()) return;
  if (!it->is_string()) schema(at(where, "session_id"), "expected string");
  out = it->get<std::string>();
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

Json parse_json(std::string_view bytes, std::string_view where) {
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson,
                where.empty() ? std::string(e.what()) : std::string(where) + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(EditKind kind) {
  for (const auto& [name, value] : kKinds) {
    if (value == kind) return name;
  }
  return "?";
}

std::string_view to_string(InputHint hint) {
  for (const auto& [name, value] : kHints) {
    if (value == hint) return name;
  }
  return "?";
}

std::string_view to_string(FileAction action) {
  for (const auto& [name, value] : kActions) {
    if (value == action) return name;
  }
  return "?";
}

std::string_view to_string(ChatRole role) {
  for (const auto& [name, value] : kRoles) {
    if (value == role) return name;
  }
  return "?";
}

std::int64_t timestamp_of(const SessionEvent& event) {
  return std::visit([](const auto& e) { return e.timestamp_ms; }, event);
}

std::size_t SessionLog::edit_count() const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const auto& e) {
    const auto* edit = std::get_if<EditEvent>(&e);
    return edit != nullptr && edit->kind != EditKind::FileAction;
  }));
}

std::size_t SessionLog::chat_count() const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [](const auto& e) { return std::holds_alternative<ChatEvent>(e); }));
}

std::size_t SessionLog::test_run_count() const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const auto& e) {
    return std::holds_alternative<TestRunEvent>(e);
  }));
}

std::vector<std::string> SessionLog::file_paths() const {
  std::set<std::string> paths;
  for (const auto& [path, text] : starter) paths.insert(path);
  for (const auto& e : events) {
    if (const auto* edit = std::get_if<EditEvent>(&e)) paths.insert(edit->file_path);
  }
  return {paths.begin(), paths.end()};
}

bool SessionLog::has_file(std::string_view path) const {
  if (starter.find(std::string(path)) != starter.end()) return true;
  return std::any_of(events.begin(), events.end(), [&](const auto& e) {
    const auto* edit = std::get_if<EditEvent>(&e);
    return edit != nullptr && edit->file_path == path;
  });
}

std::string SessionLog::starter_text(std::string_view path) const {
  auto it = starter.find(std::string(path));
  return it == starter.end() ? std::string() : it->second;
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

std::vector<std::string> extract_code_blocks(std::string_view text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  bool inside = false;
  std::size_t content_start = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    const bool last_line = eol == std::string_view::npos;
    if (last_line) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    std::size_t lead = 0;
    while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t')) ++lead;
    const bool fence = line.substr(lead).starts_with("```");
    if (fence) {
      if (!inside) {
        inside = true;
        content_start = last_line ? text.size() : eol + 1;
      } else {
        inside = false;
        // Content ends before the newline that precedes the closing fence.
        std::size_t content_end = pos > content_start ? pos - 1 : content_start;
        if (content_end > content_start) {
          blocks.emplace_back(text.substr(content_start, content_end - content_start));
        }
      }
    }
    if (last_line) break;
    pos = eol + 1;
  }
  if (inside && content_start < text.size()) {
    blocks.emplace_back(text.substr(content_start));
  }
  return blocks;
}

ChatEvent make_chat(std::string session_id, std::int64_t timestamp_ms, ChatRole role,
                    std::string text, const ParseOptions& options) {
  ChatEvent chat;
  chat.session_id = std::move(session_id);
  chat.timestamp_ms = timestamp_ms;
  chat.role = role;
  chat.code_blocks = extract_code_blocks(text);
  if (chat.code_blocks.empty() && options.treat_whole_message_as_code &&
      role == ChatRole::Assistant && count_words(text) > 0) {
    chat.code_blocks.push_back(text);
  }
  chat.word_count = count_words(text);
  chat.text = std::move(text);
  return chat;
}

Json to_json(const EditEvent& e, bool with_session_id) {
  Json j;
  j["type"] = "edit";
  if (with_session_id) j["session_id"] = e.session_id;
  j["seq"] = e.seq;
  j["timestamp_ms"] = e.timestamp_ms;
  j["file_path"] = e.file_path;
  j["kind"] = to_string(e.kind);
  j["offset"] = e.offset;
  j["removed_text"] = e.removed_text;
  j["inserted_text"] = e.inserted_text;
  j["input_hint"] = to_string(e.input_hint);
  if (e.file_action) j["file_action"] = to_string(*e.file_action);
  return j;
}

Json to_json(const ChatEvent& e, bool with_session_id) {
  Json j;
  j["type"] = "chat";
  if (with_session_id) j["session_id"] = e.session_id;
  j["timestamp_ms"] = e.timestamp_ms;
  j["role"] = to_string(e.role);
  j["text"] = e.text;
  j["code_blocks"] = e.code_blocks;
  j["word_count"] = e.word_count;
  return j;
}

Json to_json(const TestRunEvent& e, bool with_session_id) {
  Json j;
  j["type"] = "test_run";
  if (with_session_id) j["session_id"] = e.session_id;
  j["timestamp_ms"] = e.timestamp_ms;
  j["passed"] = e.passed;
  j["failed"] = e.failed;
  j["raw_output"] = e.raw_output;
  return j;
}

Json to_json(const SessionEvent& event, bool with_session_id) {
  return std::visit([&](const auto& e) { return to_json(e, with_session_id); }, event);
}

EditEvent edit_from_json(const Json& record, std::string_view where) {
  if (!record.is_object()) schema(where, "expected object");
  EditEvent e;
  check_session_id(record, where, e.session_id);
  auto seq = get_nonneg(record, where, "seq");
  if (seq < 1) schema(at(where, "seq"), "expected positive integer");
  e.seq = static_cast<std::uint64_t>(seq);
  e.timestamp_ms = get_nonneg(record, where, "timestamp_ms");
  e.file_path = get_string(record, where, "file_path");
  if (e.file_path.empty()) schema(at(where, "file_path"), "must be nonempty");
  e.kind = get_enum(record, where, "kind", kKinds);
  e.offset = static_cast<std::size_t>(get_nonneg(record, where, "offset", 0));
  e.removed_text = get_string(record, where, "removed_text", std::string());
  e.inserted_text = get_string(record, where, "inserted_text", std::string());
  e.input_hint = get_enum(record, where, "input_hint", kHints, std::optional<InputHint>(InputHint::Unknown));
  if (record.contains("file_action")) {
    e.file_action = get_enum(record, where, "file_action", kActions);
  }

  switch (e.kind) {
    case EditKind::Insert:
      if (e.inserted_text.empty()) schema(at(where, "inserted_text"), "insert requires text");
      if (!e.removed_text.empty()) schema(at(where, "removed_text"), "insert must not remove text");
      break;
    case EditKind::Delete:
      if (e.removed_text.empty()) schema(at(where, "removed_text"), "delete requires text");
      if (!e.inserted_text.empty()) schema(at(where, "inserted_text"), "delete must not insert text");
      break;
    case EditKind::Replace:
      if (e.removed_text.empty()) schema(at(where, "removed_text"), "replace requires text");
      if (e.inserted_text.empty()) schema(at(where, "inserted_text"), "replace requires text");
      break;
    case EditKind::FileAction:
      if (!e.file_action) schema(at(where, "file_action"), "missing for kind file_action");
      if (e.offset != 0) schema(at(where, "offset"), "file_action requires offset 0");
      if (!e.removed_text.empty() || !e.inserted_text.empty()) {
        schema(at(where, "inserted_text"), "file_action carries no text");
      }
      break;
  }
  if (e.kind != EditKind::FileAction && e.file_action) {
    schema(at(where, "file_action"), "present only for kind file_action");
  }
  return e;
}

ChatEvent chat_from_json(const Json& record, std::string_view where, const ParseOptions& options) {
  if (!record.is_object()) schema(where, "expected object");
  std::string session_id;
  check_session_id(record, where, session_id);
  auto timestamp = get_nonneg(record, where, "timestamp_ms");
  auto role = get_enum(record, where, "role", kRoles);
  auto text = get_string(record, where, "text");
  ChatEvent chat = make_chat(std::move(session_id), timestamp, role, std::move(text), options);

  if (auto it = record.find("code_blocks"); it != record.end()) {
    if (!it->is_array()) schema(at(where, "code_blocks"), "expected array");
    std::vector<std::string> blocks;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& b = (*it)[i];
      auto loc = at(at(where, "code_blocks"), std::to_string(i));
      if (!b.is_string()) schema(loc, "expected string");
      auto block = b.get<std::string>();
      if (chat.text.find(block) == std::string::npos) {
        schema(loc, "code block is not a substring of text");
      }
      blocks.push_back(std::move(block));
    }
    chat.code_blocks = std::move(blocks);
  }
  if (record.contains("word_count")) {
    auto stored = get_nonneg(record, where, "word_count");
    if (static_cast<std::size_t>(stored) != chat.word_count) {
      schema(at(where, "word_count"), "stored " + std::to_string(stored) + " but text has " +
                                          std::to_string(chat.word_count) + " words");
    }
  }
  return chat;
}

TestRunEvent test_run_from_json(const Json& record, std::string_view where) {
  if (!record.is_object()) schema(where, "expected object");
  TestRunEvent t;
  check_session_id(record, where, t.session_id);
  t.timestamp_ms = get_nonneg(record, where, "timestamp_ms");
  t.passed = get_nonneg(record, where, "passed");
  t.failed = get_nonneg(record, where, "failed");
  t.raw_output = get_string(record, where, "raw_output", std::string());
  return t;
}

SessionEvent event_from_json(const Json& record, std::string_view where, const ParseOptions& options) {
  if (!record.is_object()) schema(where, "expected object");
  auto type = get_string(record, where, "type");
  if (type == "edit") return edit_from_json(record, where);
  if (type == "chat") return chat_from_json(record, where, options);
  if (type == "test_run") return test_run_from_json(record, where);
  schema(at(where, "type"), "unknown event type '" + type + "'");
}

void OrderTracker::check(const SessionEvent& event, std::string_view where) const {
  const auto t = timestamp_of(event);
  if (any && t < last_timestamp) {
    throw Error(ErrorCode::TimestampRegression, std::string(where) + ": timestamp " +
                                                    std::to_string(last_timestamp) + " -> " +
                                                    std::to_string(t));
  }
  if (const auto* edit = std::get_if<EditEvent>(&event)) {
    if (last_seq && edit->seq <= *last_seq) {
      throw Error(ErrorCode::SeqOrderViolation, std::string(where) + ": seq " +
                                                    std::to_string(*last_seq) + " -> " +
                                                    std::to_string(edit->seq));
    }
  }
}

void OrderTracker::accept(const SessionEvent& event) {
  last_timestamp = timestamp_of(event);
  any = true;
  if (const auto* edit = std::get_if<EditEvent>(&event)) last_seq = edit->seq;
}

Json header_json(const SessionLog& log) {
  Json j;
  j["type"] = "header";
  j["session_id"] = log.session_id;
  Json meta;
  meta["task_id"] = log.metadata.task_id;
  meta["condition"] = log.metadata.condition;
  meta["duration_ms"] = log.metadata.duration_ms;
  j["metadata"] = std::move(meta);
  Json starter = Json::object();
  for (const auto& [path, text] : log.starter) starter[path] = text;
  j["starter"] = std::move(starter);
  return j;
}

void apply_header(SessionLog& log, const Json& header, std::string_view where) {
  if (!header.is_object()) schema(where, "expected object");
  log.session_id = get_string(header, where, "session_id");
  if (log.session_id.empty()) schema(at(where, "session_id"), "must be nonempty");
  if (auto it = header.find("metadata"); it != header.end()) {
    if (!it->is_object()) schema(at(where, "metadata"), "expected object");
    auto mw = at(where, "metadata");
    log.metadata.task_id = get_string(*it, mw, "task_id", std::string());
    log.metadata.condition = get_string(*it, mw, "condition", std::string());
    log.metadata.duration_ms = get_nonneg(*it, mw, "duration_ms", 0);
  }
  if (auto it = header.find("starter"); it != header.end()) {
    if (!it->is_object()) schema(at(where, "starter"), "expected object");
    for (const auto& [path, text] : it->items()) {
      auto loc = at(at(where, "starter"), path);
      if (!text.is_string()) schema(loc, "expected string");
      auto value = text.get<std::string>();
      if (!utf8::is_valid(value)) schema(loc, "invalid UTF-8");
      log.starter[path] = std::move(value);
    }
  }
}

namespace {

void append_event(SessionLog& log, OrderTracker& order, const Json& record, std::string_view where,
                  const ParseOptions& options) {
  auto event = event_from_json(record, where, options);
  std::visit(
      [&](auto& e) {
        if (!e.session_id.empty() && e.session_id != log.session_id) {
          schema(at(where, "session_id"), "does not match session '" + log.session_id + "'");
        }
        e.session_id = log.session_id;
      },
      event);
  order.check(event, where);
  order.accept(event);
  log.events.push_back(std::move(event));
}

}  // namespace

SessionLog parse_session(std::string_view bytes, const ParseOptions& options) {
  if (!utf8::is_valid(bytes)) throw Error(ErrorCode::MalformedJson, "input is not valid UTF-8");
  Json doc = parse_json(bytes, "");
  if (!doc.is_object()) schema("", "top level must be an object");
  SessionLog log;
  apply_header(log, doc, "");
  const auto& events = require(doc, "", "events");
  if (!events.is_array()) schema("/events", "expected array");
  OrderTracker order;
  for (std::size_t i = 0; i < events.size(); ++i) {
    append_event(log, order, events[i], "/events/" + std::to_string(i), options);
  }
  return log;
}

std::string serialize_session(const SessionLog& log) {
  Json doc = header_json(log);
  doc.erase("type");
  Json events = Json::array();
  for (const auto& e : log.events) events.push_back(to_json(e));
  doc["events"] = std::move(events);
  return doc.dump(2) + "\n";
}

SessionLog parse_session_ndjson(std::string_view bytes, const ParseOptions& options) {
  if (!utf8::is_valid(bytes)) throw Error(ErrorCode::MalformedJson, "input is not valid UTF-8");
  SessionLog log;
  OrderTracker order;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto eol = bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = bytes.size();
    auto line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto where = "line " + std::to_string(line_no);
    Json record = parse_json(line, where);
    if (!have_header) {
      if (!record.is_object() || record.value("type", "") != "header") {
        schema(where, "first record must be a header");
      }
      apply_header(log, record, where);
      have_header = true;
      continue;
    }
    append_event(log, order, record, where, options);
  }
  if (!have_header) schema("line 1", "missing header record");
  return log;
}

std::string serialize_session_ndjson(const SessionLog& log) {
  std::string out = header_json(log).dump() + "\n";
  for (const auto& e : log.events) out += to_json(e, true).dump() + "\n";
  return out;
}

SessionLog load_session_file(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedJson, path.string() + ": cannot read file");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto ext = path.extension().string();
  bool ndjson = ext == ".ndjson" || ext == ".jsonl";
  if (!ndjson) {
    auto first = bytes.substr(0, bytes.find('\n'));
    ndjson = first.find("\"type\"") != std::string::npos &&
             first.find("\"header\"") != std::string::npos && first.find('{') == 0;
  }
  try {
    return ndjson ? parse_session_ndjson(bytes, options) : parse_session(bytes, options);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

}  // namespace codetrail
