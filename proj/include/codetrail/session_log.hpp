#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace codetrail {

using Json = nlohmann::ordered_json;

enum class EditKind { Insert, Delete, Replace, FileAction };
enum class InputHint { Keystroke, Paste, CompletionAccept, Unknown };
enum class FileAction { Save, Open, Close };
enum class ChatRole { Student, Assistant };

std::string_view to_string(EditKind kind);
std::string_view to_string(InputHint hint);
std::string_view to_string(FileAction action);
std::string_view to_string(ChatRole role);

/// One keystroke-level change to a file. Offsets count Unicode scalar
/// values, not bytes.
struct EditEvent {
  std::string session_id;
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::string file_path;
  EditKind kind = EditKind::Insert;
  std::size_t offset = 0;
  std::string removed_text;
  std::string inserted_text;
  InputHint input_hint = InputHint::Unknown;
  std::optional<FileAction> file_action;

  bool is_insertion() const { return kind == EditKind::Insert || kind == EditKind::Replace; }
  bool operator==(const EditEvent&) const = default;
};

struct ChatEvent {
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  ChatRole role = ChatRole::Student;
  std::string text;
  std::vector<std::string> code_blocks;
  std::size_t word_count = 0;

  bool operator==(const ChatEvent&) const = default;
};

struct TestRunEvent {
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  std::int64_t passed = 0;
  std::int64_t failed = 0;
  std::string raw_output;

  bool operator==(const TestRunEvent&) const = default;
};

using SessionEvent = std::variant<EditEvent, ChatEvent, TestRunEvent>;

std::int64_t timestamp_of(const SessionEvent& event);

struct SessionMetadata {
  std::string task_id;
  std::string condition;
  std::int64_t duration_ms = 0;

  bool operator==(const SessionMetadata&) const = default;
};

struct SessionLog {
  std::string session_id;
  SessionMetadata metadata;
  std::map<std::string, std::string> starter;
  std::vector<SessionEvent> events;

  /// Edit events excluding file actions.
  std::size_t edit_count() const;
  std::size_t chat_count() const;
  std::size_t test_run_count() const;

  /// Files named by the starter or by any edit, sorted.
  std::vector<std::string> file_paths() const;
  bool has_file(std::string_view path) const;
  /// Starter text for `path`; files first seen in an edit start empty.
  std::string starter_text(std::string_view path) const;

  bool operator==(const SessionLog&) const = default;
};

struct ParseOptions {
  /// Assistant messages without fences contribute the whole text as a block.
  bool treat_whole_message_as_code = false;
};

/// Parses one session document and checks structure plus seq/timestamp
/// ordering. Offset validity is left to replay.
SessionLog parse_session(std::string_view bytes, const ParseOptions& options = {});
std::string serialize_session(const SessionLog& log);

/// NDJSON framing: a `header` record followed by one event record per line.
SessionLog parse_session_ndjson(std::string_view bytes, const ParseOptions& options = {});
std::string serialize_session_ndjson(const SessionLog& log);

/// Reads either framing; `.ndjson`/`.jsonl` files or a leading header record
/// select NDJSON. Error details are prefixed with the path.
SessionLog load_session_file(const std::filesystem::path& path, const ParseOptions& options = {});

// Record-level conversions, shared with the streaming protocol. `where` is a
// JSON-pointer-like location used in diagnostics.
Json to_json(const EditEvent& event, bool with_session_id = false);
Json to_json(const ChatEvent& event, bool with_session_id = false);
Json to_json(const TestRunEvent& event, bool with_session_id = false);
Json to_json(const SessionEvent& event, bool with_session_id = false);
Json header_json(const SessionLog& log);

EditEvent edit_from_json(const Json& record, std::string_view where);
ChatEvent chat_from_json(const Json& record, std::string_view where,
                         const ParseOptions& options = {});
TestRunEvent test_run_from_json(const Json& record, std::string_view where);
SessionEvent event_from_json(const Json& record, std::string_view where,
                             const ParseOptions& options = {});

/// Fills session_id and metadata/starter from a header record.
void apply_header(SessionLog& log, const Json& header, std::string_view where);

/// Checks ordering of `event` against the previous accepted event.
/// Throws SeqOrderViolation or TimestampRegression.
struct OrderTracker {
  std::optional<std::uint64_t> last_seq;
  std::int64_t last_timestamp = 0;
  bool any = false;

  void check(const SessionEvent& event, std::string_view where) const;
  void accept(const SessionEvent& event);
};

std::size_t count_words(std::string_view text);
std::vector<std::string> extract_code_blocks(std::string_view text);

/// Builds a ChatEvent with derived word_count and code_blocks.
ChatEvent make_chat(std::string session_id, std::int64_t timestamp_ms, ChatRole role,
                    std::string text, const ParseOptions& options = {});

}  // namespace codetrail
