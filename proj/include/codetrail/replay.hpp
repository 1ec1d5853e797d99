#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codetrail/session_log.hpp"

namespace codetrail {

enum class Source { Human, AiPaste, AiComplete, AiSimilar, HumanEditOfAi };

inline constexpr std::array<Source, 5> kAllSources = {
    Source::Human, Source::AiPaste, Source::AiComplete, Source::AiSimilar, Source::HumanEditOfAi};

std::string_view to_string(Source source);
std::optional<Source> source_from_string(std::string_view name);

constexpr bool is_ai(Source s) {
  return s == Source::AiPaste || s == Source::AiComplete || s == Source::AiSimilar;
}

/// Identifies one fenced block of one assistant message.
struct ChatRef {
  std::int64_t timestamp_ms = 0;
  std::size_t block_index = 0;

  auto operator<=>(const ChatRef&) const = default;
};

struct Label {
  Source source = Source::Human;
  std::optional<ChatRef> chat_ref;

  bool operator==(const Label&) const = default;
};

struct ProvenanceSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  Source source = Source::Human;
  std::uint64_t origin_seq = 0;
  std::optional<ChatRef> chat_ref;

  std::size_t size() const { return end - start; }
  bool operator==(const ProvenanceSpan&) const = default;
};

struct DocumentSnapshot {
  std::string file_path;
  std::int64_t timestamp_ms = 0;
  std::string text;  // UTF-8
  std::size_t line_count = 0;
  std::vector<ProvenanceSpan> spans;

  bool operator==(const DocumentSnapshot&) const = default;
};

Json to_json(const ChatRef& ref);
Json to_json(const ProvenanceSpan& span);
Json to_json(const DocumentSnapshot& snapshot);

/// 0 for empty text, otherwise 1 + number of '\n'.
std::size_t count_lines(std::u32string_view text);

/// True when spans are sorted, non-empty, non-overlapping and cover exactly
/// [0, length).
bool is_partition(std::span<const ProvenanceSpan> spans, std::size_t length);

/// Mutable replay state for one file. Text is held as scalar values so event
/// offsets index it directly.
class Document {
 public:
  Document() = default;
  Document(std::string file_path, std::string_view starter_utf8);
  static Document from_snapshot(const DocumentSnapshot& snapshot);

  /// Throws OffsetOutOfRange or RemovedTextMismatch without mutating.
  void validate(const EditEvent& event) const;

  /// Applies the splice. The inserted range carries `label`; deletions only
  /// reshape existing spans. File actions only advance the timestamp.
  void apply(const EditEvent& event, const Label& label);

  /// Overwrites the attribution of [start, end).
  void relabel(std::size_t start, std::size_t end, const Label& label, std::uint64_t origin_seq);

  const std::string& file_path() const { return file_path_; }
  std::int64_t timestamp_ms() const { return timestamp_ms_; }
  void set_timestamp(std::int64_t t) { timestamp_ms_ = t; }
  const std::u32string& text() const { return text_; }
  std::size_t length() const { return text_.size(); }
  const std::vector<ProvenanceSpan>& spans() const { return spans_; }
  std::size_t line_count() const { return text_.empty() ? 0 : newlines_ + 1; }

  /// 1-based line holding `offset` (offset == length maps to the last line).
  std::size_t line_of(std::size_t offset) const;
  /// Offset of the first character of a 1-based line; lines past the end map
  /// to length().
  std::size_t offset_of_line(std::size_t line) const;

  DocumentSnapshot snapshot() const;

 private:
  void remove_range(std::size_t offset, std::size_t count);
  void insert_range(std::size_t offset, std::u32string_view text, const Label& label,
                    std::uint64_t origin_seq);
  void normalize();

  std::string file_path_;
  std::int64_t timestamp_ms_ = 0;
  std::u32string text_;
  std::size_t newlines_ = 0;
  std::vector<ProvenanceSpan> spans_;
};

DocumentSnapshot apply_event(const DocumentSnapshot& snapshot, const EditEvent& event,
                             const Label& label);

/// Label for each edit; an empty lookup labels everything HUMAN.
using LabelLookup = std::function<Label(const EditEvent&)>;

/// Forward-only replay of one file of a log. Each event is applied at most
/// once across any sequence of advance_to calls with non-decreasing t.
class Replayer {
 public:
  Replayer(const SessionLog& log, std::string file_path, LabelLookup labels = {});

  const Document& advance_to(std::int64_t t);
  const Document& finish();
  const Document& document() const { return document_; }
  std::size_t applied_count() const { return applied_; }
  /// Next event not yet consumed, or nullptr at end.
  const SessionEvent* peek() const;

 private:
  const SessionLog* log_;
  LabelLookup labels_;
  Document document_;
  std::size_t cursor_ = 0;
  std::size_t applied_ = 0;
};

/// State after replaying every edit of `file_path` with timestamp <= t.
DocumentSnapshot snapshot_at(const SessionLog& log, std::string_view file_path, std::int64_t t,
                             const LabelLookup& labels = {});

/// Line count at each sample time, in one forward pass. Samples must be
/// sorted ascending.
std::vector<std::pair<std::int64_t, std::size_t>> length_envelope(
    const SessionLog& log, std::string_view file_path, std::span<const std::int64_t> samples);

}  // namespace codetrail
