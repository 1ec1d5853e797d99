#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "codetrail/provenance.hpp"
#include "codetrail/replay.hpp"

namespace codetrail {

inline constexpr int kTimelineSchemaVersion = 1;

enum class MarkerKind { Insert, Delete };
std::string_view to_string(MarkerKind kind);

struct TimelineMarker {
  std::int64_t t = 0;
  std::size_t line = 0;  // 1-based, against the pre-event document
  MarkerKind kind = MarkerKind::Insert;
  std::uint64_t seq = 0;
  std::size_t offset = 0;

  bool operator==(const TimelineMarker&) const = default;
};

/// One constant-geometry piece of an AI span's trail. Time and line ranges
/// are closed intervals.
struct TimelineOverlay {
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::size_t line_start = 0;
  std::size_t line_end = 0;
  Source source = Source::AiPaste;
  std::uint64_t origin_seq = 0;
  std::optional<ChatRef> chat_ref;

  bool operator==(const TimelineOverlay&) const = default;
};

struct ChatBar {
  std::int64_t t = 0;
  ChatRole role = ChatRole::Student;
  std::size_t height = 0;  // word count
  std::string text;

  bool operator==(const ChatBar&) const = default;
};

struct Projection {
  std::size_t first_visible_line = 0;
  std::size_t last_visible_line = 0;

  bool operator==(const Projection&) const = default;
};

struct TimelineModel {
  int schema_version = kTimelineSchemaVersion;
  std::string session_id;
  std::string file_path;
  std::int64_t t_min = 0;
  std::int64_t t_max = 0;
  std::size_t max_line = 0;
  /// Change points of the line count; the value holds until the next point.
  std::vector<std::pair<std::int64_t, std::size_t>> envelope;
  std::vector<TimelineMarker> markers;
  std::vector<TimelineOverlay> overlays;
  std::vector<ChatBar> chat_bars;
  Projection projection;

  /// Piecewise-constant envelope lookup.
  std::size_t line_count_at(std::int64_t t) const;
  bool operator==(const TimelineModel&) const = default;
};

struct PickRadius {
  std::int64_t ms = 1000;
  double lines = 1.0;
};

struct ViewportHints {
  std::optional<std::size_t> first_visible_line;
  std::optional<std::size_t> visible_lines;
  std::size_t excerpt_length = 80;
  PickRadius pick_radius;
};

struct ZoomEntry {
  std::int64_t t = 0;
  std::uint64_t seq = 0;
  std::size_t line = 0;
  EditKind kind = EditKind::Insert;
  std::string inserted_excerpt;
  bool inserted_truncated = false;
  std::string removed_excerpt;
  bool removed_truncated = false;

  bool operator==(const ZoomEntry&) const = default;
};

struct ZoomDetail {
  std::int64_t t0 = 0;
  std::int64_t t1 = 0;
  std::vector<ZoomEntry> entries;
};

struct PickResult {
  enum class Kind { Marker, Overlay, Position };
  Kind kind = Kind::Position;
  std::optional<std::size_t> marker_index;
  std::optional<std::uint64_t> seq;
  std::optional<std::size_t> overlay_index;
  std::optional<ProvenanceSpan> span;
  std::size_t line = 0;
  std::size_t offset = 0;
};

/// Timeline for one file of a labeled session, plus the per-edit index that
/// zoom and hit_test query.
class Timeline {
 public:
  /// Empty `file_path` selects the first starter file (or first edited file).
  explicit Timeline(std::shared_ptr<const LabeledSession> session, std::string file_path = {},
                    ViewportHints hints = {});

  const TimelineModel& model() const { return model_; }
  const ViewportHints& hints() const { return hints_; }

  /// Events with t0 <= t <= t1; empty when the window is empty.
  ZoomDetail zoom(std::int64_t t0, std::int64_t t1) const;

  /// Nearest marker within the pick radius, else the first overlay covering
  /// the point, else the document position of `line` at time t. Throws
  /// OutOfExtent.
  PickResult hit_test(std::int64_t t, std::size_t line) const;

 private:
  struct EditRecord {
    std::int64_t t;
    std::uint64_t seq;
    std::size_t line;
    std::size_t offset;
    EditKind kind;
    std::string inserted;
    std::string removed;
  };

  void build();

  std::shared_ptr<const LabeledSession> session_;
  ViewportHints hints_;
  TimelineModel model_;
  std::vector<EditRecord> edits_;
};

std::string default_file(const SessionLog& log);

TimelineModel build_timeline(const LabeledSession& session, const std::string& file_path = {},
                             const ViewportHints& hints = {});

Json to_json(const TimelineModel& model);
Json to_json(const ZoomDetail& detail);
Json to_json(const PickResult& pick);

}  // namespace codetrail
