#include "codetrail/replay.hpp"

#include <algorithm>
#include <stdexcept>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"

namespace codetrail {

namespace {

constexpr std::pair<std::string_view, Source> kSourceNames[] = {
    {"HUMAN", Source::Human},
    {"AI_PASTE", Source::AiPaste},
    {"AI_COMPLETE", Source::AiComplete},
    {"AI_SIMILAR", Source::AiSimilar},
    {"HUMAN_EDIT_OF_AI", Source::HumanEditOfAi},
};

bool same_class(const ProvenanceSpan& a, const ProvenanceSpan& b) {
  return a.source == b.source && a.chat_ref == b.chat_ref;
}

std::size_t count_newlines(std::u32string_view text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), U'\n'));
}

std::string seq_prefix(const EditEvent& e) { return "seq " + std::to_string(e.seq) + ": "; }

}  // namespace

std::string_view to_string(Source source) {
  for (const auto& [name, value] : kSourceNames) {
    if (value == source) return name;
  }
  return "?";
}

std::optional<Source> source_from_string(std::string_view name) {
  for (const auto& [n, value] : kSourceNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

Json to_json(const ChatRef& ref) {
  Json j;
  j["timestamp_ms"] = ref.timestamp_ms;
  j["block_index"] = ref.block_index;
  return j;
}

Json to_json(const ProvenanceSpan& span) {
  Json j;
  j["start"] = span.start;
  j["end"] = span.end;
  j["source"] = to_string(span.source);
  j["origin_seq"] = span.origin_seq;
  j["chat_ref"] = span.chat_ref ? to_json(*span.chat_ref) : Json(nullptr);
  return j;
}

Json to_json(const DocumentSnapshot& snapshot) {
  Json j;
  j["file_path"] = snapshot.file_path;
  j["timestamp_ms"] = snapshot.timestamp_ms;
  j["text"] = snapshot.text;
  j["line_count"] = snapshot.line_count;
  Json spans = Json::array();
  for (const auto& s : snapshot.spans) spans.push_back(to_json(s));
  j["spans"] = std::move(spans);
  return j;
}

std::size_t count_lines(std::u32string_view text) {
  return text.empty() ? 0 : count_newlines(text) + 1;
}

bool is_partition(std::span<const ProvenanceSpan> spans, std::size_t length) {
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.start != cursor || s.start >= s.end) return false;
    cursor = s.end;
  }
  return cursor == length;
}

Document::Document(std::string file_path, std::string_view starter_utf8)
    : file_path_(std::move(file_path)),
      text_(utf8::decode_or_throw(starter_utf8, "starter/" + file_path_)) {
  newlines_ = count_newlines(text_);
  if (!text_.empty()) {
    spans_.push_back({0, text_.size(), Source::Human, 0, std::nullopt});
  }
}

Document Document::from_snapshot(const DocumentSnapshot& snapshot) {
  Document doc(snapshot.file_path, snapshot.text);
  doc.timestamp_ms_ = snapshot.timestamp_ms;
  doc.spans_ = snapshot.spans;
  if (!is_partition(doc.spans_, doc.text_.size())) {
    throw std::invalid_argument("snapshot spans do not partition the text");
  }
  return doc;
}

void Document::validate(const EditEvent& event) const {
  if (event.kind == EditKind::FileAction) return;
  const std::size_t removed = utf8::length(event.removed_text);
  if (event.offset > text_.size() || removed > text_.size() - event.offset) {
    throw Error(ErrorCode::OffsetOutOfRange,
                seq_prefix(event) + "offset " + std::to_string(event.offset) + " + removed " +
                    std::to_string(removed) + " exceeds document length " +
                    std::to_string(text_.size()));
  }
  if (removed > 0) {
    auto expected = utf8::decode_or_throw(event.removed_text, seq_prefix(event) + "removed_text");
    if (std::u32string_view(text_).substr(event.offset, removed) != expected) {
      throw Error(ErrorCode::RemovedTextMismatch,
                  seq_prefix(event) + "removed_text differs from document at offset " +
                      std::to_string(event.offset));
    }
  }
}

void Document::apply(const EditEvent& event, const Label& label) {
  validate(event);
  timestamp_ms_ = event.timestamp_ms;
  if (event.kind == EditKind::FileAction) return;
  // Replace is delete-then-insert at the same offset.
  if (!event.removed_text.empty()) {
    remove_range(event.offset, utf8::length(event.removed_text));
  }
  if (!event.inserted_text.empty()) {
    auto inserted = utf8::decode_or_throw(event.inserted_text, seq_prefix(event) + "inserted_text");
    insert_range(event.offset, inserted, label, event.seq);
  }
}

void Document::remove_range(std::size_t offset, std::size_t count) {
  const std::size_t stop = offset + count;
  newlines_ -= count_newlines(std::u32string_view(text_).substr(offset, count));
  text_.erase(offset, count);

  std::vector<ProvenanceSpan> out;
  out.reserve(spans_.size());
  for (auto s : spans_) {
    if (s.end <= offset) {
      out.push_back(s);
    } else if (s.start >= stop) {
      s.start -= count;
      s.end -= count;
      out.push_back(s);
    } else {
      // Overlaps the removed range: keep whatever survives on either side.
      const std::size_t left = s.start < offset ? offset - s.start : 0;
      const std::size_t right = s.end > stop ? s.end - stop : 0;
      if (left + right > 0) {
        s.start = std::min(s.start, offset);
        s.end = s.start + left + right;
        out.push_back(s);
      }
    }
  }
  spans_ = std::move(out);
  normalize();
}

void Document::insert_range(std::size_t offset, std::u32string_view text, const Label& label,
                            std::uint64_t origin_seq) {
  const std::size_t n = text.size();
  newlines_ += count_newlines(text);
  text_.insert(offset, text);

  const ProvenanceSpan fresh{offset, offset + n, label.source, origin_seq, label.chat_ref};
  std::vector<ProvenanceSpan> out;
  out.reserve(spans_.size() + 2);
  bool placed = false;
  for (auto s : spans_) {
    if (s.end <= offset) {
      out.push_back(s);
      continue;
    }
    if (s.start < offset) {
      // Strictly inside: split into three.
      ProvenanceSpan tail = s;
      s.end = offset;
      out.push_back(s);
      out.push_back(fresh);
      placed = true;
      tail.start = offset + n;
      tail.end += n;
      out.push_back(tail);
      continue;
    }
    if (!placed) {
      out.push_back(fresh);
      placed = true;
    }
    s.start += n;
    s.end += n;
    out.push_back(s);
  }
  if (!placed) out.push_back(fresh);
  spans_ = std::move(out);
  normalize();
}

void Document::relabel(std::size_t start, std::size_t end, const Label& label,
                       std::uint64_t origin_seq) {
  if (start >= end || end > text_.size()) {
    throw std::out_of_range("relabel range outside document");
  }
  std::vector<ProvenanceSpan> out;
  out.reserve(spans_.size() + 2);
  bool placed = false;
  const ProvenanceSpan fresh{start, end, label.source, origin_seq, label.chat_ref};
  for (auto s : spans_) {
    if (s.end <= start || s.start >= end) {
      if (s.start >= end && !placed) {
        out.push_back(fresh);
        placed = true;
      }
      out.push_back(s);
      continue;
    }
    if (s.start < start) {
      ProvenanceSpan head = s;
      head.end = start;
      out.push_back(head);
    }
    if (!placed) {
      out.push_back(fresh);
      placed = true;
    }
    if (s.end > end) {
      ProvenanceSpan tail = s;
      tail.start = end;
      out.push_back(tail);
    }
  }
  if (!placed) out.push_back(fresh);
  spans_ = std::move(out);
  normalize();
}

void Document::normalize() {
  if (spans_.empty()) return;
  std::size_t w = 0;
  for (std::size_t r = 1; r < spans_.size(); ++r) {
    auto& cur = spans_[w];
    const auto& next = spans_[r];
    if (cur.end == next.start && same_class(cur, next)) {
      cur.end = next.end;
      cur.origin_seq = std::min(cur.origin_seq, next.origin_seq);
    } else {
      spans_[++w] = next;
    }
  }
  spans_.resize(w + 1);
}

std::size_t Document::line_of(std::size_t offset) const {
  offset = std::min(offset, text_.size());
  return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(offset), U'\n'));
}

std::size_t Document::offset_of_line(std::size_t line) const {
  if (line <= 1) return 0;
  std::size_t seen = 1;
  for (std::size_t i = 0; i < text_.size(); ++i) {
    if (text_[i] == U'\n' && ++seen == line) return i + 1;
  }
  return text_.size();
}

DocumentSnapshot Document::snapshot() const {
  return DocumentSnapshot{file_path_, timestamp_ms_, utf8::encode(text_), line_count(), spans_};
}

DocumentSnapshot apply_event(const DocumentSnapshot& snapshot, const EditEvent& event,
                             const Label& label) {
  auto doc = Document::from_snapshot(snapshot);
  doc.apply(event, label);
  return doc.snapshot();
}

Replayer::Replayer(const SessionLog& log, std::string file_path, LabelLookup labels)
    : log_(&log), labels_(std::move(labels)) {
  if (!log.has_file(file_path)) {
    throw Error(ErrorCode::UnknownFile, "no file '" + file_path + "' in session " + log.session_id);
  }
  auto starter = log.starter_text(file_path);
  document_ = Document(std::move(file_path), starter);
}

const SessionEvent* Replayer::peek() const {
  return cursor_ < log_->events.size() ? &log_->events[cursor_] : nullptr;
}

const Document& Replayer::advance_to(std::int64_t t) {
  while (cursor_ < log_->events.size() && timestamp_of(log_->events[cursor_]) <= t) {
    const auto* edit = std::get_if<EditEvent>(&log_->events[cursor_]);
    ++cursor_;
    if (edit == nullptr || edit->file_path != document_.file_path()) continue;
    document_.apply(*edit, labels_ ? labels_(*edit) : Label{});
    ++applied_;
  }
  if (t > document_.timestamp_ms()) document_.set_timestamp(t);
  return document_;
}

const Document& Replayer::finish() {
  while (cursor_ < log_->events.size()) {
    const auto* edit = std::get_if<EditEvent>(&log_->events[cursor_]);
    ++cursor_;
    if (edit == nullptr || edit->file_path != document_.file_path()) continue;
    document_.apply(*edit, labels_ ? labels_(*edit) : Label{});
    ++applied_;
  }
  return document_;
}

DocumentSnapshot snapshot_at(const SessionLog& log, std::string_view file_path, std::int64_t t,
                             const LabelLookup& labels) {
  Replayer replayer(log, std::string(file_path), labels);
  auto snap = replayer.advance_to(t).snapshot();
  snap.timestamp_ms = t;
  return snap;
}

std::vector<std::pair<std::int64_t, std::size_t>> length_envelope(
    const SessionLog& log, std::string_view file_path, std::span<const std::int64_t> samples) {
  if (!std::is_sorted(samples.begin(), samples.end())) {
    throw std::invalid_argument("length_envelope: sample points must be sorted");
  }
  Replayer replayer(log, std::string(file_path));
  std::vector<std::pair<std::int64_t, std::size_t>> out;
  out.reserve(samples.size());
  for (auto t : samples) out.emplace_back(t, replayer.advance_to(t).line_count());
  return out;
}

}  // namespace codetrail
