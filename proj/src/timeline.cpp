#include "codetrail/timeline.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"

namespace codetrail {

namespace {

using OverlayKey = std::tuple<Source, std::uint64_t, std::optional<ChatRef>, std::size_t, std::size_t>;

std::vector<OverlayKey> ai_geometry(const Document& doc) {
  std::vector<OverlayKey> keys;
  std::vector<std::size_t> newlines;
  bool any = std::any_of(doc.spans().begin(), doc.spans().end(),
                         [](const ProvenanceSpan& s) { return is_ai(s.source); });
  if (!any) return keys;
  const auto& text = doc.text();
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == U'\n') newlines.push_back(i);
  }
  auto line_of = [&](std::size_t pos) {
    return 1 + static_cast<std::size_t>(std::lower_bound(newlines.begin(), newlines.end(), pos) -
                                        newlines.begin());
  };
  for (const auto& s : doc.spans()) {
    if (!is_ai(s.source)) continue;
    keys.emplace_back(s.source, s.origin_seq, s.chat_ref, line_of(s.start), line_of(s.end - 1));
  }
  return keys;
}

std::pair<std::string, bool> excerpt(const std::string& text, std::size_t limit) {
  if (utf8::length(text) <= limit) return {text, false};
  auto decoded = utf8::decode(text).value_or(std::u32string());
  return {utf8::encode(std::u32string_view(decoded).substr(0, limit)), true};
}

}  // namespace

std::string_view to_string(MarkerKind kind) {
  return kind == MarkerKind::Insert ? "insert" : "delete";
}

std::size_t TimelineModel::line_count_at(std::int64_t t) const {
  auto it = std::upper_bound(envelope.begin(), envelope.end(), t,
                             [](std::int64_t v, const auto& p) { return v < p.first; });
  if (it == envelope.begin()) return envelope.empty() ? 0 : envelope.front().second;
  return std::prev(it)->second;
}

std::string default_file(const SessionLog& log) {
  if (!log.starter.empty()) return log.starter.begin()->first;
  for (const auto& e : log.events) {
    if (const auto* edit = std::get_if<EditEvent>(&e)) return edit->file_path;
  }
  return {};
}

Timeline::Timeline(std::shared_ptr<const LabeledSession> session, std::string file_path,
                   ViewportHints hints)
    : session_(std::move(session)), hints_(hints) {
  const auto& log = session_->log;
  model_.session_id = log.session_id;
  model_.file_path = file_path.empty() ? default_file(log) : std::move(file_path);
  build();
}

void Timeline::build() {
  const auto& log = session_->log;
  auto& m = model_;
  m.t_min = 0;
  m.t_max = 0;
  for (const auto& e : log.events) m.t_max = std::max(m.t_max, timestamp_of(e));
  for (const auto& e : log.events) {
    if (const auto* chat = std::get_if<ChatEvent>(&e)) {
      m.chat_bars.push_back({chat->timestamp_ms, chat->role, chat->word_count, chat->text});
    }
  }

  if (!m.file_path.empty()) {
    if (!log.has_file(m.file_path)) {
      throw Error(ErrorCode::UnknownFile, "no file '" + m.file_path + "' in session " + log.session_id);
    }
    Document doc(m.file_path, log.starter_text(m.file_path));
    auto labels = session_->lookup();
    m.envelope.emplace_back(m.t_min, doc.line_count());

    std::vector<std::pair<OverlayKey, std::int64_t>> open;  // key -> t_start
    auto close = [&](const OverlayKey& key, std::int64_t t_start, std::int64_t t_end, bool at_end) {
      if (t_start == t_end && !at_end) return;  // superseded within one timestamp
      const auto& [src, seq, ref, l0, l1] = key;
      m.overlays.push_back({t_start, t_end, l0, l1, src, seq, ref});
    };

    for (const auto& e : log.events) {
      const auto* edit = std::get_if<EditEvent>(&e);
      if (edit == nullptr || edit->file_path != m.file_path) continue;
      if (edit->kind == EditKind::FileAction) continue;
      const std::size_t line = doc.line_of(edit->offset);
      if (edit->kind == EditKind::Delete || edit->kind == EditKind::Replace) {
        m.markers.push_back({edit->timestamp_ms, line, MarkerKind::Delete, edit->seq, edit->offset});
      }
      if (edit->is_insertion()) {
        m.markers.push_back({edit->timestamp_ms, line, MarkerKind::Insert, edit->seq, edit->offset});
      }
      edits_.push_back({edit->timestamp_ms, edit->seq, line, edit->offset, edit->kind,
                        edit->inserted_text, edit->removed_text});
      doc.apply(*edit, labels(*edit));

      const auto t = edit->timestamp_ms;
      const auto lines = doc.line_count();
      if (t == m.envelope.back().first) {
        m.envelope.back().second = lines;
        if (m.envelope.size() > 1 && m.envelope[m.envelope.size() - 2].second == lines) {
          m.envelope.pop_back();
        }
      } else if (lines != m.envelope.back().second) {
        m.envelope.emplace_back(t, lines);
      }

      auto now = ai_geometry(doc);
      std::vector<std::pair<OverlayKey, std::int64_t>> next;
      for (auto& [key, t_start] : open) {
        if (std::find(now.begin(), now.end(), key) != now.end()) {
          next.emplace_back(key, t_start);
        } else {
          close(key, t_start, t, false);
        }
      }
      for (auto& key : now) {
        auto found = std::find_if(next.begin(), next.end(), [&](const auto& p) { return p.first == key; });
        if (found == next.end()) next.emplace_back(key, t);
      }
      open = std::move(next);
    }
    for (auto& [key, t_start] : open) close(key, t_start, m.t_max, true);
    std::sort(m.overlays.begin(), m.overlays.end(), [](const auto& a, const auto& b) {
      return std::tie(a.t_start, a.line_start, a.origin_seq, a.t_end) <
             std::tie(b.t_start, b.line_start, b.origin_seq, b.t_end);
    });
  }

  for (const auto& [t, lines] : m.envelope) m.max_line = std::max(m.max_line, lines);

  if (m.max_line == 0) {
    m.projection = {0, 0};
  } else {
    std::size_t first = std::clamp<std::size_t>(hints_.first_visible_line.value_or(1), 1, m.max_line);
    std::size_t count = hints_.visible_lines.value_or(m.max_line);
    std::size_t last = count == 0 ? first : std::min(m.max_line, first + count - 1);
    m.projection = {first, last};
  }
}

ZoomDetail Timeline::zoom(std::int64_t t0, std::int64_t t1) const {
  ZoomDetail detail{t0, t1, {}};
  if (t0 > t1) return detail;
  auto lo = std::lower_bound(edits_.begin(), edits_.end(), t0,
                             [](const EditRecord& r, std::int64_t t) { return r.t < t; });
  for (auto it = lo; it != edits_.end() && it->t <= t1; ++it) {
    auto [ins, ins_cut] = excerpt(it->inserted, hints_.excerpt_length);
    auto [rem, rem_cut] = excerpt(it->removed, hints_.excerpt_length);
    detail.entries.push_back({it->t, it->seq, it->line, it->kind, std::move(ins), ins_cut,
                              std::move(rem), rem_cut});
  }
  return detail;
}

PickResult Timeline::hit_test(std::int64_t t, std::size_t line) const {
  const auto& m = model_;
  if (t < m.t_min || t > m.t_max || line < 1 || line > std::max<std::size_t>(1, m.max_line)) {
    throw Error(ErrorCode::OutOfExtent, "pick (" + std::to_string(t) + ", " + std::to_string(line) +
                                            ") outside timeline extents");
  }
  PickResult pick;
  pick.line = line;

  const auto& r = hints_.pick_radius;
  auto lo = std::lower_bound(m.markers.begin(), m.markers.end(), t - r.ms,
                             [](const TimelineMarker& mk, std::int64_t v) { return mk.t < v; });
  std::optional<double> best;
  for (auto it = lo; it != m.markers.end() && it->t <= t + r.ms; ++it) {
    const double dt = static_cast<double>(it->t - t) / static_cast<double>(std::max<std::int64_t>(r.ms, 1));
    const double dl = (static_cast<double>(it->line) - static_cast<double>(line)) / std::max(r.lines, 1e-9);
    const double d2 = dt * dt + dl * dl;
    if (d2 <= 1.0 && (!best || d2 < *best)) {
      best = d2;
      pick.marker_index = static_cast<std::size_t>(it - m.markers.begin());
    }
  }
  if (pick.marker_index) {
    const auto& mk = m.markers[*pick.marker_index];
    pick.kind = PickResult::Kind::Marker;
    pick.seq = mk.seq;
    pick.line = mk.line;
    pick.offset = mk.offset;
    return pick;
  }

  Replayer replayer(session_->log, m.file_path, session_->lookup());
  const auto& doc = replayer.advance_to(t);
  for (std::size_t i = 0; i < m.overlays.size(); ++i) {
    const auto& o = m.overlays[i];
    if (o.t_start <= t && t <= o.t_end && o.line_start <= line && line <= o.line_end) {
      pick.kind = PickResult::Kind::Overlay;
      pick.overlay_index = i;
      pick.offset = doc.offset_of_line(line);
      for (const auto& s : doc.spans()) {
        if (s.source == o.source && s.origin_seq == o.origin_seq && s.chat_ref == o.chat_ref) {
          pick.span = s;
          pick.offset = s.start;
          break;
        }
      }
      return pick;
    }
  }
  pick.kind = PickResult::Kind::Position;
  pick.offset = doc.offset_of_line(line);
  return pick;
}

TimelineModel build_timeline(const LabeledSession& session, const std::string& file_path,
                             const ViewportHints& hints) {
  // The Timeline keeps a shared pointer; a non-owning alias suffices here.
  std::shared_ptr<const LabeledSession> alias(std::shared_ptr<const LabeledSession>{}, &session);
  return Timeline(alias, file_path, hints).model();
}

Json to_json(const TimelineModel& m) {
  Json j;
  j["schema_version"] = m.schema_version;
  j["session_id"] = m.session_id;
  j["file_path"] = m.file_path;
  j["t_min"] = m.t_min;
  j["t_max"] = m.t_max;
  j["max_line"] = m.max_line;
  Json env = Json::array();
  for (const auto& [t, n] : m.envelope) env.push_back({{"t", t}, {"line_count", n}});
  j["envelope"] = std::move(env);
  Json markers = Json::array();
  for (const auto& mk : m.markers) {
    markers.push_back({{"t", mk.t}, {"line", mk.line}, {"kind", to_string(mk.kind)},
                       {"seq", mk.seq}, {"offset", mk.offset}});
  }
  j["markers"] = std::move(markers);
  Json overlays = Json::array();
  for (const auto& o : m.overlays) {
    overlays.push_back({{"t_start", o.t_start}, {"t_end", o.t_end}, {"line_start", o.line_start},
                        {"line_end", o.line_end}, {"source", to_string(o.source)},
                        {"origin_seq", o.origin_seq},
                        {"chat_ref", o.chat_ref ? to_json(*o.chat_ref) : Json(nullptr)}});
  }
  j["overlays"] = std::move(overlays);
  Json bars = Json::array();
  for (const auto& b : m.chat_bars) {
    bars.push_back({{"t", b.t}, {"role", to_string(b.role)}, {"height", b.height}, {"text", b.text}});
  }
  j["chat_bars"] = std::move(bars);
  j["projection"] = {{"first_visible_line", m.projection.first_visible_line},
                     {"last_visible_line", m.projection.last_visible_line}};
  return j;
}

Json to_json(const ZoomDetail& d) {
  Json j;
  j["t0"] = d.t0;
  j["t1"] = d.t1;
  Json entries = Json::array();
  for (const auto& e : d.entries) {
    entries.push_back({{"t", e.t}, {"seq", e.seq}, {"line", e.line}, {"kind", to_string(e.kind)},
                       {"inserted_excerpt", e.inserted_excerpt},
                       {"inserted_truncated", e.inserted_truncated},
                       {"removed_excerpt", e.removed_excerpt},
                       {"removed_truncated", e.removed_truncated}});
  }
  j["entries"] = std::move(entries);
  return j;
}

Json to_json(const PickResult& p) {
  static constexpr const char* kKinds[] = {"marker", "overlay", "position"};
  Json j;
  j["kind"] = kKinds[static_cast<int>(p.kind)];
  j["seq"] = p.seq ? Json(*p.seq) : Json(nullptr);
  j["marker_index"] = p.marker_index ? Json(*p.marker_index) : Json(nullptr);
  j["overlay_index"] = p.overlay_index ? Json(*p.overlay_index) : Json(nullptr);
  j["span"] = p.span ? to_json(*p.span) : Json(nullptr);
  j["line"] = p.line;
  j["offset"] = p.offset;
  return j;
}

}  // namespace codetrail
