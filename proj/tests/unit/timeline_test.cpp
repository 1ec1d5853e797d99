#include "codetrail/timeline.hpp"

#include <random>

#include "codetrail/utf8.hpp"
#include "forge.hpp"
#include "helpers.hpp"

using namespace codetrail;
using testing::code_of;

namespace {

std::shared_ptr<const LabeledSession> labeled(const SessionLog& log) {
  return std::make_shared<const LabeledSession>(label_session(log));
}

// Line of `offset` in the text produced by every edit before `seq`.
std::size_t brute_line(const SessionLog& log, const std::string& file, std::uint64_t seq, std::size_t offset) {
  std::u32string doc = *utf8::decode(log.starter_text(file));
  for (const auto& ev : log.events) {
    const auto* e = std::get_if<EditEvent>(&ev);
    if (e == nullptr || e->file_path != file) continue;
    if (e->seq == seq) break;
    if (e->kind == EditKind::FileAction) continue;
    auto removed = utf8::length(e->removed_text);
    doc = doc.substr(0, e->offset) + *utf8::decode(e->inserted_text) + doc.substr(e->offset + removed);
  }
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < doc.size(); ++i) line += doc[i] == U'\n';
  return line;
}

}  // namespace

TEST_CASE("markers sit on the pre-event line of every edit") {
  for (const char* name : {"gradebook.json", "scheduler.ndjson", "tiny.json"}) {
    auto log = testing::load(name);
    auto session = labeled(log);
    for (const auto& file : log.file_paths()) {
      Timeline tl(session, file);
      std::size_t expected = 0;
      for (const auto& ev : log.events) {
        const auto* e = std::get_if<EditEvent>(&ev);
        if (e == nullptr || e->file_path != file || e->kind == EditKind::FileAction) continue;
        expected += e->kind == EditKind::Replace ? 2 : 1;
      }
      REQUIRE(tl.model().markers.size() == expected);
      for (const auto& mk : tl.model().markers) {
        CHECK(mk.line == brute_line(log, file, mk.seq, mk.offset));
      }
    }
  }
}

TEST_CASE("envelope matches replayed line counts") {
  auto log = forge::long_session(4, 600);
  auto session = labeled(log);
  Timeline tl(session);
  const auto& m = tl.model();
  CHECK(m.file_path == "main.py");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(m.t_max + 1));
    CHECK(m.line_count_at(t) == snapshot_at(log, "main.py", t).line_count);
  }
  for (std::size_t i = 1; i < m.envelope.size(); ++i) {
    CHECK(m.envelope[i].first > m.envelope[i - 1].first);
    CHECK(m.envelope[i].second != m.envelope[i - 1].second);
  }
  std::size_t max_line = 0;
  for (const auto& [t, n] : m.envelope) max_line = std::max(max_line, n);
  CHECK(m.max_line == max_line);
}

TEST_CASE("overlays follow AI spans") {
  auto log = testing::load("gradebook.json");
  auto session = labeled(log);
  Timeline tl(session);
  const auto& m = tl.model();
  REQUIRE_FALSE(m.overlays.empty());
  for (const auto& o : m.overlays) {
    CHECK(is_ai(o.source));
    CHECK(o.t_start <= o.t_end);
    CHECK(o.line_start <= o.line_end);
    // the span exists at both ends of the piece
    for (auto t : {o.t_start, o.t_end}) {
      auto snap = snapshot_at(log, m.file_path, t, session->lookup());
      bool found = false;
      for (const auto& s : snap.spans) found |= s.origin_seq == o.origin_seq && s.source == o.source;
      CHECK(found);
    }
  }
  // the pasted block survives to the end
  bool paste_to_end = false;
  for (const auto& o : m.overlays) paste_to_end |= o.source == Source::AiPaste && o.t_end == m.t_max;
  CHECK(paste_to_end);
}

TEST_CASE("chat bars and projection") {
  auto log = testing::load("gradebook.json");
  auto session = labeled(log);
  ViewportHints hints;
  hints.first_visible_line = 10;
  hints.visible_lines = 20;
  Timeline tl(session, "", hints);
  const auto& m = tl.model();
  REQUIRE(m.chat_bars.size() == 4);
  CHECK(m.chat_bars[0].role == ChatRole::Student);
  CHECK(m.chat_bars[0].height == count_words(m.chat_bars[0].text));
  CHECK(m.projection == Projection{10, 29});
  hints.first_visible_line = 10000;
  CHECK(Timeline(session, "", hints).model().projection.first_visible_line == m.max_line);
  CHECK(code_of([&] { Timeline(session, "missing.py"); }) == ErrorCode::UnknownFile);
}

TEST_CASE("zoom returns the closed window") {
  auto log = testing::load("tiny.json");
  Timeline tl(labeled(log));
  auto all = tl.zoom(0, 1'000'000);
  CHECK(all.entries.size() == log.edit_count());
  auto first = std::get<EditEvent>(log.events.front());
  auto one = tl.zoom(first.timestamp_ms, first.timestamp_ms);
  REQUIRE(one.entries.size() == 1);
  CHECK(one.entries[0].seq == first.seq);
  CHECK(tl.zoom(10, 5).entries.empty());

  ViewportHints hints;
  hints.excerpt_length = 3;
  Timeline short_tl(labeled(log), "", hints);
  for (const auto& e : short_tl.zoom(0, 1'000'000).entries) {
    CHECK(utf8::length(e.inserted_excerpt) <= 3);
    if (e.inserted_excerpt == "hel") CHECK(e.inserted_truncated);
  }
}

TEST_CASE("hit test agrees with a brute-force search") {
  auto log = forge::forge_session(11, {.behaviors = 30}).log;
  auto session = labeled(log);
  Timeline tl(session);
  const auto& m = tl.model();
  const auto& r = tl.hints().pick_radius;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(m.t_max + 1));
    const std::size_t line = 1 + rng() % m.max_line;
    auto pick = tl.hit_test(t, line);

    std::optional<std::size_t> best;
    double best_d = 2.0;
    for (std::size_t k = 0; k < m.markers.size(); ++k) {
      const double dt = double(m.markers[k].t - t) / double(r.ms);
      const double dl = (double(m.markers[k].line) - double(line)) / r.lines;
      const double d = dt * dt + dl * dl;
      if (d <= 1.0 && d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best) {
      REQUIRE(pick.kind == PickResult::Kind::Marker);
      CHECK(pick.seq == m.markers[*best].seq);
      continue;
    }
    std::optional<std::size_t> overlay;
    for (std::size_t k = 0; k < m.overlays.size() && !overlay; ++k) {
      const auto& o = m.overlays[k];
      if (o.t_start <= t && t <= o.t_end && o.line_start <= line && line <= o.line_end) overlay = k;
    }
    if (overlay) {
      REQUIRE(pick.kind == PickResult::Kind::Overlay);
      CHECK(pick.overlay_index == overlay);
      REQUIRE(pick.span);
      CHECK(pick.span->origin_seq == m.overlays[*overlay].origin_seq);
    } else {
      CHECK(pick.kind == PickResult::Kind::Position);
    }
  }
  CHECK(code_of([&] { tl.hit_test(-1, 1); }) == ErrorCode::OutOfExtent);
  CHECK(code_of([&] { tl.hit_test(0, m.max_line + 1); }) == ErrorCode::OutOfExtent);
}

TEST_CASE("timeline json has the documented keys") {
  auto j = to_json(build_timeline(label_session(testing::load("scheduler.ndjson")), "scheduler.py"));
  CHECK(j["schema_version"] == 1);
  CHECK(j["file_path"] == "scheduler.py");
  for (const char* key : {"envelope", "markers", "overlays", "chat_bars", "projection"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["markers"][0]["kind"].is_string());
  CHECK(j["overlays"][0]["source"] == "AI_PASTE");
}
