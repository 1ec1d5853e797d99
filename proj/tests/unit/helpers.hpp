#pragma once

#include <string>

#include "codetrail/error.hpp"
#include "codetrail/session_log.hpp"
#include "doctest.h"

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(CODETRAIL_FIXTURES) + "/" + name; }

inline codetrail::SessionLog load(const std::string& name) {
  return codetrail::load_session_file(fixture(name));
}

inline codetrail::EditEvent edit(std::uint64_t seq, std::int64_t t, codetrail::EditKind kind,
                                 std::size_t offset, std::string removed, std::string inserted,
                                 codetrail::InputHint hint = codetrail::InputHint::Keystroke,
                                 std::string file = "main.py") {
  codetrail::EditEvent e;
  e.seq = seq;
  e.timestamp_ms = t;
  e.file_path = std::move(file);
  e.kind = kind;
  e.offset = offset;
  e.removed_text = std::move(removed);
  e.inserted_text = std::move(inserted);
  e.input_hint = hint;
  return e;
}

inline codetrail::EditEvent ins(std::uint64_t seq, std::int64_t t, std::size_t offset, std::string text,
                                codetrail::InputHint hint = codetrail::InputHint::Keystroke) {
  return edit(seq, t, codetrail::EditKind::Insert, offset, "", std::move(text), hint);
}

inline codetrail::EditEvent del(std::uint64_t seq, std::int64_t t, std::size_t offset, std::string removed) {
  return edit(seq, t, codetrail::EditKind::Delete, offset, std::move(removed), "");
}

inline codetrail::EditEvent rep(std::uint64_t seq, std::int64_t t, std::size_t offset, std::string removed,
                                std::string inserted) {
  return edit(seq, t, codetrail::EditKind::Replace, offset, std::move(removed), std::move(inserted));
}

// Runs `fn` and returns the code it threw; fails the test if nothing was thrown.
template <class F>
codetrail::ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const codetrail::Error& e) {
    return e.code();
  }
  FAIL("expected codetrail::Error");
  return codetrail::ErrorCode::MalformedJson;
}

}  // namespace testing
