#pragma once

// Synthetic session generator for tests. Gold labels come from the planted
// behaviour plus a per-character ownership model that never touches the
// engine's span code.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "codetrail/replay.hpp"
#include "codetrail/session_log.hpp"

namespace forge {

using codetrail::Source;

enum class Behavior {
  PasteBlock,      // verbatim paste of a visible chat block
  PasteOwn,        // paste of unrelated code
  Completion,      // completion accept
  Retype,          // verbatim keystroke retype of a chat block
  Paraphrase,      // keystroke retype with renamed identifiers, below 0.6
  Organic,         // keystroke typing of unrelated code
  EditInsideAi,    // a short word typed strictly inside AI-derived code
  Delete,
  Replace,
  Chat,
  Save,
  TestRun,
};

struct ForgeOptions {
  std::size_t behaviors = 40;
  std::string file_path = "main.py";
  std::int64_t start_ms = 0;
  std::int64_t keystroke_gap_min = 30;
  std::int64_t keystroke_gap_max = 400;
  std::int64_t pause_min = 2600;  // between behaviours; must exceed run_gap_ms
  std::int64_t pause_max = 9000;
  /// Paraphrase and organic text stay below this similarity to every block.
  double human_ceiling = 0.6;
};

struct ForgedSession {
  codetrail::SessionLog log;
  std::map<std::uint64_t, Source> gold;  // insertion events by seq
  std::vector<Behavior> plan;
  std::string final_text;                // from the ownership model
  std::vector<Source> final_owner;       // per scalar value
};

/// Independent tokenizer and similarity, used to keep human text clear of
/// the threshold.
std::vector<std::string> oracle_tokens(const std::string& text);
double oracle_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b);

ForgedSession forge_session(std::uint64_t seed, const ForgeOptions& options = {});

/// Random insert/delete/replace stream (mixed scripts) with the expected
/// final text from a naive string splice.
struct SpliceSession {
  codetrail::SessionLog log;
  std::map<std::string, std::u32string> expected;
};
SpliceSession random_edit_session(std::uint64_t seed, std::size_t events, std::size_t files = 1);

/// Uniformly paced keystroke session lasting about `duration_ms`.
codetrail::SessionLog paced_session(std::uint64_t seed, std::size_t events, std::int64_t duration_ms);

/// Forged session cut to exactly `edits` edit events.
codetrail::SessionLog long_session(std::uint64_t seed, std::size_t edits);

// Sets the session id on the log and on every event.
void rename_session(codetrail::SessionLog& log, const std::string& session_id);

}  // namespace forge
