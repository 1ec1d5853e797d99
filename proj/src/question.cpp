#include "codetrail/question.hpp"

#include "httplib.h"

#include <array>
#include <cstdio>
#include <cstdlib>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"
#include "prompt_assets.hpp"

namespace codetrail {

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string_view trim_newlines(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void replace_all(std::string& s, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
}

// Resolves the anchor to a concrete 1-based line range in `doc`.
std::pair<std::size_t, std::size_t> resolve_lines(const Document& doc, const QuestionAnchor& a) {
  if (a.span_origin_seq) {
    for (const auto& s : doc.spans()) {
      if (s.origin_seq == *a.span_origin_seq) return {doc.line_of(s.start), doc.line_of(s.end - 1)};
    }
    throw Error(ErrorCode::AnchorOutOfRange,
                "no span created by seq " + std::to_string(*a.span_origin_seq));
  }
  if (a.line_start < 1 || a.line_start > a.line_end || a.line_end > doc.line_count()) {
    throw Error(ErrorCode::AnchorOutOfRange, "lines " + std::to_string(a.line_start) + "-" +
                                                 std::to_string(a.line_end) + " outside 1-" +
                                                 std::to_string(doc.line_count()));
  }
  return {a.line_start, a.line_end};
}

constexpr std::array<std::string_view, 8> kVerbs = {
    "returns early when", "mutates the shared list while", "skips validation when",
    "rebuilds the dictionary each time", "raises an exception when", "silently ignores",
    "loads the JSON file before", "formats the result after"};
constexpr std::array<std::string_view, 8> kObjects = {
    "the input is empty", "a duplicate name is added", "the file does not exist",
    "the score is out of range", "two appointments overlap", "the key is missing",
    "the list is sorted", "an invalid rate is given"};

}  // namespace

std::string_view to_string(QuestionMode mode) {
  return mode == QuestionMode::MultipleChoice ? "multiple_choice" : "open_ended";
}

std::string_view to_string(QuestionStatus status) {
  switch (status) {
    case QuestionStatus::Draft: return "draft";
    case QuestionStatus::Sent: return "sent";
    case QuestionStatus::Answered: return "answered";
  }
  return "?";
}

std::optional<QuestionMode> question_mode_from_string(std::string_view s) {
  if (s == "multiple_choice") return QuestionMode::MultipleChoice;
  if (s == "open_ended") return QuestionMode::OpenEnded;
  return std::nullopt;
}

Json to_json(const QuestionAnchor& a) {
  Json j;
  j["timestamp_ms"] = a.timestamp_ms;
  j["line_start"] = a.line_start;
  j["line_end"] = a.line_end;
  j["span_origin_seq"] = a.span_origin_seq ? Json(*a.span_origin_seq) : Json(nullptr);
  return j;
}

QuestionAnchor anchor_from_json(const Json& j) {
  QuestionAnchor a;
  try {
    a.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    a.line_start = j.value("line_start", std::size_t{1});
    a.line_end = j.value("line_end", a.line_start);
    if (j.contains("span_origin_seq") && !j["span_origin_seq"].is_null()) {
      a.span_origin_seq = j["span_origin_seq"].get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("anchor: ") + e.what());
  }
  return a;
}

Json to_json(const Question& q) {
  Json j;
  j["id"] = q.id;
  j["session_id"] = q.session_id;
  j["anchor"] = to_json(q.anchor);
  j["mode"] = to_string(q.mode);
  j["constraints"] = q.constraints;
  j["code_context"] = q.code_context;
  j["generated_text"] = q.generated_text;
  j["expected_answer"] = q.expected_answer;
  j["status"] = to_string(q.status);
  j["student_answer"] = q.student_answer ? Json(*q.student_answer) : Json(nullptr);
  return j;
}

Json to_student_json(const Question& q) {
  Json j;
  j["question_id"] = q.id;
  j["session_id"] = q.session_id;
  j["anchor"] = to_json(q.anchor);
  j["mode"] = to_string(q.mode);
  j["text"] = q.generated_text;
  return j;
}

std::string code_context(const DocumentSnapshot& snapshot, const QuestionAnchor& anchor) {
  auto doc = Document::from_snapshot(snapshot);
  auto [first, last] = resolve_lines(doc, anchor);
  const std::size_t begin = doc.offset_of_line(first);
  std::size_t end = doc.offset_of_line(last + 1);
  if (end > begin && end <= doc.length() && doc.text()[end - 1] == U'\n') --end;

  std::u32string_view text(doc.text());
  std::string out;
  for (const auto& s : doc.spans()) {
    const auto lo = std::max(s.start, begin);
    const auto hi = std::min(s.end, end);
    if (hi <= lo) continue;
    const auto piece = utf8::encode(text.substr(lo, hi - lo));
    if (is_ai(s.source)) {
      out += "<<<AI source=";
      out += to_string(s.source);
      out += ">>>";
      out += piece;
      out += "<<<END AI>>>";
    } else {
      out += piece;
    }
  }
  return out;
}

std::string assemble_prompt(const DocumentSnapshot& snapshot, const QuestionAnchor& anchor,
                            QuestionMode mode, std::string_view constraints,
                            std::string_view session_id) {
  auto doc = Document::from_snapshot(snapshot);
  auto [first, last] = resolve_lines(doc, anchor);
  std::string prompt(prompts::kQuestion);
  replace_all(prompt, "{{session_id}}", session_id);
  replace_all(prompt, "{{file_path}}", snapshot.file_path);
  replace_all(prompt, "{{line_start}}", std::to_string(first));
  replace_all(prompt, "{{line_end}}", std::to_string(last));
  replace_all(prompt, "{{timestamp_ms}}", std::to_string(anchor.timestamp_ms));
  replace_all(prompt, "{{mode_directive}}",
              trim_newlines(mode == QuestionMode::MultipleChoice ? prompts::kMultipleChoice
                                                                 : prompts::kOpenEnded));
  std::string section;
  if (!trim(constraints).empty()) {
    section = "INSTRUCTOR CONSTRAINTS:\n";
    section += constraints;
    section += "\n\n";
  }
  replace_all(prompt, "{{constraints_section}}", section);
  // Code last so its contents are never treated as placeholders.
  replace_all(prompt, "{{code}}", code_context(snapshot, anchor));
  return prompt;
}

Generation StubProvider::generate(const std::string& prompt, std::uint64_t seed) {
  const std::uint64_t h = fnv1a(prompt, fnv1a(std::to_string(seed)));
  const std::string tag = "[stub " + hex(h) + "]";
  Generation g;
  if (prompt.find("MODE: multiple choice") != std::string::npos) {
    g.question = tag + " Which statement about the marked code is correct?\n";
    const char correct = static_cast<char>('A' + (h % 4));
    for (int i = 0; i < 4; ++i) {
      const auto k = (h >> (8 * (i + 1))) & 0xFF;
      g.question += std::string(1, static_cast<char>('A' + i)) + ") It " +
                    std::string(kVerbs[(k + i) % kVerbs.size()]) + " " +
                    std::string(kObjects[(k / 8 + i) % kObjects.size()]) + ".\n";
    }
    g.question.pop_back();
    g.expected_answer = std::string(1, correct);
  } else {
    g.question = tag + " Explain in your own words what the marked code does and what would " +
                 "break if it " + std::string(kVerbs[h % kVerbs.size()]) + " " +
                 std::string(kObjects[(h >> 8) % kObjects.size()]) + ".";
    g.expected_answer = "A complete answer traces the marked code step by step (ref " +
                        hex(h).substr(0, 8) + ").";
  }
  return g;
}

ChatCompletionProvider::ChatCompletionProvider(ChatCompletionSettings settings)
    : settings_(std::move(settings)) {}

Generation ChatCompletionProvider::generate(const std::string& prompt, std::uint64_t seed) {
  const char* key = std::getenv(settings_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::ProviderUnavailable, settings_.api_key_env + " is not set");
  }
  httplib::Client client(settings_.base_url);
  client.set_connection_timeout(settings_.timeout_s, 0);
  client.set_read_timeout(settings_.timeout_s, 0);
  client.set_bearer_token_auth(key);
  Json body;
  body["model"] = settings_.model;
  body["seed"] = seed;
  body["messages"] = Json::array({Json{{"role", "user"}, {"content", prompt}}});
  auto res = client.Post(settings_.path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::ProviderUnavailable, "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(res->status));
  }
  try {
    auto reply = Json::parse(res->body);
    return parse_generation(reply.at("choices").at(0).at("message").at("content").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedGeneration, std::string("unexpected provider reply: ") + e.what());
  }
}

std::unique_ptr<GenerationProvider> make_provider(std::string_view name,
                                                  const ChatCompletionSettings& settings) {
  if (name.empty() || name == "stub") return std::make_unique<StubProvider>();
  if (name == "chat-completion" || name == "openai") {
    return std::make_unique<ChatCompletionProvider>(settings);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown provider '" + std::string(name) + "'");
}

Generation parse_generation(std::string_view reply) {
  Generation g;
  auto q = reply.find("QUESTION:");
  auto a = reply.find("ANSWER:");
  if (q == std::string_view::npos || a == std::string_view::npos || a < q) {
    g.question = std::string(trim(reply));
    return g;
  }
  g.question = std::string(trim(reply.substr(q + 9, a - q - 9)));
  g.expected_answer = std::string(trim(reply.substr(a + 7)));
  return g;
}

bool is_valid_multiple_choice(const Generation& g) {
  std::array<int, 4> seen{};
  int options = 0;
  std::size_t pos = 0;
  const std::string& text = g.question;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    auto line = trim(std::string_view(text).substr(pos, eol - pos));
    if (line.size() >= 3 && line[0] >= 'A' && line[0] <= 'D' && line[1] == ')' && line[2] == ' ' &&
        !trim(line.substr(3)).empty()) {
      ++seen[static_cast<std::size_t>(line[0] - 'A')];
      ++options;
    }
    pos = eol + 1;
  }
  if (options != 4) return false;
  for (int n : seen) {
    if (n != 1) return false;
  }
  auto answer = trim(g.expected_answer);
  if (answer.empty() || answer[0] < 'A' || answer[0] > 'D') return false;
  return answer.size() == 1 || answer[1] == ')';
}

Generation generate_question(const std::string& prompt, GenerationProvider& provider,
                             std::uint64_t seed, QuestionMode mode) {
  auto g = provider.generate(prompt, seed);
  if (mode != QuestionMode::MultipleChoice || is_valid_multiple_choice(g)) return g;
  g = provider.generate(prompt + std::string(prompts::kFormatReminder), seed);
  if (!is_valid_multiple_choice(g)) {
    throw Error(ErrorCode::MalformedGeneration,
                "multiple-choice output lacks four labeled options after one retry");
  }
  return g;
}

void edit_and_send(Question& q, const QuestionEdits& edits) {
  if (q.status != QuestionStatus::Draft) {
    throw Error(ErrorCode::IllegalTransition,
                "question " + q.id + " is " + std::string(to_string(q.status)) + ", not draft");
  }
  Question next = q;
  if (edits.generated_text) next.generated_text = *edits.generated_text;
  if (edits.expected_answer) next.expected_answer = *edits.expected_answer;
  if (next.mode == QuestionMode::MultipleChoice &&
      !is_valid_multiple_choice({next.generated_text, next.expected_answer})) {
    throw Error(ErrorCode::MalformedGeneration, "edited question " + q.id +
                                                    " no longer has four labeled options");
  }
  next.status = QuestionStatus::Sent;
  q = std::move(next);
}

void record_answer(Question& q, std::string answer) {
  if (q.status != QuestionStatus::Sent) {
    throw Error(ErrorCode::IllegalTransition,
                "question " + q.id + " is " + std::string(to_string(q.status)) + ", not sent");
  }
  q.student_answer = std::move(answer);
  q.status = QuestionStatus::Answered;
}

}  // namespace codetrail
