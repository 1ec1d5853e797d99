#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "codetrail/replay.hpp"

namespace codetrail {

enum class QuestionMode { MultipleChoice, OpenEnded };
enum class QuestionStatus { Draft, Sent, Answered };

std::string_view to_string(QuestionMode mode);
std::string_view to_string(QuestionStatus status);
std::optional<QuestionMode> question_mode_from_string(std::string_view s);

/// A timestamped code region: an explicit line range, or the span created by
/// `span_origin_seq` in the snapshot at that time.
struct QuestionAnchor {
  std::int64_t timestamp_ms = 0;
  std::size_t line_start = 1;
  std::size_t line_end = 1;
  std::optional<std::uint64_t> span_origin_seq;

  bool operator==(const QuestionAnchor&) const = default;
};

struct Question {
  std::string id;
  std::string session_id;
  QuestionAnchor anchor;
  QuestionMode mode = QuestionMode::OpenEnded;
  std::string constraints;
  std::string code_context;
  std::string generated_text;
  std::string expected_answer;
  QuestionStatus status = QuestionStatus::Draft;
  std::optional<std::string> student_answer;

  bool operator==(const Question&) const = default;
};

Json to_json(const Question& q);
/// Payload for the student: no expected answer.
Json to_student_json(const Question& q);
QuestionAnchor anchor_from_json(const Json& j);
Json to_json(const QuestionAnchor& a);

struct Generation {
  std::string question;
  std::string expected_answer;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual Generation generate(const std::string& prompt, std::uint64_t seed) = 0;
  virtual std::string name() const = 0;
};

/// Deterministic offline provider. Output is a pure function of
/// (prompt, seed); a hash of both fills the template slots.
class StubProvider final : public GenerationProvider {
 public:
  Generation generate(const std::string& prompt, std::uint64_t seed) override;
  std::string name() const override { return "stub"; }
};

struct ChatCompletionSettings {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_s = 30;
};

/// Adapter for an OpenAI-compatible chat-completion endpoint. Throws
/// ProviderUnavailable when the key variable is unset or the call fails.
class ChatCompletionProvider final : public GenerationProvider {
 public:
  explicit ChatCompletionProvider(ChatCompletionSettings settings = {});
  Generation generate(const std::string& prompt, std::uint64_t seed) override;
  std::string name() const override { return "chat-completion:" + settings_.model; }

 private:
  ChatCompletionSettings settings_;
};

std::unique_ptr<GenerationProvider> make_provider(std::string_view name,
                                                  const ChatCompletionSettings& settings = {});

/// Splits "QUESTION: ... ANSWER: ..." provider text.
Generation parse_generation(std::string_view reply);

/// Anchored excerpt with AI-origin regions wrapped in sentinel markers.
std::string code_context(const DocumentSnapshot& snapshot, const QuestionAnchor& anchor);

std::string assemble_prompt(const DocumentSnapshot& snapshot, const QuestionAnchor& anchor,
                            QuestionMode mode, std::string_view constraints,
                            std::string_view session_id = {});

bool is_valid_multiple_choice(const Generation& g);

/// Provider output; multiple-choice replies get one format-reminder retry.
Generation generate_question(const std::string& prompt, GenerationProvider& provider,
                             std::uint64_t seed, QuestionMode mode);

struct QuestionEdits {
  std::optional<std::string> generated_text;
  std::optional<std::string> expected_answer;
};

/// Applies instructor edits and moves draft -> sent. Throws IllegalTransition.
void edit_and_send(Question& q, const QuestionEdits& edits);
/// sent -> answered. Throws IllegalTransition.
void record_answer(Question& q, std::string answer);

}  // namespace codetrail
