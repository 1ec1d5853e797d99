#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codetrail/replay.hpp"
#include "codetrail/session_log.hpp"

namespace codetrail {

struct ProvenanceConfig {
  double similarity_threshold = 0.8;
  std::size_t min_run_tokens = 10;
  std::int64_t run_gap_ms = 2000;
  std::optional<std::int64_t> lookback_ms;  // nullopt = unlimited
  bool paste_requires_match = true;

  /// Throws InvalidConfig when a field is out of range.
  void validate() const;
  bool operator==(const ProvenanceConfig&) const = default;
};

Json to_json(const ProvenanceConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ProvenanceConfig provenance_config_from_json(const Json& j);
ProvenanceConfig load_provenance_config(const std::filesystem::path& path);

/// Identifier runs are one token each; other non-space characters are
/// single tokens; whitespace is dropped.
std::vector<std::string> tokenize(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// Pluggable token-sequence similarity in [0, 1].
class SimilarityMetric {
 public:
  virtual ~SimilarityMetric() = default;
  virtual double operator()(std::span<const std::string> a, std::span<const std::string> b) const = 0;
};

/// 2 * LCS / (|a| + |b|), 1.0 when both are empty.
class LcsRatio final : public SimilarityMetric {
 public:
  double operator()(std::span<const std::string> a, std::span<const std::string> b) const override;
};

double similarity(std::span<const std::string> a, std::span<const std::string> b);

/// Tokenized fenced block of one assistant message.
struct CodeBlockTokens {
  ChatRef ref;
  std::size_t chat_index = 0;  // record order among chats
  std::vector<std::string> tokens;
};

std::vector<CodeBlockTokens> index_chat_blocks(std::span<const ChatEvent> chats);

struct BlockMatch {
  double score = 0.0;
  ChatRef ref;
};

/// Best-scoring block visible at time t (block time <= t, within lookback).
/// Equal scores prefer the later chat message.
std::optional<BlockMatch> best_match(std::span<const std::string> tokens,
                                     std::span<const CodeBlockTokens> blocks, std::int64_t t,
                                     const ProvenanceConfig& cfg, const SimilarityMetric& metric);

struct TypedRun {
  std::string session_id;
  std::string file_path;
  std::uint64_t start_seq = 0;
  std::uint64_t end_seq = 0;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::string text;
  std::size_t anchor_offset = 0;
  std::size_t length = 0;  // scalar values
  std::vector<std::uint64_t> member_seqs;
};

/// Ladder rules for a single insertion event (hint, paste match, edit inside
/// AI code, default HUMAN). Typed-run similarity is decided by classify_run.
Label classify_insertion(const EditEvent& event, std::span<const CodeBlockTokens> blocks,
                         std::span<const ProvenanceSpan> current_spans, const ProvenanceConfig& cfg,
                         const SimilarityMetric& metric = LcsRatio{});

/// AI_SIMILAR with the best chat_ref when the run is long enough and scores
/// at least the threshold; nullopt otherwise.
std::optional<Label> classify_run(const TypedRun& run, std::span<const CodeBlockTokens> blocks,
                                  const ProvenanceConfig& cfg,
                                  const SimilarityMetric& metric = LcsRatio{});

/// Retroactive relabel of a closed typed run.
struct Relabel {
  std::string file_path;
  std::uint64_t start_seq = 0;
  std::uint64_t end_seq = 0;
  std::vector<std::uint64_t> member_seqs;
  Label label;

  bool operator==(const Relabel&) const = default;
};

struct LabeledSession {
  SessionLog log;
  ProvenanceConfig config;
  std::map<std::uint64_t, Label> labels;  // insertion events by seq
  std::vector<Relabel> relabels;
  std::map<std::string, DocumentSnapshot> finals;

  std::optional<Label> label_of(std::uint64_t seq) const;
  /// HUMAN for events without a label (deletions).
  LabelLookup lookup() const;
};

/// Incremental labeler: classifies each insertion, aggregates typed runs and
/// drives the replay documents. label_session is this fed in one pass.
class SessionLabeler {
 public:
  struct Outcome {
    std::optional<Relabel> relabel;  // a run closed before this event
    std::optional<Label> label;      // set for insertions
    bool provisional = false;        // label may still become AI_SIMILAR
  };

  SessionLabeler(std::string session_id, SessionMetadata metadata,
                 std::map<std::string, std::string> starter, ProvenanceConfig cfg,
                 std::shared_ptr<const SimilarityMetric> metric = nullptr);

  /// Throws on ordering or offset violations without mutating.
  void validate(const SessionEvent& event) const;
  Outcome feed(const SessionEvent& event);
  /// Closes the open run, if any.
  std::optional<Relabel> finish();

  bool has_open_run() const { return run_.has_value(); }
  const std::optional<TypedRun>& open_run() const { return run_; }
  const SessionLog& log() const { return result_.log; }
  const ProvenanceConfig& config() const { return result_.config; }
  std::uint64_t last_seq() const { return order_.last_seq.value_or(0); }

  /// Labeled result as if the session ended now; leaves this labeler open.
  LabeledSession result() const;
  /// Document for `path`, created from the starter on first use.
  const Document& document(const std::string& path);

 private:
  Document& doc(const std::string& path);
  bool extends_run(const EditEvent& e) const;
  std::optional<Relabel> close_run();

  LabeledSession result_;
  std::shared_ptr<const SimilarityMetric> metric_;
  std::map<std::string, Document> docs_;
  std::vector<CodeBlockTokens> blocks_;
  std::size_t chat_counter_ = 0;
  std::optional<TypedRun> run_;
  OrderTracker order_;
};

LabeledSession label_session(const SessionLog& log, const ProvenanceConfig& cfg = {},
                             std::shared_ptr<const SimilarityMetric> metric = nullptr);

}  // namespace codetrail
