#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codetrail/provenance.hpp"
#include "codetrail/replay.hpp"

namespace codetrail {

using PerSource = std::array<std::size_t, kAllSources.size()>;
using PerSourceShare = std::array<double, kAllSources.size()>;

constexpr std::size_t index_of(Source s) { return static_cast<std::size_t>(s); }

struct SegmentationRules {
  /// Matched against each line with its indentation stripped.
  std::string definition_pattern = R"(^(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\()";
  std::size_t name_group = 1;
  /// Lines indented deeper than this many columns never start a region.
  std::size_t max_indent = 0;
  std::size_t tab_width = 4;
};

struct FunctionRegion {
  std::string name;
  std::size_t line_start = 0;  // 1-based, inclusive
  std::size_t line_end = 0;

  bool operator==(const FunctionRegion&) const = default;
};

struct FunctionAttribution {
  std::string file_path;
  FunctionRegion region;
  double ai_fraction = 0.0;

  bool operator==(const FunctionAttribution&) const = default;
};

struct SessionMetrics {
  std::string session_id;
  PerSource counts{};      // classified insertion events
  PerSource characters{};  // inserted scalar values
  std::optional<PerSourceShare> event_proportions;
  std::optional<PerSourceShare> char_proportions;
  std::size_t edit_count = 0;  // classified insertions; equals sum of counts
  std::size_t deletion_count = 0;
  std::size_t file_action_count = 0;
  std::size_t chat_count = 0;
  std::size_t test_run_count = 0;
  std::size_t final_loc = 0;
  std::vector<FunctionAttribution> per_function;

  bool operator==(const SessionMetrics&) const = default;
};

std::vector<FunctionRegion> segment_functions(const DocumentSnapshot& snapshot,
                                              const SegmentationRules& rules = {});

SessionMetrics compute_metrics(const LabeledSession& session, const SegmentationRules& rules = {});

/// Share of insertions from AI_PASTE, AI_COMPLETE and AI_SIMILAR. Throws
/// EmptySession when nothing was classified.
double ai_reliance(const SessionMetrics& metrics);

struct FScoreEntry {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> f;  // absent when tp + fp + fn == 0
};

struct FScoreReport {
  std::array<FScoreEntry, kAllSources.size()> per_source{};
  std::optional<double> macro;

  const FScoreEntry& operator[](Source s) const { return per_source[index_of(s)]; }
};

/// One-vs-rest F = 2TP / (2TP + FP + FN) per source. Throws LengthMismatch.
FScoreReport f_score(std::span<const Source> predicted, std::span<const Source> gold);

/// Pooled view over many sessions.
struct AggregateMetrics {
  std::size_t sessions = 0;
  PerSource counts{};
  PerSource characters{};
  std::optional<PerSourceShare> event_proportions;
  std::optional<PerSourceShare> char_proportions;
  std::size_t edit_count = 0;
  std::optional<double> reliance_min, reliance_max, reliance_mean, reliance_sd;
};

AggregateMetrics aggregate(std::span<const SessionMetrics> sessions);

Json to_json(const SessionMetrics& m);
Json to_json(const FScoreReport& r);
Json to_json(const AggregateMetrics& a);

/// Frozen CSV layout; see docs/metrics-csv.md.
std::string csv_header();
std::string csv_row(const SessionMetrics& m);
/// Column-wise mean over the per-session rows, session_id "ALL".
std::string csv_mean_row(std::span<const SessionMetrics> sessions);

}  // namespace codetrail
