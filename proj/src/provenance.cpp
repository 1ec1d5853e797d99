#include "codetrail/provenance.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"

namespace codetrail {

namespace {

bool is_unicode_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_ident(char32_t c) {
  if (c < 0x80) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') ||
           c == U'_';
  }
  return !is_unicode_space(c);
}

[[noreturn]] void bad_config(const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, what);
}

// Neighbour-based containment: the insertion point sits between two
// characters of AI-derived code, or the removed range touches it.
bool inside_ai_code(const EditEvent& e, std::span<const ProvenanceSpan> spans) {
  auto derived = [](Source s) { return is_ai(s) || s == Source::HumanEditOfAi; };
  auto source_at = [&](std::size_t pos) -> std::optional<Source> {
    auto it = std::upper_bound(spans.begin(), spans.end(), pos,
                               [](std::size_t p, const ProvenanceSpan& s) { return p < s.end; });
    if (it == spans.end() || it->start > pos) return std::nullopt;
    return it->source;
  };
  const std::size_t removed = utf8::length(e.removed_text);
  for (const auto& s : spans) {
    if (removed > 0 && s.start < e.offset + removed && s.end > e.offset && derived(s.source)) {
      return true;
    }
  }
  if (e.offset == 0) return false;
  auto left = source_at(e.offset - 1);
  auto right = source_at(e.offset + removed);
  return left && right && derived(*left) && derived(*right);
}

}  // namespace

void ProvenanceConfig::validate() const {
  if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0)) {
    bad_config("similarity_threshold must be in (0, 1]");
  }
  if (min_run_tokens < 1) bad_config("min_run_tokens must be >= 1");
  if (run_gap_ms < 0) bad_config("run_gap_ms must be >= 0");
  if (lookback_ms && *lookback_ms < 0) bad_config("lookback_ms must be >= 0");
}

Json to_json(const ProvenanceConfig& cfg) {
  Json j;
  j["similarity_threshold"] = cfg.similarity_threshold;
  j["min_run_tokens"] = cfg.min_run_tokens;
  j["run_gap_ms"] = cfg.run_gap_ms;
  j["lookback_ms"] = cfg.lookback_ms ? Json(*cfg.lookback_ms) : Json(nullptr);
  j["paste_requires_match"] = cfg.paste_requires_match;
  return j;
}

ProvenanceConfig provenance_config_from_json(const Json& j) {
  if (!j.is_object()) bad_config("provenance config must be an object");
  ProvenanceConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "similarity_threshold") {
        cfg.similarity_threshold = value.get<double>();
      } else if (key == "min_run_tokens") {
        cfg.min_run_tokens = value.get<std::size_t>();
      } else if (key == "run_gap_ms") {
        cfg.run_gap_ms = value.get<std::int64_t>();
      } else if (key == "lookback_ms") {
        if (value.is_null()) {
          cfg.lookback_ms.reset();
        } else {
          cfg.lookback_ms = value.get<std::int64_t>();
        }
      } else if (key == "paste_requires_match") {
        cfg.paste_requires_match = value.get<bool>();
      } else {
        bad_config("unknown provenance key '" + key + "'");
      }
    } catch (const nlohmann::json::exception&) {
      bad_config("wrong type for provenance key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ProvenanceConfig load_provenance_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad_config("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    bad_config(path.string() + ": " + e.what());
  }
  // Accept either a bare object or one nested under "provenance".
  if (j.is_object() && j.contains("provenance")) return provenance_config_from_json(j["provenance"]);
  return provenance_config_from_json(j);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  auto decoded = utf8::decode(text);
  if (!decoded) return tokens;
  const std::u32string& s = *decoded;
  std::size_t i = 0;
  while (i < s.size()) {
    const char32_t c = s[i];
    if (is_unicode_space(c)) {
      ++i;
    } else if (is_ident(c)) {
      std::size_t j = i;
      while (j < s.size() && is_ident(s[j])) ++j;
      tokens.push_back(utf8::encode(std::u32string_view(s).substr(i, j - i)));
      i = j;
    } else {
      tokens.push_back(utf8::encode(std::u32string_view(&s[i], 1)));
      ++i;
    }
  }
  return tokens;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Two rows over the shorter sequence.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double LcsRatio::operator()(std::span<const std::string> a, std::span<const std::string> b) const {
  if (a.empty() && b.empty()) return 1.0;
  return 2.0 * static_cast<double>(lcs_length(a, b)) / static_cast<double>(a.size() + b.size());
}

double similarity(std::span<const std::string> a, std::span<const std::string> b) {
  return LcsRatio{}(a, b);
}

std::vector<CodeBlockTokens> index_chat_blocks(std::span<const ChatEvent> chats) {
  std::vector<CodeBlockTokens> out;
  for (std::size_t c = 0; c < chats.size(); ++c) {
    const auto& chat = chats[c];
    if (chat.role != ChatRole::Assistant) continue;
    for (std::size_t b = 0; b < chat.code_blocks.size(); ++b) {
      out.push_back({ChatRef{chat.timestamp_ms, b}, c, tokenize(chat.code_blocks[b])});
    }
  }
  return out;
}

std::optional<BlockMatch> best_match(std::span<const std::string> tokens,
                                     std::span<const CodeBlockTokens> blocks, std::int64_t t,
                                     const ProvenanceConfig& cfg, const SimilarityMetric& metric) {
  std::optional<BlockMatch> best;
  std::size_t best_chat = 0;
  for (const auto& block : blocks) {
    if (block.ref.timestamp_ms > t) continue;
    if (cfg.lookback_ms && block.ref.timestamp_ms < t - *cfg.lookback_ms) continue;
    const double score = metric(tokens, block.tokens);
    if (!best || score > best->score || (score == best->score && block.chat_index > best_chat)) {
      best = BlockMatch{score, block.ref};
      best_chat = block.chat_index;
    }
  }
  return best;
}

Label classify_insertion(const EditEvent& event, std::span<const CodeBlockTokens> blocks,
                         std::span<const ProvenanceSpan> current_spans, const ProvenanceConfig& cfg,
                         const SimilarityMetric& metric) {
  if (event.input_hint == InputHint::CompletionAccept) return {Source::AiComplete, std::nullopt};
  if (event.input_hint == InputHint::Paste) {
    auto tokens = tokenize(event.inserted_text);
    auto match = best_match(tokens, blocks, event.timestamp_ms, cfg, metric);
    if (match && match->score >= cfg.similarity_threshold) return {Source::AiPaste, match->ref};
    if (cfg.paste_requires_match) return {Source::Human, std::nullopt};
    return {Source::AiPaste, std::nullopt};
  }
  if (inside_ai_code(event, current_spans)) return {Source::HumanEditOfAi, std::nullopt};
  return {Source::Human, std::nullopt};
}

std::optional<Label> classify_run(const TypedRun& run, std::span<const CodeBlockTokens> blocks,
                                  const ProvenanceConfig& cfg, const SimilarityMetric& metric) {
  auto tokens = tokenize(run.text);
  if (tokens.size() < cfg.min_run_tokens) return std::nullopt;
  auto match = best_match(tokens, blocks, run.t_start, cfg, metric);
  if (match && match->score >= cfg.similarity_threshold) {
    return Label{Source::AiSimilar, match->ref};
  }
  return std::nullopt;
}

std::optional<Label> LabeledSession::label_of(std::uint64_t seq) const {
  auto it = labels.find(seq);
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

LabelLookup LabeledSession::lookup() const {
  return [this](const EditEvent& e) { return label_of(e.seq).value_or(Label{}); };
}

SessionLabeler::SessionLabeler(std::string session_id, SessionMetadata metadata,
                               std::map<std::string, std::string> starter, ProvenanceConfig cfg,
                               std::shared_ptr<const SimilarityMetric> metric)
    : metric_(metric ? std::move(metric) : std::make_shared<LcsRatio>()) {
  cfg.validate();
  result_.log.session_id = std::move(session_id);
  result_.log.metadata = std::move(metadata);
  result_.log.starter = std::move(starter);
  result_.config = cfg;
}

Document& SessionLabeler::doc(const std::string& path) {
  auto it = docs_.find(path);
  if (it == docs_.end()) {
    it = docs_.emplace(path, Document(path, result_.log.starter_text(path))).first;
  }
  return it->second;
}

const Document& SessionLabeler::document(const std::string& path) { return doc(path); }

void SessionLabeler::validate(const SessionEvent& event) const {
  order_.check(event, "event");
  const auto* edit = std::get_if<EditEvent>(&event);
  if (edit == nullptr) return;
  auto it = docs_.find(edit->file_path);
  if (it != docs_.end()) {
    it->second.validate(*edit);
  } else {
    Document(edit->file_path, result_.log.starter_text(edit->file_path)).validate(*edit);
  }
}

bool SessionLabeler::extends_run(const EditEvent& e) const {
  return run_ && e.kind == EditKind::Insert && e.input_hint == InputHint::Keystroke &&
         e.file_path == run_->file_path && e.offset == run_->anchor_offset + run_->length &&
         e.timestamp_ms - run_->t_end <= result_.config.run_gap_ms;
}

std::optional<Relabel> SessionLabeler::close_run() {
  if (!run_) return std::nullopt;
  TypedRun run = std::move(*run_);
  run_.reset();
  auto label = classify_run(run, blocks_, result_.config, *metric_);
  if (!label) return std::nullopt;
  doc(run.file_path).relabel(run.anchor_offset, run.anchor_offset + run.length, *label,
                             run.start_seq);
  for (auto seq : run.member_seqs) result_.labels[seq] = *label;
  Relabel relabel{run.file_path, run.start_seq, run.end_seq, run.member_seqs, *label};
  result_.relabels.push_back(relabel);
  return relabel;
}

SessionLabeler::Outcome SessionLabeler::feed(const SessionEvent& incoming) {
  validate(incoming);
  SessionEvent event = incoming;
  std::visit([&](auto& e) { e.session_id = result_.log.session_id; }, event);
  Outcome out;

  if (const auto* chat = std::get_if<ChatEvent>(&event)) {
    if (chat->role == ChatRole::Assistant) {
      for (std::size_t b = 0; b < chat->code_blocks.size(); ++b) {
        blocks_.push_back(
            {ChatRef{chat->timestamp_ms, b}, chat_counter_, tokenize(chat->code_blocks[b])});
      }
    }
    ++chat_counter_;
  } else if (const auto* edit = std::get_if<EditEvent>(&event)) {
    if (edit->kind != EditKind::FileAction) {
      if (run_ && !extends_run(*edit)) out.relabel = close_run();
      Document& d = doc(edit->file_path);
      if (edit->is_insertion()) {
        Label label = classify_insertion(*edit, blocks_, d.spans(), result_.config, *metric_);
        const bool typed = edit->kind == EditKind::Insert && edit->input_hint == InputHint::Keystroke;
        if (typed) {
          if (!run_) {
            run_ = TypedRun{result_.log.session_id, edit->file_path, edit->seq, edit->seq,
                            edit->timestamp_ms, edit->timestamp_ms, {}, edit->offset, 0, {}};
          }
          run_->end_seq = edit->seq;
          run_->t_end = edit->timestamp_ms;
          run_->text += edit->inserted_text;
          run_->length += utf8::length(edit->inserted_text);
          run_->member_seqs.push_back(edit->seq);
          out.provisional = true;
        }
        d.apply(*edit, label);
        result_.labels[edit->seq] = label;
        out.label = label;
      } else {
        d.apply(*edit, Label{});
      }
    } else {
      doc(edit->file_path).set_timestamp(edit->timestamp_ms);
    }
  }

  order_.accept(event);
  result_.log.events.push_back(std::move(event));
  return out;
}

std::optional<Relabel> SessionLabeler::finish() { return close_run(); }

LabeledSession SessionLabeler::result() const {
  SessionLabeler copy = *this;
  copy.finish();
  for (const auto& path : copy.result_.log.file_paths()) copy.doc(path);
  LabeledSession out = std::move(copy.result_);
  for (const auto& [path, d] : copy.docs_) out.finals[path] = d.snapshot();
  return out;
}

LabeledSession label_session(const SessionLog& log, const ProvenanceConfig& cfg,
                             std::shared_ptr<const SimilarityMetric> metric) {
  SessionLabeler labeler(log.session_id, log.metadata, log.starter, cfg, std::move(metric));
  for (const auto& event : log.events) labeler.feed(event);
  return labeler.result();
}

}  // namespace codetrail
