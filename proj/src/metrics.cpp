#include "codetrail/metrics.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>

#include "codetrail/error.hpp"
#include "codetrail/utf8.hpp"

namespace codetrail {

namespace {

std::optional<PerSourceShare> shares(const PerSource& values) {
  std::size_t total = 0;
  for (auto v : values) total += v;
  if (total == 0) return std::nullopt;
  PerSourceShare out{};
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<double>(values[i]) / static_cast<double>(total);
  }
  return out;
}

std::string lower_name(Source s) {
  std::string name(to_string(s));
  for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Json shares_json(const std::optional<PerSourceShare>& s) {
  if (!s) return nullptr;
  Json j;
  for (auto src : kAllSources) j[std::string(to_string(src))] = (*s)[index_of(src)];
  return j;
}

Json counts_json(const PerSource& c) {
  Json j;
  for (auto src : kAllSources) j[std::string(to_string(src))] = c[index_of(src)];
  return j;
}

double reliance_of(const PerSourceShare& p) {
  return p[index_of(Source::AiPaste)] + p[index_of(Source::AiComplete)] +
         p[index_of(Source::AiSimilar)];
}

// Numeric columns of one row, in header order after session_id. nullopt
// renders as an empty cell.
std::vector<std::optional<double>> numeric_columns(const SessionMetrics& m) {
  std::vector<std::optional<double>> cols;
  for (double v : {double(m.edit_count), double(m.deletion_count), double(m.file_action_count),
                   double(m.chat_count), double(m.test_run_count), double(m.final_loc)}) {
    cols.emplace_back(v);
  }
  for (auto s : kAllSources) cols.emplace_back(double(m.counts[index_of(s)]));
  for (const auto* p : {&m.event_proportions, &m.char_proportions}) {
    for (auto s : kAllSources) {
      cols.push_back(*p ? std::optional<double>((**p)[index_of(s)]) : std::nullopt);
    }
  }
  cols.push_back(m.event_proportions ? std::optional<double>(reliance_of(*m.event_proportions))
                                     : std::nullopt);
  return cols;
}

}  // namespace

std::vector<FunctionRegion> segment_functions(const DocumentSnapshot& snapshot,
                                              const SegmentationRules& rules) {
  const std::regex pattern(rules.definition_pattern, std::regex::ECMAScript);
  std::vector<FunctionRegion> regions;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const std::string& text = snapshot.text;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;

    std::size_t indent = 0;
    std::size_t lead = 0;
    while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t')) {
      indent += line[lead] == '\t' ? rules.tab_width : 1;
      ++lead;
    }
    if (indent > rules.max_indent) continue;
    std::string body(line.substr(lead));
    std::smatch m;
    if (!std::regex_search(body, m, pattern)) continue;
    std::string name = rules.name_group < m.size() ? m[rules.name_group].str() : std::string();
    if (!regions.empty()) regions.back().line_end = line_no - 1;
    regions.push_back({std::move(name), line_no, line_no});
  }
  if (!regions.empty()) regions.back().line_end = snapshot.line_count;
  return regions;
}

SessionMetrics compute_metrics(const LabeledSession& session, const SegmentationRules& rules) {
  SessionMetrics m;
  m.session_id = session.log.session_id;
  for (const auto& event : session.log.events) {
    if (const auto* e = std::get_if<EditEvent>(&event)) {
      if (e->kind == EditKind::FileAction) {
        ++m.file_action_count;
        continue;
      }
      if (e->kind == EditKind::Delete) ++m.deletion_count;
      if (!e->is_insertion()) continue;
      const auto src = session.label_of(e->seq).value_or(Label{}).source;
      ++m.counts[index_of(src)];
      m.characters[index_of(src)] += utf8::length(e->inserted_text);
      ++m.edit_count;
    } else if (std::holds_alternative<ChatEvent>(event)) {
      ++m.chat_count;
    } else {
      ++m.test_run_count;
    }
  }
  m.event_proportions = shares(m.counts);
  m.char_proportions = shares(m.characters);

  for (const auto& [path, snap] : session.finals) {
    m.final_loc += snap.line_count;
    auto doc = Document::from_snapshot(snap);
    for (auto& region : segment_functions(snap, rules)) {
      const std::size_t begin = doc.offset_of_line(region.line_start);
      const std::size_t end = doc.offset_of_line(region.line_end + 1);
      std::size_t ai = 0;
      for (const auto& s : snap.spans) {
        if (!is_ai(s.source)) continue;
        const auto lo = std::max(s.start, begin);
        const auto hi = std::min(s.end, end);
        if (hi > lo) ai += hi - lo;
      }
      const double fraction = end > begin ? static_cast<double>(ai) / double(end - begin) : 0.0;
      m.per_function.push_back({path, std::move(region), fraction});
    }
  }
  return m;
}

double ai_reliance(const SessionMetrics& metrics) {
  if (metrics.edit_count == 0 || !metrics.event_proportions) {
    throw Error(ErrorCode::EmptySession, "session " + metrics.session_id + " has no classified edits");
  }
  return reliance_of(*metrics.event_proportions);
}

FScoreReport f_score(std::span<const Source> predicted, std::span<const Source> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predicted.size()) + " predicted vs " +
                                               std::to_string(gold.size()) + " gold labels");
  }
  FScoreReport report;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = index_of(predicted[i]);
    const auto g = index_of(gold[i]);
    if (p == g) {
      ++report.per_source[p].tp;
    } else {
      ++report.per_source[p].fp;
      ++report.per_source[g].fn;
    }
  }
  double sum = 0.0;
  std::size_t defined = 0;
  for (auto& e : report.per_source) {
    const auto denom = 2 * e.tp + e.fp + e.fn;
    if (denom == 0) continue;
    e.f = 2.0 * static_cast<double>(e.tp) / static_cast<double>(denom);
    sum += *e.f;
    ++defined;
  }
  if (defined > 0) report.macro = sum / static_cast<double>(defined);
  return report;
}

AggregateMetrics aggregate(std::span<const SessionMetrics> sessions) {
  AggregateMetrics a;
  a.sessions = sessions.size();
  std::vector<double> reliance;
  for (const auto& m : sessions) {
    for (std::size_t i = 0; i < a.counts.size(); ++i) {
      a.counts[i] += m.counts[i];
      a.characters[i] += m.characters[i];
    }
    a.edit_count += m.edit_count;
    if (m.event_proportions) reliance.push_back(reliance_of(*m.event_proportions));
  }
  a.event_proportions = shares(a.counts);
  a.char_proportions = shares(a.characters);
  if (!reliance.empty()) {
    double sum = 0.0;
    a.reliance_min = reliance.front();
    a.reliance_max = reliance.front();
    for (double r : reliance) {
      sum += r;
      a.reliance_min = std::min(*a.reliance_min, r);
      a.reliance_max = std::max(*a.reliance_max, r);
    }
    const double mean = sum / static_cast<double>(reliance.size());
    double ss = 0.0;
    for (double r : reliance) ss += (r - mean) * (r - mean);
    a.reliance_mean = mean;
    a.reliance_sd = reliance.size() > 1 ? std::sqrt(ss / double(reliance.size() - 1)) : 0.0;
  }
  return a;
}

Json to_json(const SessionMetrics& m) {
  Json j;
  j["session_id"] = m.session_id;
  j["counts"] = counts_json(m.counts);
  j["characters"] = counts_json(m.characters);
  j["event_proportions"] = shares_json(m.event_proportions);
  j["char_proportions"] = shares_json(m.char_proportions);
  j["ai_reliance"] = m.event_proportions ? Json(reliance_of(*m.event_proportions)) : Json(nullptr);
  Json totals;
  totals["final_loc"] = m.final_loc;
  totals["edit_count"] = m.edit_count;
  totals["deletion_count"] = m.deletion_count;
  totals["file_action_count"] = m.file_action_count;
  totals["chat_count"] = m.chat_count;
  totals["test_run_count"] = m.test_run_count;
  j["totals"] = std::move(totals);
  Json funcs = Json::array();
  for (const auto& f : m.per_function) {
    Json fj;
    fj["file_path"] = f.file_path;
    fj["name"] = f.region.name;
    fj["line_start"] = f.region.line_start;
    fj["line_end"] = f.region.line_end;
    fj["ai_fraction"] = f.ai_fraction;
    funcs.push_back(std::move(fj));
  }
  j["per_function"] = std::move(funcs);
  return j;
}

Json to_json(const FScoreReport& r) {
  Json j;
  Json per;
  for (auto s : kAllSources) {
    const auto& e = r[s];
    Json ej;
    ej["tp"] = e.tp;
    ej["fp"] = e.fp;
    ej["fn"] = e.fn;
    ej["f"] = e.f ? Json(*e.f) : Json(nullptr);
    per[std::string(to_string(s))] = std::move(ej);
  }
  j["per_source"] = std::move(per);
  j["macro"] = r.macro ? Json(*r.macro) : Json(nullptr);
  return j;
}

Json to_json(const AggregateMetrics& a) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json j;
  j["sessions"] = a.sessions;
  j["edit_count"] = a.edit_count;
  j["counts"] = counts_json(a.counts);
  j["characters"] = counts_json(a.characters);
  j["event_proportions"] = shares_json(a.event_proportions);
  j["char_proportions"] = shares_json(a.char_proportions);
  Json rel;
  rel["min"] = opt(a.reliance_min);
  rel["max"] = opt(a.reliance_max);
  rel["mean"] = opt(a.reliance_mean);
  rel["sd"] = opt(a.reliance_sd);
  j["ai_reliance"] = std::move(rel);
  return j;
}

std::string csv_header() {
  std::string h =
      "session_id,edit_count,deletion_count,file_action_count,chat_count,test_run_count,final_loc";
  for (auto s : kAllSources) h += ",count_" + lower_name(s);
  for (auto s : kAllSources) h += ",event_share_" + lower_name(s);
  for (auto s : kAllSources) h += ",char_share_" + lower_name(s);
  h += ",ai_reliance";
  return h;
}

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_row(const std::string& id, const std::vector<std::optional<double>>& cols) {
  std::string row = csv_escape(id);
  for (const auto& c : cols) {
    row += ',';
    if (c) row += fmt(*c);
  }
  return row;
}

}  // namespace

std::string csv_row(const SessionMetrics& m) { return join_row(m.session_id, numeric_columns(m)); }

std::string csv_mean_row(std::span<const SessionMetrics> sessions) {
  std::vector<double> sum;
  std::vector<std::size_t> n;
  for (const auto& m : sessions) {
    auto cols = numeric_columns(m);
    sum.resize(cols.size(), 0.0);
    n.resize(cols.size(), 0);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (!cols[i]) continue;
      sum[i] += *cols[i];
      ++n[i];
    }
  }
  std::vector<std::optional<double>> mean(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (n[i] > 0) mean[i] = sum[i] / static_cast<double>(n[i]);
  }
  return join_row("ALL", mean);
}

}  // namespace codetrail
