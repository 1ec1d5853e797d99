#include "forge.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace forge {

using codetrail::ChatEvent;
using codetrail::ChatRole;
using codetrail::EditEvent;
using codetrail::EditKind;
using codetrail::InputHint;
using codetrail::SessionLog;

namespace {

// Local UTF-8 codec so the oracle does not lean on the engine's.
std::u32string decode(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    unsigned char c = s[i];
    char32_t cp;
    int n;
    if (c < 0x80) { cp = c; n = 1; }
    else if ((c >> 5) == 6) { cp = c & 0x1f; n = 2; }
    else if ((c >> 4) == 14) { cp = c & 0x0f; n = 3; }
    else { cp = c & 0x07; n = 4; }
    for (int k = 1; k < n; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
    out += cp;
    i += n;
  }
  return out;
}

std::string encode(std::u32string_view s) {
  std::string out;
  for (char32_t cp : s) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xc0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xe0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
      out += static_cast<char>(0xf0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      out += static_cast<char>(0x80 | (cp & 0x3f));
    }
  }
  return out;
}

constexpr std::array<const char*, 20> kAiWords = {
    "compute_average", "scores", "total", "count", "student", "grades", "record",
    "weights", "normalize", "result", "entries", "schedule", "appointment", "rate",
    "balance", "history", "validate_input", "parse_line", "summary", "threshold"};

constexpr std::array<const char*, 16> kHumanWords = {
    "tmp", "foo", "bar", "cnt", "lst", "acc", "thing", "stuff",
    "qq", "blah", "mine", "zork", "wibble", "nn", "pp", "helper2"};

constexpr std::array<const char*, 8> kAiLines = {
    "def {a}({b}, {c}):\n",   "    {a} = {b} + {c}\n",     "    for {a} in {b}:\n",
    "        {a}.append({b})\n", "    return {a}\n",          "    if {a} > {b}:\n",
    "{a} = [{b}, {c}]\n",     "{a}[{b}] = {c}({a})\n"};

constexpr std::array<const char*, 6> kHumanLines = {
    "{a} = {b} * 2\n", "while {a} < 10:\n", "    {a} += 1\n",
    "print('{a}')\n",  "{a} = {b}\n",       "# {a} {b} {c}\n"};

bool is_ident(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') ||
         c == U'_' || (c >= 0x80 && c != 0x3000 && c != 0xa0);
}

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; }

bool derived(Source s) { return s != Source::Human; }

}  // namespace

std::vector<std::string> oracle_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::u32string cur;
  for (char32_t c : decode(text)) {
    if (is_ident(c)) {
      cur += c;
      continue;
    }
    if (!cur.empty()) out.push_back(encode(cur)), cur.clear();
    if (!is_space(c)) out.push_back(encode(std::u32string(1, c)));
  }
  if (!cur.empty()) out.push_back(encode(cur));
  return out;
}

double oracle_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return 2.0 * static_cast<double>(dp[a.size()][b.size()]) / static_cast<double>(a.size() + b.size());
}

namespace {

class Forge {
 public:
  Forge(std::uint64_t seed, const ForgeOptions& o) : rng_(seed), o_(o) {
    out_.log.session_id = "forged-" + std::to_string(seed);
    out_.log.metadata.task_id = "task-" + std::to_string(seed % 3 + 1);
    out_.log.metadata.condition = "synthetic";
    const std::string starter = "# starter\n" + human_code(2);
    out_.log.starter[o.file_path] = starter;
    text_ = decode(starter);
    owner_.assign(text_.size(), Source::Human);
    t_ = o.start_ms;
  }

  ForgedSession run() {
    do_behavior(Behavior::Chat);
    for (std::size_t i = 0; i < o_.behaviors; ++i) {
      pause();
      do_behavior(pick());
    }
    out_.final_text = encode(text_);
    out_.final_owner = owner_;
    return std::move(out_);
  }

 private:
  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  std::int64_t uniform64(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }

  void pause() { t_ += uniform64(o_.pause_min, o_.pause_max); }

  Behavior pick() {
    static constexpr std::array<std::pair<Behavior, int>, 12> kWeights = {{
        {Behavior::PasteBlock, 8},   {Behavior::PasteOwn, 4},  {Behavior::Completion, 8},
        {Behavior::Retype, 8},       {Behavior::Paraphrase, 6}, {Behavior::Organic, 10},
        {Behavior::EditInsideAi, 6}, {Behavior::Delete, 8},    {Behavior::Replace, 6},
        {Behavior::Chat, 5},         {Behavior::Save, 3},      {Behavior::TestRun, 2},
    }};
    int total = 0;
    for (const auto& [b, w] : kWeights) total += w;
    int r = static_cast<int>(uniform(0, total - 1));
    for (const auto& [b, w] : kWeights) {
      if (r < w) return b;
      r -= w;
    }
    return Behavior::Organic;
  }

  std::string fill(const char* tpl, const auto& words) {
    std::string s = tpl;
    for (const char* key : {"{a}", "{b}", "{c}"}) {
      for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key)) {
        s.replace(pos, 3, words[uniform(0, words.size() - 1)]);
      }
    }
    return s;
  }

  std::string ai_code(std::size_t lines) {
    std::string s;
    for (std::size_t i = 0; i < lines; ++i) s += fill(kAiLines[uniform(0, kAiLines.size() - 1)], kAiWords);
    return s;
  }

  std::string human_code(std::size_t lines) {
    std::string s;
    for (std::size_t i = 0; i < lines; ++i) {
      s += fill(kHumanLines[uniform(0, kHumanLines.size() - 1)], kHumanWords);
    }
    return s;
  }

  double best_similarity(const std::string& text) const {
    auto toks = oracle_tokens(text);
    double best = 0.0;
    for (const auto& b : blocks_) best = std::max(best, oracle_similarity(toks, oracle_tokens(b)));
    return best;
  }

  // Human text kept below the ceiling; grows until it is.
  std::string below_ceiling(std::string text) {
    while (best_similarity(text) >= o_.human_ceiling) text += human_code(1);
    return text;
  }

  std::size_t line_boundary() {
    std::vector<std::size_t> cands{0, text_.size()};
    for (std::size_t i = 0; i < text_.size(); ++i) {
      if (text_[i] == U'\n') cands.push_back(i + 1);
    }
    return cands[uniform(0, cands.size() - 1)];
  }

  EditEvent& emit(EditKind kind, std::size_t offset, std::u32string removed, std::u32string inserted,
                  InputHint hint) {
    EditEvent e;
    e.session_id = out_.log.session_id;
    e.seq = ++seq_;
    e.timestamp_ms = t_;
    e.file_path = o_.file_path;
    e.kind = kind;
    e.offset = offset;
    e.removed_text = encode(removed);
    e.inserted_text = encode(inserted);
    e.input_hint = hint;
    out_.log.events.emplace_back(std::move(e));
    return std::get<EditEvent>(out_.log.events.back());
  }

  // Gold for an insertion with no hint-specific rule.
  Source neighbour_gold(std::size_t p, std::size_t removed) const {
    for (std::size_t i = p; i < p + removed; ++i) {
      if (derived(owner_[i])) return Source::HumanEditOfAi;
    }
    if (p > 0 && p + removed < owner_.size() && derived(owner_[p - 1]) && derived(owner_[p + removed])) {
      return Source::HumanEditOfAi;
    }
    return Source::Human;
  }

  void splice(std::size_t p, std::size_t removed, const std::u32string& ins, Source src) {
    text_.replace(p, removed, ins);
    owner_.erase(owner_.begin() + p, owner_.begin() + p + removed);
    owner_.insert(owner_.begin() + p, ins.size(), src);
  }

  void insert(std::size_t p, const std::string& utf8, InputHint hint, Source gold) {
    auto ins = decode(utf8);
    auto& e = emit(EditKind::Insert, p, {}, ins, hint);
    out_.gold[e.seq] = gold;
    splice(p, 0, ins, gold);
  }

  // Keystroke run at p; returns the inserted length.
  std::size_t type(std::size_t p, const std::string& utf8, bool first_gap = false) {
    auto chars = decode(utf8);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      if (i > 0 || first_gap) t_ += uniform64(o_.keystroke_gap_min, o_.keystroke_gap_max);
      const std::u32string one(1, chars[i]);
      const auto gold = neighbour_gold(p + i, 0);
      auto& e = emit(EditKind::Insert, p + i, {}, one, InputHint::Keystroke);
      out_.gold[e.seq] = gold;
      splice(p + i, 0, one, gold);
    }
    return chars.size();
  }

  void do_behavior(Behavior b) {
    out_.plan.push_back(b);
    switch (b) {
      case Behavior::Chat: {
        ChatEvent q = codetrail::make_chat(out_.log.session_id, t_, ChatRole::Student,
                                           "how do I handle the " +
                                               std::string(kAiWords[uniform(0, kAiWords.size() - 1)]) +
                                               " part?");
        out_.log.events.emplace_back(q);
        t_ += uniform64(800, 3000);
        std::string text = "Here is one way to do it:\n";
        const std::size_t n = uniform(1, 2);
        for (std::size_t i = 0; i < n; ++i) {
          std::string block = ai_code(uniform(3, 6));
          text += "```python\n" + block + "```\n";
          if (i + 1 < n) text += "Or alternatively:\n";
        }
        text += "Let me know if that helps.";
        ChatEvent a = codetrail::make_chat(out_.log.session_id, t_, ChatRole::Assistant, text);
        for (const auto& blk : a.code_blocks) blocks_.push_back(blk);
        out_.log.events.emplace_back(std::move(a));
        break;
      }
      case Behavior::PasteBlock:
        insert(line_boundary(), blocks_[uniform(0, blocks_.size() - 1)] + "\n", InputHint::Paste,
               Source::AiPaste);
        break;
      case Behavior::PasteOwn:
        insert(line_boundary(), below_ceiling(human_code(uniform(2, 4))), InputHint::Paste,
               Source::Human);
        break;
      case Behavior::Completion: {
        std::string s = std::string(kAiWords[uniform(0, kAiWords.size() - 1)]) + "(";
        s += kAiWords[uniform(0, kAiWords.size() - 1)];
        s += ")";
        insert(uniform(0, text_.size()), s, InputHint::CompletionAccept, Source::AiComplete);
        break;
      }
      case Behavior::Retype: {
        const auto& blk = blocks_[uniform(0, blocks_.size() - 1)];
        if (oracle_tokens(blk).size() < 12) break;
        const std::size_t p = text_.size();
        const std::uint64_t first = seq_ + 1;
        const std::size_t n = type(p, blk + "\n");
        for (std::uint64_t s = first; s <= seq_; ++s) out_.gold[s] = Source::AiSimilar;
        std::fill(owner_.begin() + p, owner_.begin() + p + n, Source::AiSimilar);
        break;
      }
      case Behavior::Paraphrase: {
        std::string blk = blocks_[uniform(0, blocks_.size() - 1)];
        for (const char* w : kAiWords) {
          const std::string from = w;
          const std::string to = kHumanWords[uniform(0, kHumanWords.size() - 1)];
          for (auto pos = blk.find(from); pos != std::string::npos; pos = blk.find(from, pos + to.size())) {
            blk.replace(pos, from.size(), to);
          }
        }
        type(text_.size(), below_ceiling(blk + "\n"));
        break;
      }
      case Behavior::Organic:
        type(uniform(0, 1) == 0 ? text_.size() : line_boundary(), below_ceiling(human_code(uniform(1, 4))));
        break;
      case Behavior::EditInsideAi: {
        std::vector<std::size_t> cands;
        for (std::size_t p = 1; p < text_.size(); ++p) {
          if (derived(owner_[p - 1]) && derived(owner_[p])) cands.push_back(p);
        }
        if (cands.empty()) break;
        type(cands[uniform(0, cands.size() - 1)], kHumanWords[uniform(0, kHumanWords.size() - 1)]);
        break;
      }
      case Behavior::Delete: {
        if (text_.empty()) break;
        const std::size_t p = uniform(0, text_.size() - 1);
        const std::size_t n = uniform(1, std::min<std::size_t>(10, text_.size() - p));
        emit(EditKind::Delete, p, text_.substr(p, n), {}, InputHint::Keystroke);
        splice(p, n, {}, Source::Human);
        break;
      }
      case Behavior::Replace: {
        if (text_.empty()) break;
        const std::size_t p = uniform(0, text_.size() - 1);
        const std::size_t n = uniform(1, std::min<std::size_t>(6, text_.size() - p));
        const auto ins = decode(kHumanWords[uniform(0, kHumanWords.size() - 1)]);
        const auto gold = neighbour_gold(p, n);
        auto& e = emit(EditKind::Replace, p, text_.substr(p, n), ins, InputHint::Keystroke);
        out_.gold[e.seq] = gold;
        splice(p, n, ins, gold);
        break;
      }
      case Behavior::Save: {
        auto& e = emit(EditKind::FileAction, 0, {}, {}, InputHint::Unknown);
        e.file_action = codetrail::FileAction::Save;
        break;
      }
      case Behavior::TestRun: {
        codetrail::TestRunEvent tr;
        tr.session_id = out_.log.session_id;
        tr.timestamp_ms = t_;
        tr.passed = static_cast<std::int64_t>(uniform(0, 8));
        tr.failed = static_cast<std::int64_t>(uniform(0, 3));
        tr.raw_output = std::to_string(tr.passed) + " passed, " + std::to_string(tr.failed) + " failed";
        out_.log.events.emplace_back(std::move(tr));
        break;
      }
    }
  }

  std::mt19937_64 rng_;
  ForgeOptions o_;
  ForgedSession out_;
  std::u32string text_;
  std::vector<Source> owner_;
  std::vector<std::string> blocks_;
  std::int64_t t_ = 0;
  std::uint64_t seq_ = 0;
};

}  // namespace

ForgedSession forge_session(std::uint64_t seed, const ForgeOptions& options) {
  return Forge(seed, options).run();
}

SpliceSession random_edit_session(std::uint64_t seed, std::size_t events, std::size_t files) {
  static const std::u32string kPool =
      U"abcdefghij xyz_=()[]:;\n\n\t0123456789éßüñ漢字かな한글😀🚀𝔘";
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto random_text = [&](std::size_t lo, std::size_t hi) {
    std::u32string s;
    const std::size_t n = uniform(lo, hi);
    for (std::size_t i = 0; i < n; ++i) s += kPool[uniform(0, kPool.size() - 1)];
    return s;
  };

  SpliceSession out;
  out.log.session_id = "splice-" + std::to_string(seed);
  std::vector<std::string> paths;
  for (std::size_t f = 0; f < std::max<std::size_t>(files, 1); ++f) {
    paths.push_back(f == 0 ? "main.py" : "mod" + std::to_string(f) + ".py");
    auto starter = random_text(0, 40);
    if (uniform(0, 3) > 0) out.log.starter[paths.back()] = encode(starter);
    out.expected[paths.back()] = out.log.starter.count(paths.back()) ? starter : U"";
  }
  std::int64_t t = static_cast<std::int64_t>(uniform(0, 1000));
  const std::uint64_t first_seq = uniform(0, 5);
  static constexpr InputHint kHints[] = {InputHint::Keystroke, InputHint::Paste,
                                         InputHint::CompletionAccept, InputHint::Unknown};
  for (std::size_t i = 0; i < events; ++i) {
    t += static_cast<std::int64_t>(uniform(0, 3000));
    const auto& path = paths[uniform(0, paths.size() - 1)];
    auto& doc = out.expected[path];
    EditEvent e;
    e.session_id = out.log.session_id;
    e.seq = first_seq + i;
    e.timestamp_ms = t;
    e.file_path = path;
    e.input_hint = kHints[uniform(0, 3)];
    std::size_t op = doc.empty() ? 0 : uniform(0, 2);
    if (op == 0) {
      e.kind = EditKind::Insert;
      e.offset = uniform(0, doc.size());
      auto ins = random_text(1, 8);
      e.inserted_text = encode(ins);
      doc = doc.substr(0, e.offset) + ins + doc.substr(e.offset);
    } else {
      e.offset = uniform(0, doc.size() - 1);
      const std::size_t n = uniform(1, std::min<std::size_t>(8, doc.size() - e.offset));
      e.removed_text = encode(doc.substr(e.offset, n));
      std::u32string ins;
      if (op == 2) {
        e.kind = EditKind::Replace;
        ins = random_text(1, 6);
        e.inserted_text = encode(ins);
      } else {
        e.kind = EditKind::Delete;
      }
      doc = doc.substr(0, e.offset) + ins + doc.substr(e.offset + n);
    }
    out.log.events.emplace_back(std::move(e));
  }
  return out;
}

SessionLog paced_session(std::uint64_t seed, std::size_t events, std::int64_t duration_ms) {
  SessionLog log;
  log.session_id = "paced-" + std::to_string(seed);
  log.starter["main.py"] = "";
  std::mt19937_64 rng(seed);
  std::size_t len = 0;
  for (std::size_t i = 0; i < events; ++i) {
    EditEvent e;
    e.session_id = log.session_id;
    e.seq = i + 1;
    e.timestamp_ms = events > 1 ? static_cast<std::int64_t>(i) * duration_ms /
                                      static_cast<std::int64_t>(events - 1)
                                : 0;
    e.file_path = "main.py";
    e.kind = EditKind::Insert;
    e.offset = len;
    e.inserted_text = std::string(1, static_cast<char>('a' + rng() % 26));
    e.input_hint = InputHint::Keystroke;
    ++len;
    log.events.emplace_back(std::move(e));
  }
  return log;
}

SessionLog long_session(std::uint64_t seed, std::size_t edits) {
  ForgeOptions o;
  o.behaviors = 64;
  SessionLog log;
  do {
    log = forge_session(seed, o).log;
    o.behaviors *= 2;
  } while (log.edit_count() < edits);
  std::size_t seen = 0;
  std::size_t cut = 0;
  for (; cut < log.events.size() && seen < edits; ++cut) {
    if (const auto* e = std::get_if<EditEvent>(&log.events[cut]); e && e->kind != EditKind::FileAction) {
      ++seen;
    }
  }
  log.events.resize(cut);
  return log;
}

void rename_session(codetrail::SessionLog& log, const std::string& session_id) {
  log.session_id = session_id;
  for (auto& ev : log.events) {
    std::visit([&](auto& e) { e.session_id = session_id; }, ev);
  }
}

}  // namespace forge
