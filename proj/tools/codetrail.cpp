// codetrail: offline analysis, validation, timeline export, replay and server.
//
// Exit codes: 0 success, 1 input error, 2 runtime or connection error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "codetrail/error.hpp"
#include "codetrail/metrics.hpp"
#include "codetrail/provenance.hpp"
#include "codetrail/server.hpp"
#include "codetrail/session_log.hpp"
#include "codetrail/timeline.hpp"

namespace fs = std::filesystem;
using namespace codetrail;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kRuntimeError = 2;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConnectionFailed:
    case ErrorCode::ServerRejectedFrame:
    case ErrorCode::ProviderUnavailable:
      return kRuntimeError;
    default:
      return kInputError;
  }
}

struct Options {
  std::vector<std::string> inputs;
  std::string config_path;
  std::string out;
  std::string format = "json";
  double speed = 0.0;
  std::string server = "127.0.0.1:8765";
  bool aggregate = false;
  std::optional<double> theta;
  std::string file;
  std::optional<std::size_t> first_visible_line;
  std::optional<std::size_t> visible_lines;
  std::string token;
  std::optional<std::string> auto_answer;
  std::optional<std::string> address;
  std::optional<int> port;
  std::optional<std::string> journal_dir;
  bool whole_message_code = false;
  bool quiet = false;
};

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, path.string() + ": cannot read file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

ProvenanceConfig provenance_config(const Options& o) {
  ProvenanceConfig cfg;
  if (!o.config_path.empty()) cfg = load_provenance_config(o.config_path);
  if (o.theta) cfg.similarity_threshold = *o.theta;
  cfg.validate();
  return cfg;
}

ParseOptions parse_options(const Options& o) {
  ParseOptions p;
  p.treat_whole_message_as_code = o.whole_message_code;
  return p;
}

// Files named directly, plus *.json/*.ndjson/*.jsonl inside directories.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".json" || ext == ".ndjson" || ext == ".jsonl")) {
          found.push_back(e.path());
        }
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidConfig, out + ": cannot write");
  f << text;
}

int cmd_analyze(const Options& o) {
  const auto cfg = provenance_config(o);
  const auto files = expand_inputs(o.inputs);
  if (files.empty()) throw Error(ErrorCode::EmptySession, "no input logs");
  std::vector<SessionMetrics> all;
  for (const auto& path : files) {
    auto log = load_session_file(path, parse_options(o));
    try {
      all.push_back(compute_metrics(label_session(log, cfg)));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": " + e.detail());
    }
  }
  std::string text;
  if (o.format == "csv") {
    text = csv_header() + "\n";
    if (o.aggregate) {
      text += csv_mean_row(all) + "\n";
    } else {
      for (const auto& m : all) text += csv_row(m) + "\n";
    }
  } else if (o.aggregate) {
    text = to_json(aggregate(all)).dump(2) + "\n";
  } else if (all.size() == 1) {
    text = to_json(all.front()).dump(2) + "\n";
  } else {
    Json arr = Json::array();
    for (const auto& m : all) arr.push_back(to_json(m));
    text = arr.dump(2) + "\n";
  }
  write_output(o.out, text);
  return kOk;
}

int cmd_validate(const Options& o) {
  const auto cfg = provenance_config(o);
  int status = kOk;
  for (const auto& path : expand_inputs(o.inputs)) {
    try {
      auto log = load_session_file(path, parse_options(o));
      try {
        label_session(log, cfg);  // full replay of every file
      } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail());
      }
      if (!o.quiet) {
        std::cout << path.string() << ": ok (" << log.events.size() << " events, "
                  << log.edit_count() << " edits)\n";
      }
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      status = kInputError;
    }
  }
  return status;
}

int cmd_export_timeline(const Options& o) {
  if (o.inputs.size() != 1) throw Error(ErrorCode::InvalidConfig, "export-timeline takes one log");
  const auto cfg = provenance_config(o);
  auto log = load_session_file(o.inputs.front(), parse_options(o));
  auto labeled = label_session(log, cfg);
  if (!o.file.empty() && !labeled.log.has_file(o.file)) {
    throw Error(ErrorCode::UnknownFile, "no file '" + o.file + "' in " + o.inputs.front());
  }
  ViewportHints hints;
  hints.first_visible_line = o.first_visible_line;
  hints.visible_lines = o.visible_lines;
  write_output(o.out, to_json(build_timeline(labeled, o.file, hints)).dump(2) + "\n");
  return kOk;
}

int cmd_replay(const Options& o) {
  if (o.inputs.size() != 1) throw Error(ErrorCode::InvalidConfig, "replay takes one log");
  auto log = load_session_file(o.inputs.front(), parse_options(o));
  ReplayOptions ro;
  ro.speed = o.speed;
  ro.token = o.token;
  ro.auto_answer = o.auto_answer;
  auto report = replay_session(log, parse_endpoint(o.server), ro);
  if (!o.quiet) {
    std::cout << log.session_id << ": " << report.frames_sent << " frames in "
              << report.elapsed.count() << " ms";
    if (report.questions_answered > 0) std::cout << ", " << report.questions_answered << " answers";
    std::cout << "\n";
  }
  return kOk;
}

int cmd_serve(const Options& o) {
  ServerConfig sc;
  if (!o.config_path.empty()) sc = server_config_from_json(read_json_file(o.config_path), sc);
  sc = server_config_from_env(sc);
  if (o.address) sc.address = *o.address;
  if (o.port) sc.port = static_cast<std::uint16_t>(*o.port);
  if (o.journal_dir) sc.hub.journal_dir = *o.journal_dir;
  if (o.theta) sc.hub.provenance.similarity_threshold = *o.theta;
  if (!o.token.empty()) sc.hub.tokens.push_back(o.token);
  sc.hub.provenance.validate();
  MonitorServer server(sc);
  server.start();
  std::cout << "listening on " << sc.address << ":" << server.port() << std::endl;
  server.wait();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coding-session provenance: analysis, timeline export, replay and live monitoring"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file (provenance settings)");
    sub->add_option("--theta", o.theta, "Similarity threshold override")->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--whole-message-code", o.whole_message_code,
                  "Treat fence-less assistant messages as one code block");
    sub->add_flag("-q,--quiet", o.quiet, "Less output");
  };

  auto* analyze = app.add_subcommand("analyze", "Compute per-session metrics");
  analyze->add_option("logs", o.inputs, "Session logs or directories")->required();
  analyze->add_option("--out", o.out, "Output file (default stdout)");
  analyze->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  analyze->add_flag("--aggregate", o.aggregate, "One aggregate result over all inputs");
  add_common(analyze);

  auto* validate = app.add_subcommand("validate", "Parse and fully replay logs");
  validate->add_option("logs", o.inputs, "Session logs or directories")->required();
  add_common(validate);

  auto* export_tl = app.add_subcommand("export-timeline", "Write the timeline model as JSON");
  export_tl->add_option("log", o.inputs, "Session log")->required();
  export_tl->add_option("--out", o.out, "Output file (default stdout)");
  export_tl->add_option("--file", o.file, "File within the session (default: first)");
  export_tl->add_option("--first-visible-line", o.first_visible_line, "Projection start line");
  export_tl->add_option("--visible-lines", o.visible_lines, "Projection height in lines");
  add_common(export_tl);

  auto* replay = app.add_subcommand("replay", "Stream a log into a running server as the student");
  replay->add_option("log", o.inputs, "Session log")->required();
  replay->add_option("--server", o.server, "host:port or ws://host:port");
  replay->add_option("--speed", o.speed, "Time scale; 0 sends as fast as possible")
      ->check(CLI::NonNegativeNumber);
  replay->add_option("--token", o.token, "Shared token");
  replay->add_option("--answer", o.auto_answer, "Answer delivered questions with this text");
  add_common(replay);

  auto* serve = app.add_subcommand("serve", "Run the monitor server");
  serve->add_option("--address", o.address, "Listen address");
  serve->add_option("--port", o.port, "Listen port (0 = ephemeral)")->check(CLI::Range(0, 65535));
  serve->add_option("--journal-dir", o.journal_dir, "Directory for session journals");
  serve->add_option("--token", o.token, "Accepted shared token");
  add_common(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInputError;
  }

  try {
    if (*analyze) return cmd_analyze(o);
    if (*validate) return cmd_validate(o);
    if (*export_tl) return cmd_export_timeline(o);
    if (*replay) return cmd_replay(o);
    if (*serve) return cmd_serve(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kInputError;
}
