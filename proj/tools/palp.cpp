// palp: batch and live entry point for the palpation assessment engine.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <boost/asio.hpp>
#include <httplib.h>
#include <json.hpp>

#include "palp/assessment.hpp"
#include "palp/config.hpp"
#include "palp/error.hpp"
#include "palp/feedback.hpp"
#include "palp/io.hpp"
#include "palp/reference.hpp"
#include "palp/report.hpp"
#include "palp/server.hpp"
#include "palp/session_file.hpp"
#include "palp/simulator.hpp"
#include "palp/version.hpp"
#include "palp/wire.hpp"

namespace {

using nlohmann::json;
using namespace palp;

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print_error(std::string_view code, const std::string& message,
                 std::optional<std::size_t> line = {}) {
  json err{{"code", code}, {"message", message}};
  if (line) err["line"] = *line;
  std::cerr << json{{"error", err}}.dump() << '\n';
}

// A session-file parse failure that names the file.
class FileParseError : public Error {
 public:
  FileParseError(const std::string& path, const ParseError& e)
      : Error(ErrorCode::ParseError, path + ": " + e.what()), line_(e.line()) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

Session load_session(const std::string& path) {
  try {
    return read_session(std::filesystem::path(path));
  } catch (const ParseError& e) {
    throw FileParseError(path, e);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path + ": " + e.what());
  }
}

// Flags shared by every subcommand that builds an EngineConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<double> onset, release, quartet_bound, penalty_slope;
  std::optional<std::uint32_t> min_press_ms, min_gap_ms;
  std::optional<std::size_t> median_window;
  std::string calibration;
  std::string reference;
  std::string record_dir;
  std::string http, websocket, ingest;

  void add_to(CLI::App* app, bool listen) {
    app->add_option("--config", config_path, "JSON engine config file");
    app->add_option("--onset", onset, "Segmentation onset threshold (raw units)");
    app->add_option("--release", release, "Segmentation release threshold (raw units)");
    app->add_option("--min-press-ms", min_press_ms, "Shortest press kept");
    app->add_option("--min-gap-ms", min_gap_ms, "Presses closer than this are merged");
    app->add_option("--median-window", median_window, "Median prefilter width (odd)");
    app->add_option("--quartet-bound", quartet_bound, "Upper bound of the four force quartets");
    app->add_option("--penalty-slope", penalty_slope, "Points lost per percentage point");
    app->add_option("--calibration", calibration, "Calibration table JSON");
    if (listen) {
      app->add_option("--reference", reference, "Reference model JSON to serve");
      app->add_option("--record-dir", record_dir, "Directory for live session recordings");
      app->add_option("--http", http, "HTTP listen address host:port");
      app->add_option("--ws", websocket, "WebSocket listen address host:port");
      app->add_option("--ingest", ingest, "Frame ingest listen address host:port");
    }
  }

  // flags > env > config file > defaults
  EngineConfig resolve() const {
    EngineConfig cfg;
    if (!config_path.empty()) cfg = load_engine_config(config_path);
    apply_env_overrides(cfg, process_env);
    auto& seg = cfg.assessment.segmentation;
    if (onset) seg.onset_threshold = *onset;
    if (release) seg.release_threshold = *release;
    if (min_press_ms) seg.min_press_ms = *min_press_ms;
    if (min_gap_ms) seg.min_gap_ms = *min_gap_ms;
    if (median_window) seg.median_window = *median_window;
    if (quartet_bound) seg.quartet_bound = *quartet_bound;
    if (penalty_slope) cfg.assessment.penalty_slope = *penalty_slope;
    if (!calibration.empty()) cfg.calibration_path = calibration;
    if (!reference.empty()) cfg.reference_model_path = reference;
    if (!record_dir.empty()) cfg.record_dir = record_dir;
    if (!http.empty()) cfg.listen.http = parse_endpoint(http);
    if (!websocket.empty()) cfg.listen.websocket = parse_endpoint(websocket);
    if (!ingest.empty()) cfg.listen.ingest = parse_endpoint(ingest);
    cfg.validate();
    return cfg;
  }
};

TaskKind default_task(sim::Archetype a) {
  switch (a) {
    case sim::Archetype::IdealSuperficial: return TaskKind::Superficial;
    case sim::Archetype::IdealLiver: return TaskKind::Liver;
    default: return TaskKind::Deep;
  }
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string archetype;
  std::string profile_path;
  std::string task;
  std::uint64_t seed = 1;
  std::string output;
  std::string session_id;
  std::string participant_id;
};

int run_simulate(const SimulateArgs& a) {
  sim::SimProfile profile;
  TaskKind task = TaskKind::Deep;
  if (!a.profile_path.empty()) {
    profile = sim::profile_from_json(read_text_file(a.profile_path));
    if (a.task.empty()) throw Error(ErrorCode::InvalidConfig, "--task is required with --profile");
  } else {
    const auto arch = sim::archetype_from_string(a.archetype);
    if (!arch || *arch == sim::Archetype::Custom) {
      throw Error(ErrorCode::InvalidConfig, "unknown archetype '" + a.archetype + "'");
    }
    task = a.task.empty() ? default_task(*arch) : *task_from_string(a.task);
    profile = sim::profile_for(*arch, task);
  }
  if (!a.task.empty()) task = *task_from_string(a.task);

  Session s = sim::generate_session(profile, task, a.seed);
  if (!a.session_id.empty()) s.info.session_id = a.session_id;
  if (!a.participant_id.empty()) s.info.participant_id = a.participant_id;
  write_session(std::filesystem::path(a.output), s);
  std::cout << json{{"output", a.output},
                    {"session_id", s.info.session_id},
                    {"task", to_string(task)},
                    {"frames", s.frames.size()},
                    {"presses", profile.total_presses()}}
                   .dump()
            << '\n';
  return 0;
}

// --- assess -----------------------------------------------------------------

struct AssessArgs {
  std::vector<std::string> files;
  std::string output;
  std::string text_output;
  std::string format;
  ConfigFlags cfg;
};

int run_assess(const AssessArgs& a) {
  const EngineConfig cfg = a.cfg.resolve();
  std::vector<Session> sessions;
  for (const auto& f : a.files) sessions.push_back(load_session(f));

  std::optional<CalibrationTable> calibration;
  if (!cfg.calibration_path.empty()) calibration = load_calibration(cfg.calibration_path);
  SafetyContext safety;
  if (calibration) safety.calibration = &*calibration;

  const CompetencyReport report = assess(sessions, cfg.assessment, safety);
  const std::string js = report_to_json(report);
  if (!a.output.empty()) write_text_file(a.output, js + "\n");
  const std::string text = render_text(report);
  if (!a.text_output.empty()) write_text_file(a.text_output, text);

  std::string fmt = a.format;
  if (fmt.empty()) fmt = a.output.empty() ? "json" : "text";
  if (fmt == "json" || fmt == "both") std::cout << js << '\n';
  if (fmt == "text" || fmt == "both") std::cout << text;
  return 0;
}

// --- report -----------------------------------------------------------------

int run_report(const std::string& path, const std::string& format) {
  const CompetencyReport report = report_from_json(read_text_file(path));
  if (format == "json") {
    std::cout << report_to_json(report) << '\n';
  } else {
    std::cout << render_text(report);
  }
  return 0;
}

// --- build-reference --------------------------------------------------------

struct ReferenceArgs {
  std::vector<std::string> files;
  std::string output;
  std::optional<double> safe_threshold;
  std::vector<std::string> expertise;  // participant=label
  bool override_bound = false;
  ConfigFlags cfg;
};

int run_build_reference(const ReferenceArgs& a) {
  const EngineConfig cfg = a.cfg.resolve();
  std::vector<Session> sessions;
  for (const auto& f : a.files) sessions.push_back(load_session(f));

  ReferenceConfig rc;
  if (a.cfg.quartet_bound) rc.quartet_bound_override = a.cfg.quartet_bound;
  rc.safe_threshold_override = a.safe_threshold;
  for (const auto& kv : a.expertise) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "--expertise expects participant=label, got '" + kv + "'");
    }
    rc.expertise[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  std::optional<CalibrationTable> calibration;
  if (!cfg.calibration_path.empty()) calibration = load_calibration(cfg.calibration_path);

  const ReferenceModel model = build_reference(sessions, cfg.assessment.segmentation, rc,
                                               calibration ? &*calibration : nullptr);
  save_reference(a.output, model);
  std::cout << json{{"output", a.output},
                    {"sessions", model.session_count()},
                    {"quartet_bound", model.quartet_bound},
                    {"observed_bound_arb", model.observed_bound_arb}}
                   .dump()
            << '\n';
  return 0;
}

// --- serve ------------------------------------------------------------------

int run_serve(const ConfigFlags& flags, double duration_s) {
  const EngineConfig cfg = flags.resolve();
  std::optional<CalibrationTable> calibration;
  if (!cfg.calibration_path.empty()) calibration = load_calibration(cfg.calibration_path);
  std::optional<ReferenceModel> model;
  if (!cfg.reference_model_path.empty()) model = load_reference(cfg.reference_model_path);

  feedback::ServiceOptions so;
  so.assessment = cfg.assessment;
  so.record_dir = cfg.record_dir;
  so.calibration = calibration ? &*calibration : nullptr;
  if (model) so.safe_threshold_newtons = model->safe_threshold_newtons;
  feedback::FeedbackService service(so);

  server::ServerOptions opts;
  opts.listen = cfg.listen;
  opts.reference = model ? &*model : nullptr;
  server::Server srv(service, opts);
  srv.start();

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << json{{"http", cfg.listen.http.host + ":" + std::to_string(srv.http_port())},
                    {"websocket",
                     cfg.listen.websocket.host + ":" + std::to_string(srv.websocket_port())},
                    {"ingest", cfg.listen.ingest.host + ":" + std::to_string(srv.ingest_port())}}
                   .dump()
            << std::endl;

  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (duration_s > 0 && std::chrono::steady_clock::now() - start >=
                              std::chrono::duration<double>(duration_s)) {
      break;
    }
  }
  srv.stop();
  return 0;
}

// --- replay -----------------------------------------------------------------

struct ReplayArgs {
  std::string file;
  double speed = 1.0;
  std::string session_id;
  bool no_finalize = false;
  ConfigFlags cfg;
};

[[noreturn]] void http_failure(const std::string& what, const httplib::Result& r) {
  if (!r) throw Error(ErrorCode::Io, what + ": " + httplib::to_string(r.error()));
  std::string message = r->body;
  try {
    const json body = json::parse(r->body);
    message = body.at("error").at("message").get<std::string>();
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Io, what + ": HTTP " + std::to_string(r->status) + ": " + message);
}

int run_replay(const ReplayArgs& a) {
  const EngineConfig cfg = a.cfg.resolve();
  Session s = load_session(a.file);
  if (!a.session_id.empty()) s.info.session_id = a.session_id;

  httplib::Client http(cfg.listen.http.host, cfg.listen.http.port);
  http.set_connection_timeout(5);
  auto r = http.Post("/sessions", json(s.info).dump(), "application/json");
  if (!r || r->status != 201) http_failure("open session", r);

  namespace asio = boost::asio;
  asio::io_context ioc;
  asio::ip::tcp::socket sock(ioc);
  asio::ip::tcp::resolver resolver(ioc);
  asio::connect(sock, resolver.resolve(cfg.listen.ingest.host,
                                       std::to_string(cfg.listen.ingest.port)));
  sock.set_option(asio::ip::tcp::no_delay(true));
  const std::string header = "session " + s.info.session_id + "\n";
  asio::write(sock, asio::buffer(header));
  asio::streambuf ack;
  asio::read_until(sock, ack, '\n');
  std::string line(asio::buffers_begin(ack.data()), asio::buffers_end(ack.data()));
  if (line.rfind("ok", 0) != 0) throw Error(ErrorCode::Io, "ingest refused: " + line);

  std::signal(SIGINT, on_signal);
  const std::size_t sent = sim::stream_session(
      s, a.speed, [&](std::span<const std::uint8_t> bytes) { asio::write(sock, asio::buffer(bytes.data(), bytes.size())); },
      &g_stop);
  boost::system::error_code ec;
  sock.shutdown(asio::ip::tcp::socket::shutdown_send, ec);
  // Wait for the server to consume everything before finalizing.
  char sink[64];
  sock.read_some(asio::buffer(sink), ec);
  sock.close(ec);

  json out{{"session_id", s.info.session_id}, {"frames_sent", sent}};
  if (!a.no_finalize) {
    auto fr = http.Post("/sessions/" + s.info.session_id + "/finalize", "", "application/json");
    if (!fr || fr->status != 200) http_failure("finalize", fr);
    out["session"] = json::parse(fr->body);
  }
  std::cout << out.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Palpation telemetry and competency assessment engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(palp::kEngineVersion));

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic session file");
  auto* arch_opt = simulate->add_option("--archetype", sim_args.archetype,
                                        "ideal-superficial, ideal-deep, ideal-liver, tutor1-deep, "
                                        "tutor2-deep, tutor3-deep, tutor4-deep, error-heavy")
                       ->check(CLI::Validator(
                           [](std::string& v) -> std::string {
                             return sim::archetype_from_string(v) ? "" : "unknown archetype " + v;
                           },
                           "ARCHETYPE"));
  auto* prof_opt = simulate->add_option("--profile", sim_args.profile_path, "Custom profile JSON");
  arch_opt->excludes(prof_opt);
  simulate->add_option("--task", sim_args.task, "superficial, deep or liver")
      ->check(CLI::IsMember({"superficial", "deep", "liver"}));
  simulate->add_option("--seed", sim_args.seed, "RNG seed");
  simulate->add_option("-o,--output", sim_args.output, "Output .palp.jsonl file")->required();
  simulate->add_option("--session-id", sim_args.session_id, "Override the session id");
  simulate->add_option("--participant", sim_args.participant_id, "Override the participant id");

  AssessArgs assess_args;
  auto* assess_cmd = app.add_subcommand("assess", "Score three task recordings");
  assess_cmd->add_option("files", assess_args.files, "Session files (one per task)")
      ->required()
      ->expected(1, -1);
  assess_cmd->add_option("-o,--output", assess_args.output, "Write the report JSON here");
  assess_cmd->add_option("--text-output", assess_args.text_output, "Write the text report here");
  assess_cmd->add_option("--format", assess_args.format, "stdout format: json, text or both")
      ->check(CLI::IsMember({"json", "text", "both"}));
  assess_args.cfg.add_to(assess_cmd, false);

  std::string report_path, report_format = "text";
  auto* report_cmd = app.add_subcommand("report", "Re-render a stored report");
  report_cmd->add_option("file", report_path, "Report JSON")->required();
  report_cmd->add_option("--format", report_format, "text or json")
      ->check(CLI::IsMember({"json", "text"}));

  ReferenceArgs ref_args;
  auto* ref_cmd = app.add_subcommand("build-reference", "Average expert sessions into a model");
  ref_cmd->add_option("files", ref_args.files, "Expert session files")->required()->expected(1, -1);
  ref_cmd->add_option("-o,--output", ref_args.output, "Model JSON output")->required();
  ref_cmd->add_option("--safe-threshold", ref_args.safe_threshold, "Safe threshold in Newtons");
  ref_cmd->add_option("--expertise", ref_args.expertise, "participant=label metadata");
  ref_args.cfg.add_to(ref_cmd, false);

  ConfigFlags serve_flags;
  double serve_duration = 0.0;
  auto* serve_cmd = app.add_subcommand("serve", "Run the live feedback service");
  serve_flags.add_to(serve_cmd, true);
  serve_cmd->add_option("--duration-s", serve_duration, "Exit after this many seconds (0: run until signalled)");

  ReplayArgs replay_args;
  auto* replay_cmd = app.add_subcommand("replay", "Stream a session file into a running service");
  replay_cmd->add_option("file", replay_args.file, "Session file")->required();
  replay_cmd->add_option("--speed", replay_args.speed, "Pacing factor; 0 sends without delay")
      ->check(CLI::NonNegativeNumber);
  replay_cmd->add_option("--session-id", replay_args.session_id, "Override the session id");
  replay_cmd->add_flag("--no-finalize", replay_args.no_finalize, "Leave the session open");
  replay_args.cfg.add_to(replay_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("Usage", e.what());
    return kExitUsage;
  }

  try {
    if (*simulate) {
      if (sim_args.archetype.empty() && sim_args.profile_path.empty()) {
        print_error("Usage", "simulate needs --archetype or --profile");
        return kExitUsage;
      }
      return run_simulate(sim_args);
    }
    if (*assess_cmd) return run_assess(assess_args);
    if (*report_cmd) return run_report(report_path, report_format);
    if (*ref_cmd) return run_build_reference(ref_args);
    if (*serve_cmd) return run_serve(serve_flags, serve_duration);
    if (*replay_cmd) return run_replay(replay_args);
  } catch (const FileParseError& e) {
    print_error(to_string(ErrorCode::ParseError), e.what(), e.line());
    return kExitData;
  } catch (const palp::ParseError& e) {
    print_error(to_string(ErrorCode::ParseError), e.what(), e.line());
    return kExitData;
  } catch (const palp::Error& e) {
    print_error(to_string(e.code()), e.what());
    return kExitData;
  } catch (const std::exception& e) {
    print_error("Io", e.what());
    return kExitData;
  }
  return kExitUsage;
}
