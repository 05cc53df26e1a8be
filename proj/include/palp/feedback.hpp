#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "palp/assessment.hpp"
#include "palp/error.hpp"
#include "palp/segmentation.hpp"
#include "palp/session_file.hpp"
#include "palp/wire.hpp"

namespace palp::feedback {

struct SensorLive {
  std::uint16_t raw = 0;
  ForceQuartet quartet = ForceQuartet::Q1;
  FeedbackColor color = FeedbackColor::Green;
  std::uint32_t press_count = 0;
  std::uint16_t last_peak = 0;

  friend bool operator==(const SensorLive&, const SensorLive&) = default;
};

struct LiveSensorState {
  PerSensor<SensorLive> sensors;
  std::uint32_t clock_ms = 0;  // timestamp of the latest frame
  std::uint64_t frames = 0;
  bool orientation_plausible = true;
};

struct SnapshotPayload {
  std::uint32_t t_ms = 0;
  PerSensor<std::uint16_t> raw;
  PerSensor<FeedbackColor> color;
  bool orientation_plausible = true;
};

struct PressPayload {
  PressEvent press;
  std::uint32_t press_count = 0;           // cumulative on that sensor
  std::optional<double> peak_newtons;      // when calibrated
  bool over_safe_threshold = false;
};

struct TaskPayload {
  SessionInfo info;
  std::uint64_t frames = 0;
  std::uint64_t codec_errors = 0;
  std::uint32_t presses = 0;
};

struct ReportError {
  ErrorCode code = ErrorCode::EmptySession;
  std::string message;
};

struct ReportPayload {
  std::string participant_id;
  std::optional<CompetencyReport> report;
  std::optional<ReportError> error;
};

struct HeartbeatPayload {
  std::int64_t unix_ms = 0;
};

enum class MessageKind : std::uint8_t {
  Snapshot,
  PressCompleted,
  TaskStarted,
  TaskFinalized,
  Report,
  Heartbeat,
};

std::string_view to_string(MessageKind kind);

// Immutable once published; shared between subscribers.
struct FeedbackMessage {
  MessageKind kind = MessageKind::Snapshot;
  std::string session_id;  // empty for participant reports and heartbeats
  std::uint64_t seq = 0;   // per-session order
  std::variant<SnapshotPayload, PressPayload, TaskPayload, ReportPayload, HeartbeatPayload> payload;
};

using MessagePtr = std::shared_ptr<const FeedbackMessage>;

nlohmann::json message_to_json(const FeedbackMessage& msg);

// Bounded per-subscriber queue. When full, the oldest queued Snapshot is
// dropped to make room; other kinds are never dropped, so the queue can
// exceed its capacity only with non-Snapshot messages.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity, std::optional<std::string> session_filter = {});

  void push(const MessagePtr& msg);
  std::optional<MessagePtr> pop(std::chrono::milliseconds timeout);
  std::optional<MessagePtr> try_pop();
  void close();

  bool closed() const;
  bool wants(const FeedbackMessage& msg) const;
  std::uint64_t dropped() const;
  std::size_t size() const;

  // Invoked after each push, outside the queue lock; lets an event loop
  // schedule a drain instead of polling.
  void set_notify(std::function<void()> notify);

 private:
  std::size_t capacity_;
  std::optional<std::string> filter_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<MessagePtr> queue_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
  std::function<void()> notify_;
};

struct ServiceOptions {
  AssessmentConfig assessment;
  std::filesystem::path record_dir;  // empty: keep recordings in memory only
  std::uint32_t snapshot_interval_ms = 50;  // session clock; at most 20 Snapshots/s
  std::size_t subscriber_capacity = 256;
  const CalibrationTable* calibration = nullptr;
  double safe_threshold_newtons = kSmallFemaleSafeThresholdNewtons;
};

struct SessionSummary {
  SessionInfo info;
  bool open = true;
  std::uint64_t frames = 0;
  std::uint64_t codec_errors = 0;
  std::uint32_t presses = 0;
  std::optional<std::filesystem::path> recording;
};

struct IngestResult {
  std::size_t frames = 0;
  std::uint64_t codec_errors = 0;  // cumulative for the session
};

// Engine side of the live feedback loop. One writer per session (the frame
// stream) and any number of subscribers. Start and stop are explicit
// commands: open_session, finalize_task, finalize_participant.
class FeedbackService {
 public:
  explicit FeedbackService(ServiceOptions options = {});
  ~FeedbackService();

  FeedbackService(const FeedbackService&) = delete;
  FeedbackService& operator=(const FeedbackService&) = delete;

  // Throws Error(DuplicateSession) if a session with this id is open.
  std::string open_session(const SessionInfo& info);

  // Decodes wire bytes; corrupted frames and out-of-order timestamps are
  // counted, never fatal. Throws Error(UnknownSession) for closed or unknown
  // handles.
  IngestResult ingest(const std::string& handle, std::span<const std::uint8_t> bytes);
  IngestResult ingest_frame(const std::string& handle, const SensorFrame& frame);

  // Closes streaming segmentation and returns the recorded session.
  Session finalize_task(const std::string& handle);

  // Finalizes any still-open handles, scores the three tasks from the live
  // segmentation and publishes a Report message. Assessment errors are
  // published in the Report message and rethrown.
  CompetencyReport finalize_participant(std::span<const std::string> handles);

  std::shared_ptr<Subscription> subscribe(std::optional<std::string> session_filter = {});
  void unsubscribe(const std::shared_ptr<Subscription>& sub);
  void publish_heartbeat();

  std::vector<SessionSummary> sessions() const;
  std::optional<SessionSummary> session(const std::string& handle) const;
  std::optional<LiveSensorState> live_state(const std::string& handle) const;
  std::optional<CompetencyReport> report(const std::string& participant_id) const;
  std::optional<Session> recorded(const std::string& handle) const;

  const ServiceOptions& options() const { return options_; }

 private:
  struct LiveSession;

  std::shared_ptr<LiveSession> find(const std::string& handle) const;
  bool ingest_locked(LiveSession& s, const SensorFrame& frame);
  void press_completed(LiveSession& s, const PressEvent& e);
  void finalize_locked(LiveSession& s);
  void publish(LiveSession* s, MessageKind kind, std::string session_id,
               decltype(FeedbackMessage::payload) payload);
  void fan_out(const MessagePtr& msg);

  ServiceOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
  std::map<std::string, CompetencyReport> reports_;
  std::mutex subs_mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::uint64_t global_seq_ = 0;
};

}  // namespace palp::feedback
