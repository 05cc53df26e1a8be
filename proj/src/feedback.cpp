#include "palp/feedback.hpp"

#include <algorithm>
#include <chrono>

#include "palp/error.hpp"
#include "palp/report.hpp"

namespace palp::feedback {

using nlohmann::json;

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Snapshot: return "snapshot";
    case MessageKind::PressCompleted: return "press_completed";
    case MessageKind::TaskStarted: return "task_started";
    case MessageKind::TaskFinalized: return "task_finalized";
    case MessageKind::Report: return "report";
    case MessageKind::Heartbeat: return "heartbeat";
  }
  return "unknown";
}

namespace {

json task_payload_json(const TaskPayload& p) {
  return {{"info", p.info},
          {"frames", p.frames},
          {"codec_errors", p.codec_errors},
          {"presses", p.presses}};
}

struct PayloadJson {
  json& out;

  void operator()(const SnapshotPayload& p) const {
    out["t_ms"] = p.t_ms;
    json sensors = json::object();
    for (SensorId id : kAllSensors) {
      sensors[std::string(to_string(id))] = {{"raw", p.raw[id]},
                                             {"color", to_string(p.color[id])}};
    }
    out["sensors"] = std::move(sensors);
    out["orientation_plausible"] = p.orientation_plausible;
  }
  void operator()(const PressPayload& p) const {
    out["press"] = p.press;
    out["press_count"] = p.press_count;
    out["peak_newtons"] = p.peak_newtons ? json(*p.peak_newtons) : json(nullptr);
    out["over_safe_threshold"] = p.over_safe_threshold;
  }
  void operator()(const TaskPayload& p) const { out.update(task_payload_json(p)); }
  void operator()(const ReportPayload& p) const {
    out["participant_id"] = p.participant_id;
    out["report"] = p.report ? json(*p.report) : json(nullptr);
    if (p.error) {
      out["error"] = {{"code", to_string(p.error->code)}, {"message", p.error->message}};
    } else {
      out["error"] = nullptr;
    }
  }
  void operator()(const HeartbeatPayload& p) const { out["unix_ms"] = p.unix_ms; }
};

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_' || c == '.';
  });
}

}  // namespace

json message_to_json(const FeedbackMessage& msg) {
  json out;
  out["type"] = to_string(msg.kind);
  out["session_id"] = msg.session_id;
  out["seq"] = msg.seq;
  std::visit(PayloadJson{out}, msg.payload);
  return out;
}

// ---------------------------------------------------------------------------

Subscription::Subscription(std::size_t capacity, std::optional<std::string> session_filter)
    : capacity_(std::max<std::size_t>(capacity, 1)), filter_(std::move(session_filter)) {}

void Subscription::push(const MessagePtr& msg) {
  std::function<void()> notify;
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      auto it = std::find_if(queue_.begin(), queue_.end(), [](const MessagePtr& m) {
        return m->kind == MessageKind::Snapshot;
      });
      if (it != queue_.end()) {
        queue_.erase(it);
        ++dropped_;
      } else if (msg->kind == MessageKind::Snapshot) {
        ++dropped_;
        return;
      }
    }
    queue_.push_back(msg);
    notify = notify_;
  }
  cv_.notify_one();
  if (notify) notify();
}

std::optional<MessagePtr> Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  MessagePtr m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::optional<MessagePtr> Subscription::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  MessagePtr m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
    notify_ = nullptr;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

bool Subscription::wants(const FeedbackMessage& msg) const {
  if (!filter_) return true;
  // Participant reports and heartbeats go to everyone.
  return msg.session_id.empty() || msg.session_id == *filter_;
}

std::uint64_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t Subscription::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

void Subscription::set_notify(std::function<void()> notify) {
  std::lock_guard lock(mu_);
  notify_ = std::move(notify);
}

// ---------------------------------------------------------------------------

struct FeedbackService::LiveSession {
  LiveSession(const SessionInfo& info, const SegmentationConfig& cfg) : session{info, {}} {
    for (SensorId id : kAllSensors) segmenters.emplace_back(id, cfg);
  }

  std::mutex mu;
  Session session;  // recorded frames, in arrival order
  wire::StreamDecoder decoder;
  std::vector<PressSegmenter> segmenters;
  std::vector<PressEvent> events;
  LiveSensorState live;
  std::uint64_t out_of_order = 0;
  std::uint64_t seq = 0;
  std::optional<std::uint32_t> last_t;
  std::optional<std::uint32_t> last_snapshot_t;
  std::unique_ptr<SessionWriter> writer;
  std::optional<std::filesystem::path> recording;
  bool open = true;

  std::uint64_t codec_errors() const { return decoder.stats().errors() + out_of_order; }
};

FeedbackService::FeedbackService(ServiceOptions options) : options_(std::move(options)) {
  options_.assessment.validate();
}

FeedbackService::~FeedbackService() {
  std::lock_guard lock(subs_mu_);
  for (auto& s : subs_) s->close();
}

std::shared_ptr<FeedbackService::LiveSession> FeedbackService::find(
    const std::string& handle) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(handle);
  if (it == sessions_.end()) {
    throw Error(ErrorCode::UnknownSession, "unknown session '" + handle + "'");
  }
  return it->second;
}

std::string FeedbackService::open_session(const SessionInfo& info) {
  if (!valid_session_id(info.session_id)) {
    throw Error(ErrorCode::FieldOutOfRange,
                "session id '" + info.session_id + "' must be 1-128 characters of [A-Za-z0-9._-]");
  }
  auto s = std::make_shared<LiveSession>(info, options_.assessment.segmentation);
  if (!options_.record_dir.empty()) {
    std::filesystem::create_directories(options_.record_dir);
    auto path = options_.record_dir / (info.session_id + kSessionFileExtension);
    s->writer = std::make_unique<SessionWriter>(path, info);
    s->recording = path;
  }
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(info.session_id);
    if (it != sessions_.end()) {
      std::lock_guard slock(it->second->mu);
      if (it->second->open) {
        throw Error(ErrorCode::DuplicateSession,
                    "session '" + info.session_id + "' is already open");
      }
    }
    sessions_[info.session_id] = s;
  }
  std::lock_guard slock(s->mu);
  publish(s.get(), MessageKind::TaskStarted, info.session_id, TaskPayload{info, 0, 0, 0});
  return info.session_id;
}

IngestResult FeedbackService::ingest(const std::string& handle,
                                     std::span<const std::uint8_t> bytes) {
  auto s = find(handle);
  std::lock_guard lock(s->mu);
  if (!s->open) throw Error(ErrorCode::UnknownSession, "session '" + handle + "' is finalized");
  std::size_t accepted = 0;
  for (const auto& f : s->decoder.push(bytes)) {
    if (ingest_locked(*s, f)) ++accepted;
  }
  if (s->writer) s->writer->flush();
  return {accepted, s->codec_errors()};
}

IngestResult FeedbackService::ingest_frame(const std::string& handle, const SensorFrame& frame) {
  auto s = find(handle);
  std::lock_guard lock(s->mu);
  if (!s->open) throw Error(ErrorCode::UnknownSession, "session '" + handle + "' is finalized");
  const bool accepted = ingest_locked(*s, frame);
  return {accepted ? 1u : 0u, s->codec_errors()};
}

void FeedbackService::press_completed(LiveSession& s, const PressEvent& e) {
  auto& st = s.live.sensors[e.sensor];
  ++st.press_count;
  st.last_peak = e.peak_raw;
  s.events.push_back(e);
  PressPayload p{e, st.press_count, std::nullopt, false};
  if (options_.calibration != nullptr && options_.calibration->has(e.sensor)) {
    p.peak_newtons = calibrate(e.peak_raw, *options_.calibration, e.sensor);
    p.over_safe_threshold =
        safe_threshold_check(*p.peak_newtons, options_.safe_threshold_newtons).exceeded;
  }
  publish(&s, MessageKind::PressCompleted, s.session.info.session_id, std::move(p));
}

bool FeedbackService::ingest_locked(LiveSession& s, const SensorFrame& frame) {
  if (s.last_t && frame.timestamp_ms < *s.last_t) {
    ++s.out_of_order;
    return false;
  }
  s.last_t = frame.timestamp_ms;
  s.session.frames.push_back(frame);
  if (s.writer) s.writer->append(frame);

  const double bound = options_.assessment.segmentation.quartet_bound;
  s.live.clock_ms = frame.timestamp_ms;
  ++s.live.frames;
  s.live.orientation_plausible = validate_orientation(frame.orientation).plausible();

  std::vector<PressEvent> done;
  for (SensorId id : kAllSensors) {
    auto& st = s.live.sensors[id];
    st.raw = frame.force(id);
    st.quartet = classify_force_level(st.raw, bound);
    st.color = quartet_to_color(st.quartet);
    auto ev = s.segmenters[index_of(id)].push_sample({frame.timestamp_ms, st.raw});
    done.insert(done.end(), ev.begin(), ev.end());
  }
  for (const auto& e : done) press_completed(s, e);

  if (!s.last_snapshot_t ||
      frame.timestamp_ms - *s.last_snapshot_t >= options_.snapshot_interval_ms) {
    s.last_snapshot_t = frame.timestamp_ms;
    SnapshotPayload p;
    p.t_ms = frame.timestamp_ms;
    for (SensorId id : kAllSensors) {
      p.raw[id] = s.live.sensors[id].raw;
      p.color[id] = s.live.sensors[id].color;
    }
    p.orientation_plausible = s.live.orientation_plausible;
    publish(&s, MessageKind::Snapshot, s.session.info.session_id, std::move(p));
  }
  return true;
}

void FeedbackService::finalize_locked(LiveSession& s) {
  if (!s.open) return;
  s.open = false;
  std::vector<PressEvent> done;
  for (auto& seg : s.segmenters) {
    auto ev = seg.finalize();
    done.insert(done.end(), ev.begin(), ev.end());
  }
  std::stable_sort(done.begin(), done.end(), [](const PressEvent& a, const PressEvent& b) {
    if (a.onset_ms != b.onset_ms) return a.onset_ms < b.onset_ms;
    return index_of(a.sensor) < index_of(b.sensor);
  });
  for (const auto& e : done) press_completed(s, e);
  std::stable_sort(s.events.begin(), s.events.end(), [](const PressEvent& a, const PressEvent& b) {
    if (a.onset_ms != b.onset_ms) return a.onset_ms < b.onset_ms;
    return index_of(a.sensor) < index_of(b.sensor);
  });
  if (s.writer) {
    s.writer->flush();
    s.writer.reset();
  }
  publish(&s, MessageKind::TaskFinalized, s.session.info.session_id,
          TaskPayload{s.session.info, s.session.frames.size(), s.codec_errors(),
                      static_cast<std::uint32_t>(s.events.size())});
}

Session FeedbackService::finalize_task(const std::string& handle) {
  auto s = find(handle);
  std::lock_guard lock(s->mu);
  finalize_locked(*s);
  return s->session;
}

CompetencyReport FeedbackService::finalize_participant(std::span<const std::string> handles) {
  std::vector<SegmentedTask> tasks;
  std::uint64_t codec_errors = 0;
  std::string participant;
  for (const auto& h : handles) {
    auto s = find(h);
    std::lock_guard lock(s->mu);
    finalize_locked(*s);
    if (participant.empty()) participant = s->session.info.participant_id;
    tasks.push_back({s->session.info, s->session.frames.size(), s->events});
    codec_errors += s->codec_errors();
  }

  SafetyContext safety{options_.calibration, options_.safe_threshold_newtons};
  try {
    CompetencyReport report = assess_segmented(tasks, options_.assessment, safety, codec_errors);
    {
      std::lock_guard lock(mu_);
      reports_[report.participant_id] = report;
    }
    publish(nullptr, MessageKind::Report, {}, ReportPayload{report.participant_id, report, {}});
    return report;
  } catch (const Error& e) {
    publish(nullptr, MessageKind::Report, {},
            ReportPayload{participant, std::nullopt, ReportError{e.code(), e.what()}});
    throw;
  }
}

void FeedbackService::publish(LiveSession* s, MessageKind kind, std::string session_id,
                              decltype(FeedbackMessage::payload) payload) {
  auto msg = std::make_shared<FeedbackMessage>();
  msg->kind = kind;
  msg->session_id = std::move(session_id);
  msg->payload = std::move(payload);
  if (s != nullptr) {
    msg->seq = s->seq++;
    fan_out(msg);
  } else {
    std::lock_guard lock(subs_mu_);
    msg->seq = global_seq_++;
    for (auto& sub : subs_) {
      if (sub->wants(*msg)) sub->push(msg);
    }
  }
}

void FeedbackService::fan_out(const MessagePtr& msg) {
  std::lock_guard lock(subs_mu_);
  for (auto& sub : subs_) {
    if (sub->wants(*msg)) sub->push(msg);
  }
}

std::shared_ptr<Subscription> FeedbackService::subscribe(std::optional<std::string> filter) {
  auto sub = std::make_shared<Subscription>(options_.subscriber_capacity, std::move(filter));
  std::lock_guard lock(subs_mu_);
  subs_.push_back(sub);
  return sub;
}

void FeedbackService::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  sub->close();
  std::lock_guard lock(subs_mu_);
  std::erase(subs_, sub);
}

void FeedbackService::publish_heartbeat() {
  const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  publish(nullptr, MessageKind::Heartbeat, {}, HeartbeatPayload{now});
}

std::vector<SessionSummary> FeedbackService::sessions() const {
  std::vector<std::shared_ptr<LiveSession>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionSummary> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    out.push_back({s->session.info, s->open, s->session.frames.size(), s->codec_errors(),
                   static_cast<std::uint32_t>(s->events.size()), s->recording});
  }
  return out;
}

std::optional<SessionSummary> FeedbackService::session(const std::string& handle) const {
  std::shared_ptr<LiveSession> s;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(handle);
    if (it == sessions_.end()) return std::nullopt;
    s = it->second;
  }
  std::lock_guard lock(s->mu);
  return SessionSummary{s->session.info, s->open, s->session.frames.size(), s->codec_errors(),
                        static_cast<std::uint32_t>(s->events.size()), s->recording};
}

std::optional<LiveSensorState> FeedbackService::live_state(const std::string& handle) const {
  std::shared_ptr<LiveSession> s;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(handle);
    if (it == sessions_.end()) return std::nullopt;
    s = it->second;
  }
  std::lock_guard lock(s->mu);
  return s->live;
}

std::optional<CompetencyReport> FeedbackService::report(const std::string& participant_id) const {
  std::lock_guard lock(mu_);
  auto it = reports_.find(participant_id);
  if (it == reports_.end()) return std::nullopt;
  return it->second;
}

std::optional<Session> FeedbackService::recorded(const std::string& handle) const {
  std::shared_ptr<LiveSession> s;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(handle);
    if (it == sessions_.end()) return std::nullopt;
    s = it->second;
  }
  std::lock_guard lock(s->mu);
  return s->session;
}

}  // namespace palp::feedback
