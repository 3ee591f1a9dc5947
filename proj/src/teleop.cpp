#include "microforge/teleop.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "microforge/errors.hpp"
#include "microforge/websocket.hpp"

namespace microforge::teleop {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kMaxQueuedTelemetry = 64;

template <class T>
T field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw MalformedMessage(fmt::format("missing field '{}'", key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw MalformedMessage(fmt::format("field '{}' has the wrong type", key));
  }
}

double finite(const json& j, const char* key) {
  const double v = field<double>(j, key);
  if (!std::isfinite(v)) throw MalformedMessage(fmt::format("field '{}' must be finite", key));
  return v;
}

json pieces_json(const world::Body& b) {
  json out = json::array();
  for (const auto& piece : b.shape) {
    if (const auto* c = std::get_if<geom::Circle>(&piece)) {
      out.push_back({{"circle", {c->center.x, c->center.y, c->radius}}});
    } else {
      json verts = json::array();
      for (const auto& v : std::get<geom::Polygon>(piece).vertices) verts.push_back({v.x, v.y});
      out.push_back({{"polygon", verts}});
    }
  }
  return out;
}

void send_raw(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw Error("peer gone");
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace

const char* to_string(CommandKind k) {
  switch (k) {
    case CommandKind::Joystick: return "joystick";
    case CommandKind::SolventTarget: return "solvent_target";
    case CommandKind::LoadScenario: return "load_scenario";
    case CommandKind::Pause: return "pause";
    case CommandKind::Reset: return "reset";
  }
  return "?";
}

ClientMessage parse_client_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedMessage(fmt::format("not JSON: {}", e.what()));
  }
  if (!j.is_object()) throw MalformedMessage("message must be an object");
  const auto type = field<std::string>(j, "type");
  if (type == "hello") return Hello{field<int>(j, "schema_version")};
  if (type == "driver") {
    const auto action = field<std::string>(j, "action");
    if (action != "acquire" && action != "release") throw MalformedMessage("driver action must be acquire or release");
    return DriverRequest{action == "acquire"};
  }
  if (type != "command") throw MalformedMessage(fmt::format("unknown message type '{}'", type));

  OperatorCommand c;
  c.client_seq = field<std::int64_t>(j, "client_seq");
  const auto kind = field<std::string>(j, "kind");
  if (kind == "joystick") {
    c.kind = CommandKind::Joystick;
    c.grad_x = finite(j, "grad_x");
    c.grad_y = finite(j, "grad_y");
    c.rotate_rate = finite(j, "rotate_rate");
    if (j.contains("base")) c.base = field<std::string>(j, "base");
  } else if (kind == "solvent_target") {
    c.kind = CommandKind::SolventTarget;
    c.target = finite(j, "target");
    if (c.target < 0.0 || c.target > 1.0) throw MalformedMessage("solvent target outside [0, 1]");
  } else if (kind == "load_scenario") {
    c.kind = CommandKind::LoadScenario;
    c.name = field<std::string>(j, "name");
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name.find("..") != std::string::npos)
      throw MalformedMessage("scenario name must be a plain file stem");
  } else if (kind == "pause") {
    c.kind = CommandKind::Pause;
    c.paused = field<bool>(j, "paused");
  } else if (kind == "reset") {
    c.kind = CommandKind::Reset;
    c.seed = field<std::uint64_t>(j, "seed");
  } else {
    throw MalformedMessage(fmt::format("unknown command kind '{}'", kind));
  }
  return c;
}

std::string to_json_text(const OperatorCommand& c) {
  json j{{"type", "command"}, {"client_seq", c.client_seq}, {"kind", to_string(c.kind)}};
  switch (c.kind) {
    case CommandKind::Joystick:
      j["grad_x"] = c.grad_x;
      j["grad_y"] = c.grad_y;
      j["rotate_rate"] = c.rotate_rate;
      if (!c.base.empty()) j["base"] = c.base;
      break;
    case CommandKind::SolventTarget: j["target"] = c.target; break;
    case CommandKind::LoadScenario: j["name"] = c.name; break;
    case CommandKind::Pause: j["paused"] = c.paused; break;
    case CommandKind::Reset: j["seed"] = c.seed; break;
  }
  return j.dump();
}

std::string hello_message(std::uint64_t session_id, double tick_hz, double telemetry_hz) {
  return json{{"type", "hello"},
              {"schema_version", kProtocolVersion},
              {"server", "microforge"},
              {"session", session_id},
              {"tick_hz", tick_hz},
              {"telemetry_hz", telemetry_hz}}
      .dump();
}

std::string scene_message(const world::WorldState& w, const std::string& scenario_name) {
  json bodies = json::array();
  for (const auto& b : w.bodies)
    bodies.push_back({{"id", b.id}, {"kind", world::to_string(b.kind)}, {"mount", world::to_string(b.mount)},
                      {"pieces", pieces_json(b)}});
  json channel{{"top_enclosure", w.channel.top_enclosure}};
  if (w.channel.bounds) channel["bounds"] = *w.channel.bounds;
  return json{{"type", "scene"}, {"scenario", scenario_name}, {"bodies", bodies}, {"channel", channel}}.dump();
}

std::string telemetry_message(const sim::Simulation& sim, std::uint64_t seq, double tick_rate_actual, bool paused,
                              bool driver_held) {
  const auto& w = sim.world();
  json bodies = json::array();
  for (const auto& b : w.bodies) {
    if (b.kind == world::BodyKind::Wall) continue;
    json e{{"id", b.id}, {"kind", world::to_string(b.kind)}, {"x", b.pose.x}, {"y", b.pose.y}, {"theta", b.pose.theta}};
    e["lambda"] = b.swell ? json(b.swell->lambda) : json(nullptr);
    e["aperture"] = b.gripper ? json(b.gripper->aperture_um) : json(nullptr);
    if (b.gripper) e["gripper"] = bilayer::to_string(b.gripper->state);
    bodies.push_back(std::move(e));
  }
  json mating = json::array();
  for (const auto& p : sim.pairs()) {
    const auto g = mating::evaluate_guards(p, w, sim.protocol());
    json e{{"base", p.base_id},
           {"effector", p.effector_id},
           {"type", world::to_string(p.type)},
           {"state", mating::to_string(p.state)},
           {"released", p.released},
           {"can_insert", g.geometry.can_insert},
           {"interference_locked", g.geometry.interference_locked},
           {"walls_ok", g.walls_ok}};
    if (p.holds_lock()) {
      const auto d = world::detach_feasible(w, p.base_id, p.effector_id);
      e["detach_feasible"] = d.feasible;
      e["detach_reason"] = world::to_string(d.reason);
    }
    mating.push_back(std::move(e));
  }
  return json{{"type", "telemetry"},
              {"seq", seq},
              {"time", w.time_s},
              {"tick", w.tick_index},
              {"bodies", bodies},
              {"water_fraction", w.water_fraction},
              {"water_fraction_target", w.water_fraction_target},
              {"mating", mating},
              {"tick_rate_actual", tick_rate_actual},
              {"paused", paused},
              {"driver_held", driver_held}}
      .dump();
}

std::string error_message(const std::string& code, const std::string& message, std::optional<std::int64_t> client_seq) {
  json j{{"type", "error"}, {"code", code}, {"message", message}};
  if (client_seq) j["client_seq"] = *client_seq;
  return j.dump();
}

std::string ack_message(std::int64_t client_seq, std::int64_t tick) {
  return json{{"type", "ack"}, {"client_seq", client_seq}, {"tick", tick}}.dump();
}

std::string driver_message(bool held, bool you) {
  return json{{"type", "driver"}, {"held", held}, {"you", you}}.dump();
}

json to_action(const OperatorCommand& c, const std::string& base) {
  if (c.kind == CommandKind::Joystick)
    return {{"action", "field"}, {"base", base}, {"grad_x", c.grad_x}, {"grad_y", c.grad_y}, {"rotate_rate", c.rotate_rate}};
  if (c.kind == CommandKind::SolventTarget) return {{"action", "solvent"}, {"target", c.target}};
  throw InvalidCommand(fmt::format("{} has no scenario action", to_string(c.kind)));
}

// ---- service ----

struct Service::Session {
  std::uint64_t id = 0;
  int fd = -1;
  bool upgraded = false;
  bool hello_ok = false;
  std::int64_t last_seq = std::numeric_limits<std::int64_t>::min();
  std::mutex out_mutex;
  std::deque<std::pair<std::string, bool>> outbox;  // (message, is telemetry)
};

Service::Service(scenario::Scenario initial, Config cfg, ServiceOptions opt)
    : base_scenario_(std::move(initial)), cfg_(std::move(cfg)), opt_(std::move(opt)) {
  if (!(opt_.tick_hz > 0.0) || !(opt_.telemetry_hz > 0.0) || opt_.speed < 0.0)
    throw InvalidCommand("tick and telemetry rates must be positive, speed non-negative");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(opt_.port));
  if (::inet_pton(AF_INET, opt_.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw InvalidCommand(fmt::format("bad bind address '{}'", opt_.bind_address));
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    if (err == EADDRINUSE) throw PortInUse(fmt::format("port {} is already in use", opt_.port));
    throw Error(fmt::format("cannot listen on port {}: {}", opt_.port, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  reset_engine(base_scenario_);
}

Service::~Service() { stop(); }

void Service::reset_engine(scenario::Scenario sc) {
  engine_ = std::make_unique<scenario::ScenarioEngine>(std::move(sc), cfg_, true);
  if (opt_.trace_path) {
    trace_file_ = std::make_unique<std::ofstream>(*opt_.trace_path);
    engine_->set_trace(trace_file_.get());
  }
  std::lock_guard lk(scene_mutex_);
  scene_ = scene_message(engine_->sim().world(), engine_->scenario().name);
}

void Service::start() {
  if (running_.exchange(true)) return;
  sim_thread_ = std::thread([this] { sim_loop(); });
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Service::stop() {
  if (!running_.exchange(false)) {
    if (listen_fd_ >= 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    return;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  if (sim_thread_.joinable()) sim_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(sessions_mutex_);
    threads.swap(session_threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  replay_ = engine_->replay_log();
  if (trace_file_) trace_file_->flush();
  if (opt_.replay_path) {
    std::ofstream out(*opt_.replay_path);
    out << scenario::to_json(replay_).dump(2) << '\n';
  }
}

std::size_t Service::session_count() const {
  std::lock_guard lk(sessions_mutex_);
  return sessions_.size();
}

void Service::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 20) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto s = std::make_shared<Session>();
    s->fd = fd;
    std::lock_guard lk(sessions_mutex_);
    s->id = next_session_++;
    sessions_[s->id] = s;
    session_threads_.emplace_back([this, s] { session_loop(s); });
  }
}

void Service::send_to(std::uint64_t session, const std::string& msg) {
  std::lock_guard lk(sessions_mutex_);
  const auto it = sessions_.find(session);
  if (it == sessions_.end()) return;
  std::lock_guard out(it->second->out_mutex);
  it->second->outbox.emplace_back(msg, false);
}

void Service::broadcast(const std::string& msg, bool telemetry) {
  std::lock_guard lk(sessions_mutex_);
  for (auto& [id, s] : sessions_) {
    if (!s->upgraded) continue;
    std::lock_guard out(s->out_mutex);
    if (telemetry) {
      // A slow viewer loses old frames rather than stalling anyone else.
      std::size_t queued = 0;
      for (const auto& m : s->outbox) queued += m.second ? 1 : 0;
      if (queued >= kMaxQueuedTelemetry)
        for (auto it = s->outbox.begin(); it != s->outbox.end(); ++it)
          if (it->second) {
            s->outbox.erase(it);
            break;
          }
    }
    s->outbox.emplace_back(msg, telemetry);
  }
}

void Service::session_loop(std::shared_ptr<Session> s) {
  auto finish = [&] {
    ::close(s->fd);
    std::lock_guard lk(sessions_mutex_);
    if (driver_ == s->id) driver_ = 0;
    sessions_.erase(s->id);
  };

  // HTTP upgrade.
  std::string head;
  const auto deadline = Clock::now() + std::chrono::seconds(5);
  while (running_ && head.find("\r\n\r\n") == std::string::npos && head.size() < 16384 && Clock::now() < deadline) {
    pollfd p{s->fd, POLLIN, 0};
    if (::poll(&p, 1, 20) <= 0) continue;
    char buf[1024];
    const ssize_t n = ::recv(s->fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    head.append(buf, static_cast<std::size_t>(n));
  }
  const auto req = ws::parse_upgrade(head);
  try {
    if (!req) {
      send_raw(s->fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      finish();
      return;
    }
    send_raw(s->fd, ws::upgrade_response(req->key));
    send_raw(s->fd, ws::encode_frame(ws::Opcode::Text, hello_message(s->id, opt_.tick_hz, opt_.telemetry_hz)));
    std::string scene;
    {
      std::lock_guard lk(scene_mutex_);
      scene = scene_;
    }
    send_raw(s->fd, ws::encode_frame(ws::Opcode::Text, scene));
  } catch (const Error&) {
    finish();
    return;
  }
  {
    std::lock_guard lk(sessions_mutex_);
    s->upgraded = true;
  }

  ws::Decoder decoder(true);
  // Bytes that arrived together with the upgrade request.
  const auto body = head.find("\r\n\r\n") + 4;
  bool open = true;
  try {
    if (body < head.size()) decoder.feed(head.data() + body, head.size() - body);
    while (running_ && open) {
      while (auto m = decoder.next()) {
        if (m->op == ws::Opcode::Text) {
          handle_text(*s, m->payload);
        } else if (m->op == ws::Opcode::Binary) {
          send_to(s->id, error_message("MalformedMessage", "binary frames are not supported"));
        } else if (m->op == ws::Opcode::Ping) {
          send_raw(s->fd, ws::encode_frame(ws::Opcode::Pong, m->payload));
        } else if (m->op == ws::Opcode::Close) {
          send_raw(s->fd, ws::encode_frame(ws::Opcode::Close, m->payload.substr(0, 2)));
          open = false;
          break;
        }
      }
      if (!open) break;
      std::deque<std::pair<std::string, bool>> out;
      {
        std::lock_guard lk(s->out_mutex);
        out.swap(s->outbox);
      }
      for (const auto& [msg, telemetry] : out) send_raw(s->fd, ws::encode_frame(ws::Opcode::Text, msg));
      pollfd p{s->fd, POLLIN, 0};
      if (::poll(&p, 1, 2) <= 0) continue;
      char buf[65536];
      const ssize_t n = ::recv(s->fd, buf, sizeof buf, 0);
      if (n <= 0) break;
      decoder.feed(buf, static_cast<std::size_t>(n));
    }
  } catch (const MalformedMessage& e) {
    // Framing violations cannot be resynchronised; report and close.
    try {
      send_raw(s->fd, ws::encode_frame(ws::Opcode::Text, error_message("MalformedMessage", e.what())));
      send_raw(s->fd, ws::encode_frame(ws::Opcode::Close, std::string("\x03\xea", 2)));
    } catch (const Error&) {
    }
  } catch (const Error&) {
  }
  finish();
}

void Service::handle_text(Session& s, const std::string& text) {
  ClientMessage msg;
  try {
    msg = parse_client_message(text);
  } catch (const MalformedMessage& e) {
    send_to(s.id, error_message("MalformedMessage", e.what()));
    return;
  }
  if (const auto* h = std::get_if<Hello>(&msg)) {
    s.hello_ok = h->schema_version == kProtocolVersion;
    if (!s.hello_ok)
      send_to(s.id, error_message("VersionMismatch", fmt::format("server speaks schema_version {}, client sent {}",
                                                                 kProtocolVersion, h->schema_version)));
    return;
  }
  if (!s.hello_ok) {
    send_to(s.id, error_message("HandshakeRequired", "send a hello with a matching schema_version first"));
    return;
  }
  if (const auto* d = std::get_if<DriverRequest>(&msg)) {
    std::lock_guard lk(sessions_mutex_);
    std::string reply;
    if (d->acquire) {
      if (driver_ == 0 || driver_ == s.id) {
        driver_ = s.id;
        reply = driver_message(true, true);
      } else {
        reply = error_message("DriverTokenHeld", "another session holds the driver token");
      }
    } else {
      if (driver_ == s.id) driver_ = 0;
      reply = driver_message(driver_ != 0, false);
    }
    std::lock_guard out(s.out_mutex);
    s.outbox.emplace_back(reply, false);
    return;
  }
  const auto& cmd = std::get<OperatorCommand>(msg);
  {
    std::lock_guard lk(sessions_mutex_);
    if (driver_ != s.id) {
      std::lock_guard out(s.out_mutex);
      s.outbox.emplace_back(error_message("NotDriver", "commands need the driver token", cmd.client_seq), false);
      return;
    }
  }
  if (cmd.client_seq <= s.last_seq) {
    send_to(s.id, error_message("MalformedMessage",
                                fmt::format("client_seq {} is not above {}", cmd.client_seq, s.last_seq), cmd.client_seq));
    return;
  }
  s.last_seq = cmd.client_seq;
  std::lock_guard lk(inbox_mutex_);
  inbox_.push_back({s.id, cmd});
}

void Service::sim_loop() {
  const auto tick_period = std::chrono::duration<double>(1.0 / opt_.tick_hz);
  const auto telemetry_period = std::chrono::duration<double>(1.0 / opt_.telemetry_hz);
  auto next_tick = Clock::now();
  auto next_telemetry = Clock::now();
  auto rate_window_start = Clock::now();
  std::int64_t rate_window_ticks = 0;
  double tick_rate = 0.0;
  std::uint64_t seq = 0;

  while (running_) {
    std::vector<Inbound> batch;
    {
      std::lock_guard lk(inbox_mutex_);
      batch.swap(inbox_);
    }
    if (!paused_) engine_->apply_scripted();
    // Last writer wins per tick: only the final joystick per base and the
    // final solvent target of this batch reach the world.
    std::map<std::string, std::size_t> last;
    auto key_of = [&](const OperatorCommand& c) -> std::string {
      if (c.kind == CommandKind::Joystick) return "joystick:" + c.base;
      if (c.kind == CommandKind::SolventTarget) return "solvent";
      return {};
    };
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (const auto k = key_of(batch[i].cmd); !k.empty()) last[k] = i;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& [session, cmd] = batch[i];
      try {
        switch (cmd.kind) {
          case CommandKind::Joystick:
          case CommandKind::SolventTarget: {
            if (last[key_of(cmd)] != i) break;
            std::string base = cmd.base;
            if (cmd.kind == CommandKind::Joystick && base.empty()) {
              for (const auto& b : engine_->sim().world().bodies)
                if (world::is_base(b.kind)) {
                  base = b.id;
                  break;
                }
              if (base.empty()) throw InvalidCommand("the world has no base to steer");
            }
            engine_->apply_operator(to_action(cmd, base));
            break;
          }
          case CommandKind::Pause:
            paused_ = cmd.paused;
            break;
          case CommandKind::Reset: {
            auto sc = base_scenario_;
            sc.seed = cmd.seed;
            reset_engine(std::move(sc));
            break;
          }
          case CommandKind::LoadScenario: {
            auto sc = scenario::load_scenario(opt_.scenario_dir / (cmd.name + ".scn"));
            base_scenario_ = sc;
            reset_engine(std::move(sc));
            break;
          }
        }
        if (cmd.kind == CommandKind::Reset || cmd.kind == CommandKind::LoadScenario) {
          std::lock_guard lk(scene_mutex_);
          broadcast(scene_, false);
        }
        send_to(session, ack_message(cmd.client_seq, engine_->tick()));
      } catch (const Error& e) {
        const std::string what = e.what();
        const std::string code = what.substr(0, what.find(':'));
        send_to(session, error_message(code, what, cmd.client_seq));
      }
    }
    if (!paused_) {
      engine_->step();
      ++ticks_;
      ++rate_window_ticks;
    }

    const auto now = Clock::now();
    if (now - rate_window_start >= std::chrono::seconds(1)) {
      tick_rate = rate_window_ticks / std::chrono::duration<double>(now - rate_window_start).count();
      rate_window_start = now;
      rate_window_ticks = 0;
    }
    if (now >= next_telemetry) {
      bool held;
      {
        std::lock_guard lk(sessions_mutex_);
        held = driver_ != 0;
      }
      std::string frame = telemetry_message(engine_->sim(), ++seq, tick_rate, paused_, held);
      if (frame.size() < kMaxTelemetryBytes) broadcast(frame, true);
      next_telemetry += std::chrono::duration_cast<Clock::duration>(telemetry_period);
      if (now - next_telemetry > std::chrono::duration_cast<Clock::duration>(telemetry_period * 3)) next_telemetry = now;
    }
    if (opt_.speed > 0.0 && !paused_) {
      next_tick += std::chrono::duration_cast<Clock::duration>(tick_period / opt_.speed);
      // After a stall, resume pacing from now instead of bursting.
      if (now - next_tick > std::chrono::milliseconds(100)) next_tick = now;
      std::this_thread::sleep_until(next_tick);
    } else if (paused_) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      next_tick = Clock::now();
    }
  }
}

}  // namespace microforge::teleop
