#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "microforge/scenario.hpp"

namespace microforge::teleop {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxTelemetryBytes = 64 * 1024;

// ---- client -> server messages ----

struct Hello {
  int schema_version = 0;
};

struct DriverRequest {
  bool acquire = true;
};

enum class CommandKind { Joystick, SolventTarget, LoadScenario, Pause, Reset };
const char* to_string(CommandKind k);

struct OperatorCommand {
  CommandKind kind = CommandKind::Joystick;
  std::int64_t client_seq = 0;
  std::string base;  // joystick; empty selects the first base
  double grad_x = 0.0, grad_y = 0.0, rotate_rate = 0.0;
  double target = 1.0;      // solvent
  std::string name;         // scenario to load
  bool paused = true;       // pause
  std::uint64_t seed = 0;   // reset
};

using ClientMessage = std::variant<Hello, DriverRequest, OperatorCommand>;

// Throws MalformedMessage on invalid JSON, unknown types or bad fields.
ClientMessage parse_client_message(const std::string& text);
std::string to_json_text(const OperatorCommand& cmd);

// ---- server -> client messages ----

std::string hello_message(std::uint64_t session_id, double tick_hz, double telemetry_hz);
std::string scene_message(const world::WorldState& world, const std::string& scenario_name);
std::string telemetry_message(const sim::Simulation& sim, std::uint64_t seq, double tick_rate_actual, bool paused,
                              bool driver_held);
std::string error_message(const std::string& code, const std::string& message,
                          std::optional<std::int64_t> client_seq = std::nullopt);
std::string ack_message(std::int64_t client_seq, std::int64_t tick);
std::string driver_message(bool held, bool you);

// Scenario action equivalent of a joystick or solvent command (what the
// replay log records).
nlohmann::json to_action(const OperatorCommand& cmd, const std::string& base);

struct ServiceOptions {
  std::string bind_address = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  double tick_hz = 1000.0;
  double telemetry_hz = 30.0;
  // Wall-clock pacing: 1 is real time, 0 runs unpaced.
  double speed = 1.0;
  std::filesystem::path scenario_dir = "scenarios";
  std::optional<std::filesystem::path> replay_path;
  std::optional<std::filesystem::path> trace_path;
};

// Live simulation behind a WebSocket endpoint. The simulation thread owns
// the engine; sessions talk to it only through the command inbox and their
// telemetry outboxes.
class Service {
 public:
  // Binds immediately (PortInUse when taken); threads start with start().
  Service(scenario::Scenario initial, Config cfg, ServiceOptions opt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  int port() const { return port_; }
  void start();
  // Stops all threads and writes the replay log when configured.
  void stop();

  // Available after stop().
  const scenario::Scenario& replay_log() const { return replay_; }
  std::int64_t ticks() const { return ticks_.load(); }
  std::size_t session_count() const;

 private:
  struct Session;
  struct Inbound {
    std::uint64_t session = 0;
    OperatorCommand cmd;
  };

  void accept_loop();
  void session_loop(std::shared_ptr<Session> s);
  void handle_text(Session& s, const std::string& text);
  void sim_loop();
  void reset_engine(scenario::Scenario sc);
  void broadcast(const std::string& msg, bool telemetry);
  void send_to(std::uint64_t session, const std::string& msg);

  scenario::Scenario base_scenario_;
  Config cfg_;
  ServiceOptions opt_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::int64_t> ticks_{0};

  std::thread accept_thread_;
  std::thread sim_thread_;

  mutable std::mutex sessions_mutex_;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> session_threads_;
  std::uint64_t next_session_ = 1;
  std::uint64_t driver_ = 0;  // session holding the token, 0 = free

  std::mutex inbox_mutex_;
  std::vector<Inbound> inbox_;

  std::mutex scene_mutex_;
  std::string scene_;

  // Owned by the simulation thread.
  std::unique_ptr<scenario::ScenarioEngine> engine_;
  std::unique_ptr<std::ofstream> trace_file_;
  bool paused_ = false;
  scenario::Scenario replay_;
};

}  // namespace microforge::teleop
