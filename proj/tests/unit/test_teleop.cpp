#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"

#include "helpers.hpp"
#include "microforge/errors.hpp"
#include "microforge/teleop.hpp"
#include "microforge/websocket.hpp"

using namespace microforge;
using namespace microforge::teleop;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

scenario::Scenario one_base() {
  return scenario::parse_scenario(json::parse(R"({
    "schema_version": 1, "name": "live", "seed": 4, "duration_s": 0,
    "world": {"water_fraction": 0.4, "bodies": [
      {"id": "base", "kind": "Type2Base", "pose": {"x": 0, "y": 0}}]},
    "script": []})"));
}

// Next message of a given type, skipping others (telemetry, mostly).
std::optional<json> next_of(ws::Client& c, const std::string& type, int timeout_ms = 3000) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    auto m = c.receive(static_cast<int>(std::max<long>(1, left.count())));
    if (!m) continue;
    auto j = json::parse(*m);
    if (j["type"] == type) return j;
  }
  return std::nullopt;
}

void handshake(ws::Client& c) {
  REQUIRE(next_of(c, "hello"));
  REQUIRE(next_of(c, "scene"));
  c.send_text(R"({"type": "hello", "schema_version": 1})");
}

ServiceOptions test_options(double speed = 1.0) {
  ServiceOptions o;
  o.port = 0;
  o.speed = speed;
  return o;
}

}  // namespace

TEST_CASE("client message parsing") {
  auto m = parse_client_message(R"({"type":"command","client_seq":3,"kind":"joystick","grad_x":1,"grad_y":0,"rotate_rate":0})");
  const auto& c = std::get<OperatorCommand>(m);
  CHECK(c.kind == CommandKind::Joystick);
  CHECK(c.client_seq == 3);
  CHECK(std::get<OperatorCommand>(parse_client_message(to_json_text(c))).grad_x == 1.0);
  CHECK(std::get<Hello>(parse_client_message(R"({"type":"hello","schema_version":1})")).schema_version == 1);
  CHECK(std::get<DriverRequest>(parse_client_message(R"({"type":"driver","action":"release"})")).acquire == false);

  for (const char* bad : {"not json", "[]", R"({"type":"dance"})", R"({"type":"command","client_seq":1,"kind":"warp"})",
                          R"({"type":"command","client_seq":1,"kind":"joystick","grad_x":"a","grad_y":0,"rotate_rate":0})",
                          R"({"type":"command","client_seq":1,"kind":"solvent_target","target":2})",
                          R"({"type":"command","client_seq":1,"kind":"load_scenario","name":"../etc"})"})
    CHECK_THROWS_AS(parse_client_message(bad), MalformedMessage);
}

TEST_CASE("telemetry frames are compact and complete") {
  sim::Simulation s(scenario::build_world(one_base(), Config{}));
  const auto j = json::parse(telemetry_message(s, 7, 1000.0, false, true));
  CHECK(j["type"] == "telemetry");
  CHECK(j["seq"] == 7);
  CHECK(j["bodies"].size() == 1);
  CHECK(j["bodies"][0]["id"] == "base");
  CHECK(j["water_fraction"] == 0.4);
  CHECK(j["driver_held"] == true);
  CHECK(telemetry_message(s, 7, 1000.0, false, true).size() < kMaxTelemetryBytes);
}

TEST_CASE("a second service on the same port fails with PortInUse") {
  Service a(one_base(), Config{}, test_options());
  auto o = test_options();
  o.port = a.port();
  CHECK_THROWS_AS(Service(one_base(), Config{}, o), PortInUse);
}

TEST_CASE("idle telemetry streams at about 30 Hz") {
  Service svc(one_base(), Config{}, test_options());
  svc.start();
  ws::Client c("127.0.0.1", svc.port());
  handshake(c);
  // Rate from sequence numbers against wall time, so frames queued before
  // the window do not count.
  std::optional<std::pair<std::int64_t, std::chrono::steady_clock::time_point>> first, last;
  double last_time = -1.0;
  const auto end = std::chrono::steady_clock::now() + 2s;
  while (std::chrono::steady_clock::now() < end) {
    auto m = c.receive(50);
    if (!m) continue;
    auto j = json::parse(*m);
    if (j["type"] != "telemetry") continue;
    const double t = j["time"];
    CHECK(t >= last_time);
    last_time = t;
    const auto now = std::chrono::steady_clock::now();
    if (!first) first = {j["seq"].get<std::int64_t>(), now};
    last = {j["seq"].get<std::int64_t>(), now};
  }
  REQUIRE(first);
  const double span = std::chrono::duration<double>(last->second - first->second).count();
  const double hz = (last->first - first->first) / span;
  CHECK(hz >= 28.0);
  CHECK(hz <= 32.0);
  c.close();
  svc.stop();
}

TEST_CASE("handshake, driver token and malformed messages") {
  Service svc(one_base(), Config{}, test_options());
  svc.start();
  ws::Client a("127.0.0.1", svc.port()), b("127.0.0.1", svc.port()), v("127.0.0.1", svc.port());

  // Commands before a hello are refused.
  REQUIRE(next_of(a, "hello"));
  a.send_text(R"({"type": "driver", "action": "acquire"})");
  auto e = next_of(a, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "HandshakeRequired");
  a.send_text(R"({"type": "hello", "schema_version": 1})");

  // A mismatched version gets an error and no commands through.
  REQUIRE(next_of(v, "hello"));
  v.send_text(R"({"type": "hello", "schema_version": 99})");
  e = next_of(v, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "VersionMismatch");
  v.send_text(R"({"type": "driver", "action": "acquire"})");
  e = next_of(v, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "HandshakeRequired");

  handshake(b);
  a.send_text(R"({"type": "driver", "action": "acquire"})");
  auto d = next_of(a, "driver");
  REQUIRE(d);
  CHECK((*d)["you"] == true);
  b.send_text(R"({"type": "driver", "action": "acquire"})");
  e = next_of(b, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "DriverTokenHeld");
  b.send_text(R"({"type":"command","client_seq":1,"kind":"solvent_target","target":1})");
  e = next_of(b, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "NotDriver");

  // Malformed text keeps the session usable.
  a.send_text("{nope");
  e = next_of(a, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "MalformedMessage");
  a.send_text(R"({"type":"command","client_seq":1,"kind":"solvent_target","target":1})");
  auto ack = next_of(a, "ack");
  REQUIRE(ack);
  CHECK((*ack)["client_seq"] == 1);
  a.send_text(R"({"type":"command","client_seq":1,"kind":"solvent_target","target":0.4})");
  e = next_of(a, "error");
  REQUIRE(e);
  CHECK((*e)["code"] == "MalformedMessage");

  // Releasing hands the token over.
  a.send_text(R"({"type": "driver", "action": "release"})");
  REQUIRE(next_of(a, "driver"));
  b.send_text(R"({"type": "driver", "action": "acquire"})");
  d = next_of(b, "driver");
  REQUIRE(d);
  CHECK((*d)["you"] == true);

  // The telemetry reflects the solvent command.
  bool saw = false;
  for (int i = 0; i < 30 && !saw; ++i) {
    auto t = next_of(v, "telemetry");
    if (t && (*t)["water_fraction_target"] == 1.0) saw = true;
  }
  CHECK(saw);
  a.close();
  b.close();
  v.close();
  svc.stop();
}

TEST_CASE("a served joystick session replays headlessly bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / "mf_serve";
  std::filesystem::create_directories(dir);
  auto opt = test_options(0.0);
  opt.trace_path = dir / "served.csv";
  opt.replay_path = dir / "replay.scn";
  Service svc(one_base(), Config{}, opt);
  svc.start();
  {
    ws::Client c("127.0.0.1", svc.port());
    handshake(c);
    c.send_text(R"({"type": "driver", "action": "acquire"})");
    REQUIRE(next_of(c, "driver"));
    c.send_text(R"({"type":"command","client_seq":1,"kind":"joystick","grad_x":1,"grad_y":0,"rotate_rate":0})");
    REQUIRE(next_of(c, "ack"));
    std::this_thread::sleep_for(30ms);
    c.send_text(R"({"type":"command","client_seq":2,"kind":"joystick","grad_x":5,"grad_y":0.5,"rotate_rate":0})");
    REQUIRE(next_of(c, "ack"));
    std::this_thread::sleep_for(30ms);
    c.send_text(R"({"type":"command","client_seq":3,"kind":"solvent_target","target":1})");
    REQUIRE(next_of(c, "ack"));
    c.close();
  }
  svc.stop();
  const auto replay = scenario::load_scenario(dir / "replay.scn");
  CHECK(replay.script.size() == 3);
  // Clamped before reaching the world: 5.02 T/m is above the coil limit.
  CHECK(replay.script[1].doc["grad_x"] == 5.0);

  std::ostringstream headless;
  scenario::ScenarioEngine eng(replay, Config{});
  eng.set_trace(&headless);
  eng.run_to_end();
  std::ifstream served_in(dir / "served.csv");
  std::stringstream served;
  served << served_in.rdbuf();
  CHECK(headless.str() == served.str());
  CHECK(eng.tick() == svc.ticks());
}

TEST_CASE("joystick displacement over 2 s equals the headless result") {
  Service svc(one_base(), Config{}, test_options(0.0));
  svc.start();
  {
    ws::Client c("127.0.0.1", svc.port());
    handshake(c);
    c.send_text(R"({"type": "driver", "action": "acquire"})");
    REQUIRE(next_of(c, "driver"));
    c.send_text(R"({"type":"command","client_seq":1,"kind":"joystick","grad_x":1,"grad_y":0,"rotate_rate":0})");
    REQUIRE(next_of(c, "ack"));
    c.close();
  }
  svc.stop();
  auto replay = svc.replay_log();
  REQUIRE(replay.script.size() == 1);
  // Cut the replay to 2 s after the command and compare with a plain tick loop.
  replay.duration_s = replay.script[0].time_s + 2.0;
  scenario::ScenarioEngine eng(replay, Config{});
  eng.run_to_end();

  auto w = scenario::build_world(one_base(), Config{});
  for (std::int64_t i = 0; i < std::llround(replay.script[0].time_s / 1e-3); ++i) w = world::tick(w, {}, 1e-3);
  for (int i = 0; i < 2000; ++i) w = world::tick(w, {{"base", {1.0, 0.0}}}, 1e-3);
  CHECK(eng.sim().world().body("base").pose.x == w.body("base").pose.x);
  CHECK(w.body("base").pose.x > 0.0);
}
