#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace microforge::ws {

// Minimal RFC 6455 support: text/binary messages, fragmentation, ping/pong
// and close. No extensions, no subprotocols.

enum class Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

inline constexpr std::size_t kMaxMessageBytes = 1 << 20;

// Sec-WebSocket-Accept value for a client key.
std::string accept_key(const std::string& client_key);

// Encodes one complete frame. Clients must pass a mask key.
std::string encode_frame(Opcode op, const std::string& payload, std::optional<std::uint32_t> mask = std::nullopt);

struct Message {
  Opcode op = Opcode::Text;  // Text, Binary, Close, Ping or Pong
  std::string payload;
};

// Incremental decoder. Feed raw bytes, then pop complete messages.
// Fragmented data frames are reassembled; control frames pass through
// immediately. Protocol violations throw MalformedMessage.
class Decoder {
 public:
  explicit Decoder(bool expect_masked) : expect_masked_(expect_masked) {}
  void feed(const char* data, std::size_t n);
  std::optional<Message> next();

 private:
  bool expect_masked_;
  std::string buffer_;
  std::string fragments_;
  std::optional<Opcode> fragment_op_;
  std::vector<Message> ready_;
  std::size_t ready_head_ = 0;
  void parse();
};

// Parsed HTTP upgrade request (only what the handshake needs).
struct UpgradeRequest {
  std::string path;
  std::string key;
};
// Returns nullopt when `head` is not a valid WebSocket upgrade.
std::optional<UpgradeRequest> parse_upgrade(const std::string& head);
std::string upgrade_response(const std::string& client_key);

// Blocking client over a TCP socket, used by tests and tooling.
class Client {
 public:
  Client(const std::string& host, int port, const std::string& path = "/");
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_text(const std::string& text);
  // Next text message, answering pings on the way. nullopt on timeout or
  // when the server closed the connection.
  std::optional<std::string> receive(int timeout_ms);
  void close();
  bool open() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
  Decoder decoder_{false};
  std::uint32_t mask_state_ = 0x9e3779b9u;
  void send_frame(Opcode op, const std::string& payload);
};

}  // namespace microforge::ws
