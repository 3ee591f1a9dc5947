#include "microforge/websocket.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "microforge/errors.hpp"

namespace microforge::ws {

namespace {

constexpr const char* kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw Error(fmt::format("send failed: {}", std::strerror(errno)));
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string accept_key(const std::string& client_key) {
  const std::string input = client_key + kGuid;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr);
  unsigned char out[64];
  const int n = EVP_EncodeBlock(out, digest, static_cast<int>(len));
  return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

std::string encode_frame(Opcode op, const std::string& payload, std::optional<std::uint32_t> mask) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    f.push_back(static_cast<char>(mask_bit | 126));
    f.push_back(static_cast<char>((n >> 8) & 0xFF));
    f.push_back(static_cast<char>(n & 0xFF));
  } else {
    f.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  }
  if (!mask) return f + payload;
  const std::uint8_t key[4] = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                               static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
  f.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) f.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return f;
}

void Decoder::feed(const char* data, std::size_t n) {
  buffer_.append(data, n);
  parse();
}

std::optional<Message> Decoder::next() {
  if (ready_head_ >= ready_.size()) {
    ready_.clear();
    ready_head_ = 0;
    return std::nullopt;
  }
  return std::move(ready_[ready_head_++]);
}

void Decoder::parse() {
  for (;;) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(buffer_.data());
    const std::size_t avail = buffer_.size();
    if (avail < 2) return;
    const bool fin = b[0] & 0x80;
    if (b[0] & 0x70) throw MalformedMessage("reserved bits set");
    const auto op = static_cast<Opcode>(b[0] & 0x0F);
    const bool masked = b[1] & 0x80;
    if (masked != expect_masked_) throw MalformedMessage(expect_masked_ ? "unmasked client frame" : "masked server frame");
    std::uint64_t len = b[1] & 0x7F;
    std::size_t pos = 2;
    if (len == 126) {
      if (avail < 4) return;
      len = (std::uint64_t{b[2]} << 8) | b[3];
      pos = 4;
    } else if (len == 127) {
      if (avail < 10) return;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | b[2 + i];
      pos = 10;
    }
    if (len > kMaxMessageBytes) throw MalformedMessage(fmt::format("frame of {} bytes exceeds the limit", len));
    std::uint8_t key[4] = {0, 0, 0, 0};
    if (masked) {
      if (avail < pos + 4) return;
      std::memcpy(key, b + pos, 4);
      pos += 4;
    }
    if (avail < pos + len) return;
    std::string payload = buffer_.substr(pos, len);
    if (masked)
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
    buffer_.erase(0, pos + len);

    switch (op) {
      case Opcode::Close:
      case Opcode::Ping:
      case Opcode::Pong:
        if (!fin || payload.size() > 125) throw MalformedMessage("invalid control frame");
        ready_.push_back({op, std::move(payload)});
        break;
      case Opcode::Text:
      case Opcode::Binary:
        if (fragment_op_) throw MalformedMessage("new message inside a fragmented one");
        if (fin) {
          ready_.push_back({op, std::move(payload)});
        } else {
          fragment_op_ = op;
          fragments_ = std::move(payload);
        }
        break;
      case Opcode::Continuation:
        if (!fragment_op_) throw MalformedMessage("continuation without a message");
        fragments_ += payload;
        if (fragments_.size() > kMaxMessageBytes) throw MalformedMessage("message exceeds the limit");
        if (fin) {
          ready_.push_back({*fragment_op_, std::move(fragments_)});
          fragments_.clear();
          fragment_op_.reset();
        }
        break;
      default:
        throw MalformedMessage(fmt::format("unknown opcode {}", static_cast<int>(op)));
    }
  }
}

std::optional<UpgradeRequest> parse_upgrade(const std::string& head) {
  const auto line_end = head.find("\r\n");
  if (line_end == std::string::npos) return std::nullopt;
  const std::string request_line = head.substr(0, line_end);
  if (request_line.rfind("GET ", 0) != 0) return std::nullopt;
  const auto sp = request_line.find(' ', 4);
  if (sp == std::string::npos) return std::nullopt;
  UpgradeRequest req;
  req.path = request_line.substr(4, sp - 4);
  bool upgrade = false;
  std::size_t pos = line_end + 2;
  while (pos < head.size()) {
    const auto e = head.find("\r\n", pos);
    const std::string line = head.substr(pos, e == std::string::npos ? std::string::npos : e - pos);
    pos = e == std::string::npos ? head.size() : e + 2;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string name = lower(trim(line.substr(0, colon)));
    const std::string value = trim(line.substr(colon + 1));
    if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
    if (name == "sec-websocket-key") req.key = value;
  }
  if (!upgrade || req.key.empty()) return std::nullopt;
  return req;
}

std::string upgrade_response(const std::string& client_key) {
  return fmt::format(
      "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
      accept_key(client_key));
}

Client::Client(const std::string& host, int port, const std::string& path) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw Error(fmt::format("cannot resolve {}", host));
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw Error(fmt::format("cannot connect to {}:{}", host, port));
  }
  const std::string key = "bWljcm9mb3JnZS1jbGllbnQ=";
  send_all(fd_, fmt::format("GET {} HTTP/1.1\r\nHost: {}:{}\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                            "Sec-WebSocket-Key: {}\r\nSec-WebSocket-Version: 13\r\n\r\n",
                            path, host, port, key));
  std::string head;
  char c;
  while (head.size() < 8192 && head.find("\r\n\r\n") == std::string::npos) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, 5000) <= 0 || ::recv(fd_, &c, 1, 0) != 1) break;
    head.push_back(c);
  }
  if (head.rfind("HTTP/1.1 101", 0) != 0 || head.find(accept_key(key)) == std::string::npos) {
    ::close(fd_);
    fd_ = -1;
    throw Error("websocket handshake rejected");
  }
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_frame(Opcode op, const std::string& payload) {
  mask_state_ = mask_state_ * 1664525u + 1013904223u;
  send_all(fd_, encode_frame(op, payload, mask_state_));
}

void Client::send_text(const std::string& text) { send_frame(Opcode::Text, text); }

std::optional<std::string> Client::receive(int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (fd_ >= 0) {
    while (auto m = decoder_.next()) {
      if (m->op == Opcode::Text || m->op == Opcode::Binary) return std::move(m->payload);
      if (m->op == Opcode::Ping) send_frame(Opcode::Pong, m->payload);
      if (m->op == Opcode::Close) {
        ::close(fd_);
        fd_ = -1;
        return std::nullopt;
      }
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left)) <= 0) continue;
    char buf[65536];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) {
      ::close(fd_);
      fd_ = -1;
      return std::nullopt;
    }
    decoder_.feed(buf, static_cast<std::size_t>(n));
  }
  return std::nullopt;
}

void Client::close() {
  if (fd_ < 0) return;
  try {
    send_frame(Opcode::Close, std::string("\x03\xe8", 2));
  } catch (const Error&) {
  }
  ::close(fd_);
  fd_ = -1;
}

}  // namespace microforge::ws
