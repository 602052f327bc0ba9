#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usgrip/error.hpp"

namespace usgrip {

struct SockAddr {
  sockaddr_in sa{};

  SockAddr() {
    sa.sin_family = AF_INET;
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  }

  // "ip:port", e.g. "127.0.0.1:9000".
  static SockAddr parse(const std::string& text) {
    const size_t colon = text.rfind(':');
    require(colon != std::string::npos && colon > 0 && colon + 1 < text.size(), Errc::bad_config,
            "address must be ip:port, got '" + text + "'");
    const std::string host = text.substr(0, colon);
    const std::string port_s = text.substr(colon + 1);
    int port = 0;
    for (char ch : port_s) {
      require(ch >= '0' && ch <= '9', Errc::bad_config, "bad port in '" + text + "'");
      port = port * 10 + (ch - '0');
      require(port <= 65535, Errc::bad_config, "port out of range in '" + text + "'");
    }
    SockAddr a;
    a.sa.sin_port = htons(static_cast<uint16_t>(port));
    require(inet_pton(AF_INET, host.c_str(), &a.sa.sin_addr) == 1, Errc::bad_config,
            "bad IPv4 address '" + host + "'");
    return a;
  }

  uint16_t port() const { return ntohs(sa.sin_port); }

  std::string str() const {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
    return std::string(buf) + ":" + std::to_string(port());
  }
};

class UdpSocket {
 public:
  UdpSocket() {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    require(fd_ >= 0, Errc::io, "cannot create UDP socket");
  }
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  void bind(const SockAddr& addr) {
    require(::bind(fd_, reinterpret_cast<const sockaddr*>(&addr.sa), sizeof addr.sa) == 0,
            Errc::bind_failure, "cannot bind " + addr.str() + ": " + std::strerror(errno));
  }

  uint16_t local_port() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    require(::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) == 0, Errc::io,
            "getsockname failed");
    return ntohs(sa.sin_port);
  }

  void send_to(std::span<const uint8_t> data, const SockAddr& to) {
    const ssize_t n = ::sendto(fd_, data.data(), data.size(), 0,
                               reinterpret_cast<const sockaddr*>(&to.sa), sizeof to.sa);
    require(n == static_cast<ssize_t>(data.size()), Errc::io,
            "sendto failed: " + std::string(std::strerror(errno)));
  }

  // Blocks up to timeout_ms; empty result on timeout.
  std::optional<std::vector<uint8_t>> recv_from(SockAddr* from, int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    require(rc >= 0, Errc::io, "poll failed");
    if (rc == 0) return std::nullopt;
    std::vector<uint8_t> buf(65536);
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    const ssize_t n =
        ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&sa), &len);
    require(n >= 0, Errc::io, "recvfrom failed");
    buf.resize(static_cast<size_t>(n));
    if (from) from->sa = sa;
    return buf;
  }

 private:
  int fd_ = -1;
};

inline int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace usgrip
