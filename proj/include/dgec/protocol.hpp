#pragma once

// DNZ1 denoiser protocol, little-endian frames over a byte stream.
//
// Request (16-byte header):
//   "DNZ1" | op u8 (0x01 denoise) | H u32 | W u32 | K u8 | L u16
//   | L x f64 gamma | (1 + K) x H*W x (f32 re, f32 im)    u first, then N_1..N_K
// Response:
//   "DNZ1" | status u8 (0 ok, 1 shape error, 2 internal) | on ok: H*W x (f32 re, f32 im)
//
// Frame lengths follow from the header fields; there is no separate length
// prefix. A server that receives a bad magic answers status 1 and keeps the
// connection; it cannot resynchronize the stream beyond that frame header.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dgec/core.hpp"
#include "dgec/denoisers.hpp"
#include "dgec/io.hpp"

namespace dgec {

inline constexpr std::uint8_t kDnzOpDenoise = 0x01;
inline constexpr std::size_t kDnzHeaderSize = 16;

enum class DnzStatus : std::uint8_t { kOk = 0, kShapeError = 1, kInternal = 2 };

/// Framing violation: bad magic, truncated frame, unknown status.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The server rejected the request shape (status 1).
class RemoteShapeError : public Error {
 public:
  using Error::Error;
};

/// The server failed internally (status 2).
class RemoteInternalError : public Error {
 public:
  using Error::Error;
};

/// No complete response within the deadline.
class TimeoutError : public Error {
 public:
  using Error::Error;
};

/// Connection could not be established or was lost.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct DenoiseRequest {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<double> gammas;
  CVector u;
  std::vector<CVector> noise;  // K channels
};

struct DnzHeader {
  std::array<char, 4> magic{};
  std::uint8_t op = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint8_t k = 0;
  std::uint16_t l = 0;

  bool magic_ok() const { return wire::magic_is(magic, "DNZ1"); }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t body_size() const { return 8 * static_cast<std::size_t>(l) + (1 + static_cast<std::size_t>(k)) * pixels() * 8; }
};

inline std::vector<std::uint8_t> encode_request(const DenoiseRequest& req) {
  const std::size_t n = static_cast<std::size_t>(req.height) * req.width;
  if (static_cast<std::size_t>(req.u.size()) != n) throw ShapeError("DNZ1 request: u does not match H x W");
  if (req.noise.size() > 255) throw ArgumentError("DNZ1 request: at most 255 noise channels");
  if (req.gammas.size() > 65535) throw ArgumentError("DNZ1 request: at most 65535 precisions");
  std::vector<std::uint8_t> buf;
  buf.reserve(kDnzHeaderSize + 8 * req.gammas.size() + (1 + req.noise.size()) * n * 8);
  wire::put_magic(buf, "DNZ1");
  wire::put_u8(buf, kDnzOpDenoise);
  wire::put_u32(buf, req.height);
  wire::put_u32(buf, req.width);
  wire::put_u8(buf, static_cast<std::uint8_t>(req.noise.size()));
  wire::put_u16(buf, static_cast<std::uint16_t>(req.gammas.size()));
  for (double g : req.gammas) wire::put_f64(buf, g);
  wire::put_image_payload(buf, req.u);
  for (const CVector& ch : req.noise) {
    if (static_cast<std::size_t>(ch.size()) != n) throw ShapeError("DNZ1 request: noise channel does not match H x W");
    wire::put_image_payload(buf, ch);
  }
  return buf;
}

inline DnzHeader decode_header(const std::uint8_t* data, std::size_t size) {
  wire::Reader rd(data, size);
  DnzHeader h;
  h.magic = rd.magic();
  h.op = rd.u8();
  h.height = rd.u32();
  h.width = rd.u32();
  h.k = rd.u8();
  h.l = rd.u16();
  return h;
}

/// Parses the body that follows a validated header.
inline DenoiseRequest decode_request_body(const DnzHeader& h, const std::uint8_t* data, std::size_t size) {
  wire::Reader rd(data, size);
  if (size != h.body_size()) throw ProtocolError("DNZ1 request body has the wrong length");
  DenoiseRequest req;
  req.height = h.height;
  req.width = h.width;
  for (std::uint16_t i = 0; i < h.l; ++i) req.gammas.push_back(rd.f64());
  req.u = wire::get_image_payload(rd, h.pixels());
  for (std::uint8_t k = 0; k < h.k; ++k) req.noise.push_back(wire::get_image_payload(rd, h.pixels()));
  return req;
}

inline DenoiseRequest decode_request(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kDnzHeaderSize) throw ProtocolError("DNZ1 request shorter than its header");
  const DnzHeader h = decode_header(bytes.data(), kDnzHeaderSize);
  if (!h.magic_ok()) throw ProtocolError("DNZ1 request has bad magic");
  if (h.op != kDnzOpDenoise) throw ProtocolError("DNZ1 request has unknown op " + std::to_string(h.op));
  return decode_request_body(h, bytes.data() + kDnzHeaderSize, bytes.size() - kDnzHeaderSize);
}

inline std::vector<std::uint8_t> encode_response(DnzStatus status, const CVector* image = nullptr) {
  std::vector<std::uint8_t> buf;
  wire::put_magic(buf, "DNZ1");
  wire::put_u8(buf, static_cast<std::uint8_t>(status));
  if (status == DnzStatus::kOk) {
    if (image == nullptr) throw ArgumentError("DNZ1 ok response needs an image");
    wire::put_image_payload(buf, *image);
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Byte streams

namespace detail {

/// Reads exactly n bytes. timeout_ms < 0 waits forever. Returns false on EOF
/// before the first byte; throws on EOF mid-read.
inline bool read_exact(int fd, std::uint8_t* dst, std::size_t n, int timeout_ms) {
  std::size_t got = 0;
  while (got < n) {
    if (timeout_ms >= 0) {
      pollfd pfd{fd, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc == 0) throw TimeoutError("denoiser did not respond within " + std::to_string(timeout_ms) + " ms");
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
    }
    const ssize_t r = ::read(fd, dst + got, n - got);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("read failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0) return false;
      throw ProtocolError("stream closed mid-frame after " + std::to_string(got) + " of " + std::to_string(n) + " bytes");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline void write_all(int fd, const std::uint8_t* src, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t w = ::write(fd, src + sent, n - sent);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(w);
  }
}

inline void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Server side

/// Computes the denoised image for a request. Throw ShapeError for requests
/// the server cannot accept; anything else maps to status 2.
using DnzHandler = std::function<CVector(const DenoiseRequest&)>;

struct ServeOptions {
  std::size_t max_pixels = std::size_t{1} << 24;
  std::atomic<std::size_t>* answered = nullptr;  // bumped as each reply is sent, if set
};

/// Answers frames on (in_fd, out_fd) until EOF. Returns the number of frames answered.
inline std::size_t serve_dnz1(int in_fd, int out_fd, const DnzHandler& handler, const ServeOptions& opts = {}) {
  detail::ignore_sigpipe();
  std::size_t answered = 0;
  for (;;) {
    std::uint8_t head[kDnzHeaderSize];
    if (!detail::read_exact(in_fd, head, kDnzHeaderSize, -1)) return answered;
    const DnzHeader h = decode_header(head, kDnzHeaderSize);
    std::vector<std::uint8_t> reply;
    if (!h.magic_ok() || h.op != kDnzOpDenoise) {
      reply = encode_response(DnzStatus::kShapeError);
    } else if (h.pixels() == 0 || h.pixels() > opts.max_pixels) {
      // Drain what the header announces when it is plausible; otherwise leave it.
      if (h.pixels() <= opts.max_pixels) {
        std::vector<std::uint8_t> sink(h.body_size());
        detail::read_exact(in_fd, sink.data(), sink.size(), -1);
      }
      reply = encode_response(DnzStatus::kShapeError);
    } else {
      std::vector<std::uint8_t> body(h.body_size());
      if (!body.empty() && !detail::read_exact(in_fd, body.data(), body.size(), -1)) return answered;
      try {
        const DenoiseRequest req = decode_request_body(h, body.data(), body.size());
        const CVector out = handler(req);
        if (static_cast<std::size_t>(out.size()) != h.pixels()) throw ShapeError("handler output size");
        if (!out.allFinite()) throw NumericalError("handler output is not finite");
        reply = encode_response(DnzStatus::kOk, &out);
      } catch (const ShapeError&) {
        reply = encode_response(DnzStatus::kShapeError);
      } catch (const std::exception&) {
        reply = encode_response(DnzStatus::kInternal);
      }
    }
    if (opts.answered) ++*opts.answered;
    detail::write_all(out_fd, reply.data(), reply.size());
    ++answered;
  }
}

/// Serves DNZ1 on a TCP port, one thread per connection, until stop().
class DnzTcpServer {
 public:
  /// port 0 picks a free port; see port().
  DnzTcpServer(DnzHandler handler, std::uint16_t port = 0, const std::string& bind_address = "127.0.0.1",
               ServeOptions opts = {})
      : handler_(std::move(handler)), opts_(opts) {
    opts_.answered = &answered_;
    detail::ignore_sigpipe();
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
      ::close(listen_fd_);
      throw ArgumentError("bad IPv4 bind address '" + bind_address + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
      const std::string why = std::strerror(errno);
      ::close(listen_fd_);
      throw TransportError("cannot listen on " + bind_address + ":" + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~DnzTcpServer() { stop(); }
  DnzTcpServer(const DnzTcpServer&) = delete;
  DnzTcpServer& operator=(const DnzTcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }
  std::size_t frames_answered() const { return answered_.load(); }

  void stop() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (stopped_) return;
      stopped_ = true;
      ::shutdown(listen_fd_, SHUT_RDWR);
      for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (auto& t : workers_) t.join();
    ::close(listen_fd_);
  }

 private:
  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      std::lock_guard<std::mutex> lock(mutex_);
      if (fd < 0) {
        if (stopped_) return;
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      if (stopped_) {
        ::close(fd);
        return;
      }
      connections_.push_back(fd);
      workers_.emplace_back([this, fd] {
        try {
          serve_dnz1(fd, fd, handler_, opts_);
        } catch (const std::exception&) {
          // A broken connection ends only that connection.
        }
        std::lock_guard<std::mutex> l(mutex_);
        connections_.erase(std::find(connections_.begin(), connections_.end(), fd));
        ::close(fd);
      });
    }
  }

  DnzHandler handler_;
  ServeOptions opts_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  std::vector<int> connections_;
  std::mutex mutex_;
  bool stopped_ = false;
  std::atomic<std::size_t> answered_{0};
};

// ---------------------------------------------------------------------------
// Client side

struct Endpoint {
  enum class Kind { kTcp, kStdio } kind = Kind::kTcp;
  std::string host;
  std::string port;
  std::string command;

  /// "HOST:PORT" or "stdio:CMD".
  static Endpoint parse(const std::string& spec) {
    Endpoint e;
    if (spec.rfind("stdio:", 0) == 0) {
      e.kind = Kind::kStdio;
      e.command = spec.substr(6);
      if (e.command.empty()) throw ArgumentError("endpoint 'stdio:' needs a command");
      return e;
    }
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
      throw ArgumentError("endpoint '" + spec + "' is neither HOST:PORT nor stdio:CMD");
    }
    e.host = spec.substr(0, colon);
    e.port = spec.substr(colon + 1);
    return e;
  }

  std::string str() const { return kind == Kind::kStdio ? "stdio:" + command : host + ":" + port; }
};

/// One connection to a denoiser server. Requests on one client are serialized.
class DenoiserClient {
 public:
  explicit DenoiserClient(const Endpoint& ep, int timeout_ms = 30000) : endpoint_(ep), timeout_ms_(timeout_ms) {
    detail::ignore_sigpipe();
    if (ep.kind == Endpoint::Kind::kTcp) {
      connect_tcp();
    } else {
      spawn();
    }
  }

  ~DenoiserClient() { close_all(); }
  DenoiserClient(const DenoiserClient&) = delete;
  DenoiserClient& operator=(const DenoiserClient&) = delete;

  const Endpoint& endpoint() const { return endpoint_; }

  /// Sends a raw frame and returns the raw response (header plus payload for
  /// `expected_pixels` pixels on status 0).
  std::vector<std::uint8_t> roundtrip(const std::vector<std::uint8_t>& frame, std::size_t expected_pixels) {
    std::lock_guard<std::mutex> lock(mutex_);
    detail::write_all(out_fd_, frame.data(), frame.size());
    std::vector<std::uint8_t> resp(5);
    if (!detail::read_exact(in_fd_, resp.data(), 5, timeout_ms_)) throw TransportError("denoiser closed the connection");
    if (std::memcmp(resp.data(), "DNZ1", 4) != 0) throw ProtocolError("response has bad magic");
    if (resp[4] == static_cast<std::uint8_t>(DnzStatus::kOk)) {
      resp.resize(5 + expected_pixels * 8);
      if (expected_pixels > 0 && !detail::read_exact(in_fd_, resp.data() + 5, expected_pixels * 8, timeout_ms_)) {
        throw ProtocolError("response payload missing");
      }
    }
    return resp;
  }

  CVector denoise(const DenoiseRequest& req) {
    const std::size_t n = static_cast<std::size_t>(req.height) * req.width;
    const std::vector<std::uint8_t> resp = roundtrip(encode_request(req), n);
    switch (resp[4]) {
      case 0: {
        wire::Reader rd(resp.data() + 5, resp.size() - 5);
        return wire::get_image_payload(rd, n);
      }
      case 1: throw RemoteShapeError("denoiser at " + endpoint_.str() + " rejected a " + std::to_string(req.height) +
                                     "x" + std::to_string(req.width) + " request");
      case 2: throw RemoteInternalError("denoiser at " + endpoint_.str() + " reported an internal failure");
      default: throw ProtocolError("response has unknown status " + std::to_string(resp[4]));
    }
  }

 private:
  void connect_tcp() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const int rc = ::getaddrinfo(endpoint_.host.c_str(), endpoint_.port.c_str(), &hints, &res);
    if (rc != 0) throw TransportError("cannot resolve " + endpoint_.str() + ": " + ::gai_strerror(rc));
    int fd = -1;
    for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
      fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw TransportError("cannot connect to " + endpoint_.str());
    in_fd_ = fd;
    out_fd_ = fd;
  }

  void spawn() {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw TransportError("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError("fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", endpoint_.command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    child_ = pid;
    out_fd_ = to_child[1];
    in_fd_ = from_child[0];
  }

  void close_all() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0 && out_fd_ != in_fd_) ::close(out_fd_);
    in_fd_ = out_fd_ = -1;
    if (child_ > 0) {
      int status = 0;
      ::waitpid(child_, &status, 0);
      child_ = -1;
    }
  }

  Endpoint endpoint_;
  int timeout_ms_;
  int in_fd_ = -1;
  int out_fd_ = -1;
  pid_t child_ = -1;
  std::mutex mutex_;
};

/// Sends (u, N_1..N_K, gamma2) with K fresh correlated-noise channels and
/// returns the server's estimate.
inline ComplexImage external_denoise(const ComplexImage& u, const PrecisionVector& gamma2, int K,
                                     DenoiserClient& client, std::uint64_t seed) {
  if (K < 1 || K > 255) throw ArgumentError("external_denoise: K must lie in [1, 255]");
  if (gamma2.layout.height() != u.height || gamma2.layout.width() != u.width) {
    throw ShapeError("external_denoise: precision layout does not match image");
  }
  require_finite(u.data, "external_denoise");
  DenoiseRequest req;
  req.height = static_cast<std::uint32_t>(u.height);
  req.width = static_cast<std::uint32_t>(u.width);
  req.gammas.assign(gamma2.gammas.data(), gamma2.gammas.data() + gamma2.gammas.size());
  req.u = u.data;
  for (int k = 0; k < K; ++k) {
    req.noise.push_back(sample_correlated_noise(gamma2, derive_seed(seed, {static_cast<std::uint64_t>(k)})).data);
  }
  return ComplexImage(u.height, u.width, client.denoise(req));
}

inline PixelDenoiser external_pixel_denoiser(std::shared_ptr<DenoiserClient> client, int K) {
  return [client = std::move(client), K](const ComplexImage& u, const PrecisionVector& gamma, std::uint64_t seed) {
    return external_denoise(u, gamma, K, *client, seed);
  };
}

}  // namespace dgec
