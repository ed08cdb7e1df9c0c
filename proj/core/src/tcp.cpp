#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sodium.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "cyberlogic/error.hpp"
#include "cyberlogic/node.hpp"

namespace cyberlogic {

namespace {

// Base64 expands 4/3; nonce and MAC add a constant.
constexpr std::size_t kMaxLine = (kMaxFrame + 64) / 3 * 4 + 16;

struct Channel {
  unsigned char key[crypto_box_BEFORENMBYTES];
};

Channel make_channel(const KeyPair& me, ByteView peer_ed_pk) {
  crypto_init();
  unsigned char my_curve_sk[crypto_box_SECRETKEYBYTES];
  unsigned char peer_curve_pk[crypto_box_PUBLICKEYBYTES];
  if (peer_ed_pk.size() != crypto_sign_PUBLICKEYBYTES ||
      crypto_sign_ed25519_pk_to_curve25519(peer_curve_pk, peer_ed_pk.data()) != 0)
    throw Error(ErrorKind::Crypto, "peer key cannot be converted for the channel");
  if (crypto_sign_ed25519_sk_to_curve25519(my_curve_sk, me.secret_key.data()) != 0)
    throw Error(ErrorKind::Crypto, "own key cannot be converted for the channel");
  Channel c;
  if (crypto_box_beforenm(c.key, peer_curve_pk, my_curve_sk) != 0)
    throw Error(ErrorKind::Crypto, "channel key agreement failed");
  sodium_memzero(my_curve_sk, sizeof my_curve_sk);
  return c;
}

std::string seal_frame(const Channel& c, const std::string& plain) {
  Bytes out(crypto_box_NONCEBYTES + crypto_box_MACBYTES + plain.size());
  randombytes_buf(out.data(), crypto_box_NONCEBYTES);
  crypto_box_easy_afternm(out.data() + crypto_box_NONCEBYTES,
                          reinterpret_cast<const unsigned char*>(plain.data()), plain.size(), out.data(),
                          c.key);
  return to_base64(out);
}

std::string open_frame(const Channel& c, const std::string& line) {
  Bytes in = from_base64(line);
  if (in.size() < crypto_box_NONCEBYTES + crypto_box_MACBYTES)
    throw Error(ErrorKind::Decode, "short encrypted frame");
  std::string plain(in.size() - crypto_box_NONCEBYTES - crypto_box_MACBYTES, '\0');
  if (crypto_box_open_easy_afternm(reinterpret_cast<unsigned char*>(plain.data()),
                                   in.data() + crypto_box_NONCEBYTES, in.size() - crypto_box_NONCEBYTES,
                                   in.data(), c.key) != 0)
    throw Error(ErrorKind::Crypto, "frame authentication failed");
  return plain;
}

using Clock = std::chrono::steady_clock;

// Reads one '\n'-terminated line; nullopt on timeout, close or overflow.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  std::optional<std::string> next(std::uint64_t timeout_ms, const std::atomic<bool>* running = nullptr) {
    auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buf_.size() > kMaxLine) return std::nullopt;
      if (running && !running->load()) return std::nullopt;
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 100)));
      if (r < 0) return std::nullopt;
      if (r == 0) continue;
      char tmp[65536];
      ssize_t n = ::recv(fd_, tmp, sizeof tmp, 0);
      if (n <= 0) return std::nullopt;
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string hello_line(const PrincipalId& id, const KeyPair& kp) {
  return "HELLO " + id.name + " " + to_hex(kp.public_key) + "\n";
}

struct Hello {
  std::string name;
  Bytes key;
};

std::optional<Hello> parse_hello(const std::string& line) {
  if (line.rfind("HELLO ", 0) != 0) return std::nullopt;
  auto sp = line.find(' ', 6);
  if (sp == std::string::npos) return std::nullopt;
  Hello h;
  h.name = line.substr(6, sp - 6);
  try {
    h.key = from_hex(line.substr(sp + 1));
  } catch (const Error&) {
    return std::nullopt;
  }
  if (h.name.empty() || h.key.size() != crypto_sign_PUBLICKEYBYTES) return std::nullopt;
  return h;
}

struct Fd {
  int fd = -1;
  explicit Fd(int f) : fd(f) {}
  ~Fd() {
    if (fd >= 0) ::close(fd);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
};

}  // namespace

std::pair<std::string, std::uint16_t> parse_address(const std::string& host_port) {
  auto colon = host_port.rfind(':');
  if (colon == std::string::npos || colon + 1 == host_port.size())
    throw Error(ErrorKind::Usage, "address must be host:port: " + host_port);
  std::string host = host_port.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(host_port.substr(colon + 1), &used);
    if (used != host_port.size() - colon - 1) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, "bad port in " + host_port);
  }
  if (port < 0 || port > 65535) throw Error(ErrorKind::Usage, "port out of range in " + host_port);
  if (host.empty()) host = "127.0.0.1";
  return {host, static_cast<std::uint16_t>(port)};
}

// ---------------------------------------------------------------------------

TcpTransport::TcpTransport(KeyPair key, PrincipalId self, KeyDirectory directory, std::uint64_t timeout_ms)
    : key_(std::move(key)), self_(std::move(self)), directory_(std::move(directory)), timeout_ms_(timeout_ms) {}

void TcpTransport::set_address(const std::string& peer, const std::string& host_port) {
  std::lock_guard<std::mutex> lock(mu_);
  addresses_[peer] = host_port;
}

std::optional<Message> TcpTransport::request(const Message& m) {
  std::string address;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = addresses_.find(m.to); it != addresses_.end()) address = it->second;
  }
  const DirectoryEntry* peer = directory_.find(m.to);
  if (address.empty() && peer) address = peer->address;
  if (address.empty() || !peer) {
    Message fail;
    fail.type = MsgType::Fail;
    fail.qid = m.qid;
    fail.from = m.to;
    fail.to = m.from;
    fail.reason = "no-route";
    return fail;
  }
  auto [host, port] = parse_address(address);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw Error(ErrorKind::Transport, "cannot resolve " + host);
  Fd sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  int rc = sock.fd < 0 ? -1 : ::connect(sock.fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) throw Error(ErrorKind::Transport, "cannot connect to " + m.to + " at " + address);
  int one = 1;
  ::setsockopt(sock.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  if (!write_all(sock.fd, hello_line(self_, key_))) throw Error(ErrorKind::Transport, "handshake write failed");
  LineReader reader(sock.fd);
  auto line = reader.next(timeout_ms_);
  if (!line) return std::nullopt;
  auto hello = parse_hello(*line);
  if (!hello || hello->name != m.to || hello->key != peer->public_key)
    throw Error(ErrorKind::Crypto, "peer " + m.to + " presented an unexpected identity");
  Channel ch = make_channel(key_, peer->public_key);
  if (!write_all(sock.fd, seal_frame(ch, to_json(m)) + "\n")) throw Error(ErrorKind::Transport, "write failed");
  auto reply = reader.next(timeout_ms_);
  if (!reply) return std::nullopt;
  return from_json(open_frame(ch, *reply));
}

// ---------------------------------------------------------------------------

TcpServer::TcpServer(Node& node, const std::string& host, std::uint16_t port)
    : node_(node), host_(host), port_(port) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  crypto_init();
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || !res)
    throw Error(ErrorKind::Transport, "cannot resolve listen address " + host_);
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  bool ok = listen_fd_ >= 0 && ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0 &&
            ::listen(listen_fd_, 64) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorKind::Transport, "cannot listen on " + host_ + ":" + std::to_string(port_) + ": " +
                                          std::strerror(errno));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  running_ = true;
  thread_ = std::thread([this] { serve(); });
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
}

void TcpServer::serve() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard<std::mutex> lock(workers_mu_);
    workers_.emplace_back([this, fd] { connection(fd); });
  }
}

void TcpServer::connection(int raw) {
  Fd fd(raw);
  LineReader reader(fd.fd);
  constexpr std::uint64_t kIdleMs = 30'000;
  auto line = reader.next(kIdleMs, &running_);
  if (!line) return;
  auto hello = parse_hello(*line);
  if (!hello) {
    ++protocol_errors_;
    write_all(fd.fd, "ERROR protocol: expected HELLO\n");
    return;
  }
  // A known name must present its directory key; unknown names are anonymous clients.
  bool named = false;
  if (const DirectoryEntry* d = node_.directory().find(hello->name)) {
    if (d->public_key != hello->key) {
      ++protocol_errors_;
      write_all(fd.fd, "ERROR protocol: key does not match directory entry for " + hello->name + "\n");
      return;
    }
    named = true;
  }
  if (!write_all(fd.fd, hello_line(node_.id(), node_.key()))) return;
  Channel ch;
  try {
    ch = make_channel(node_.key(), hello->key);
  } catch (const Error&) {
    ++protocol_errors_;
    return;
  }
  while (running_) {
    auto frame = reader.next(kIdleMs, &running_);
    if (!frame) return;
    Message reply;
    reply.type = MsgType::Error;
    reply.from = node_.name();
    reply.to = hello->name;
    try {
      Message m = from_json(open_frame(ch, *frame));
      if (named && m.from != hello->name) {
        ++protocol_errors_;
        reply.qid = m.qid;
        reply.reason = "protocol: sender does not match channel identity";
      } else if (m.to != node_.name()) {
        ++protocol_errors_;
        reply.qid = m.qid;
        reply.reason = "protocol: message addressed to " + m.to;
      } else {
        if (!named) m.from = hello->name;
        reply = node_.handle(m);
      }
    } catch (const Error& e) {
      ++protocol_errors_;
      reply.reason = std::string("protocol: ") + e.what();
    }
    if (!write_all(fd.fd, seal_frame(ch, to_json(reply)) + "\n")) return;
  }
}

}  // namespace cyberlogic
