#include "zog/remote.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "zog/errors.hpp"

namespace zog {

namespace {

constexpr std::size_t kMaxLine = 16 * 1024 * 1024;
constexpr int kPollMs = 50;

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::string id_json(const nlohmann::json* id) {
  if (id == nullptr) return "null";
  return id->dump();
}

std::string error_line(const nlohmann::json* id, std::string_view code) {
  return "{\"id\":" + id_json(id) + ",\"error\":\"" + std::string(code) + "\"}";
}

std::pair<std::string, std::string> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw TransportError("address must be host:port, got '" + address + "'");
  }
  return {address.substr(0, colon), address.substr(colon + 1)};
}

}  // namespace

std::string format_wire_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- server

OracleServer::OracleServer(std::shared_ptr<const MlpModel> model, ServerOptions options)
    : model_(std::move(model)), options_(std::move(options)), ledger_(options_.budget) {
  if (!model_) throw std::invalid_argument("OracleServer: no model");
  if (options_.max_connections == 0) throw std::invalid_argument("OracleServer: max_connections must be >= 1");

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port_str = std::to_string(options_.port);
  if (::getaddrinfo(options_.host.c_str(), port_str.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve bind address " + options_.host);
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw TransportError("socket: " + std::string(std::strerror(errno)));
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    throw TransportError("cannot bind " + options_.host + ":" + port_str + ": " + why);
  }
  ::freeaddrinfo(res);

  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

OracleServer::~OracleServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

std::string OracleServer::address() const { return options_.host + ":" + std::to_string(port_); }

void OracleServer::start() {
  accept_thread_ = std::thread([this] { serve(); });
}

void OracleServer::serve() {
  while (!stopping_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, kPollMs);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (active_.load() >= options_.max_connections) {
      send_all(fd, error_line(nullptr, "server_busy") + "\n");
      ::close(fd);
      continue;
    }
    ++active_;
    std::lock_guard lock(workers_mutex_);
    workers_.emplace_back([this, fd] {
      handle_connection(fd);
      --active_;
    });
  }
}

void OracleServer::stop() {
  stopping_.store(true);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
}

void OracleServer::handle_connection(int fd) {
  std::string buffer;
  bool open = send_all(fd, std::string(kProtocolGreeting) + "\n");
  char chunk[65536];
  while (open) {
    // Answer every complete line already received, even while stopping.
    for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
      std::string_view line(buffer.data(), nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      const auto response = handle_request(line) + "\n";
      buffer.erase(0, nl + 1);
      if (!send_all(fd, response)) {
        open = false;
        break;
      }
    }
    if (!open || stopping_.load()) break;
    if (buffer.size() > kMaxLine) {
      send_all(fd, error_line(nullptr, "bad_request") + "\n");
      break;
    }
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, kPollMs);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
  ::close(fd);
}

std::string OracleServer::handle_request(std::string_view line) {
  const auto req = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error_line(nullptr, "bad_request");
  const auto id_it = req.find("id");
  const nlohmann::json* id = (id_it != req.end() && id_it->is_number_integer()) ? &*id_it : nullptr;
  if (id == nullptr) return error_line(nullptr, "bad_request");

  const auto op_it = req.find("op");
  if (op_it == req.end() || !op_it->is_string()) return error_line(id, "bad_request");
  const auto& op = op_it->get_ref<const std::string&>();

  if (op == "meta") {
    return "{\"id\":" + id_json(id) + ",\"input_dim\":" + std::to_string(model_->input_dim()) +
           ",\"num_classes\":" + std::to_string(model_->num_classes()) + ",\"used\":" +
           std::to_string(ledger_.used()) + ",\"budget\":" + std::to_string(ledger_.budget()) + "}";
  }
  if (op != "logits") return error_line(id, "bad_request");

  const auto x_it = req.find("x");
  if (x_it == req.end() || !x_it->is_array()) return error_line(id, "bad_request");
  std::vector<double> x;
  x.reserve(x_it->size());
  for (const auto& v : *x_it) {
    if (!v.is_number()) return error_line(id, "bad_request");
    x.push_back(v.get<double>());
    if (!std::isfinite(x.back())) return error_line(id, "bad_request");
  }
  if (x.size() != model_->input_dim()) return error_line(id, "bad_dim");
  if (!ledger_.try_charge()) return error_line(id, "budget_exhausted");
  const std::uint64_t used_now = ledger_.used();

  evaluations_.fetch_add(1);
  const auto scores = model_->forward(x);
  std::string out = "{\"id\":" + id_json(id) + ",\"logits\":[";
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (k) out += ',';
    out += format_wire_real(scores[k]);
  }
  out += "],\"used\":" + std::to_string(used_now) + "}";
  return out;
}

// ---------------------------------------------------------------- client

RemoteOracle::RemoteOracle(int fd) : fd_(fd) {}

RemoteOracle::~RemoteOracle() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<RemoteOracle> RemoteOracle::connect(const std::string& address) {
  const auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve " + address);
  }
  int fd = -1;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + address);

  timeval tv{30, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  std::unique_ptr<RemoteOracle> client(new RemoteOracle(fd));
  const auto greeting = client->read_line();
  if (greeting != kProtocolGreeting) {
    // A busy server answers with an error object instead of the greeting.
    throw TransportError("unexpected greeting from " + address + ": " + greeting);
  }
  client->refresh();
  return client;
}

std::string RemoteOracle::read_line() {
  char chunk[65536];
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (buffer_.size() > kMaxLine) throw TransportError("response line too long");
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n == 0) throw TransportError("server closed the connection");
    if (n < 0) throw TransportError("recv: " + std::string(std::strerror(errno)));
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string RemoteOracle::roundtrip(const std::string& request) {
  if (fd_ < 0) throw TransportError("connection is closed");
  if (!send_all(fd_, request + "\n")) {
    ::close(fd_);
    fd_ = -1;
    throw TransportError("send failed: " + std::string(std::strerror(errno)));
  }
  try {
    return read_line();
  } catch (const TransportError&) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

void RemoteOracle::refresh() {
  const auto id = next_id_++;
  const auto line = roundtrip("{\"id\":" + std::to_string(id) + ",\"op\":\"meta\"}");
  const auto resp = nlohmann::json::parse(line, nullptr, false);
  if (resp.is_discarded() || !resp.is_object() || resp.value("id", nlohmann::json()) != id ||
      !resp.contains("input_dim")) {
    throw TransportError("bad meta response: " + line);
  }
  try {
    input_dim_ = resp.at("input_dim").get<std::size_t>();
    num_classes_ = resp.at("num_classes").get<std::size_t>();
    server_used_ = resp.at("used").get<std::uint64_t>();
    const auto budget = resp.at("budget").get<std::uint64_t>();
    if (!ledger_) ledger_ = std::make_unique<QueryLedger>(budget);
  } catch (const nlohmann::json::exception&) {
    throw TransportError("bad meta response: " + line);
  }
}

std::vector<double> RemoteOracle::logits(std::span<const double> x) {
  if (x.size() != input_dim_) {
    throw std::invalid_argument("remote oracle: input has " + std::to_string(x.size()) + " components, expected " +
                                std::to_string(input_dim_));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("remote oracle: non-finite input");
  }
  const auto id = next_id_++;
  std::string req = "{\"id\":" + std::to_string(id) + ",\"op\":\"logits\",\"x\":[";
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j) req += ',';
    req += format_wire_real(x[j]);
  }
  req += "]}";
  const auto line = roundtrip(req);

  const auto resp = nlohmann::json::parse(line, nullptr, false);
  if (resp.is_discarded() || !resp.is_object()) throw TransportError("malformed response: " + line);
  const auto id_it = resp.find("id");
  if (id_it == resp.end() || *id_it != id) throw TransportError("response id mismatch: " + line);
  if (const auto err = resp.find("error"); err != resp.end()) {
    if (*err == "budget_exhausted") throw BudgetExhausted(ledger_->budget());
    if (*err == "bad_dim") throw std::invalid_argument("remote oracle: server rejected input dimension");
    throw TransportError("server error: " + err->dump());
  }
  try {
    auto scores = resp.at("logits").get<std::vector<double>>();
    server_used_ = resp.at("used").get<std::uint64_t>();
    if (scores.size() != num_classes_) throw TransportError("response has wrong number of logits");
    ledger_->try_charge();
    return scores;
  } catch (const nlohmann::json::exception&) {
    throw TransportError("malformed response: " + line);
  }
}

}  // namespace zog
