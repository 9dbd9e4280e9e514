#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>
#include <stdexcept>
#include <string>
#include <thread>

#include "zog/attack.hpp"
#include "zog/errors.hpp"
#include "zog/remote.hpp"

using namespace zog;
using nlohmann::json;

namespace {

std::shared_ptr<const MlpModel> test_model() {
  const std::vector<std::size_t> dims{8, 6};
  return std::make_shared<const MlpModel>(gen_model(dims, 3, 1, 4).model);
}

/// Minimal line client for poking the server with raw bytes.
class RawClient {
 public:
  explicit RawClient(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  }
  ~RawClient() { ::close(fd_); }

  void send(const std::string& bytes) { REQUIRE(::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL) >= 0); }

  std::string line() {
    while (true) {
      if (const auto nl = buf_.find('\n'); nl != std::string::npos) {
        auto out = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return out;
      }
      char chunk[4096];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return "<closed>";
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

}  // namespace

TEST_CASE("wire reals round trip") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, 123456789.123456789}) {
    CHECK(std::stod(format_wire_real(v)) == v);
  }
}

TEST_CASE("remote logits equal in-process logits") {
  auto model = test_model();
  OracleServer server(model, ServerOptions{});
  server.start();
  auto remote = RemoteOracle::connect(server.address());
  CHECK(remote->input_dim() == 8);
  CHECK(remote->num_classes() == 3);
  CHECK(remote->ledger().budget() == kDefaultBudget);

  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(8);
    for (auto& v : x) v = rng.uniform01();
    CHECK(remote->logits(x) == model->forward(x));
  }
  CHECK(remote->ledger().used() == 50);
  CHECK(remote->server_used() == 50);
  CHECK(server.evaluations() == 50);
  server.stop();
}

TEST_CASE("budget exhaustion is reported and leaves counters unchanged") {
  auto model = test_model();
  ServerOptions opts;
  opts.budget = 3;
  OracleServer server(model, opts);
  server.start();
  auto remote = RemoteOracle::connect(server.address());
  const std::vector<double> x(8, 0.5);
  for (int i = 0; i < 3; ++i) remote->logits(x);
  CHECK_THROWS_AS(remote->logits(x), BudgetExhausted);
  CHECK(server.ledger().used() == 3);
  CHECK(server.evaluations() == 3);
  remote->refresh();
  CHECK(remote->server_used() == 3);
  server.stop();
}

TEST_CASE("clients share one server budget") {
  auto model = test_model();
  ServerOptions opts;
  opts.budget = 10;
  OracleServer server(model, opts);
  server.start();
  auto a = RemoteOracle::connect(server.address());
  auto b = RemoteOracle::connect(server.address());
  const std::vector<double> x(8, 0.25);
  for (int i = 0; i < 6; ++i) a->logits(x);
  int served = 0;
  for (int i = 0; i < 6; ++i) {
    try {
      b->logits(x);
      ++served;
    } catch (const BudgetExhausted&) {
    }
  }
  CHECK(served == 4);
  CHECK(server.ledger().used() == 10);
  CHECK(b->server_used() == 10);
  server.stop();
}

TEST_CASE("unreachable server") {
  std::uint16_t port = 0;
  {
    OracleServer probe(test_model(), ServerOptions{});
    port = probe.port();
  }
  CHECK_THROWS_AS(RemoteOracle::connect("127.0.0.1:" + std::to_string(port)), TransportError);
  CHECK_THROWS_AS(RemoteOracle::connect("not-an-address"), TransportError);
}

TEST_CASE("malformed requests") {
  auto model = test_model();
  OracleServer server(model, ServerOptions{});
  SUBCASE("handler") {
    const char* corpus[] = {
        "",
        "{",
        "null",
        "[]",
        "42",
        "{\"op\":\"meta\"}",
        "{\"id\":1}",
        "{\"id\":1,\"op\":7}",
        "{\"id\":1,\"op\":\"train\"}",
        "{\"id\":1,\"op\":\"logits\"}",
        "{\"id\":1,\"op\":\"logits\",\"x\":\"abc\"}",
        "{\"id\":1,\"op\":\"logits\",\"x\":[0,0,0,0,0,0,0,\"a\"]}",
        "{\"id\":1,\"op\":\"logits\",\"x\":[0,0,0,0,0,0,0,null]}",
        "{\"id\":1,\"op\":\"logits\",\"x\":[0,0,0,0,0,0,0,1e999]}",
        "\xff\xfe\x00garbage",
    };
    for (const char* line : corpus) {
      const auto resp = json::parse(server.handle_request(line));
      CHECK(resp.at("error") == "bad_request");
    }
    const auto short_x = json::parse(server.handle_request("{\"id\":5,\"op\":\"logits\",\"x\":[0.5]}"));
    CHECK(short_x.at("error") == "bad_dim");
    CHECK(short_x.at("id") == 5);
    CHECK(server.ledger().used() == 0);
    CHECK(server.evaluations() == 0);
  }
  SUBCASE("socket") {
    server.start();
    RawClient raw(server.port());
    CHECK(raw.line() == kProtocolGreeting);
    raw.send("this is not json\n");
    CHECK(json::parse(raw.line()).at("error") == "bad_request");
    raw.send("{\"id\":2,\"op\":\"meta\"}\n");
    const auto meta = json::parse(raw.line());
    CHECK(meta.at("id") == 2);
    CHECK(meta.at("input_dim") == 8);
    CHECK(meta.at("num_classes") == 3);
    CHECK(meta.at("used") == 0);
    raw.send("{\"id\":3,\"op\":\"logits\",\"x\":[1,2]}\n");
    CHECK(json::parse(raw.line()).at("error") == "bad_dim");
    // The server keeps serving well-formed clients.
    auto remote = RemoteOracle::connect(server.address());
    CHECK(remote->logits(std::vector<double>(8, 0.5)).size() == 3);
    CHECK(server.ledger().used() == 1);
    server.stop();
  }
}

TEST_CASE("connection limit") {
  ServerOptions opts;
  opts.max_connections = 1;
  OracleServer server(test_model(), opts);
  server.start();
  auto first = RemoteOracle::connect(server.address());
  CHECK_THROWS_AS(RemoteOracle::connect(server.address()), TransportError);
  CHECK(first->logits(std::vector<double>(8, 0.5)).size() == 3);
  server.stop();
}

TEST_CASE("attack over loopback matches the in-process attack") {
  const std::vector<std::size_t> dims{16, 8};
  const auto bench = gen_model(dims, 4, 3, 11);
  auto model = std::make_shared<const MlpModel>(bench.model);
  OracleServer server(model, ServerOptions{});
  server.start();
  AttackConfig cfg;
  cfg.budget = 20'000;
  for (const auto& probe : bench.probes) {
    auto remote = RemoteOracle::connect(server.address());
    MlpOracle local(model);
    Rng ra(9), rb(9);
    const auto over_wire = run_attack(*remote, probe.x, cfg, ra);
    const auto in_process = run_attack(local, probe.x, cfg, rb);
    CHECK(over_wire == in_process);
    CHECK(remote->ledger().used() == local.ledger().used());
  }
  server.stop();
}
