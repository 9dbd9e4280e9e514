#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "zog/mlp.hpp"
#include "zog/oracle.hpp"

namespace zog {

/// Line protocol, version "ZOG/1".
///
/// On connect the server sends the greeting line "ZOG/1". After that each
/// request is one JSON object per line and gets exactly one JSON response
/// line, in order:
///
///   {"id": 7, "op": "meta"}
///     -> {"id": 7, "input_dim": D, "num_classes": K, "used": U, "budget": B}
///   {"id": 8, "op": "logits", "x": [..D reals..]}
///     -> {"id": 8, "logits": [..K reals..], "used": U}
///   any failure
///     -> {"id": 8, "error": "bad_request" | "bad_dim" | "budget_exhausted" | "server_busy"}
///
/// Reals are written with 17 significant digits so every double survives the
/// round trip. A line that cannot be parsed echoes "id": null.
inline constexpr std::string_view kProtocolGreeting = "ZOG/1";

/// Formats a double with 17 significant digits.
std::string format_wire_real(double v);

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::uint64_t budget = kDefaultBudget;
  std::size_t max_connections = 16;
};

/// Serves one model behind a single, process-wide query ledger.
class OracleServer {
 public:
  OracleServer(std::shared_ptr<const MlpModel> model, ServerOptions options);
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  /// Bound port (resolved after construction when options.port was 0).
  std::uint16_t port() const noexcept { return port_; }
  std::string address() const;

  /// Accept loop on a background thread.
  void start();
  /// Blocks in the accept loop until stop() is called.
  void serve();
  /// Stops accepting, lets each connection answer the requests it already
  /// received, then joins every worker.
  void stop();

  /// Answers one request line (without the newline). Thread-safe.
  std::string handle_request(std::string_view line);

  const QueryLedger& ledger() const noexcept { return ledger_; }
  /// Number of times the model itself ran. Refused requests never count.
  std::uint64_t evaluations() const noexcept { return evaluations_.load(); }

 private:
  void handle_connection(int fd);

  std::shared_ptr<const MlpModel> model_;
  ServerOptions options_;
  QueryLedger ledger_;
  std::atomic<std::uint64_t> evaluations_{0};
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> active_{0};
  std::thread accept_thread_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
};

/// Oracle client for an OracleServer. Not shareable between concurrent runs.
///
/// The local ledger counts the queries this connection was served; its
/// budget mirrors the server's. The server's global count arrives with every
/// response (server_used()). A server refusal throws BudgetExhausted; any
/// socket or framing failure throws TransportError.
class RemoteOracle final : public Oracle {
 public:
  /// address is "host:port". Throws TransportError if unreachable.
  static std::unique_ptr<RemoteOracle> connect(const std::string& address);
  ~RemoteOracle() override;

  std::size_t input_dim() const override { return input_dim_; }
  std::size_t num_classes() const override { return num_classes_; }
  std::vector<double> logits(std::span<const double> x) override;
  const QueryLedger& ledger() const override { return *ledger_; }

  std::uint64_t server_used() const noexcept { return server_used_; }
  /// Re-reads the server's counters with a meta request (no query charged).
  void refresh();

 private:
  explicit RemoteOracle(int fd);
  std::string roundtrip(const std::string& request);
  std::string read_line();

  int fd_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  std::size_t input_dim_ = 0;
  std::size_t num_classes_ = 0;
  std::uint64_t server_used_ = 0;
  std::unique_ptr<QueryLedger> ledger_;
};

}  // namespace zog
