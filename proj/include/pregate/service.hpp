#pragma once

// Online gate service: newline-delimited JSON requests, one response line each.
//
//   {"type":"ping"}
//   {"type":"event", "event":{...TelemetryEvent...}}
//   {"type":"decide", "session_id":..., "timestamp"?, "suggestion_id"?,
//    "task_complexity"? | "code"+"language"?, "prompt_length"?}
//   {"type":"outcome", "session_id":..., "accepted":bool, "suggestion_id"?}
//   {"type":"stats"}
//
// A decide is folded in as a SuggestionRequested event, so a SuggestionRequested
// arriving through "event" is answered with a decision as well.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "json.hpp"
#include "pregate/harness.hpp"
#include "pregate/model.hpp"

namespace pregate {

struct ServiceConfig {
  TimestampMs idle_eviction_ms = 60 * 60'000;
  std::size_t sweep_every = 1024;  // messages between eviction sweeps
};

class GateEngine {
 public:
  GateEngine(AcceptanceModel model, double tau, ServiceConfig config = {});
  ~GateEngine();
  GateEngine(const GateEngine&) = delete;
  GateEngine& operator=(const GateEngine&) = delete;

  // Never throws; errors become {"ok":false,"error":...}.
  nlohmann::json handle(const nlohmann::json& request);
  std::string handle_line(std::string_view line);

  SimulationReport stats() const;
  std::size_t session_count() const;
  double tau() const { return tau_; }
  const AcceptanceModel& model() const { return model_; }

  // Drops sessions idle for longer than the eviction horizon, measured on the
  // largest timestamp seen so far.
  std::size_t evict_idle();

 private:
  struct Slot;
  std::shared_ptr<Slot> slot(const std::string& session_id);
  nlohmann::json on_event(const TelemetryEvent& e);
  nlohmann::json on_decide(const nlohmann::json& request);
  nlohmann::json on_outcome(const nlohmann::json& request);
  nlohmann::json stats_json() const;

  AcceptanceModel model_;
  double tau_;
  ServiceConfig config_;

  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> sessions_;

  std::atomic<std::int64_t> total_requests_{0};
  std::atomic<std::int64_t> suppressed_{0};
  std::atomic<std::int64_t> accepted_of_issued_{0};
  std::atomic<std::int64_t> rejected_events_{0};
  std::atomic<std::int64_t> malformed_lines_{0};
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<TimestampMs> clock_{0};
};

// Reads requests from `in` until EOF, writing one response per line.
void serve_stream(GateEngine& engine, std::istream& in, std::ostream& out);

// "host:port" (TCP) or "unix:/path". Port 0 picks a free port; see bound_address().
class SocketServer {
 public:
  SocketServer(GateEngine& engine, const std::string& address);
  ~SocketServer();
  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  // Blocks until stop() is called or the stop flag is raised.
  void run(const std::atomic<bool>* external_stop = nullptr);
  void stop();
  std::string bound_address() const { return bound_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string bound_;
};

}  // namespace pregate
