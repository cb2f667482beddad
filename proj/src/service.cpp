#include "pregate/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <list>
#include <mutex>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "pregate/complexity.hpp"
#include "pregate/error.hpp"
#include "pregate/features.hpp"
#include "pregate/gate.hpp"

namespace pregate {

struct GateEngine::Slot {
  std::mutex mutex;
  SessionState state;
  std::unordered_set<std::int64_t> issued;
  std::int64_t next_local_id = -1;  // ids assigned to decides that carry none

  explicit Slot(const std::string& id) : state(id) {}
};

GateEngine::GateEngine(AcceptanceModel model, double tau, ServiceConfig config)
    : model_(std::move(model)), tau_(tau), config_(config) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in [0,1]");
}

GateEngine::~GateEngine() = default;

std::shared_ptr<GateEngine::Slot> GateEngine::slot(const std::string& session_id) {
  {
    std::shared_lock lock(sessions_mutex_);
    if (auto it = sessions_.find(session_id); it != sessions_.end()) return it->second;
  }
  std::unique_lock lock(sessions_mutex_);
  auto& s = sessions_[session_id];
  if (!s) s = std::make_shared<Slot>(session_id);
  return s;
}

namespace {

nlohmann::json error_json(std::string_view code, std::string_view what) {
  return {{"ok", false}, {"error", std::string(what)}, {"code", std::string(code)}};
}

nlohmann::json resolutions_json(const std::vector<Resolution>& rs) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rs) a.push_back({{"suggestion_id", r.suggestion_id}, {"label", to_string(r.label)}});
  return a;
}

void observe_clock(std::atomic<TimestampMs>& clock, TimestampMs t) {
  TimestampMs cur = clock.load(std::memory_order_relaxed);
  while (t > cur && !clock.compare_exchange_weak(cur, t, std::memory_order_relaxed)) {
  }
}

}  // namespace

nlohmann::json GateEngine::on_event(const TelemetryEvent& e) {
  auto s = slot(e.session_id);
  observe_clock(clock_, e.timestamp);
  std::lock_guard lock(s->mutex);
  std::vector<Resolution> resolved;
  try {
    resolved = ingest_event(s->state, e);
  } catch (const Error& err) {
    rejected_events_.fetch_add(1, std::memory_order_relaxed);
    return error_json(to_string(err.code()), err.what());
  }
  for (const auto& r : resolved) {
    if (r.label == Label::Accepted && s->issued.erase(r.suggestion_id) > 0) {
      accepted_of_issued_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  nlohmann::json out{{"ok", true}, {"resolved", resolutions_json(resolved)}};
  if (e.kind != EventKind::SuggestionRequested) return out;

  const TimestampMs t = *s->state.last_activity;
  const auto x = build_feature_vector(s->state, e.payload.task_complexity, t);
  const auto d = should_trigger(model_, x, tau_);
  total_requests_.fetch_add(1, std::memory_order_relaxed);
  if (d.decision == Decision::Suppress) suppressed_.fetch_add(1, std::memory_order_relaxed);
  else s->issued.insert(e.payload.suggestion_id);

  out["session_id"] = e.session_id;
  out["suggestion_id"] = e.payload.suggestion_id;
  out["timestamp"] = t;
  out["decision"] = to_string(d.decision);
  out["p_accept"] = std::isfinite(d.p_accept) ? nlohmann::json(d.p_accept) : nlohmann::json(nullptr);
  out["tau"] = d.tau;
  out["reason"] = to_string(d.reason);
  out["context_stale"] = x.context_stale;
  return out;
}

nlohmann::json GateEngine::on_decide(const nlohmann::json& req) {
  TelemetryEvent e;
  e.session_id = req.at("session_id").get<std::string>();
  e.kind = EventKind::SuggestionRequested;
  auto& p = e.payload;
  if (req.contains("task_complexity")) {
    p.task_complexity = req.at("task_complexity").get<double>();
    if (!(p.task_complexity >= 0.0 && p.task_complexity <= 1.0)) {
      return error_json("InvalidFormat", "task_complexity must lie in [0,1]");
    }
  } else if (req.contains("code")) {
    const auto lang = parse_language(req.value("language", std::string("other")));
    p.task_complexity = task_complexity(req.at("code").get<std::string>(), lang).task_complexity;
  }
  p.prompt_length = req.value("prompt_length", std::int64_t{0});
  if (p.prompt_length < 0) return error_json("InvalidFormat", "prompt_length must be non-negative");

  auto s = slot(e.session_id);
  {
    std::lock_guard lock(s->mutex);
    if (req.contains("timestamp")) e.timestamp = req.at("timestamp").get<TimestampMs>();
    else e.timestamp = s->state.last_activity.value_or(0);
    p.suggestion_id = req.contains("suggestion_id") ? req.at("suggestion_id").get<std::int64_t>() : s->next_local_id--;
  }
  return on_event(e);
}

nlohmann::json GateEngine::on_outcome(const nlohmann::json& req) {
  const auto session_id = req.at("session_id").get<std::string>();
  const bool accepted = req.at("accepted").get<bool>();
  auto s = slot(session_id);
  std::unique_lock lock(s->mutex);
  auto& pending = s->state.pending;
  auto it = pending.begin();
  if (req.contains("suggestion_id")) {
    const auto id = req.at("suggestion_id").get<std::int64_t>();
    it = std::find_if(pending.begin(), pending.end(), [id](const PendingSuggestion& q) { return q.suggestion_id == id; });
  }
  if (it == pending.end()) {
    // Nothing shown to resolve: the outcome still feeds the momentum counters.
    (accepted ? s->state.accepted : s->state.rejected) += 1;
    if (accepted && req.contains("suggestion_id") && s->issued.erase(req.at("suggestion_id").get<std::int64_t>()) > 0) {
      accepted_of_issued_.fetch_add(1, std::memory_order_relaxed);
    }
    return {{"ok", true}, {"resolved", nlohmann::json::array()}};
  }
  const auto id = it->suggestion_id;
  if (!accepted) {
    pending.erase(it);
    s->state.rejected += 1;
    s->issued.erase(id);
    return {{"ok", true}, {"resolved", {{{"suggestion_id", id}, {"label", to_string(Label::RejectedExplicit)}}}}};
  }
  TelemetryEvent e;
  e.session_id = session_id;
  e.kind = EventKind::SuggestionAccepted;
  e.timestamp = req.contains("timestamp") ? req.at("timestamp").get<TimestampMs>() : s->state.last_activity.value_or(0);
  e.payload.suggestion_id = id;
  lock.unlock();
  return on_event(e);
}

SimulationReport GateEngine::stats() const {
  SimulationReport r;
  r.total_requests = total_requests_.load();
  r.suppressed = suppressed_.load();
  r.issued = r.total_requests - r.suppressed;
  r.accepted_of_issued = accepted_of_issued_.load();
  r.rejected_events = rejected_events_.load();
  r.malformed_lines = malformed_lines_.load();
  return r;
}

nlohmann::json GateEngine::stats_json() const {
  auto j = to_json(stats());
  j["ok"] = true;
  j["sessions"] = session_count();
  return j;
}

std::size_t GateEngine::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::size_t GateEngine::evict_idle() {
  const TimestampMs now = clock_.load();
  std::unique_lock lock(sessions_mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock slot_lock(it->second->mutex, std::try_to_lock);
    const auto& last = it->second->state.last_activity;
    const bool idle = slot_lock.owns_lock() && (!last || now - *last > config_.idle_eviction_ms);
    if (idle && last) {
      slot_lock.unlock();
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

nlohmann::json GateEngine::handle(const nlohmann::json& req) {
  try {
    if (!req.is_object()) return error_json("InvalidFormat", "request must be a JSON object");
    const auto type = req.at("type").get<std::string>();
    if (config_.sweep_every > 0 && (messages_.fetch_add(1) + 1) % config_.sweep_every == 0) evict_idle();
    if (type == "ping") return {{"ok", true}};
    if (type == "event") return on_event(event_from_json(req.at("event")));
    if (type == "decide") return on_decide(req);
    if (type == "outcome") return on_outcome(req);
    if (type == "stats") return stats_json();
    return error_json("InvalidFormat", "unknown message type '" + type + "'");
  } catch (const Error& e) {
    return error_json(to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_json("InvalidFormat", e.what());
  } catch (const std::exception& e) {
    return error_json("Internal", e.what());
  }
}

std::string GateEngine::handle_line(std::string_view line) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    malformed_lines_.fetch_add(1, std::memory_order_relaxed);
    return error_json("InvalidFormat", e.what()).dump();
  }
  return handle(req).dump();
}

void serve_stream(GateEngine& engine, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out << engine.handle_line(line) << '\n';
    out.flush();
  }
}

// ---------------------------------------------------------------------------

struct SocketServer::Impl {
  GateEngine& engine;
  int listen_fd = -1;
  std::string unix_path;
  std::atomic<bool> stopping{false};
  std::mutex clients_mutex;
  std::list<std::pair<int, std::thread>> clients;

  explicit Impl(GateEngine& e) : engine(e) {}

  void serve_client(int fd) {
    std::string buffer;
    char chunk[4096];
    while (!stopping.load()) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::string replies;
      std::size_t start = 0;
      for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
        std::string_view line(buffer.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        replies += engine.handle_line(line);
        replies += '\n';
      }
      buffer.erase(0, start);
      for (std::size_t sent = 0; sent < replies.size();) {
        const ssize_t w = ::send(fd, replies.data() + sent, replies.size() - sent, MSG_NOSIGNAL);
        if (w <= 0) return;
        sent += static_cast<std::size_t>(w);
      }
    }
  }
};

namespace {

[[noreturn]] void io_fail(const std::string& what) {
  throw Error(ErrorCode::Io, what + ": " + std::strerror(errno));
}

}  // namespace

SocketServer::SocketServer(GateEngine& engine, const std::string& address) : impl_(std::make_unique<Impl>(engine)) {
  if (address.rfind("unix:", 0) == 0) {
    impl_->unix_path = address.substr(5);
    sockaddr_un sa{};
    sa.sun_family = AF_UNIX;
    if (impl_->unix_path.empty() || impl_->unix_path.size() >= sizeof sa.sun_path) {
      throw Error(ErrorCode::InvalidConfig, "bad unix socket path");
    }
    std::strncpy(sa.sun_path, impl_->unix_path.c_str(), sizeof sa.sun_path - 1);
    ::unlink(impl_->unix_path.c_str());
    impl_->listen_fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (impl_->listen_fd < 0) io_fail("socket");
    if (::bind(impl_->listen_fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) io_fail("bind " + address);
    bound_ = address;
  } else {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "address must be host:port or unix:/path");
    const std::string host = address.substr(0, colon);
    const std::string port = address.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorCode::InvalidConfig, "cannot resolve " + address);
    }
    impl_->listen_fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (impl_->listen_fd < 0) {
      ::freeaddrinfo(res);
      io_fail("socket");
    }
    const int one = 1;
    ::setsockopt(impl_->listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const int rc = ::bind(impl_->listen_fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc < 0) io_fail("bind " + address);
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    ::getsockname(impl_->listen_fd, reinterpret_cast<sockaddr*>(&sa), &len);
    char ip[INET_ADDRSTRLEN];
    ::inet_ntop(AF_INET, &sa.sin_addr, ip, sizeof ip);
    bound_ = std::string(ip) + ":" + std::to_string(ntohs(sa.sin_port));
  }
  if (::listen(impl_->listen_fd, 256) < 0) io_fail("listen");
}

SocketServer::~SocketServer() {
  stop();
  std::list<std::pair<int, std::thread>> clients;
  {
    std::lock_guard lock(impl_->clients_mutex);
    clients.swap(impl_->clients);
  }
  for (auto& [fd, th] : clients) {
    ::shutdown(fd, SHUT_RDWR);
    if (th.joinable()) th.join();
    ::close(fd);
  }
  if (impl_->listen_fd >= 0) ::close(impl_->listen_fd);
  if (!impl_->unix_path.empty()) ::unlink(impl_->unix_path.c_str());
}

void SocketServer::stop() { impl_->stopping.store(true); }

void SocketServer::run(const std::atomic<bool>* external_stop) {
  while (!impl_->stopping.load() && !(external_stop && external_stop->load())) {
    pollfd pfd{impl_->listen_fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc < 0 && errno != EINTR) io_fail("poll");
    if (rc <= 0) continue;
    const int fd = ::accept(impl_->listen_fd, nullptr, nullptr);
    if (fd < 0) continue;
    if (impl_->unix_path.empty()) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    std::lock_guard lock(impl_->clients_mutex);
    impl_->clients.emplace_back(fd, std::thread([impl = impl_.get(), fd] { impl->serve_client(fd); }));
  }
  impl_->stopping.store(true);
  std::lock_guard lock(impl_->clients_mutex);
  for (auto& [fd, th] : impl_->clients) ::shutdown(fd, SHUT_RDWR);
}

}  // namespace pregate
