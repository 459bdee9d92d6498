#pragma once

// Chrome DevTools Protocol client over --remote-debugging-pipe: the browser
// reads NUL-terminated JSON commands from fd 3 and writes responses and
// events to fd 4.

#include <sys/types.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace uibench::cdp {

using Clock = std::chrono::steady_clock;

struct LaunchOptions {
  std::filesystem::path executable;
  std::vector<std::string> args;
  std::vector<std::pair<std::string, std::string>> env;  // overrides
};

class Connection {
 public:
  /// Starts the browser. Throws Error(BrowserUnavailable).
  explicit Connection(const LaunchOptions& options);
  ~Connection();

  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  bool alive() const noexcept { return !dead_.load(); }
  pid_t pid() const noexcept { return pid_; }

  /// Browser-level command; blocks for the response. Throws Error on protocol
  /// error (Internal), timeout (RenderTimeout) or disconnect (BrowserCrash).
  nlohmann::json call(const std::string& method, nlohmann::json params, std::chrono::milliseconds timeout);

  /// Registers an inbox for a flattened target session. Events and responses
  /// for that session queue there until read with next().
  void open_session(const std::string& session);
  void close_session(const std::string& session);

  /// Fire-and-forget session command; its response lands in the inbox.
  int send(const std::string& session, const std::string& method, nlohmann::json params);

  /// Next inbox message, or nullopt at the deadline. Throws Error(BrowserCrash)
  /// once the connection is gone and the inbox is drained.
  std::optional<nlohmann::json> next(const std::string& session, Clock::time_point deadline);

  void kill();

 private:
  struct Inbox {
    std::deque<nlohmann::json> messages;
  };

  void write_message(const std::string& text);
  void reader_loop();
  void mark_dead();

  pid_t pid_ = -1;
  int to_browser_ = -1;
  int from_browser_ = -1;
  std::filesystem::path user_data_dir_;
  std::thread reader_;
  std::atomic<bool> dead_{false};
  std::atomic<int> next_id_{1};

  std::mutex write_mutex_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<int, std::promise<nlohmann::json>> pending_;
  std::map<int, std::string> id_session_;
  std::map<std::string, Inbox> inboxes_;
};

}  // namespace uibench::cdp
