#include "cdp.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "uibench/error.hpp"

extern char** environ;

using nlohmann::json;

namespace uibench::cdp {

namespace {

std::filesystem::path make_temp_dir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "uibench-chrome-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) {
    throw Error(ErrorCode::BrowserUnavailable, std::string("mkdtemp: ") + std::strerror(errno));
  }
  return tmpl;
}

}  // namespace

Connection::Connection(const LaunchOptions& options) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(options.executable, ec)) {
    throw Error(ErrorCode::BrowserUnavailable, "browser executable not found: " + options.executable.string() +
                                                   " (run tools/fetch_chromium.sh or set UIBENCH_CHROME)");
  }
  ::signal(SIGPIPE, SIG_IGN);
  user_data_dir_ = make_temp_dir();

  // Everything the child needs is prepared before fork().
  std::vector<std::string> args;
  args.push_back(options.executable.string());
  args.insert(args.end(), options.args.begin(), options.args.end());
  args.push_back("--remote-debugging-pipe");
  args.push_back("--user-data-dir=" + user_data_dir_.string());
  args.push_back("about:blank");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_strings;
  for (char** e = environ; *e != nullptr; ++e) {
    std::string entry(*e);
    const std::string key = entry.substr(0, entry.find('='));
    bool overridden = false;
    for (const auto& [k, _] : options.env) overridden = overridden || k == key;
    if (!overridden) env_strings.push_back(std::move(entry));
  }
  for (const auto& [k, v] : options.env) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& e : env_strings) envp.push_back(e.data());
  envp.push_back(nullptr);

  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::BrowserUnavailable, std::string("pipe: ") + std::strerror(errno));
  }
  const std::string log_path = (user_data_dir_ / "chrome.log").string();
  const int log_fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  const int null_fd = ::open("/dev/null", O_RDWR | O_CLOEXEC);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::BrowserUnavailable, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    // Move the pipe ends clear of 3/4 before placing them there.
    const int in_fd = ::fcntl(to_child[0], F_DUPFD, 10);
    const int out_fd = ::fcntl(from_child[1], F_DUPFD, 10);
    if (in_fd < 0 || out_fd < 0) ::_exit(127);
    ::dup2(null_fd, 0);
    ::dup2(null_fd, 1);
    ::dup2(log_fd >= 0 ? log_fd : null_fd, 2);
    ::dup2(in_fd, 3);
    ::dup2(out_fd, 4);
    ::execve(argv[0], argv.data(), envp.data());
    ::_exit(127);
  }
  pid_ = pid;
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (log_fd >= 0) ::close(log_fd);
  if (null_fd >= 0) ::close(null_fd);
  to_browser_ = to_child[1];
  from_browser_ = from_child[0];
  reader_ = std::thread([this] { reader_loop(); });
}

Connection::~Connection() {
  kill();
  if (reader_.joinable()) reader_.join();
  if (to_browser_ >= 0) ::close(to_browser_);
  if (from_browser_ >= 0) ::close(from_browser_);
  std::error_code ec;
  std::filesystem::remove_all(user_data_dir_, ec);
}

void Connection::kill() {
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
  mark_dead();
}

void Connection::mark_dead() {
  std::lock_guard lock(mutex_);
  if (dead_.exchange(true)) return;
  for (auto& [id, promise] : pending_) {
    promise.set_exception(std::make_exception_ptr(Error(ErrorCode::BrowserCrash, "browser connection closed")));
  }
  pending_.clear();
  cv_.notify_all();
}

void Connection::write_message(const std::string& text) {
  std::lock_guard lock(write_mutex_);
  const char* data = text.c_str();
  std::size_t left = text.size() + 1;  // include the NUL terminator
  while (left > 0) {
    const ssize_t n = ::write(to_browser_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      mark_dead();
      throw Error(ErrorCode::BrowserCrash, std::string("write to browser failed: ") + std::strerror(errno));
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
}

void Connection::reader_loop() {
  std::string buffer;
  std::vector<char> chunk(1 << 16);
  for (;;) {
    const ssize_t n = ::read(from_browser_, chunk.data(), chunk.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk.data(), static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (;;) {
      const auto end = buffer.find('\0', start);
      if (end == std::string::npos) break;
      json msg = json::parse(buffer.begin() + static_cast<std::ptrdiff_t>(start),
                             buffer.begin() + static_cast<std::ptrdiff_t>(end), nullptr, false);
      start = end + 1;
      if (msg.is_discarded()) continue;

      std::lock_guard lock(mutex_);
      if (msg.contains("id")) {
        const int id = msg["id"].get<int>();
        if (auto s = id_session_.find(id); s != id_session_.end()) {
          auto inbox = inboxes_.find(s->second);
          if (inbox != inboxes_.end()) inbox->second.messages.push_back(std::move(msg));
          id_session_.erase(s);
          cv_.notify_all();
        } else if (auto p = pending_.find(id); p != pending_.end()) {
          p->second.set_value(std::move(msg));
          pending_.erase(p);
        }
      } else if (msg.contains("sessionId")) {
        auto inbox = inboxes_.find(msg["sessionId"].get<std::string>());
        if (inbox != inboxes_.end()) {
          inbox->second.messages.push_back(std::move(msg));
          cv_.notify_all();
        }
      }
    }
    buffer.erase(0, start);
  }
  mark_dead();
}

json Connection::call(const std::string& method, json params, std::chrono::milliseconds timeout) {
  const int id = next_id_++;
  std::future<json> fut;
  {
    std::lock_guard lock(mutex_);
    if (dead_) throw Error(ErrorCode::BrowserCrash, "browser connection closed");
    fut = pending_[id].get_future();
  }
  write_message(json{{"id", id}, {"method", method}, {"params", std::move(params)}}.dump());
  if (fut.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(mutex_);
    pending_.erase(id);
    throw Error(ErrorCode::RenderTimeout, method + " timed out");
  }
  json msg = fut.get();
  if (msg.contains("error")) {
    throw Error(ErrorCode::Internal, method + ": " + msg["error"].dump());
  }
  return msg.value("result", json::object());
}

void Connection::open_session(const std::string& session) {
  std::lock_guard lock(mutex_);
  inboxes_[session];
}

void Connection::close_session(const std::string& session) {
  std::lock_guard lock(mutex_);
  inboxes_.erase(session);
  for (auto it = id_session_.begin(); it != id_session_.end();) {
    it = it->second == session ? id_session_.erase(it) : std::next(it);
  }
}

int Connection::send(const std::string& session, const std::string& method, json params) {
  const int id = next_id_++;
  {
    std::lock_guard lock(mutex_);
    if (dead_) throw Error(ErrorCode::BrowserCrash, "browser connection closed");
    id_session_[id] = session;
  }
  write_message(
      json{{"id", id}, {"sessionId", session}, {"method", method}, {"params", std::move(params)}}.dump());
  return id;
}

std::optional<json> Connection::next(const std::string& session, Clock::time_point deadline) {
  std::unique_lock lock(mutex_);
  for (;;) {
    auto it = inboxes_.find(session);
    if (it == inboxes_.end()) throw Error(ErrorCode::Internal, "unknown session " + session);
    if (!it->second.messages.empty()) {
      json msg = std::move(it->second.messages.front());
      it->second.messages.pop_front();
      return msg;
    }
    if (dead_) throw Error(ErrorCode::BrowserCrash, "browser connection closed");
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      auto again = inboxes_.find(session);
      if (again != inboxes_.end() && !again->second.messages.empty()) continue;
      return std::nullopt;
    }
  }
}

}  // namespace uibench::cdp
