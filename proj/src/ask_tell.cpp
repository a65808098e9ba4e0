#include "stobnts/ask_tell.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>
#include <vector>

namespace stobnts {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::optional<std::string> take_line(std::string& buffer) {
  const std::size_t nl = buffer.find('\n');
  if (nl == std::string::npos) return std::nullopt;
  std::string line = buffer.substr(0, nl);
  buffer.erase(0, nl + 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void FdChannel::send(const std::string& line) {
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("protocol: write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> FdChannel::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  while (true) {
    if (auto line = take_line(buffer_)) return line;
    if (eof_) {
      if (!buffer_.empty()) {
        std::string last;
        last.swap(buffer_);
        return last;
      }
      throw ProtocolError("protocol: peer closed the stream");
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("protocol: poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ProtocolError(std::string("protocol: read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      eof_ = true;
    } else {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }
}

FileChannel::FileChannel(std::filesystem::path ask_path, std::filesystem::path tell_path)
    : ask_path_(std::move(ask_path)), tell_path_(std::move(tell_path)) {
  for (const auto& p : {ask_path_, tell_path_}) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw ProtocolError("protocol: cannot open '" + p.string() + "'");
  }
}

void FileChannel::send(const std::string& line) {
  std::ofstream out(ask_path_, std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw ProtocolError("protocol: cannot append to '" + ask_path_.string() + "'");
}

std::optional<std::string> FileChannel::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  while (true) {
    if (auto line = take_line(buffer_)) return line;
    std::ifstream in(tell_path_, std::ios::binary);
    if (in) {
      in.seekg(static_cast<std::streamoff>(offset_));
      std::string fresh((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      offset_ += fresh.size();
      buffer_ += fresh;
      if (!fresh.empty()) continue;
    }
    if (Clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

ProcessChannel::ProcessChannel(const std::string& command) : FdChannel(-1, -1) {
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw ProtocolError("objective: pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ProtocolError("objective: pipe failed");
  }
  ::signal(SIGPIPE, SIG_IGN);
  pid_ = ::fork();
  if (pid_ < 0) throw ProtocolError("objective: fork failed");
  if (pid_ == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  write_fd_ = to_child[1];
  read_fd_ = from_child[0];
}

ProcessChannel::~ProcessChannel() {
  if (write_fd_ >= 0) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  if (pid_ <= 0) return;
  // give the child a moment to exit on EOF, then kill it
  for (int k = 0; k < 100; ++k) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
}

json ask_message(const std::string& run_id, int t, int slot, const Query& query) {
  json x = json::array();
  for (Eigen::Index j = 0; j < query.x.size(); ++j) x.push_back(query.x[j]);
  json msg = {{"type", "ask"}, {"run", run_id}, {"t", t}, {"i", slot}, {"x", x}};
  if (query.domain_index) msg["index"] = *query.domain_index;
  return msg;
}

json tell_message(const std::string& run_id, int t, int slot, double y) {
  return {{"type", "tell"}, {"run", run_id}, {"t", t}, {"i", slot}, {"y", y}};
}

namespace {

[[noreturn]] void abort_run(LineChannel& channel, const std::string& run_id, const std::string& reason) {
  try {
    channel.send(json{{"type", "abort"}, {"run", run_id}, {"reason", reason}}.dump());
  } catch (const std::exception&) {
    // the peer may already be gone
  }
  throw ProtocolError("protocol: " + reason);
}

struct Tell {
  int t = 0;
  int slot = 0;
  double y = 0.0;
};

Tell parse_tell(const std::string& line, const std::string& run_id, std::string& error) {
  Tell tell;
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error&) {
    error = "malformed message: " + line;
    return tell;
  }
  if (!msg.is_object() || !msg.contains("type") || msg["type"] != "tell") {
    error = "expected a tell record, got: " + line;
    return tell;
  }
  for (const char* key : {"run", "t", "i", "y"}) {
    if (!msg.contains(key)) {
      error = std::string("tell without '") + key + "': " + line;
      return tell;
    }
  }
  if (!msg["run"].is_string() || !msg["t"].is_number_integer() || !msg["i"].is_number_integer() ||
      !msg["y"].is_number()) {
    error = "tell with wrongly typed fields: " + line;
    return tell;
  }
  if (msg["run"].get<std::string>() != run_id) {
    error = "tell for run '" + msg["run"].get<std::string>() + "', expected '" + run_id + "'";
    return tell;
  }
  tell.t = msg["t"].get<int>();
  tell.slot = msg["i"].get<int>();
  tell.y = msg["y"].get<double>();
  if (!std::isfinite(tell.y)) error = "tell with a non-finite y: " + line;
  return tell;
}

}  // namespace

void serve_campaign(Campaign& campaign, LineChannel& channel, const ServeOptions& options) {
  while (!campaign.finished()) {
    const PendingBatch& batch = campaign.pending();
    const int t = batch.iteration;
    const std::size_t slots = batch.queries.size();
    for (std::size_t i = 0; i < slots; ++i) {
      channel.send(ask_message(options.run_id, t, static_cast<int>(i), batch.queries[i]).dump());
    }
    std::vector<std::optional<double>> received(slots);
    std::size_t missing = slots;
    while (missing > 0) {
      std::optional<std::string> line;
      try {
        line = channel.receive(options.timeout);
      } catch (const ProtocolError& e) {
        throw ProtocolError(std::string(e.what()) + " while waiting for iteration " + std::to_string(t));
      }
      if (!line) {
        abort_run(channel, options.run_id,
                  "timed out waiting for tells of iteration " + std::to_string(t));
      }
      if (line->find_first_not_of(" \t") == std::string::npos) continue;
      std::string error;
      const Tell tell = parse_tell(*line, options.run_id, error);
      if (!error.empty()) abort_run(channel, options.run_id, error);
      if (tell.t != t || tell.slot < 0 || static_cast<std::size_t>(tell.slot) >= slots) {
        abort_run(channel, options.run_id,
                  "tell for (t=" + std::to_string(tell.t) + ", i=" + std::to_string(tell.slot) +
                      ") does not match a pending ask of iteration " + std::to_string(t));
      }
      auto& slot = received[static_cast<std::size_t>(tell.slot)];
      if (slot) {
        abort_run(channel, options.run_id,
                  "duplicate tell for (t=" + std::to_string(t) + ", i=" + std::to_string(tell.slot) + ")");
      }
      slot = tell.y;
      --missing;
    }
    std::vector<double> ys;
    std::vector<std::optional<double>> truths;
    for (std::size_t i = 0; i < slots; ++i) {
      ys.push_back(*received[i]);
      if (options.truth) truths.push_back(options.truth(batch.queries[i]));
    }
    campaign.commit(ys, truths);
    if (options.after_commit) options.after_commit(campaign);
  }
  channel.send(json{{"type", "done"}, {"run", options.run_id}}.dump());
}

}  // namespace stobnts
