#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stobnts/engine.hpp"

namespace stobnts {

/// Malformed message, id mismatch, timeout or a closed stream.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bidirectional stream of newline-terminated records.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void send(const std::string& line) = 0;
  /// Next complete line without its terminator, or nullopt once `timeout`
  /// has passed. Throws ProtocolError when the peer has closed the stream.
  virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
};

/// Reads from one descriptor, writes to another. Does not own them.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

  void send(const std::string& line) override;
  std::optional<std::string> receive(std::chrono::milliseconds timeout) override;

 protected:
  int read_fd_;
  int write_fd_;

 private:
  std::string buffer_;
  bool eof_ = false;
};

/// Asks are appended to `ask_path`; tells are read from `tell_path` as the
/// peer appends to it. Both files are truncated when the channel opens.
class FileChannel : public LineChannel {
 public:
  FileChannel(std::filesystem::path ask_path, std::filesystem::path tell_path);

  void send(const std::string& line) override;
  std::optional<std::string> receive(std::chrono::milliseconds timeout) override;

 private:
  std::filesystem::path ask_path_;
  std::filesystem::path tell_path_;
  std::uintmax_t offset_ = 0;
  std::string buffer_;
};

/// Runs `sh -c command` with its stdin/stdout connected to the channel.
/// The child inherits stderr. Destruction closes the pipes and reaps it.
class ProcessChannel : public FdChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;

  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

 private:
  pid_t pid_ = -1;
};

nlohmann::json ask_message(const std::string& run_id, int t, int slot, const Query& query);
nlohmann::json tell_message(const std::string& run_id, int t, int slot, double y);

struct ServeOptions {
  std::string run_id = "run";
  std::chrono::milliseconds timeout{60000};
  std::function<void(const Campaign&)> after_commit;
  /// True value at a query, when the harness knows it.
  std::function<std::optional<double>(const Query&)> truth;
};

/// Drives the campaign through the channel: for each batch it sends one ask
/// per slot, waits for a tell for every slot (in any order), commits in slot
/// order and calls after_commit. Sends {"type": "done"} at the end. Any
/// protocol violation sends {"type": "abort"} and throws ProtocolError.
void serve_campaign(Campaign& campaign, LineChannel& channel, const ServeOptions& options);

}  // namespace stobnts
