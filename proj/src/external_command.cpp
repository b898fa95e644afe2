#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "mflal/oracle.hpp"

namespace mflal {
namespace {

std::string shell_quote(const std::string& text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

double timeout_from_environment(double fallback) {
  if (const char* value = std::getenv("MFLO_ORACLE_TIMEOUT_SECS")) {
    char* end = nullptr;
    const double parsed = std::strtod(value, &end);
    if (end != value && *end == '\0' && parsed > 0.0) return parsed;
  }
  return fallback;
}

std::optional<double> parse_single_float(const std::string& output) {
  std::istringstream in(output);
  std::string line, extra;
  if (!std::getline(in, line)) return std::nullopt;
  while (std::getline(in, extra)) {
    if (extra.find_first_not_of(" \t\r") != std::string::npos) return std::nullopt;
  }
  const auto first = line.find_first_not_of(" \t\r");
  const auto last = line.find_last_not_of(" \t\r");
  if (first == std::string::npos) return std::nullopt;
  line = line.substr(first, last - first + 1);
  char* end = nullptr;
  const double value = std::strtod(line.c_str(), &end);
  if (end == line.c_str() || *end != '\0' || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

OracleResult run_external_command(const std::string& command_template, const std::string& sequence,
                                  double timeout_secs) {
  OracleResult result;
  const auto slot = command_template.find("{seq}");
  if (slot == std::string::npos) {
    result.error = "command template has no {seq} placeholder";
    return result;
  }
  std::string command = command_template;
  command.replace(slot, 5, shell_quote(sequence));
  timeout_secs = timeout_from_environment(timeout_secs);

  int fds[2];
  if (pipe(fds) != 0) {
    result.error = "pipe failed";
    return result;
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    result.error = "fork failed";
    return result;
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(fds[1]);

  std::string output;
  bool timed_out = false;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_secs);
  char buffer[4096];
  for (;;) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) {
      timed_out = ready == 0;
      break;
    }
    const ssize_t n = read(fds[0], buffer, sizeof buffer);
    if (n <= 0) break;
    output.append(buffer, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  if (timed_out) kill(-pid, SIGKILL);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }

  if (timed_out) {
    result.error = "timed out after " + std::to_string(timeout_secs) + " s";
  } else if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    result.error = "command exited with status " +
                   std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1);
  } else if (auto value = parse_single_float(output)) {
    result.score = *value;
  } else {
    result.error = "could not parse a single float from output \"" + output.substr(0, 80) + "\"";
  }
  return result;
}

}  // namespace mflal
