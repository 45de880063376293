#include "tgr/protocol.hpp"

#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "tgr/errors.hpp"

namespace tgr {

using nlohmann::json;

namespace {

json make_request(std::string_view op, const json& payload) {
  return json{{"op", op}, {"payload", payload}};
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("write to protocol subprocess failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

json parse_reply(std::string_view line, std::string_view op) {
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError("malformed '" + std::string(op) + "' response: " + e.what());
  }
  return unwrap_response(reply, op);
}

}  // namespace

json unwrap_response(const json& response, std::string_view op) {
  const std::string what = "'" + std::string(op) + "' response";
  if (!response.is_object() || !response.contains("ok") || !response["ok"].is_boolean())
    throw ProtocolError(what + " lacks a boolean \"ok\" field");
  if (!response["ok"].get<bool>()) {
    std::string message = "unspecified error";
    if (response.contains("error") && response["error"].is_string())
      message = response["error"].get<std::string>();
    throw ProtocolError(what + " reported failure: " + message);
  }
  if (!response.contains("result")) throw ProtocolError(what + " lacks a \"result\" field");
  return response["result"];
}

SubprocessChannel::SubprocessChannel(std::string command) : command_(std::move(command)) {
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
    throw ProtocolError("cannot create pipes for '" + command_ + "'");
  pid_ = ::fork();
  if (pid_ < 0) throw ProtocolError("cannot fork for '" + command_ + "'");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessChannel::~SubprocessChannel() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

json SubprocessChannel::call(std::string_view op, const json& payload) {
  std::lock_guard lock(mutex_);
  write_all(to_child_, make_request(op, payload).dump() + "\n");
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return parse_reply(line, op);
    }
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ProtocolError("protocol subprocess '" + command_ + "' closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

HttpChannel::HttpChannel(std::string_view url) {
  constexpr std::string_view scheme = "http://";
  if (!url.starts_with(scheme)) throw ValidationError("endpoint '" + std::string(url) + "' is not http://");
  std::string_view rest = url.substr(scheme.size());
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  path_ = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    const std::string port(authority.substr(colon + 1));
    try {
      std::size_t used = 0;
      port_ = std::stoi(port, &used);
      if (used != port.size() || port_ <= 0 || port_ > 65535) throw std::out_of_range(port);
    } catch (const std::exception&) {
      throw ValidationError("endpoint '" + std::string(url) + "' has an invalid port");
    }
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw ValidationError("endpoint '" + std::string(url) + "' has no host");
  host_ = std::string(authority);
}

json HttpChannel::call(std::string_view op, const json& payload) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  auto res = client.Post(path_, make_request(op, payload).dump() + "\n", "application/json");
  if (!res)
    throw ProtocolError("HTTP request to " + host_ + ":" + std::to_string(port_) + path_ +
                        " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ProtocolError("HTTP endpoint " + host_ + path_ + " answered status " +
                        std::to_string(res->status));
  return parse_reply(res->body, op);
}

std::unique_ptr<WireChannel> open_channel(std::string_view descriptor) {
  if (descriptor.starts_with("exec:")) {
    std::string command(descriptor.substr(5));
    if (command.empty()) throw ValidationError("exec endpoint has an empty command");
    return std::make_unique<SubprocessChannel>(std::move(command));
  }
  if (descriptor.starts_with("http://")) return std::make_unique<HttpChannel>(descriptor);
  throw ValidationError("unsupported endpoint descriptor '" + std::string(descriptor) +
                        "' (expected exec:<command> or http://host:port/path)");
}

std::string WireTranscriber::transcribe(const std::string& audio_ref, const TimeInterval& interval) {
  json result = channel_->call(
      "transcribe", {{"audio_ref", audio_ref}, {"start", interval.start()}, {"end", interval.end()}});
  if (!result.is_string()) throw ProtocolError("transcribe result is not a string");
  return result.get<std::string>();
}

std::string WireJudge::judge(const JudgeRequest& request) {
  json result = channel_->call("judge", {{"sample_id", request.sample_id},
                                         {"question", request.question},
                                         {"choices", request.choices},
                                         {"reasoning", request.reasoning},
                                         {"answer", request.answer},
                                         {"prompt", render_judge_prompt(request)}});
  if (result.is_string()) return result.get<std::string>();
  return result.dump();
}

json serve_request(const json& request, Transcriber* transcriber, Judge* judge) {
  try {
    if (!request.is_object() || !request.contains("op") || !request["op"].is_string())
      return json{{"ok", false}, {"error", "request lacks a string \"op\""}};
    const std::string op = request["op"].get<std::string>();
    const json payload = request.value("payload", json::object());
    if (op == "transcribe" && transcriber) {
      const TimeInterval interval(payload.at("start").get<double>(), payload.at("end").get<double>());
      return json{{"ok", true},
                  {"result", transcriber->transcribe(payload.at("audio_ref").get<std::string>(), interval)}};
    }
    if (op == "judge" && judge) {
      JudgeRequest r;
      r.sample_id = payload.value("sample_id", "");
      r.question = payload.value("question", "");
      r.choices = payload.value("choices", std::vector<std::string>{});
      r.reasoning = payload.at("reasoning").get<std::string>();
      r.answer = payload.at("answer").get<std::string>();
      return json{{"ok", true}, {"result", judge->judge(r)}};
    }
    return json{{"ok", false}, {"error", "unsupported op '" + op + "'"}};
  } catch (const std::exception& e) {
    return json{{"ok", false}, {"error", e.what()}};
  }
}

}  // namespace tgr
