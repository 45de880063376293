#pragma once

// Line-delimited JSON wire for external transcribers and judges.
//
//   request : {"op": "transcribe" | "judge", "payload": {...}}
//   response: {"ok": true, "result": ...} or {"ok": false, "error": "..."}
//
// transcribe payload: {audio_ref, start, end}; result is a string.
// judge payload     : {sample_id, question, choices, reasoning, answer, prompt};
//                     result is the raw verdict string.
//
// Endpoint descriptors:
//   exec:<shell command>   one child process, one request line per response line
//   http://host:port/path  one POST per request, body and reply are single JSON lines

#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tgr/behavior.hpp"

namespace tgr {

class WireChannel {
 public:
  virtual ~WireChannel() = default;
  /// Sends one request and returns the "result" member of a successful response.
  /// Transport failures and {"ok": false} replies raise ProtocolError.
  virtual nlohmann::json call(std::string_view op, const nlohmann::json& payload) = 0;
};

/// Checks a decoded response envelope and extracts its result.
nlohmann::json unwrap_response(const nlohmann::json& response, std::string_view op);

/// Child process speaking the wire on stdin/stdout. Calls are serialized.
/// Ignores SIGPIPE for the process so a dead child surfaces as an error.
class SubprocessChannel : public WireChannel {
 public:
  explicit SubprocessChannel(std::string command);
  ~SubprocessChannel() override;
  SubprocessChannel(const SubprocessChannel&) = delete;
  SubprocessChannel& operator=(const SubprocessChannel&) = delete;

  nlohmann::json call(std::string_view op, const nlohmann::json& payload) override;

 private:
  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::mutex mutex_;
};

class HttpChannel : public WireChannel {
 public:
  /// `url` of the form http://host[:port][/path].
  explicit HttpChannel(std::string_view url);
  nlohmann::json call(std::string_view op, const nlohmann::json& payload) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
};

/// Builds a channel from an endpoint descriptor; throws ValidationError on unknown schemes.
std::unique_ptr<WireChannel> open_channel(std::string_view descriptor);

class WireTranscriber : public Transcriber {
 public:
  explicit WireTranscriber(std::shared_ptr<WireChannel> channel) : channel_(std::move(channel)) {}
  std::string transcribe(const std::string& audio_ref, const TimeInterval& interval) override;

 private:
  std::shared_ptr<WireChannel> channel_;
};

class WireJudge : public Judge {
 public:
  explicit WireJudge(std::shared_ptr<WireChannel> channel) : channel_(std::move(channel)) {}
  std::string judge(const JudgeRequest& request) override;

 private:
  std::shared_ptr<WireChannel> channel_;
};

/// Serves one request with the given backends and returns the response envelope.
/// Used by the mock protocol server.
nlohmann::json serve_request(const nlohmann::json& request, Transcriber* transcriber, Judge* judge);

}  // namespace tgr
