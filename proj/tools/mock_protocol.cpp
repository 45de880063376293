// Mock transcriber/judge server for the line-delimited JSON protocol.
//
// Reads one request per stdin line and answers on stdout, or serves the same
// envelopes over HTTP with --http. Transcription echoes the words of the
// transcripts given with --transcripts; judging returns 1 when the answer label
// appears in the reasoning.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "tgr/behavior.hpp"
#include "tgr/io.hpp"
#include "tgr/protocol.hpp"

namespace {

class FixedJudge : public tgr::Judge {
 public:
  explicit FixedJudge(std::string reply) : reply_(std::move(reply)) {}
  std::string judge(const tgr::JudgeRequest&) override { return reply_; }

 private:
  std::string reply_;
};

nlohmann::json answer(std::string_view line, tgr::Transcriber* transcriber, tgr::Judge* judge) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    return {{"ok", false}, {"error", std::string("malformed request: ") + e.what()}};
  }
  return tgr::serve_request(request, transcriber, judge);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mock transcriber and judge for the tgr wire protocol", "tgr-mock-protocol"};
  std::string transcripts_path;
  std::optional<std::string> judge_reply;
  int http_port = -1;
  app.add_option("--transcripts", transcripts_path, "Word-timed transcript JSONL keyed by audio_ref");
  app.add_option("--judge-reply", judge_reply, "Reply with this text to every judge request");
  app.add_option("--http", http_port, "Serve over HTTP on this port (0 picks one and prints it)");
  CLI11_PARSE(app, argc, argv);

  tgr::EchoTranscriber transcriber;
  if (!transcripts_path.empty()) {
    std::ifstream in(transcripts_path, std::ios::binary);
    if (!in) {
      std::cerr << "cannot open " << transcripts_path << "\n";
      return 2;
    }
    try {
      for (auto& t : tgr::read_transcripts(in, transcripts_path)) transcriber.add(std::move(t));
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
  }
  tgr::TextMatchJudge text_match;
  FixedJudge fixed(judge_reply.value_or(""));
  tgr::Judge* judge = judge_reply ? static_cast<tgr::Judge*>(&fixed) : &text_match;

  if (http_port >= 0) {
    httplib::Server server;
    server.Post(".*", [&](const httplib::Request& req, httplib::Response& res) {
      res.set_content(answer(req.body, &transcriber, judge).dump() + "\n", "application/json");
    });
    int port = http_port;
    if (port == 0) port = server.bind_to_any_port("127.0.0.1");
    else if (!server.bind_to_port("127.0.0.1", port)) port = -1;
    if (port < 0) {
      std::cerr << "cannot bind port " << http_port << "\n";
      return 2;
    }
    std::cout << port << std::endl;
    return server.listen_after_bind() ? 0 : 2;
  }

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    std::cout << answer(line, &transcriber, judge).dump() << "\n" << std::flush;
  }
  return 0;
}
