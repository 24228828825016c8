#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "onion/lm.hpp"

namespace onion::lm {

// Client for an external perplexity service.
//
// Wire protocol: POST <endpoint>/perplexity with body
//   {"texts": ["...", ...]}
// answered by
//   {"perplexities": [<number|null>, ...]}
// of equal length, matched by position. null stands for +infinity (JSON has
// no infinity literal). Non-2xx status, unparsable bodies and length
// mismatches raise ProtocolError naming the failing batch.
class RemoteScorerClient final : public PerplexityScorer {
 public:
  struct Options {
    std::chrono::milliseconds timeout{30000};
    std::size_t batch_size = 64;
  };

  explicit RemoteScorerClient(std::string endpoint) : RemoteScorerClient(std::move(endpoint), Options{}) {}
  RemoteScorerClient(std::string endpoint, Options options);

  double perplexity(const text::Sentence& s) const override;
  std::vector<double> perplexities(std::span<const text::Sentence> batch) const override;

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::vector<double> post_batch(std::span<const text::Sentence> batch, std::size_t offset) const;

  std::string endpoint_;
  std::string host_;
  std::string path_prefix_;
  Options options_;
};

// Serves any scorer over the protocol above. Request texts are tokenized
// with text::tokenize before scoring.
class ScorerServer {
 public:
  explicit ScorerServer(const PerplexityScorer& scorer);
  ~ScorerServer();

  ScorerServer(const ScorerServer&) = delete;
  ScorerServer& operator=(const ScorerServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and serves on a
  // background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  // Serves on the calling thread until stop() is called from elsewhere.
  void listen_blocking(const std::string& host, int port);

  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Heap-allocated scorer for an `--lm` argument: http(s) URLs become remote
// clients, anything else is loaded as an n-gram dump.
std::unique_ptr<PerplexityScorer> open_scorer(const std::string& path_or_url);

}  // namespace onion::lm
