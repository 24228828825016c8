#include "onion/remote.hpp"

#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "onion/errors.hpp"

namespace onion::lm {

using nlohmann::json;
using text::Sentence;

namespace {

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

std::string describe_batch(std::span<const Sentence> batch, std::size_t offset) {
  std::string msg = "batch [" + std::to_string(offset) + ", " + std::to_string(offset + batch.size()) + ")";
  if (!batch.empty()) msg += " starting with \"" + batch.front().join() + "\"";
  return msg;
}

}  // namespace

RemoteScorerClient::RemoteScorerClient(std::string endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(options) {
  if (!is_url(endpoint_)) throw UsageError("remote scorer endpoint must be an http(s) URL: " + endpoint_);
  if (options_.batch_size == 0) throw UsageError("remote scorer batch_size must be >= 1");
  const auto scheme_end = endpoint_.find("://") + 3;
  const auto slash = endpoint_.find('/', scheme_end);
  host_ = endpoint_.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : endpoint_.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

double RemoteScorerClient::perplexity(const Sentence& s) const {
  return perplexities(std::span<const Sentence>(&s, 1)).front();
}

std::vector<double> RemoteScorerClient::perplexities(std::span<const Sentence> batch) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t off = 0; off < batch.size(); off += options_.batch_size) {
    const auto chunk = batch.subspan(off, std::min(options_.batch_size, batch.size() - off));
    auto part = post_batch(chunk, off);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<double> RemoteScorerClient::post_batch(std::span<const Sentence> batch, std::size_t offset) const {
  json body;
  body["texts"] = json::array();
  for (const auto& s : batch) body["texts"].push_back(s.join());

  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  auto res = client.Post(path_prefix_ + "/perplexity", body.dump(), "application/json");
  if (!res) {
    throw ProtocolError("remote scorer " + endpoint_ + ": transport failure (" + httplib::to_string(res.error()) +
                        ") on " + describe_batch(batch, offset));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProtocolError("remote scorer " + endpoint_ + ": HTTP " + std::to_string(res->status) + " on " +
                        describe_batch(batch, offset));
  }
  std::vector<double> values;
  try {
    const auto reply = json::parse(res->body);
    const auto& arr = reply.at("perplexities");
    if (!arr.is_array()) throw ProtocolError("'perplexities' is not an array");
    for (const auto& v : arr) {
      if (v.is_null()) {
        values.push_back(kInfinity);
      } else if (v.is_number()) {
        values.push_back(v.get<double>());
      } else {
        throw ProtocolError("non-numeric perplexity");
      }
    }
  } catch (const std::exception& e) {
    throw ProtocolError("remote scorer " + endpoint_ + ": malformed reply (" + e.what() + ") on " +
                        describe_batch(batch, offset));
  }
  if (values.size() != batch.size()) {
    throw ProtocolError("remote scorer " + endpoint_ + ": expected " + std::to_string(batch.size()) +
                        " perplexities, got " + std::to_string(values.size()) + " on " +
                        describe_batch(batch, offset));
  }
  return values;
}

// ---------------------------------------------------------------------------

struct ScorerServer::Impl {
  const PerplexityScorer& scorer;
  httplib::Server server;
  std::thread worker;

  explicit Impl(const PerplexityScorer& s) : scorer(s) {
    server.Post("/perplexity", [this](const httplib::Request& req, httplib::Response& res) {
      std::vector<Sentence> batch;
      try {
        const auto body = json::parse(req.body);
        for (const auto& t : body.at("texts")) batch.push_back(text::tokenize(t.get<std::string>()));
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        return;
      }
      json reply;
      reply["perplexities"] = json::array();
      for (double p : scorer.perplexities(batch)) {
        if (std::isfinite(p)) {
          reply["perplexities"].push_back(p);
        } else {
          reply["perplexities"].push_back(nullptr);
        }
      }
      res.set_content(reply.dump(), "application/json");
    });
  }
};

ScorerServer::ScorerServer(const PerplexityScorer& scorer) : impl_(std::make_unique<Impl>(scorer)) {}

ScorerServer::~ScorerServer() { stop(); }

int ScorerServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("scorer server: cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ScorerServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw Error("scorer server: cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ScorerServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::unique_ptr<PerplexityScorer> open_scorer(const std::string& path_or_url) {
  if (is_url(path_or_url)) return std::make_unique<RemoteScorerClient>(path_or_url);
  return std::make_unique<NGramLm>(NGramLm::load(path_or_url));
}

}  // namespace onion::lm
