#include "coex/remote.hpp"

#include <cmath>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace coex {

using nlohmann::json;

namespace {

httplib::Client make_client(const std::string& host, int port, double timeout_s) {
  httplib::Client client(host, port);
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  return client;
}

json post_json(httplib::Client& client, const std::string& path, const json& body,
               const char* what) {
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw std::runtime_error(std::string(what) + ": request failed (timeout or refused)");
  if (res->status != 200)
    throw std::runtime_error(std::string(what) + ": HTTP " + std::to_string(res->status));
  return json::parse(res->body);
}

}  // namespace

// ---------------------------------------------------------------------------
// RemoteEmbedder
// ---------------------------------------------------------------------------

struct RemoteEmbedder::Impl {
  httplib::Client client;
  std::string path;
  Impl(const std::string& host, int port, std::string p, double timeout_s)
      : client(make_client(host, port, timeout_s)), path(std::move(p)) {}
};

RemoteEmbedder::RemoteEmbedder(std::string host, int port, std::string path, size_t dim,
                               double timeout_s)
    : impl_(std::make_unique<Impl>(host, port, std::move(path), timeout_s)), dim_(dim) {}

RemoteEmbedder::~RemoteEmbedder() = default;

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
  json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  json reply = post_json(impl_->client, impl_->path, body, "remote embedder");
  std::vector<EmbeddingVector> out;
  for (const auto& row : reply.at("vectors")) {
    EmbeddingVector v = row.get<EmbeddingVector>();
    if (v.size() != dim_) throw std::runtime_error("remote embedder: wrong dimension");
    out.push_back(std::move(v));
  }
  if (out.size() != texts.size())
    throw std::runtime_error("remote embedder: wrong batch length");
  return out;
}

// ---------------------------------------------------------------------------
// RemoteExtractor
// ---------------------------------------------------------------------------

struct RemoteExtractor::Impl {
  httplib::Client client;
  std::string path;
  Impl(const std::string& host, int port, std::string p, double timeout_s)
      : client(make_client(host, port, timeout_s)), path(std::move(p)) {}
};

RemoteExtractor::RemoteExtractor(std::string host, int port, std::string path, double timeout_s,
                                 double merge_threshold)
    : impl_(std::make_unique<Impl>(host, port, std::move(path), timeout_s)),
      merge_threshold_(merge_threshold) {}

RemoteExtractor::~RemoteExtractor() = default;

BankOp RemoteExtractor::distill(const DistillationRequest& req) {
  json body{{"mode", "distill"},
            {"goal", req.goal},
            {"outcome", req.outcome == Outcome::success ? "success" : "failure"},
            {"guided", req.guiding_entry_id.has_value()},
            {"trace_steps", req.trajectory.steps_taken},
            {"injected", req.trajectory.injected_text}};
  json reply = post_json(impl_->client, impl_->path, body, "remote extractor");
  const std::string op = reply.at("op").get<std::string>();
  Provenance prov;
  prov.prompt = body.dump();
  if (op == "return") return BankOp::make_return();
  const std::string text = reply.at("text").get<std::string>();
  if (op == "add") return BankOp::make_add(text, std::move(prov));
  if (op == "update") {
    if (!req.guiding_entry_id)
      return BankOp::make_add(text, std::move(prov));  // no target to update
    return BankOp::make_update(*req.guiding_entry_id, text, std::move(prov));
  }
  throw std::runtime_error("remote extractor: unknown op '" + op + "'");
}

std::string RemoteExtractor::refine(const std::string& query_context,
                                    const std::string& entry_text) {
  json body{{"mode", "refine"}, {"query", query_context}, {"entry", entry_text}};
  json reply = post_json(impl_->client, impl_->path, body, "remote extractor");
  return reply.at("text").get<std::string>();
}

std::vector<ExperienceEntry> RemoteExtractor::merge_decide(
    std::span<const ExperienceEntry> chunk, std::span<const ExperienceEntry> carried) {
  // merge decisions stay local: the cosine collapse rule needs embeddings
  return collapse_similar(chunk, carried, merge_threshold_);
}

std::vector<double> RemoteExtractor::token_logprobs(int32_t, std::span<const int32_t>) const {
  return {};  // no token-level access over the wire
}

// ---------------------------------------------------------------------------
// RemoteActor
// ---------------------------------------------------------------------------

struct RemoteActor::Impl {
  httplib::Client client;
  std::string path;
  Impl(const std::string& host, int port, std::string p, double timeout_s)
      : client(make_client(host, port, timeout_s)), path(std::move(p)) {}
};

RemoteActor::RemoteActor(std::string host, int port, std::string path, double timeout_s)
    : impl_(std::make_unique<Impl>(host, port, std::move(path), timeout_s)) {}

RemoteActor::~RemoteActor() = default;

ActionChoice RemoteActor::act(const PolicyContext& ctx, std::mt19937_64&) {
  return act_greedy(ctx);
}

ActionChoice RemoteActor::act_greedy(const PolicyContext& ctx) {
  json body{{"messages",
             json::array({json{{"role", "user"}, {"content", ctx.obs->text}}})}};
  json reply = post_json(impl_->client, impl_->path, body, "remote actor");
  const std::string action =
      reply.at("choices").at(0).at("message").at("content").get<std::string>();
  return {action, 1.0};
}

double RemoteActor::trajectory_logprob(const Trajectory&) const {
  return 0.0;  // behavior probability 1.0 per step
}

}  // namespace coex
