#include "coex/bank.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace coex {

using nlohmann::json;

BankOp BankOp::make_add(std::string text, Provenance prov) {
  BankOp op;
  op.kind = Kind::add;
  op.text = std::move(text);
  op.provenance = std::move(prov);
  return op;
}

BankOp BankOp::make_update(EntryId target, std::string text, Provenance prov) {
  BankOp op;
  op.kind = Kind::update;
  op.target_id = target;
  op.text = std::move(text);
  op.provenance = std::move(prov);
  return op;
}

BankOp BankOp::make_return() { return BankOp{}; }

ExperienceBank::ExperienceBank(std::shared_ptr<Embedder> embedder)
    : embedder_(std::move(embedder)) {
  if (!embedder_) throw std::invalid_argument("bank requires an embedder");
}

BankOpResult ExperienceBank::apply_op(const BankOp& op, int64_t step) {
  switch (op.kind) {
    case BankOp::Kind::ret:
      return {BankOpResult::Status::noop, std::nullopt};
    case BankOp::Kind::add: {
      ExperienceEntry e;
      e.id = next_id_++;
      e.text = op.text;
      e.embedding = embedder_->embed(op.text);
      e.provenance = op.provenance;
      e.created_step = step;
      EntryId id = e.id;
      entries_.emplace(id, std::move(e));
      return {BankOpResult::Status::applied, id};
    }
    case BankOp::Kind::update: {
      auto it = op.target_id ? entries_.find(*op.target_id) : entries_.end();
      if (it == entries_.end()) return {BankOpResult::Status::stale_target, std::nullopt};
      it->second.text = op.text;
      it->second.embedding = embedder_->embed(op.text);
      it->second.provenance = op.provenance;
      // counters survive in-place updates
      return {BankOpResult::Status::applied, it->first};
    }
  }
  return {BankOpResult::Status::noop, std::nullopt};
}

MergeReport ExperienceBank::merge_chunked(const MergeFn& merge_fn, size_t chunk_size,
                                          size_t text_cap) {
  if (chunk_size < 2) throw std::invalid_argument("merge chunk_size must be >= 2");
  MergeReport report;
  report.entries_before = entries_.size();
  if (entries_.empty()) {
    report.entries_after = 0;
    return report;
  }

  std::vector<ExperienceEntry> all;
  all.reserve(entries_.size());
  for (auto& [id, e] : entries_) all.push_back(e);

  std::vector<ExperienceEntry> carried;
  for (size_t off = 0; off < all.size(); off += chunk_size) {
    const size_t n = std::min(chunk_size, all.size() - off);
    std::span<const ExperienceEntry> chunk(all.data() + off, n);
    std::vector<ExperienceEntry> merged = merge_fn(chunk, carried);

    bool too_long = false;
    for (const auto& e : merged) {
      if (e.text.size() > text_cap) {
        too_long = true;
        break;
      }
    }
    if (too_long) {
      // Reject this chunk's decision: keep carried and the chunk unmerged.
      carried.insert(carried.end(), chunk.begin(), chunk.end());
    } else {
      carried = std::move(merged);
    }
    report.chunks_processed += 1;
  }

  std::map<EntryId, ExperienceEntry> next;
  for (auto& e : carried) {
    const ExperienceEntry* old = find(e.id);
    if (!old || old->text != e.text) e.embedding = embedder_->embed(e.text);
    EntryId id = e.id;
    next.emplace(id, std::move(e));
  }
  entries_ = std::move(next);
  report.entries_after = entries_.size();
  return report;
}

bool ExperienceBank::note_retrieved(EntryId id, int64_t retrieval_event) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return false;
  it->second.retrieval_count += 1;
  it->second.last_retrieved_step = retrieval_event;
  return true;
}

bool ExperienceBank::note_trained(EntryId id, int64_t step) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return false;
  it->second.training_count += 1;
  it->second.last_trained_step = step;
  return true;
}

const ExperienceEntry* ExperienceBank::find(EntryId id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<const ExperienceEntry*> ExperienceBank::entries() const {
  std::vector<const ExperienceEntry*> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(&e);
  return out;
}

std::vector<ExperienceEntry> ExperienceBank::snapshot() const {
  std::vector<ExperienceEntry> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(e);
  return out;
}

namespace {

// Embeddings are serialized with exactly 9 significant digits, which
// round-trips binary32 values losslessly.
void append_embedding(std::string& line, const EmbeddingVector& v) {
  char buf[32];
  line += '[';
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) line += ',';
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v[i]));
    line += buf;
  }
  line += ']';
}

json provenance_to_json(const Provenance& p) {
  return json{{"prompt", p.prompt},
              {"tokens", p.response_tokens},
              {"logprobs", p.response_logprobs},
              {"context_id", p.context_id}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.prompt = j.at("prompt").get<std::string>();
  p.response_tokens = j.at("tokens").get<std::vector<int32_t>>();
  p.response_logprobs = j.at("logprobs").get<std::vector<double>>();
  p.context_id = j.at("context_id").get<int32_t>();
  return p;
}

}  // namespace

void ExperienceBank::persist(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("bank persist: cannot open " + path);

  json header{{"format_version", 1}, {"embedding_dim", embedder_->dim()},
              {"next_id", next_id_}};
  out << header.dump() << '\n';

  for (const auto& [id, e] : entries_) {
    json j{{"id", e.id},
           {"text", e.text},
           {"provenance", provenance_to_json(e.provenance)},
           {"retrieval_count", e.retrieval_count},
           {"training_count", e.training_count},
           {"created_step", e.created_step}};
    j["last_retrieved_step"] =
        e.last_retrieved_step ? json(*e.last_retrieved_step) : json(nullptr);
    j["last_trained_step"] = e.last_trained_step ? json(*e.last_trained_step) : json(nullptr);
    std::string line = j.dump();
    line.pop_back();  // strip closing brace, splice the embedding array in
    line += ",\"embedding\":";
    append_embedding(line, e.embedding);
    line += '}';
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("bank persist: write failed for " + path);
}

ExperienceBank ExperienceBank::load(const std::string& path, std::shared_ptr<Embedder> embedder) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("bank load: cannot open " + path);

  ExperienceBank bank(std::move(embedder));
  std::string line;
  size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("bank load: " + what + " at line " + std::to_string(lineno) +
                             " of " + path);
  };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header");
  }
  lineno = 1;
  size_t dim = 0;
  try {
    json header = json::parse(line);
    if (header.at("format_version").get<int>() != 1) fail("unsupported format_version");
    dim = header.at("embedding_dim").get<size_t>();
    bank.next_id_ = header.at("next_id").get<EntryId>();
  } catch (const json::exception&) {
    fail("malformed header");
  }
  if (dim != bank.embedder_->dim()) fail("embedding_dim does not match configured embedder");

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      ExperienceEntry e;
      e.id = j.at("id").get<EntryId>();
      e.text = j.at("text").get<std::string>();
      e.provenance = provenance_from_json(j.at("provenance"));
      e.retrieval_count = j.at("retrieval_count").get<uint64_t>();
      e.training_count = j.at("training_count").get<uint64_t>();
      e.created_step = j.at("created_step").get<int64_t>();
      if (!j.at("last_retrieved_step").is_null())
        e.last_retrieved_step = j.at("last_retrieved_step").get<int64_t>();
      if (!j.at("last_trained_step").is_null())
        e.last_trained_step = j.at("last_trained_step").get<int64_t>();
      auto emb = j.at("embedding");
      if (emb.size() != dim) fail("embedding dimension mismatch");
      e.embedding.reserve(dim);
      for (const auto& x : emb) e.embedding.push_back(x.get<float>());
      EntryId id = e.id;
      if (bank.entries_.count(id)) fail("duplicate entry id");
      bank.entries_.emplace(id, std::move(e));
    } catch (const json::exception&) {
      fail("malformed entry record");
    }
  }
  return bank;
}

bool ExperienceBank::deep_equal(const ExperienceBank& other) const {
  return next_id_ == other.next_id_ && entries_ == other.entries_;
}

ExperienceBank ExperienceBank::from_snapshot(std::vector<ExperienceEntry> entries,
                                             std::shared_ptr<Embedder> embedder) {
  ExperienceBank bank(std::move(embedder));
  for (auto& e : entries) {
    bank.next_id_ = std::max(bank.next_id_, e.id + 1);
    EntryId id = e.id;
    bank.entries_.emplace(id, std::move(e));
  }
  return bank;
}

std::vector<ExperienceEntry> identity_merge(std::span<const ExperienceEntry> chunk,
                                            std::span<const ExperienceEntry> carried) {
  std::vector<ExperienceEntry> out(carried.begin(), carried.end());
  out.insert(out.end(), chunk.begin(), chunk.end());
  return out;
}

}  // namespace coex
