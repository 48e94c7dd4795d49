#include <cstdint>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pdpnet/engine.hpp"

namespace pdpnet {

namespace {

using nlohmann::json;

// FNV-1a over the payload text; cheap integrity check against truncation.
std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json docs_to_json(const std::vector<DocTokens>& docs) {
  json arr = json::array();
  for (const auto& d : docs) {
    json jd;
    jd["author"] = d.author;
    jd["symbols"] = d.symbols;
    jd["topics"] = d.topics;
    arr.push_back(std::move(jd));
  }
  return arr;
}

std::vector<DocTokens> docs_from_json(const json& arr) {
  std::vector<DocTokens> docs;
  for (const auto& jd : arr) {
    DocTokens d;
    d.author = jd.at("author").get<std::uint32_t>();
    d.symbols = jd.at("symbols").get<std::vector<std::vector<std::uint32_t>>>();
    d.topics = jd.at("topics").get<std::vector<std::vector<std::uint32_t>>>();
    docs.push_back(std::move(d));
  }
  return docs;
}

json chain_to_json(const ChainArchive& a) {
  json j;
  j["live_topic_ids"] = a.live_topic_ids;
  j["next_topic_id"] = a.next_topic_id;
  j["group_concentration"] = a.group_concentration;
  json counts = json::array();
  for (const auto& tmpl : a.counts) {
    json reps = json::array();
    for (const auto& rep : tmpl) reps.push_back(json::array({rep.first, rep.second}));
    counts.push_back(std::move(reps));
  }
  j["counts"] = std::move(counts);
  j["tsplit"] = a.tsplit;
  j["docs"] = docs_to_json(a.docs);
  return j;
}

ChainArchive chain_from_json(const json& j) {
  ChainArchive a;
  a.live_topic_ids = j.at("live_topic_ids").get<std::vector<std::uint32_t>>();
  a.next_topic_id = j.at("next_topic_id").get<std::uint32_t>();
  a.group_concentration = j.at("group_concentration").get<std::map<std::string, double>>();
  for (const auto& tmpl : j.at("counts")) {
    std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> reps;
    for (const auto& rep : tmpl) {
      if (!rep.is_array() || rep.size() != 2) throw DataError("snapshot: malformed count entry");
      reps.emplace_back(rep[0].get<std::vector<std::uint32_t>>(),
                        rep[1].get<std::vector<std::uint32_t>>());
    }
    a.counts.push_back(std::move(reps));
  }
  a.tsplit =
      j.at("tsplit").get<std::vector<std::vector<std::vector<std::vector<std::uint32_t>>>>>();
  a.docs = docs_from_json(j.at("docs"));
  return a;
}

}  // namespace

std::string encode_snapshot(const Snapshot& snap) {
  json payload;
  payload["version"] = snap.version;
  payload["iteration"] = snap.iteration;
  payload["graph"] = json::parse(snap.graph.to_json());
  payload["n_authors"] = snap.n_authors;
  payload["vocab"] = snap.vocab;
  payload["chain"] = chain_to_json(snap.chain);
  json gp;
  gp["has_gp"] = snap.has_gp;
  gp["kernel"] = snap.kernel == KernelKind::Cosine ? "cosine" : "original";
  gp["signal"] = snap.kernel_params.signal;
  gp["lengthscale"] = snap.kernel_params.lengthscale;
  gp["noise"] = snap.kernel_params.noise;
  gp["jitter"] = snap.kernel_params.jitter;
  json pairs = json::array();
  for (const auto& p : snap.pairs.pairs) pairs.push_back(json::array({p.a, p.b}));
  gp["pairs"] = std::move(pairs);
  gp["x"] = snap.pairs.x;
  gp["f"] = snap.f;
  payload["gp"] = std::move(gp);
  payload["rng_text"] = snap.rng_text;
  payload["rng_net"] = snap.rng_net;
  json sched;
  sched["text_only_burnin"] = snap.text_only_burnin;
  sched["hyper_resample_every"] = snap.hyper_resample_every;
  sched["gp_inner_steps"] = snap.gp_inner_steps;
  sched["gp_step"] = snap.gp_step;
  sched["prior_shape"] = snap.prior_shape;
  sched["prior_rate"] = snap.prior_rate;
  payload["schedule"] = std::move(sched);

  std::string body = payload.dump();
  json envelope;
  envelope["checksum"] = fnv1a_hex(body);
  envelope["payload"] = std::move(payload);
  return envelope.dump();
}

Snapshot decode_snapshot(const std::string& blob) {
  json envelope;
  try {
    envelope = json::parse(blob);
  } catch (const json::exception& e) {
    throw DataError(std::string("snapshot: unreadable blob: ") + e.what());
  }
  try {
    if (!envelope.contains("payload") || !envelope.contains("checksum"))
      throw DataError("snapshot: missing envelope fields");
    const json& payload = envelope["payload"];
    if (fnv1a_hex(payload.dump()) != envelope["checksum"].get<std::string>())
      throw DataError("snapshot: checksum mismatch (truncated or edited file)");

    Snapshot snap;
    snap.version = payload.at("version").get<std::uint32_t>();
    if (snap.version != 1) throw DataError("snapshot: unsupported version");
    snap.iteration = payload.at("iteration").get<std::uint32_t>();
    snap.graph = GraphSpec::from_json(payload.at("graph").dump());
    snap.n_authors = payload.at("n_authors").get<std::uint32_t>();
    snap.vocab = payload.at("vocab").get<std::uint32_t>();
    snap.chain = chain_from_json(payload.at("chain"));
    const json& gp = payload.at("gp");
    snap.has_gp = gp.at("has_gp").get<bool>();
    std::string kernel = gp.at("kernel").get<std::string>();
    if (kernel == "cosine")
      snap.kernel = KernelKind::Cosine;
    else if (kernel == "original")
      snap.kernel = KernelKind::Original;
    else
      throw DataError("snapshot: unknown kernel " + kernel);
    snap.kernel_params.signal = gp.at("signal").get<double>();
    snap.kernel_params.lengthscale = gp.at("lengthscale").get<double>();
    snap.kernel_params.noise = gp.at("noise").get<double>();
    snap.kernel_params.jitter = gp.at("jitter").get<double>();
    for (const auto& jp : gp.at("pairs")) {
      if (!jp.is_array() || jp.size() != 2) throw DataError("snapshot: malformed pair");
      snap.pairs.pairs.push_back({jp[0].get<std::uint32_t>(), jp[1].get<std::uint32_t>()});
    }
    snap.pairs.x = gp.at("x").get<std::vector<std::uint8_t>>();
    snap.f = gp.at("f").get<std::vector<double>>();
    snap.rng_text = payload.at("rng_text").get<std::string>();
    snap.rng_net = payload.at("rng_net").get<std::string>();
    const json& sched = payload.at("schedule");
    snap.text_only_burnin = sched.at("text_only_burnin").get<std::uint32_t>();
    snap.hyper_resample_every = sched.at("hyper_resample_every").get<std::uint32_t>();
    snap.gp_inner_steps = sched.at("gp_inner_steps").get<std::uint32_t>();
    snap.gp_step = sched.at("gp_step").get<double>();
    snap.prior_shape = sched.at("prior_shape").get<double>();
    snap.prior_rate = sched.at("prior_rate").get<double>();
    return snap;
  } catch (const json::exception& e) {
    throw DataError(std::string("snapshot: malformed payload: ") + e.what());
  }
}

void write_snapshot(const Snapshot& snap, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open snapshot file for writing: " + path);
  out << encode_snapshot(snap);
  out.flush();
  if (!out) throw DataError("failed writing snapshot file: " + path);
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("failed reading snapshot file: " + path);
  return decode_snapshot(ss.str());
}

}  // namespace pdpnet
