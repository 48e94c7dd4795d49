#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pdpnet/engine.hpp"
#include "pdpnet/eval.hpp"

using namespace pdpnet;
namespace fs = std::filesystem;

namespace {

SynthData small_data(std::uint64_t seed = 3) {
  SynthParams p;
  p.n_authors = 8;
  p.docs_per_author = 6;
  p.words_per_doc = 8;
  p.tags_per_doc = 2;
  p.topics = 3;
  p.vocab_size = 30;
  Rng rng(seed);
  return generate_synthetic(p, rng);
}

EngineConfig small_config(std::uint32_t total = 8, std::uint32_t burnin = 4) {
  EngineConfig cfg;
  cfg.kind = ModelKind::Tn;
  cfg.model.vocab_size = 30;
  cfg.schedule.total_iterations = total;
  cfg.schedule.text_only_burnin = burnin;
  cfg.schedule.snapshot_every = 4;
  cfg.schedule.seed = 11;
  return cfg;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') n++;
  return n;
}

}  // namespace

TEST_CASE("schedule validation") {
  Schedule s;
  CHECK_NOTHROW(s.validate());
  s.total_iterations = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = Schedule{};
  s.text_only_burnin = s.total_iterations + 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = Schedule{};
  s.hyper_resample_every = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = Schedule{};
  s.gp_step = 1.5;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("corpus maps onto graph leaves by stream") {
  SynthData data = small_data();
  ModelConfig mc;
  mc.vocab_size = 30;
  CompiledGraph g = compile(build_tn_graph(mc));
  auto docs = docs_from_corpus(g, data.corpus);
  REQUIRE(docs.size() == data.corpus.docs.size());
  // leaf 0 carries hashtags, leaf 1 words
  CHECK(docs[0].symbols[0] == data.corpus.docs[0].tags);
  CHECK(docs[0].symbols[1] == data.corpus.docs[0].words);
  CHECK(docs[0].author == data.corpus.docs[0].author);

  mc.flags.no_hashtag = true;
  CompiledGraph nh = compile(build_tn_graph(mc));
  auto docs2 = docs_from_corpus(nh, data.corpus);
  REQUIRE(docs2[0].symbols.size() == 1);
  CHECK(docs2[0].symbols[0] == data.corpus.docs[0].words);
}

TEST_CASE("network phase gating") {
  EngineConfig cfg = small_config();
  CHECK(network_runs(cfg));
  cfg.model.flags.no_network = true;
  CHECK_FALSE(network_runs(cfg));
  cfg = small_config();
  cfg.model.flags.no_author = true;
  CHECK_FALSE(network_runs(cfg));
  cfg = small_config();
  cfg.kind = ModelKind::HdpLda;
  CHECK_FALSE(network_runs(cfg));

  // enabled network with no edges is a configuration error
  SynthData data = small_data();
  CHECK_THROWS_AS(run_engine(small_config(), data.corpus, {}), ValidationError);
}

TEST_CASE("trace format") {
  SynthData data = small_data();
  EngineConfig cfg = small_config(6, 3);
  RunResult res = run_engine(cfg, data.corpus, data.edges);
  std::string csv = res.trace.to_csv();
  CHECK(csv.rfind("iter,text_ll,net_ll,topics,beta_topic,beta_vocab,gp_accept,ms\n", 0) == 0);
  CHECK(count_lines(csv) == 7);  // header + one row per iteration
  REQUIRE(res.trace.rows.size() == 6);
  // network columns appear only after the text-only burn-in
  CHECK_FALSE(res.trace.rows[0].net_ll.has_value());
  CHECK_FALSE(res.trace.rows[2].gp_accept.has_value());
  CHECK(res.trace.rows[3].net_ll.has_value());
  CHECK(res.trace.rows[5].gp_accept.has_value());
  for (const auto& row : res.trace.rows) {
    CHECK(row.ms == 0.0);  // timing off by default for stable bytes
    CHECK(row.topics > 0);
  }
  CHECK(res.gp.has_value());
  CHECK_FALSE(res.gp_basis.empty());
}

TEST_CASE("identical seeds give identical runs") {
  SynthData data = small_data();
  EngineConfig cfg = small_config();
  RunResult a = run_engine(cfg, data.corpus, data.edges);
  RunResult b = run_engine(cfg, data.corpus, data.edges);
  CHECK(a.trace.to_csv() == b.trace.to_csv());
  CHECK(encode_snapshot(a.final_snapshot) == encode_snapshot(b.final_snapshot));

  EngineConfig other = cfg;
  other.schedule.seed = 12;
  RunResult c = run_engine(other, data.corpus, data.edges);
  CHECK(a.trace.to_csv() != c.trace.to_csv());
}

TEST_CASE("network coupling leaves the burn-in prefix untouched") {
  SynthData data = small_data();
  EngineConfig with_net = small_config(6, 3);
  EngineConfig without = with_net;
  without.model.flags.no_network = true;

  RunResult a = run_engine(with_net, data.corpus, data.edges);
  RunResult b = run_engine(without, data.corpus, data.edges);
  // the text stream is seeded independently of the network stream, so the
  // text-only iterations agree byte for byte
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.trace.rows[i].text_ll == b.trace.rows[i].text_ll);
    CHECK(a.trace.rows[i].topics == b.trace.rows[i].topics);
    CHECK(a.trace.rows[i].beta_topic == b.trace.rows[i].beta_topic);
    CHECK(a.trace.rows[i].beta_vocab == b.trace.rows[i].beta_vocab);
  }
  CHECK_FALSE(b.gp.has_value());
  for (const auto& row : b.trace.rows) CHECK_FALSE(row.net_ll.has_value());
}

TEST_CASE("snapshots: encode/decode round-trip and tamper detection") {
  SynthData data = small_data();
  RunResult res = run_engine(small_config(), data.corpus, data.edges);
  std::string blob = encode_snapshot(res.final_snapshot);
  Snapshot back = decode_snapshot(blob);
  CHECK(encode_snapshot(back) == blob);
  CHECK(back.iteration == 8);
  CHECK(back.has_gp);

  std::string tampered = blob;
  auto pos = tampered.find("\"iteration\"");
  REQUIRE(pos != std::string::npos);
  tampered[tampered.find(':', pos) + 1] = '9';
  CHECK_THROWS_AS(decode_snapshot(tampered), DataError);
  CHECK_THROWS_AS(decode_snapshot("{}"), DataError);
  CHECK_THROWS_AS(decode_snapshot("garbage"), DataError);
}

TEST_CASE("snapshot files and resumption reproduce the uninterrupted run") {
  SynthData data = small_data();
  fs::path dir = fs::temp_directory_path() / "pdpnet_test_snaps";
  fs::create_directories(dir);

  EngineConfig cfg = small_config(12, 4);
  RunResult full = run_engine(cfg, data.corpus, data.edges, dir.string());
  Snapshot mid = read_snapshot((dir / "snap_000008.json").string());
  CHECK(mid.iteration == 8);

  RunResult tail = resume_engine(mid, 12, 4, false);
  REQUIRE(tail.trace.rows.size() == 4);  // iterations 9..12
  for (std::size_t i = 0; i < 4; ++i) {
    const TraceRow &a = full.trace.rows[8 + i], &b = tail.trace.rows[i];
    CHECK(a.iter == b.iter);
    CHECK(a.text_ll == b.text_ll);
    CHECK(a.net_ll.value_or(-1) == b.net_ll.value_or(-1));
    CHECK(a.topics == b.topics);
    CHECK(a.beta_topic == b.beta_topic);
    CHECK(a.beta_vocab == b.beta_vocab);
    CHECK(a.gp_accept.value_or(-1) == b.gp_accept.value_or(-1));
  }
  CHECK(encode_snapshot(tail.final_snapshot) == encode_snapshot(full.final_snapshot));

  // resuming to an iteration already passed is refused
  CHECK_THROWS_AS(resume_engine(mid, 8, 4, false), ValidationError);
  CHECK_THROWS_AS(resume_engine(mid, 5, 4, false), ValidationError);

  std::error_code ec;
  fs::remove_all(dir, ec);
}

TEST_CASE("snapshot state reconstruction matches the live chain") {
  SynthData data = small_data();
  RunResult res = run_engine(small_config(), data.corpus, data.edges);
  LoadedState loaded = load_state(res.final_snapshot);
  loaded.chain->validate_consistency();
  CHECK(loaded.chain->joint_log_lik() == res.chain->joint_log_lik());
  CHECK(loaded.chain->live_topics() == res.chain->live_topics());
  REQUIRE(loaded.gp.has_value());
  CHECK((loaded.gp->f() - res.gp->f()).norm() == 0.0);
}

TEST_CASE("baselines and ablations run end to end") {
  SynthData data = small_data();
  for (ModelKind kind : {ModelKind::HdpLda, ModelKind::NpAtm}) {
    EngineConfig cfg = small_config(4, 4);
    cfg.kind = kind;
    RunResult res = run_engine(cfg, data.corpus, data.edges);
    res.chain->validate_consistency();
    CHECK_FALSE(res.gp.has_value());
    CHECK(res.trace.rows.size() == 4);
  }
  for (const auto& entry : ablation_roster()) {
    EngineConfig cfg = small_config(3, 3);
    cfg.model.flags = entry.flags;
    RunResult res = run_engine(cfg, data.corpus, data.edges);
    res.chain->validate_consistency();
    CHECK(res.trace.rows.size() == 3);
  }
}

TEST_CASE("truncated runs keep the registry fixed") {
  SynthData data = small_data();
  EngineConfig cfg = small_config(5, 5);
  cfg.model.truncation = 4;
  RunResult res = run_engine(cfg, data.corpus, data.edges);
  CHECK(res.chain->finite_topics());
  CHECK(res.chain->live_topics() == 4);
  for (const auto& row : res.trace.rows) CHECK(row.topics == 4);
}

TEST_CASE("sampler distribution check separates correct from broken kernels") {
  ModelConfig mc;
  mc.vocab_size = 5;
  mc.truncation = 3;
  GraphSpec spec = build_tn_graph(mc);

  GewekeOptions opt;
  opt.rounds = 600;
  opt.seed = 5;
  auto stats = geweke_compare(spec, opt);
  REQUIRE(stats.size() >= 3);
  for (const auto& s : stats) {
    INFO(s.name);
    CHECK(std::abs(s.z) < 4.0);
  }

  GewekeOptions broken = opt;
  broken.mutate_removal = true;
  auto bad = geweke_compare(spec, broken);
  double worst = 0.0;
  for (const auto& s : bad) worst = std::max(worst, std::abs(s.z));
  CHECK(worst > 4.0);

  // needs a finite topic space
  ModelConfig unbounded;
  unbounded.vocab_size = 5;
  CHECK_THROWS_AS(geweke_compare(build_tn_graph(unbounded), opt), ValidationError);
}
