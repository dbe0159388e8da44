#include <gtest/gtest.h>

#include <cstdlib>

#include "e2e_mock.hpp"
#include "fixtures.hpp"
#include "mabsa/pipeline.hpp"
#include "mock_endpoint.hpp"

namespace pl = mabsa::pipeline;
namespace store = mabsa::store;
namespace fs = std::filesystem;
using mabsa::Split;

namespace {

mabsa::gateway::GatewayConfig gateway_for(const std::string& url) {
  setenv("MABSA_TEST_KEY", "k", 1);
  mabsa::gateway::GatewayConfig cfg;
  cfg.endpoint_url = url;
  cfg.model_name = "mock";
  cfg.api_key_env = "MABSA_TEST_KEY";
  cfg.backoff_base = 0.01;
  cfg.request_timeout = 5;
  cfg.max_parallel = 3;
  return cfg;
}

// The e2e fixture imported into a scratch corpus, optionally truncated.
fs::path e2e_corpus(const std::string& name, std::size_t keep = 10) {
  const auto dir = fixtures::scratch(name) / "corpus";
  auto c = store::import_twitter_format(e2e::dir() / "twitter", e2e::dir() / "images", "e2e").corpus;
  c.samples.resize(keep);
  store::save_corpus(c, dir);
  return dir;
}

nlohmann::json manifest_of(const pl::RunResult& r) { return nlohmann::json::parse(fixtures::read(r.manifest_path)); }

std::size_t count_lines(const std::string& s) { return mabsa::text::lines(s).size(); }

// Writes a prediction file with gold labels and explanations naming `tag`.
fs::path write_predictions(const fs::path& p, const store::Corpus& c, const std::string& tag) {
  std::string body;
  for (const auto& s : c.samples) {
    pl::PredictionRow r;
    r.id = s.id;
    r.variant = "baseline";
    r.predicted = s.gold_sentiment;
    r.explanation = tag + " explanation for sample " + s.id;
    r.raw_reply = "Sentiment: x Explanation: " + *r.explanation;
    body += r.to_json().dump() + "\n";
  }
  fixtures::write(p, body);
  return p;
}

// The numbered candidate list of a judge request.
std::vector<std::string> judge_candidates(const nlohmann::json& req) {
  const auto user = mock::user_text(req);
  std::vector<std::string> out;
  for (const auto line : mabsa::text::lines(user)) {
    if (line.size() > 3 && line[0] >= '1' && line[0] <= '9' && line.substr(1, 2) == ". ")
      out.emplace_back(line.substr(3));
  }
  return out;
}

}  // namespace

TEST(CmdImport, CountsDigestsAndStrictness) {
  const auto work = fixtures::scratch("cmd_import");
  const pl::ImportArgs args{fixtures::root() / "twitter/mini", fixtures::root() / "twitter/mini/images",
                            work / "corpus", "mini", false};
  const auto r = pl::cmd_import(args);
  EXPECT_EQ(r.code(), 0);
  EXPECT_EQ(r.manifest.processed, 3u);
  const auto m = manifest_of(r);
  EXPECT_EQ(m["counts"]["processed"], 3);
  EXPECT_EQ(m["command"], "import");
  EXPECT_EQ(m["input_digests"].size(), 1u);  // only train.txt exists
  const auto first = fixtures::read(work / "corpus" / store::kCorpusFile);
  pl::cmd_import(args);
  EXPECT_EQ(fixtures::read(work / "corpus" / store::kCorpusFile), first);

  pl::ImportArgs bad{fixtures::root() / "twitter/bad", "", work / "bad", "bad", false};
  EXPECT_EQ(pl::cmd_import(bad).code(), 0);
  bad.strict = true;
  const auto strict = pl::cmd_import(bad);
  EXPECT_EQ(strict.code(), 1);
  EXPECT_EQ(strict.manifest.failed, 2u);

  EXPECT_THROW(pl::cmd_import({fixtures::scratch("cmd_import_empty"), "", work / "empty", "", false}), store::Error);
}

TEST(CmdImport, LockFileExcludesConcurrentRuns) {
  const auto work = fixtures::scratch("cmd_lock");
  mabsa::fsutil::DirectoryLock held(work / "corpus");
  EXPECT_THROW(pl::cmd_import({fixtures::root() / "twitter/mini", "", work / "corpus", "", false}), std::runtime_error);
}

TEST(CmdPrepareSyntax, DepthZeroAndUnbounded) {
  const auto corpus = e2e_corpus("cmd_prepare");
  const store::DepTextKey zero{mabsa::textualize::Format::Edge, 0, mabsa::prune::DistanceMode::Directed, false};
  const store::DepTextKey full{mabsa::textualize::Format::Edge, std::nullopt, mabsa::prune::DistanceMode::Directed,
                               false};
  EXPECT_EQ(pl::cmd_prepare_syntax({corpus, e2e::dir() / "conllu", zero, std::nullopt}).code(), 0);
  EXPECT_EQ(pl::cmd_prepare_syntax({corpus, e2e::dir() / "conllu", full, std::nullopt}).code(), 0);
  const auto c = store::load_corpus(corpus);
  for (const auto& s : c.samples) {
    EXPECT_EQ(s.deptext_cache.at(zero.str()), "") << s.id;
    const auto g = mabsa::graph::build_unified_graph(
        mabsa::conllu::parse(fixtures::read(e2e::dir() / "conllu" / (s.id + ".conllu"))));
    const auto& body = s.deptext_cache.at(full.str());
    std::size_t listed = 1;
    for (std::size_t p = 0; (p = body.find("; ", p)) != std::string::npos; p += 2) ++listed;
    EXPECT_EQ(listed, g.edges().size()) << s.id;
  }

  // Cached keys are skipped on rerun.
  const auto again = pl::cmd_prepare_syntax({corpus, e2e::dir() / "conllu", zero, std::nullopt});
  EXPECT_EQ(again.manifest.processed, 0u);
  EXPECT_EQ(again.manifest.skipped, 10u);
}

TEST(CmdPrepareSyntax, MissingParseIsPerSample) {
  const auto corpus = e2e_corpus("cmd_prepare_missing", 3);
  const auto parses = fixtures::scratch("cmd_prepare_missing_parses");
  fs::copy_file(e2e::dir() / "conllu/test-00001.conllu", parses / "test-00001.conllu");
  fs::copy_file(e2e::dir() / "conllu/test-00003.conllu", parses / "test-00002.conllu");  // wrong tree
  const auto r = pl::cmd_prepare_syntax({corpus, parses, store::DepTextKey{}, std::nullopt});
  EXPECT_EQ(r.code(), 1);
  EXPECT_EQ(r.manifest.processed, 1u);
  ASSERT_EQ(r.manifest.failures.size(), 2u);
  EXPECT_EQ(r.manifest.failures[0].category, "AspectNotFound");
  EXPECT_EQ(r.manifest.failures[1].category, "MissingParse");
}

TEST(CmdInfer, RowsOrderingAndResume) {
  const auto corpus = e2e_corpus("cmd_infer", 5);
  const auto out = corpus.parent_path() / "pred.jsonl";
  mock::Endpoint ep(mock::constant("Sentiment: neutral Explanation: plain."));
  pl::InferArgs args{corpus, Split::Test, store::Variant::baseline(), gateway_for(ep.url()), out};
  args.chunk = 2;
  const auto r = pl::cmd_infer(args);
  EXPECT_EQ(r.code(), 0);
  const auto rows = pl::read_predictions(out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(count_lines(fixtures::read(out)), 5u);
  std::string prev;
  const auto written = fixtures::read(out);
  for (const auto line : mabsa::text::lines(written)) {
    const auto id = nlohmann::json::parse(line)["id"].get<std::string>();
    EXPECT_LT(prev, id);
    prev = id;
  }
  for (const auto& [id, row] : rows) EXPECT_EQ(row.predicted, mabsa::Sentiment::Neutral);

  EXPECT_EQ(pl::cmd_infer(args).manifest.skipped, 5u);
  EXPECT_EQ(ep.calls(), 5);
  // A different variant is a different run.
  args.variant = store::Variant::with_syntax(store::DepTextKey{});
  EXPECT_EQ(pl::cmd_infer(args).manifest.failed, 5u);  // no DepText cached
  EXPECT_EQ(ep.calls(), 5);
}

TEST(CmdInfer, GatewayDownIsRecordedThenRetried) {
  const auto corpus = e2e_corpus("cmd_infer_down", 5);
  const auto out = corpus.parent_path() / "pred.jsonl";
  auto cfg = gateway_for("http://127.0.0.1:9/v1/chat/completions");
  cfg.max_retries = 0;
  cfg.request_timeout = 1;
  pl::InferArgs args{corpus, Split::Test, store::Variant::baseline(), cfg, out};
  const auto down = pl::cmd_infer(args);
  EXPECT_EQ(down.code(), 1);
  EXPECT_EQ(down.manifest.failed, 5u);
  for (const auto& [id, row] : pl::read_predictions(out)) EXPECT_TRUE(row.call_error) << id;

  mock::Endpoint ep(mock::constant("Sentiment: positive Explanation: up again."));
  args.gateway = gateway_for(ep.url());
  EXPECT_EQ(pl::cmd_infer(args).code(), 0);
  EXPECT_EQ(ep.calls(), 5);
  for (const auto& [id, row] : pl::read_predictions(out)) EXPECT_FALSE(row.call_error) << id;
}

TEST(CmdEvaluate, GoldPredictionsAndExternalScores) {
  const auto corpus = e2e_corpus("cmd_eval");
  auto c = store::load_corpus(corpus);
  for (auto& s : c.samples) s.gold_explanation = "gold explanation for sample " + s.id;
  store::save_corpus(c, corpus);
  const auto preds = write_predictions(corpus.parent_path() / "gold.jsonl", c, "gold");
  const auto out = corpus.parent_path() / "eval";
  EXPECT_EQ(pl::cmd_evaluate({corpus, preds, mabsa::metrics::FailurePolicy::Drop, std::nullopt, out}).code(), 0);
  auto rep = nlohmann::json::parse(fixtures::read(out / "report.json"));
  EXPECT_DOUBLE_EQ(rep["classification"]["accuracy"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(rep["classification"]["macro_f1"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(rep["generation"]["bleu4"].get<double>(), 1.0);
  EXPECT_FALSE(rep.contains("external_semantic_score"));

  pl::cmd_evaluate({corpus, preds, mabsa::metrics::FailurePolicy::Drop, e2e::dir() / "external_scores.tsv", out});
  rep = nlohmann::json::parse(fixtures::read(out / "report.json"));
  EXPECT_TRUE(rep.contains("external_semantic_score"));
  EXPECT_EQ(rep["external_scored"], 3);

  fixtures::write(corpus.parent_path() / "stray.jsonl", R"({"id":"nope","predicted":"neutral"})" "\n");
  EXPECT_THROW(pl::cmd_evaluate({corpus, corpus.parent_path() / "stray.jsonl", mabsa::metrics::FailurePolicy::Drop,
                                 std::nullopt, out}),
               pl::Error);
}

class CmdJudge : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus_ = e2e_corpus("cmd_judge_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    const auto c = store::load_corpus(corpus_);
    for (const auto* tag : {"vanilla", "syn-inf", "syn-2"}) {
      systems_.push_back({tag, write_predictions(corpus_.parent_path() / (std::string(tag) + ".jsonl"), c, tag)});
    }
  }

  pl::JudgeArgs args(const std::string& url, std::size_t subset, std::uint64_t seed, const std::string& out) const {
    return {corpus_, systems_, subset, seed, gateway_for(url), corpus_.parent_path() / out};
  }

  fs::path corpus_;
  std::vector<pl::JudgeSystem> systems_;
};

TEST_F(CmdJudge, DeshufflesToTheChosenSystem) {
  // The judge always picks whichever option shows the syn-2 explanation.
  mock::Endpoint ep([](const nlohmann::json& req, int) {
    const auto cands = judge_candidates(req);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].rfind("syn-2 ", 0) == 0) return mock::Scripted{200, std::to_string(i + 1)};
    }
    return mock::Scripted{200, "?"};
  });
  const auto r = pl::cmd_judge(args(ep.url(), 8, 11, "j1"));
  EXPECT_EQ(r.code(), 0);
  const auto tally = nlohmann::json::parse(fixtures::read(corpus_.parent_path() / "j1/judge_tally.json"));
  EXPECT_EQ(tally["tally"]["syn-2"], 8);
  EXPECT_EQ(tally["tally"]["vanilla"], 0);
  EXPECT_EQ(tally["tally"]["syn-inf"], 0);
  EXPECT_EQ(tally["sampled"], 8);
}

TEST_F(CmdJudge, OptionOneTallyFollowsRecordedOrders) {
  mock::Endpoint ep(mock::constant("1"));
  pl::cmd_judge(args(ep.url(), 10, 5, "j"));
  const auto tally = nlohmann::json::parse(fixtures::read(corpus_.parent_path() / "j/judge_tally.json"));
  std::map<std::string, int> expected;
  const auto votes = fixtures::read(corpus_.parent_path() / "j/judge_votes.jsonl");
  for (const auto line : mabsa::text::lines(votes)) {
    const auto v = nlohmann::json::parse(line);
    ++expected[systems_[v["order"][0].get<std::size_t>()].name];
    EXPECT_EQ(v["winner"], systems_[v["order"][0].get<std::size_t>()].name);
  }
  int total = 0;
  for (const auto& s : systems_) {
    EXPECT_EQ(tally["tally"][s.name], expected[s.name]);
    total += tally["tally"][s.name].get<int>();
  }
  EXPECT_EQ(total, 10);
}

TEST_F(CmdJudge, SeedDeterminesSamplingAndFailuresAreCounted) {
  mock::Endpoint ep([](const nlohmann::json& req, int) {
    return mock::Scripted{200, mock::user_text(req).find("Obama") != std::string::npos ? "none of them" : "2"};
  });
  pl::cmd_judge(args(ep.url(), 6, 99, "a"));
  pl::cmd_judge(args(ep.url(), 6, 99, "b"));
  pl::cmd_judge(args(ep.url(), 6, 100, "c"));
  const auto votes = [&](const char* d) { return fixtures::read(corpus_.parent_path() / d / "judge_votes.jsonl"); };
  EXPECT_EQ(votes("a"), votes("b"));
  EXPECT_NE(votes("a"), votes("c"));

  const auto all = pl::cmd_judge(args(ep.url(), 100, 1, "d"));
  EXPECT_EQ(all.code(), 1);
  EXPECT_EQ(all.manifest.processed, 9u);
  ASSERT_EQ(all.manifest.failures.size(), 1u);
  EXPECT_EQ(all.manifest.failures[0].id, "test-00003");
}

TEST_F(CmdJudge, CoverageGapAndIdenticalCandidates) {
  mock::Endpoint ep(mock::constant("1"));
  auto c = store::load_corpus(corpus_);
  c.samples.resize(9);
  auto gap = args(ep.url(), 10, 1, "gap");
  gap.systems[1].predictions = write_predictions(corpus_.parent_path() / "short.jsonl", c, "short");
  try {
    pl::cmd_judge(gap);
    FAIL();
  } catch (const pl::Error& e) {
    EXPECT_EQ(e.kind(), pl::Errc::CoverageGap);
  }

  auto same = args(ep.url(), 10, 1, "same");
  const auto full = store::load_corpus(corpus_);
  for (auto& s : same.systems) s.predictions = write_predictions(corpus_.parent_path() / (s.name + "_same.jsonl"), full, "same");
  EXPECT_EQ(pl::cmd_judge(same).manifest.processed, 10u);
}

TEST(CmdValidateConllu, GoodAndBadFiles) {
  const auto runs = fixtures::scratch("cmd_validate");
  const auto good = pl::cmd_validate_conllu({e2e::dir() / "conllu"}, runs);
  EXPECT_EQ(good.code(), 0);
  EXPECT_EQ(good.manifest.processed, 10u);
  const auto bad = pl::cmd_validate_conllu({fixtures::root() / "conllu/bad"}, runs);
  EXPECT_EQ(bad.code(), 1);
  EXPECT_EQ(bad.manifest.processed, 0u);
  EXPECT_EQ(bad.manifest.failed, 13u);
  for (const auto& f : bad.manifest.failures) {
    // File names start with the expected category.
    EXPECT_EQ(fs::path(f.id).filename().string().rfind(f.category + "__", 0), 0u) << f.id;
  }
}
