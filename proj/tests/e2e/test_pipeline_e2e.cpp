#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>

#include "e2e_mock.hpp"
#include "fixtures.hpp"
#include "mabsa/datastore.hpp"

namespace fs = std::filesystem;
namespace store = mabsa::store;

namespace {

int mabsa_cli(const std::string& args) {
  const std::string cmd = std::string(MABSA_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void expect_golden(const fs::path& actual, const fs::path& golden) {
  const auto got = fixtures::read(actual);
  if (fixtures::update_golden()) {
    fixtures::write(golden, got);
    return;
  }
  EXPECT_EQ(got, fixtures::read(golden)) << golden;
}

}  // namespace

TEST(EndToEnd, MockRunReproducesCommittedReport) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto work = fixtures::scratch("e2e_cli");
  const auto corpus = work / "corpus";
  const auto expected = e2e::dir() / "expected";
  setenv("MABSA_E2E_KEY", "e2e-key", 1);

  e2e::ScriptedModel model;
  mock::Endpoint ep(model.script());
  const std::string gw = " --endpoint " + ep.url() + " --model mock-vl --api-key-env MABSA_E2E_KEY --max-parallel 3";

  ASSERT_EQ(mabsa_cli("import --input " + q(e2e::dir() / "twitter") + " --images " + q(e2e::dir() / "images") +
                      " --corpus " + q(corpus) + " --name e2e --strict"),
            0);
  ASSERT_EQ(mabsa_cli("prepare-syntax --corpus " + q(corpus) + " --conllu-dir " + q(e2e::dir() / "conllu") +
                      " --depth 2"),
            0);
  ASSERT_EQ(mabsa_cli("augment --corpus " + q(corpus) + gw), 0);
  EXPECT_EQ(ep.calls(), 10);
  ASSERT_EQ(mabsa_cli("infer --corpus " + q(corpus) + " --split test --variant syntax --depth 2 --out " +
                      q(work / "pred.jsonl") + gw),
            0);
  EXPECT_EQ(ep.calls(), 20);
  ASSERT_EQ(mabsa_cli("evaluate --corpus " + q(corpus) + " --predictions " + q(work / "pred.jsonl") +
                      " --failure-policy count-wrong --external-scores " + q(e2e::dir() / "external_scores.tsv") +
                      " --out " + q(work / "eval")),
            0);

  // Every inference prompt carried the sample's depth-2 DepText.
  const auto c = store::load_corpus(corpus);
  const auto seen = model.seen();
  std::string deptexts;
  for (const auto& s : c.samples) {
    const auto body = s.deptext_cache.at("edge:2:directed:keep");
    deptexts += s.id + "\t" + body + "\n";
    ASSERT_EQ(seen.at(s.id).size(), 2u);
    EXPECT_NE(seen.at(s.id)[1].find("Dependency syntax info related to aspect term: " + body + "\n"),
              std::string::npos)
        << s.id;
  }
  fixtures::write(work / "deptext.tsv", deptexts);

  expect_golden(work / "deptext.tsv", expected / "deptext_depth2.tsv");
  expect_golden(work / "pred.jsonl", expected / "predictions.jsonl");
  expect_golden(work / "eval/per_sample.jsonl", expected / "per_sample.jsonl");
  expect_golden(work / "eval/report.json", expected / "report.json");

  // Hand-computed from the reply table: 6 of 10 correct, two unparsed
  // replies counted wrong. F1 = 8/9 (pos), 1/2 (neg), 2/5 (neu).
  const auto rep = nlohmann::json::parse(fixtures::read(work / "eval/report.json"));
  EXPECT_DOUBLE_EQ(rep["classification"]["accuracy"].get<double>(), 0.6);
  EXPECT_NEAR(rep["classification"]["macro_f1"].get<double>(), (8.0 / 9.0 + 0.5 + 0.4) / 3.0, 1e-12);
  EXPECT_EQ(rep["generation"]["pairs"], 8);
  EXPECT_NEAR(rep["external_semantic_score"].get<double>(), (0.91 + 0.84 + 0.88) / 3.0, 1e-12);

  // Re-running inference finds every reply on disk and calls nothing.
  ASSERT_EQ(mabsa_cli("infer --corpus " + q(corpus) + " --split test --variant syntax --depth 2 --out " +
                      q(work / "pred.jsonl") + gw),
            0);
  EXPECT_EQ(ep.calls(), 20);
  expect_golden(work / "pred.jsonl", expected / "predictions.jsonl");

  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 30.0);
}
