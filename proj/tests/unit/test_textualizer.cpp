#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "mabsa/textualizer.hpp"
#include "oracles.hpp"

namespace conllu = mabsa::conllu;
namespace graph = mabsa::graph;
namespace prune = mabsa::prune;
namespace tx = mabsa::textualize;

namespace {

struct Case {
  graph::UnifiedGraph g;
  prune::AspectAnchor anchor;
};

Case five_token() {
  auto g = graph::build_unified_graph(conllu::parse(fixtures::read(fixtures::root() / "conllu/five_token.conllu")));
  auto a = prune::locate_aspect(g, "food");
  return {std::move(g), std::move(a)};
}

std::size_t count_arrows(const std::string& body) {
  std::size_t n = 0;
  for (auto pos = body.find("--> "); pos != std::string::npos; pos = body.find("--> ", pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(EdgeFormat, DepthZeroIsEmpty) {
  const auto c = five_token();
  const auto t = tx::edge_format(c.g, prune::prune(c.g, c.anchor, prune::PruneConfig::at_depth(0)), false);
  EXPECT_EQ(t.body, "");
  EXPECT_EQ(t.format, tx::Format::Edge);
}

TEST(EdgeFormat, OrderedByHeadThenDependent) {
  const auto c = five_token();
  const auto sub = prune::prune(c.g, c.anchor, prune::PruneConfig::at_depth(1));
  EXPECT_EQ(tx::edge_format(c.g, sub, false).body, "food --det--> The; was --nsubj--> food");
  const auto stripped = tx::edge_format(c.g, sub, true);
  EXPECT_EQ(stripped.body, "food --> The; was --> food");
  EXPECT_TRUE(stripped.relations_stripped);
}

TEST(EdgeFormat, FullGraphListsInterSentenceEdges) {
  auto g = graph::build_unified_graph(conllu::parse(fixtures::read(fixtures::root() / "conllu/three_sentences.conllu")));
  const auto sub = prune::prune(g, prune::locate_aspect(g, "Granada"), prune::PruneConfig::unbounded());
  const auto body = tx::edge_format(g, sub, false).body;
  EXPECT_EQ(count_arrows(body), g.edges().size());
  EXPECT_NE(body.find("Sink --next-root--> crowned"), std::string::npos);
}

TEST(ConlluFormat, DepthOneRerootsTopToken) {
  const auto c = five_token();
  const auto t = tx::conllu_format(c.g, prune::prune(c.g, c.anchor, prune::PruneConfig::at_depth(1)), false);
  EXPECT_EQ(t.body,
            "1\tThe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n"
            "2\tfood\tfood\tNOUN\t_\t_\t3\tnsubj\t_\t_\n"
            "3\twas\tbe\tAUX\t_\t_\t0\troot\t_\t_\n\n");
}

TEST(ConlluFormat, DepthZeroSingleRootRow) {
  const auto c = five_token();
  const auto t = tx::conllu_format(c.g, prune::prune(c.g, c.anchor, prune::PruneConfig::at_depth(0)), false);
  EXPECT_EQ(t.body, "1\tfood\tfood\tNOUN\t_\t_\t0\troot\t_\t_\n\n");
}

TEST(ConlluFormat, UnboundedEqualsOriginalSerialization) {
  const auto text = fixtures::read(fixtures::root() / "conllu/three_sentences.conllu");
  auto g = graph::build_unified_graph(conllu::parse(text));
  const auto sub = prune::prune(g, prune::locate_aspect(g, "Suarez"), prune::PruneConfig::unbounded());
  EXPECT_EQ(tx::conllu_format(g, sub, false).body, text);
}

TEST(ConlluFormat, NonContiguousSelectionIsRenumbered) {
  const auto c = five_token();
  // "amazing": up to "was", then nothing else within one directed hop.
  const auto sub = prune::prune(c.g, prune::locate_aspect(c.g, "amazing"), prune::PruneConfig::at_depth(1));
  EXPECT_EQ(tx::conllu_format(c.g, sub, false).body,
            "1\twas\tbe\tAUX\t_\t_\t0\troot\t_\t_\n"
            "2\tamazing\tamazing\tADJ\t_\t_\t1\tacomp\t_\t_\n\n");
}

TEST(Textualizer, PropertiesOnRandomDocuments) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t m = 1 + rng() % 4;
    const auto g = graph::build_unified_graph(oracle::random_document(rng, m, m + rng() % 40));
    prune::AspectAnchor a;
    a.anchor = rng() % g.size();
    a.span = {a.anchor};
    const auto mode = trial % 2 ? prune::DistanceMode::Directed : prune::DistanceMode::Undirected;
    const auto sub = prune::prune(g, a, prune::PruneConfig::at_depth(rng() % 5, mode));

    const auto kept = tx::edge_format(g, sub, false);
    const auto stripped = tx::edge_format(g, sub, true);
    EXPECT_EQ(count_arrows(kept.body), sub.edges.size());
    EXPECT_EQ(count_arrows(stripped.body), sub.edges.size());
    EXPECT_EQ(tx::edge_format(g, sub, false).body, kept.body);

    for (const bool strip : {false, true}) {
      const auto body = tx::conllu_format(g, sub, strip).body;
      std::vector<conllu::SentenceBlock> reparsed;
      ASSERT_NO_THROW(reparsed = conllu::parse(body)) << body;
      std::size_t rows = 0;
      for (const auto& b : reparsed) rows += b.tokens.size();
      EXPECT_EQ(rows, sub.nodes.size());
    }
  }
}

// Golden outputs for "Suarez" (first occurrence, sentence 2) on the
// three-sentence fixture. The depth-2 directed subgraph reaches across the
// next-root edge into sentence 3.
TEST(TextualizerGolden, ThreeSentenceFixture) {
  const auto g = graph::build_unified_graph(conllu::parse(fixtures::read(fixtures::root() / "conllu/three_sentences.conllu")));
  const auto anchor = prune::locate_aspect(g, "Suarez");
  const std::vector<std::optional<std::size_t>> depths{0, 1, 2, std::nullopt};
  for (const auto format : {tx::Format::Edge, tx::Format::Conllu}) {
    for (const auto& depth : depths) {
      for (const bool strip : {false, true}) {
        prune::PruneConfig cfg{depth, prune::DistanceMode::Directed, strip};
        const auto sub = prune::prune(g, anchor, cfg);
        const auto text = tx::render(g, sub, format, strip);
        const auto name = std::string(tx::to_string(format)) + "_d" + (depth ? std::to_string(*depth) : "inf") +
                          (strip ? "_strip" : "_keep") + ".txt";
        const auto golden = fixtures::root() / "textualize" / name;
        if (fixtures::update_golden()) fixtures::write(golden, text.body + "\n");
        EXPECT_EQ(text.body + "\n", fixtures::read(golden)) << name;
        // Rendering twice gives the same bytes.
        EXPECT_EQ(tx::render(g, sub, format, strip).body, text.body) << name;
        if (format == tx::Format::Conllu) {
          std::vector<conllu::SentenceBlock> reparsed;
          ASSERT_NO_THROW(reparsed = conllu::parse(text.body)) << name;
          std::size_t rows = 0;
          for (const auto& b : reparsed) rows += b.tokens.size();
          EXPECT_EQ(rows, sub.nodes.size()) << name;
        }
      }
    }
  }
}
