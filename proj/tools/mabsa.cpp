// mabsa: command-line driver for the syntax-guided MABSA pipeline.

#include <CLI11.hpp>

#include <iostream>

#include "mabsa/pipeline.hpp"

namespace pl = mabsa::pipeline;
namespace store = mabsa::store;
namespace fs = std::filesystem;

namespace {

struct SyntaxFlags {
  std::string depth = "2";
  std::string mode = "directed";
  std::string format = "edge";
  bool strip = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--depth", depth, "pruning depth")->check(CLI::IsMember({"0", "1", "2", "3", "inf"}));
    cmd->add_option("--mode", mode, "distance mode")->check(CLI::IsMember({"directed", "undirected"}));
    cmd->add_option("--format", format, "DepText format")->check(CLI::IsMember({"edge", "conllu"}));
    cmd->add_flag("--strip-relations", strip, "drop relation labels");
  }

  store::DepTextKey key() const {
    return store::DepTextKey::parse(format + ":" + depth + ":" + mode + ":" + (strip ? "strip" : "keep"));
  }
};

struct GatewayFlags {
  mabsa::gateway::GatewayConfig cfg;
  std::string audit_log;

  void attach(CLI::App* cmd) {
    cmd->add_option("--endpoint", cfg.endpoint_url, "chat-completions URL")->required();
    cmd->add_option("--model", cfg.model_name, "model name")->required();
    cmd->add_option("--api-key-env", cfg.api_key_env, "environment variable holding the API key")
        ->capture_default_str();
    cmd->add_option("--temperature", cfg.temperature)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--max-tokens", cfg.max_output_tokens)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--timeout", cfg.request_timeout, "seconds")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-retries", cfg.max_retries)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--max-parallel", cfg.max_parallel)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--audit-log", audit_log, "append request/response JSON lines here");
  }

  mabsa::gateway::GatewayConfig config() const {
    auto c = cfg;
    if (!audit_log.empty()) c.audit_log = audit_log;
    return c;
  }
};

std::optional<mabsa::Split> split_arg(const std::string& s) {
  if (s == "all") return std::nullopt;
  return mabsa::parse_split(s);
}

const std::vector<std::string> kSplits{"train", "dev", "test", "all"};

void report(const pl::RunResult& r) {
  const auto& m = r.manifest;
  std::cout << m.command << ": processed " << m.processed << ", failed " << m.failed << ", skipped " << m.skipped
            << "\nmanifest: " << r.manifest_path.string() << "\n";
  for (std::size_t i = 0; i < m.failures.size() && i < 10; ++i) {
    std::cerr << "  " << m.failures[i].id << ": " << m.failures[i].category << "\n";
  }
  if (m.failures.size() > 10) std::cerr << "  ... " << m.failures.size() - 10 << " more in the manifest\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-guided multimodal aspect-based sentiment analysis pipeline"};
  app.require_subcommand(1);
  std::function<pl::RunResult()> run;

  pl::ImportArgs imp;
  auto* c_import = app.add_subcommand("import", "import Twitter-format split files into a corpus");
  c_import->add_option("--input", imp.input_dir, "directory with train/dev/test .txt")->required();
  c_import->add_option("--images", imp.image_dir, "image directory")->required();
  c_import->add_option("--corpus", imp.corpus_dir, "output corpus directory")->required();
  c_import->add_option("--name", imp.name, "corpus name");
  c_import->add_flag("--strict", imp.strict, "exit 1 when any record fails");
  c_import->callback([&] { run = [&] { return pl::cmd_import(imp); }; });

  pl::PrepareSyntaxArgs prep;
  SyntaxFlags prep_syn;
  std::string prep_split = "all";
  auto* c_prep = app.add_subcommand("prepare-syntax", "cache pruned dependency text for each sample");
  c_prep->add_option("--corpus", prep.corpus_dir)->required();
  c_prep->add_option("--conllu-dir", prep.conllu_dir, "directory of <sample_id>.conllu parses")->required();
  c_prep->add_option("--split", prep_split)->check(CLI::IsMember(kSplits))->capture_default_str();
  prep_syn.attach(c_prep);
  c_prep->callback([&] {
    prep.key = prep_syn.key();
    prep.split = split_arg(prep_split);
    run = [&] { return pl::cmd_prepare_syntax(prep); };
  });

  pl::AugmentArgs aug;
  GatewayFlags aug_gw;
  std::string aug_split = "all";
  std::size_t aug_limit = 0;
  auto* c_aug = app.add_subcommand("augment", "generate gold-label-constrained explanations");
  c_aug->add_option("--corpus", aug.corpus_dir)->required();
  c_aug->add_option("--split", aug_split)->check(CLI::IsMember(kSplits))->capture_default_str();
  c_aug->add_option("--batch-size", aug.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  c_aug->add_option("--limit", aug_limit, "stop after this many samples (0 = no limit)");
  aug_gw.attach(c_aug);
  c_aug->callback([&] {
    aug.gateway = aug_gw.config();
    aug.split = split_arg(aug_split);
    if (aug_limit) aug.limit = aug_limit;
    run = [&] { return pl::cmd_augment(aug); };
  });

  pl::ReviewArgs rev;
  auto* c_rev = app.add_subcommand("review-sample", "draw augmented explanations for manual review");
  c_rev->add_option("--corpus", rev.corpus_dir)->required();
  c_rev->add_option("--fraction", rev.fraction)->check(CLI::Range(1e-9, 1.0))->capture_default_str();
  c_rev->add_option("--seed", rev.seed)->capture_default_str();
  c_rev->add_option("--out", rev.out, "review sheet (TSV)")->required();
  c_rev->callback([&] { run = [&] { return pl::cmd_review_sample(rev); }; });

  pl::ExportArgs exp;
  SyntaxFlags exp_syn;
  std::string exp_variant = "baseline", exp_split = "train";
  auto* c_exp = app.add_subcommand("export", "write fine-tuning conversations");
  c_exp->add_option("--corpus", exp.corpus_dir)->required();
  c_exp->add_option("--variant", exp_variant)->check(CLI::IsMember({"baseline", "syntax"}))->capture_default_str();
  c_exp->add_option("--split", exp_split)->check(CLI::IsMember(kSplits))->capture_default_str();
  c_exp->add_option("--out", exp.out)->required();
  exp_syn.attach(c_exp);
  c_exp->callback([&] {
    exp.variant = exp_variant == "syntax" ? store::Variant::with_syntax(exp_syn.key()) : store::Variant::baseline();
    exp.split = split_arg(exp_split);
    run = [&] { return pl::cmd_export(exp); };
  });

  pl::InferArgs inf;
  SyntaxFlags inf_syn;
  GatewayFlags inf_gw;
  std::string inf_variant = "baseline", inf_split = "test";
  auto* c_inf = app.add_subcommand("infer", "predict sentiment and explanation for each sample");
  c_inf->add_option("--corpus", inf.corpus_dir)->required();
  c_inf->add_option("--split", inf_split)->check(CLI::IsMember(kSplits))->capture_default_str();
  c_inf->add_option("--variant", inf_variant)->check(CLI::IsMember({"baseline", "syntax"}))->capture_default_str();
  c_inf->add_option("--out", inf.out, "predictions (JSON lines)")->required();
  inf_syn.attach(c_inf);
  inf_gw.attach(c_inf);
  c_inf->callback([&] {
    inf.variant = inf_variant == "syntax" ? store::Variant::with_syntax(inf_syn.key()) : store::Variant::baseline();
    inf.split = split_arg(inf_split);
    inf.gateway = inf_gw.config();
    run = [&] { return pl::cmd_infer(inf); };
  });

  pl::EvaluateArgs ev;
  std::string ev_policy = "drop", ev_scores;
  auto* c_ev = app.add_subcommand("evaluate", "score predictions against gold labels and explanations");
  c_ev->add_option("--corpus", ev.corpus_dir)->required();
  c_ev->add_option("--predictions", ev.predictions)->required();
  c_ev->add_option("--failure-policy", ev_policy)->check(CLI::IsMember({"drop", "count-wrong"}))->capture_default_str();
  c_ev->add_option("--external-scores", ev_scores, "TSV of id and semantic score from an external scorer");
  c_ev->add_option("--out", ev.out_dir, "report directory")->required();
  c_ev->callback([&] {
    ev.policy = ev_policy == "drop" ? mabsa::metrics::FailurePolicy::Drop : mabsa::metrics::FailurePolicy::CountWrong;
    if (!ev_scores.empty()) ev.external_scores = ev_scores;
    run = [&] { return pl::cmd_evaluate(ev); };
  });

  pl::JudgeArgs jd;
  GatewayFlags jd_gw;
  std::vector<std::string> jd_systems;
  auto* c_jd = app.add_subcommand("judge", "ask a judge model to pick the best explanation among systems");
  c_jd->add_option("--corpus", jd.corpus_dir)->required();
  c_jd->add_option("--predictions", jd_systems, "name=path, one per system")->required();
  c_jd->add_option("--subset", jd.subset)->check(CLI::PositiveNumber)->capture_default_str();
  c_jd->add_option("--seed", jd.seed)->capture_default_str();
  c_jd->add_option("--out", jd.out_dir)->required();
  jd_gw.attach(c_jd);
  c_jd->callback([&] {
    for (const auto& s : jd_systems) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) jd.systems.push_back({fs::path(s).stem().string(), s});
      else jd.systems.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
    jd.gateway = jd_gw.config();
    run = [&] { return pl::cmd_judge(jd); };
  });

  std::vector<std::string> val_inputs;
  std::string val_runs = ".";
  auto* c_val = app.add_subcommand("validate-conllu", "check parse files before prepare-syntax");
  c_val->add_option("inputs", val_inputs, "files or directories")->required();
  c_val->add_option("--runs-dir", val_runs, "where to write the run manifest")->capture_default_str();
  c_val->callback([&] {
    run = [&] {
      std::vector<fs::path> paths(val_inputs.begin(), val_inputs.end());
      return pl::cmd_validate_conllu(paths, val_runs);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto result = run();
    report(result);
    return result.code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
