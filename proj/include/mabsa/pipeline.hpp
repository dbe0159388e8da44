#pragma once

// Command implementations behind the mabsa CLI. Each command takes a plain
// argument struct, writes exactly one run manifest and returns it together
// with the process exit code (0 clean, 1 per-record failures, 2 config/IO).

#include <time.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mabsa/aspect_pruner.hpp"
#include "mabsa/conllu.hpp"
#include "mabsa/datastore.hpp"
#include "mabsa/depgraph.hpp"
#include "mabsa/encoding.hpp"
#include "mabsa/eval_metrics.hpp"
#include "mabsa/fsutil.hpp"
#include "mabsa/llm_gateway.hpp"
#include "mabsa/promptkit.hpp"
#include "mabsa/response_codec.hpp"
#include "mabsa/textualizer.hpp"

namespace mabsa::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Exit : int { Clean = 0, Partial = 1, Failure = 2 };

enum class Errc { MissingParse, CoverageGap, UnknownSample, BadArgument };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::MissingParse: return "MissingParse";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::UnknownSample: return "UnknownSample";
    case Errc::BadArgument: return "BadArgument";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

struct RecordFailure {
  std::string id;
  std::string category;
  std::string detail;
};

struct RunManifest {
  std::string command;
  json config = json::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string started_at;
  std::string finished_at;
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> outputs;
  std::vector<RecordFailure> failures;
  int exit_code = 0;

  json to_json() const {
    json f = json::array();
    for (const auto& x : failures) f.push_back({{"id", x.id}, {"category", x.category}, {"detail", x.detail}});
    return {{"command", command},
            {"config", config},
            {"input_digests", input_digests},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"counts", {{"processed", processed}, {"failed", failed}, {"skipped", skipped}}},
            {"outputs", outputs},
            {"failures", std::move(f)},
            {"exit_code", exit_code}};
  }

  void digest(const fs::path& p) {
    if (const auto body = encoding::read_file(p)) input_digests[p.string()] = encoding::sha256_hex(*body);
  }

  void fail(std::string id, std::string category, std::string detail) {
    ++failed;
    failures.push_back({std::move(id), std::move(category), std::move(detail)});
  }
};

struct RunResult {
  RunManifest manifest;
  fs::path manifest_path;
  Exit exit = Exit::Clean;
  int code() const { return static_cast<int>(exit); }
};

// Manifests go to <dir>/runs/<command>-<utc stamp>-<pid>-<n>.json.
inline RunResult finish(RunManifest&& m, const fs::path& dir, Exit exit) {
  static std::atomic<unsigned> counter{0};
  m.finished_at = utc_now();
  m.exit_code = static_cast<int>(exit);
  std::string stamp = m.started_at;
  stamp.erase(std::remove_if(stamp.begin(), stamp.end(), [](char c) { return c == ':' || c == '-' || c == '.'; }),
              stamp.end());
  const auto path = dir / "runs" /
                    (m.command + "-" + stamp + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".json");
  fsutil::write_atomic(path, m.to_json().dump(2) + "\n");
  return RunResult{std::move(m), path, exit};
}

inline RunManifest start(std::string command, json config) {
  RunManifest m;
  m.command = std::move(command);
  m.config = std::move(config);
  m.started_at = utc_now();
  return m;
}

inline json gateway_json(const gateway::GatewayConfig& g) {
  return {{"endpoint_url", g.endpoint_url},
          {"model_name", g.model_name},
          {"api_key_env", g.api_key_env},
          {"temperature", g.temperature},
          {"max_output_tokens", g.max_output_tokens},
          {"request_timeout", g.request_timeout},
          {"max_retries", g.max_retries},
          {"max_parallel", g.max_parallel},
          {"audit_log", g.audit_log ? g.audit_log->string() : ""}};
}

inline json split_json(const std::optional<Split>& s) { return s ? to_string(*s) : "all"; }

// ------------------------------------------------------------------ import

struct ImportArgs {
  fs::path input_dir;
  fs::path image_dir;
  fs::path corpus_dir;
  std::string name;
  bool strict = false;
};

inline RunResult cmd_import(const ImportArgs& a) {
  auto m = start("import", {{"input_dir", a.input_dir.string()},
                            {"image_dir", a.image_dir.string()},
                            {"corpus_dir", a.corpus_dir.string()},
                            {"name", a.name},
                            {"strict", a.strict}});
  fsutil::DirectoryLock lock(a.corpus_dir);
  for (const auto* split : {"train", "dev", "test"}) m.digest(a.input_dir / (std::string(split) + ".txt"));
  auto result = store::import_twitter_format(a.input_dir, a.image_dir.empty() ? a.image_dir : fs::absolute(a.image_dir), a.name);
  for (const auto& issue : result.issues) {
    m.fail(issue.file + "#" + std::to_string(issue.record), store::to_string(issue.kind), issue.detail);
  }
  for (const auto& s : result.corpus.samples) m.skipped += s.image_missing;  // flagged, still imported
  m.processed = result.corpus.samples.size();
  store::save_corpus(result.corpus, a.corpus_dir);
  m.outputs = {(a.corpus_dir / store::kCorpusFile).string(), (a.corpus_dir / store::kMetaFile).string()};
  const auto sizes = result.corpus.split_sizes();
  m.config["split_sizes"] = {{"train", sizes[0]}, {"dev", sizes[1]}, {"test", sizes[2]}};
  return finish(std::move(m), a.corpus_dir, a.strict && !result.issues.empty() ? Exit::Partial : Exit::Clean);
}

// ---------------------------------------------------------- prepare-syntax

struct PrepareSyntaxArgs {
  fs::path corpus_dir;
  fs::path conllu_dir;
  store::DepTextKey key;
  std::optional<Split> split;
};

// DepText for one sample from its parse file.
inline textualize::DepText deptext_for(const Sample& s, const fs::path& conllu_file, const store::DepTextKey& key) {
  const auto body = encoding::read_file(conllu_file);
  if (!body) throw Error(Errc::MissingParse, conllu_file.string());
  const auto g = graph::build_unified_graph(conllu::parse(*body));
  const auto anchor = prune::locate_aspect(g, s.aspect, s.aspect_occurrence);
  const auto sub = prune::prune(g, anchor, key.prune_config());
  return textualize::render(g, sub, key.format, key.strip_relations);
}

inline RunResult cmd_prepare_syntax(const PrepareSyntaxArgs& a) {
  auto m = start("prepare-syntax", {{"corpus_dir", a.corpus_dir.string()},
                                    {"conllu_dir", a.conllu_dir.string()},
                                    {"key", a.key.str()},
                                    {"split", split_json(a.split)}});
  fsutil::DirectoryLock lock(a.corpus_dir);
  m.digest(a.corpus_dir / store::kCorpusFile);
  auto corpus = store::load_corpus(a.corpus_dir);
  const auto key = a.key.str();
  for (auto& s : corpus.samples) {
    if (a.split && s.split != *a.split) continue;
    if (s.deptext_cache.count(key)) {
      ++m.skipped;
      continue;
    }
    try {
      s.deptext_cache[key] = deptext_for(s, a.conllu_dir / (s.id + ".conllu"), a.key).body;
      ++m.processed;
    } catch (const Error& e) {
      m.fail(s.id, to_string(e.kind()), e.what());
    } catch (const conllu::Error& e) {
      m.fail(s.id, to_string(e.kind()), e.what());
    } catch (const prune::Error& e) {
      m.fail(s.id, to_string(e.kind()), e.what());
    } catch (const graph::Error& e) {
      m.fail(s.id, to_string(e.kind()), e.what());
    }
  }
  store::save_corpus(corpus, a.corpus_dir);
  m.outputs = {(a.corpus_dir / store::kCorpusFile).string()};
  return finish(std::move(m), a.corpus_dir, m.failed ? Exit::Partial : Exit::Clean);
}

// ------------------------------------------------------------------ augment

struct AugmentArgs {
  fs::path corpus_dir;
  gateway::GatewayConfig gateway;
  std::optional<Split> split;
  std::size_t batch_size = 16;
  std::optional<std::size_t> limit;
};

inline RunResult cmd_augment(const AugmentArgs& a) {
  auto m = start("augment", {{"corpus_dir", a.corpus_dir.string()},
                             {"gateway", gateway_json(a.gateway)},
                             {"split", split_json(a.split)},
                             {"batch_size", a.batch_size},
                             {"limit", a.limit ? json(*a.limit) : json(nullptr)}});
  fsutil::DirectoryLock lock(a.corpus_dir);
  m.digest(a.corpus_dir / store::kCorpusFile);
  auto corpus = store::load_corpus(a.corpus_dir);
  for (const auto& s : corpus.samples) m.skipped += s.gold_explanation && (!a.split || s.split == *a.split);
  gateway::Gateway gw(a.gateway);
  const auto log = a.corpus_dir / "augmentation.jsonl";
  store::AugmentConfig cfg;
  cfg.batch_size = a.batch_size;
  cfg.limit = a.limit;
  cfg.split = a.split;
  cfg.checkpoint = [&](const store::Corpus& c) { store::save_corpus(c, a.corpus_dir); };
  for (const auto& r : store::augment_explanations(corpus, gw, cfg)) {
    fsutil::append_line(log, json{{"sample_id", r.sample_id},
                                  {"raw_reply", r.raw_reply},
                                  {"accepted", r.accepted},
                                  {"reviewer_note", r.reviewer_note ? json(*r.reviewer_note) : json(nullptr)}}
                                 .dump());
    if (r.accepted) ++m.processed;
    else m.fail(r.sample_id, "AugmentationFailed", r.reviewer_note.value_or(""));
  }
  store::save_corpus(corpus, a.corpus_dir);
  m.outputs = {(a.corpus_dir / store::kCorpusFile).string(), log.string()};
  return finish(std::move(m), a.corpus_dir, m.failed ? Exit::Partial : Exit::Clean);
}

// ------------------------------------------------------------ review-sample

struct ReviewArgs {
  fs::path corpus_dir;
  double fraction = 0.10;
  std::uint64_t seed = 0;
  fs::path out;
};

inline RunResult cmd_review_sample(const ReviewArgs& a) {
  auto m = start("review-sample", {{"corpus_dir", a.corpus_dir.string()},
                                   {"fraction", a.fraction},
                                   {"seed", a.seed},
                                   {"out", a.out.string()}});
  m.digest(a.corpus_dir / store::kCorpusFile);
  const auto corpus = store::load_corpus(a.corpus_dir);
  const auto ids = store::sample_for_review(corpus, a.fraction, a.seed);
  fsutil::write_atomic(a.out, store::review_sheet(corpus, ids));
  m.processed = ids.size();
  m.outputs = {a.out.string()};
  return finish(std::move(m), a.corpus_dir, Exit::Clean);
}

// ------------------------------------------------------------------- export

struct ExportArgs {
  fs::path corpus_dir;
  store::Variant variant;
  std::optional<Split> split = Split::Train;
  fs::path out;
};

inline RunResult cmd_export(const ExportArgs& a) {
  auto m = start("export", {{"corpus_dir", a.corpus_dir.string()},
                            {"variant", a.variant.str()},
                            {"split", split_json(a.split)},
                            {"out", a.out.string()}});
  m.digest(a.corpus_dir / store::kCorpusFile);
  const auto corpus = store::load_corpus(a.corpus_dir);
  m.processed = store::export_finetune_data(corpus, a.variant, a.out, a.split);
  m.outputs = {a.out.string(), a.out.string() + ".manifest.json"};
  return finish(std::move(m), a.corpus_dir, Exit::Clean);
}

// -------------------------------------------------------------------- infer

struct PredictionRow {
  std::string id;
  std::string variant;
  std::optional<std::string> raw_reply;
  std::optional<Sentiment> predicted;
  std::optional<std::string> explanation;
  std::optional<std::string> parse_error;  // codec category
  std::optional<std::string> call_error;   // prompt or gateway failure
  std::optional<int> attempt;

  json to_json() const {
    const auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    return {{"id", id},
            {"variant", variant},
            {"raw_reply", opt(raw_reply)},
            {"predicted", predicted ? json(to_string(*predicted)) : json(nullptr)},
            {"explanation", opt(explanation)},
            {"parse_error", opt(parse_error)},
            {"call_error", opt(call_error)},
            {"attempt", opt(attempt)}};
  }

  static PredictionRow from_json(const json& j) {
    const auto str = [&](const char* k) -> std::optional<std::string> {
      return j.contains(k) && j[k].is_string() ? std::optional(j[k].get<std::string>()) : std::nullopt;
    };
    PredictionRow r;
    r.id = j.at("id").get<std::string>();
    r.variant = j.value("variant", "");
    r.raw_reply = str("raw_reply");
    if (const auto p = str("predicted")) r.predicted = parse_sentiment(*p);
    r.explanation = str("explanation");
    r.parse_error = str("parse_error");
    r.call_error = str("call_error");
    if (j.contains("attempt") && j["attempt"].is_number_integer()) r.attempt = j["attempt"].get<int>();
    return r;
  }
};

// Reads a prediction file; later rows for the same id replace earlier ones.
inline std::map<std::string, PredictionRow> read_predictions(const fs::path& p) {
  std::map<std::string, PredictionRow> rows;
  const auto body = encoding::read_file(p);
  if (!body) return rows;
  for (const auto line : text::lines(*body)) {
    if (text::trim(line).empty()) continue;
    try {
      auto r = PredictionRow::from_json(json::parse(line));
      rows[r.id] = std::move(r);
    } catch (const json::exception& e) {
      throw store::Error(store::Errc::MalformedRecord, p.string() + ": " + e.what());
    }
  }
  return rows;
}

inline PredictionRow decode_reply(const std::string& id, const std::string& variant, const gateway::ChatReply& r) {
  PredictionRow row{id, variant, r.text, std::nullopt, std::nullopt, std::nullopt, std::nullopt, r.attempt};
  try {
    const auto parsed = codec::parse_reply(r.text);
    row.predicted = parsed.sentiment;
    row.explanation = parsed.explanation;
  } catch (const codec::Error& e) {
    row.parse_error = to_string(e.kind());
  }
  return row;
}

struct InferArgs {
  fs::path corpus_dir;
  std::optional<Split> split = Split::Test;
  store::Variant variant;
  gateway::GatewayConfig gateway;
  fs::path out;
  std::size_t chunk = 32;  // rows appended to `out` after each chunk
};

// Rows with a reply already in `out` are kept and not re-requested; rows whose
// call failed are retried. The file is rewritten sorted by id at the end.
inline RunResult cmd_infer(const InferArgs& a) {
  auto m = start("infer", {{"corpus_dir", a.corpus_dir.string()},
                           {"split", split_json(a.split)},
                           {"variant", a.variant.str()},
                           {"gateway", gateway_json(a.gateway)},
                           {"template_version", prompt::kTemplateVersion},
                           {"out", a.out.string()}});
  m.digest(a.corpus_dir / store::kCorpusFile);
  const auto corpus = store::load_corpus(a.corpus_dir);
  auto rows = read_predictions(a.out);
  const auto variant = a.variant.str();

  std::vector<const Sample*> todo;
  for (const auto& s : corpus.samples) {
    if (a.split && s.split != *a.split) continue;
    const auto it = rows.find(s.id);
    if (it != rows.end() && it->second.raw_reply && it->second.variant == variant) {
      ++m.skipped;
      continue;
    }
    todo.push_back(&s);
  }

  gateway::Gateway gw(a.gateway);
  for (std::size_t b = 0; b < todo.size(); b += std::max<std::size_t>(1, a.chunk)) {
    const auto end = std::min(todo.size(), b + std::max<std::size_t>(1, a.chunk));
    std::vector<prompt::MessageSequence> seqs;
    std::vector<const Sample*> sent;
    std::vector<PredictionRow> chunk_rows;
    for (std::size_t k = b; k < end; ++k) {
      const auto& s = *todo[k];
      try {
        seqs.push_back(store::variant_prompt(store::with_resolved_image(s, corpus.image_root), a.variant));
        sent.push_back(&s);
      } catch (const std::runtime_error& e) {
        chunk_rows.push_back(PredictionRow{s.id, variant, {}, {}, {}, {}, e.what(), {}});
      }
    }
    const auto replies = gw.chat_batch(seqs);
    for (std::size_t k = 0; k < sent.size(); ++k) {
      if (const auto* r = std::get_if<gateway::ChatReply>(&replies[k])) {
        chunk_rows.push_back(decode_reply(sent[k]->id, variant, *r));
      } else {
        chunk_rows.push_back(
            PredictionRow{sent[k]->id, variant, {}, {}, {}, {}, std::get<gateway::Error>(replies[k]).what(), {}});
      }
    }
    for (auto& r : chunk_rows) {
      fsutil::append_line(a.out, r.to_json().dump());
      if (r.call_error) m.fail(r.id, "CallFailed", *r.call_error);
      else ++m.processed;
      if (r.parse_error) m.failures.push_back({r.id, *r.parse_error, "reply did not parse"});
      rows[r.id] = std::move(r);
    }
  }

  std::string body;
  for (const auto& [id, r] : rows) body += r.to_json().dump() + "\n";
  fsutil::write_atomic(a.out, body);
  m.outputs = {a.out.string()};
  return finish(std::move(m), a.corpus_dir, m.failed ? Exit::Partial : Exit::Clean);
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path corpus_dir;
  fs::path predictions;
  metrics::FailurePolicy policy = metrics::FailurePolicy::Drop;
  std::optional<fs::path> external_scores;  // TSV: id <tab> score
  fs::path out_dir;
};

inline std::map<std::string, double> read_external_scores(const fs::path& p) {
  const auto body = encoding::read_file(p);
  if (!body) throw store::Error(store::Errc::UnreadableFile, p.string());
  std::map<std::string, double> out;
  for (const auto line : text::lines(*body)) {
    const auto cols = text::split(line, '\t');
    if (cols.size() != 2) continue;
    try {
      out[std::string(text::trim(cols[0]))] = std::stod(std::string(cols[1]));
    } catch (const std::exception&) {
      // header or malformed row
    }
  }
  return out;
}

// Classification covers every prediction row (failures handled per policy).
// Generation metrics cover rows with a parsed explanation and a gold one.
inline json evaluation_report(const store::Corpus& corpus, const std::map<std::string, PredictionRow>& rows,
                              metrics::FailurePolicy policy, const std::map<std::string, double>* external,
                              std::string* per_sample) {
  std::vector<metrics::LabelPair> pairs;
  std::vector<std::string> cands, refs;
  double ext_sum = 0.0;
  std::size_t ext_n = 0;
  for (const auto& [id, r] : rows) {
    const auto* s = corpus.find(id);
    if (!s) throw Error(Errc::UnknownSample, id);
    pairs.push_back({r.predicted, s->gold_sentiment});
    json line{{"id", id},
              {"gold", to_string(s->gold_sentiment)},
              {"predicted", r.predicted ? json(to_string(*r.predicted)) : json(nullptr)},
              {"correct", r.predicted == s->gold_sentiment},
              {"failure", r.call_error ? json("CallFailed") : r.parse_error ? json(*r.parse_error) : json(nullptr)}};
    if (r.explanation && s->gold_explanation) {
      cands.push_back(*r.explanation);
      refs.push_back(*s->gold_explanation);
      const auto rg = metrics::rouge_pair(*r.explanation, *s->gold_explanation);
      line["bleu4"] = metrics::sentence_bleu4(*r.explanation, *s->gold_explanation);
      line["rouge1_f"] = rg.rouge1;
      line["rouge2_f"] = rg.rouge2;
      line["rougeL_f"] = rg.rougeL;
    }
    if (external) {
      const auto it = external->find(id);
      line["external_score"] = it == external->end() ? json(nullptr) : json(it->second);
      if (it != external->end()) {
        ext_sum += it->second;
        ++ext_n;
      }
    }
    if (per_sample) *per_sample += line.dump() + "\n";
  }

  const auto cls = metrics::classification_report(pairs, policy);
  json per_class = json::object();
  for (const auto label : kSentiments) {
    const auto& st = cls.stats(label);
    per_class[to_string(label)] = {
        {"precision", st.precision}, {"recall", st.recall}, {"f1", st.f1}, {"support", st.support}};
  }
  json confusion = json::object();
  for (const auto g : kSentiments) {
    json row = json::object();
    for (const auto p : kSentiments) row[to_string(p)] = cls.confusion[static_cast<int>(g)][static_cast<int>(p)];
    row["unparsed"] = cls.unparsed[static_cast<int>(g)];
    confusion[to_string(g)] = std::move(row);
  }
  json report{{"failure_policy", to_string(policy)},
              {"predictions", rows.size()},
              {"classification",
               {{"accuracy", cls.accuracy},
                {"macro_f1", cls.macro_f1},
                {"evaluated", cls.evaluated},
                {"dropped", cls.dropped},
                {"per_class", std::move(per_class)},
                {"confusion", std::move(confusion)}}}};
  if (!cands.empty()) {
    const auto gen = metrics::generation_report(cands, refs);
    report["generation"] = {{"bleu4", gen.bleu4},
                            {"rouge1_f", gen.rouge1_f},
                            {"rouge2_f", gen.rouge2_f},
                            {"rougeL_f", gen.rougeL_f},
                            {"pairs", gen.pairs}};
  } else {
    report["generation"] = nullptr;
  }
  if (external) {
    report["external_semantic_score"] = ext_n ? json(ext_sum / static_cast<double>(ext_n)) : json(nullptr);
    report["external_scored"] = ext_n;
  }
  return report;
}

inline RunResult cmd_evaluate(const EvaluateArgs& a) {
  auto m = start("evaluate", {{"corpus_dir", a.corpus_dir.string()},
                              {"predictions", a.predictions.string()},
                              {"failure_policy", to_string(a.policy)},
                              {"external_scores", a.external_scores ? a.external_scores->string() : ""},
                              {"out_dir", a.out_dir.string()}});
  m.digest(a.corpus_dir / store::kCorpusFile);
  m.digest(a.predictions);
  const auto corpus = store::load_corpus(a.corpus_dir);
  if (!fs::exists(a.predictions)) throw store::Error(store::Errc::UnreadableFile, a.predictions.string());
  const auto rows = read_predictions(a.predictions);
  std::optional<std::map<std::string, double>> ext;
  if (a.external_scores) {
    m.digest(*a.external_scores);
    ext = read_external_scores(*a.external_scores);
  }
  std::string per_sample;
  const auto report = evaluation_report(corpus, rows, a.policy, ext ? &*ext : nullptr, &per_sample);
  fsutil::write_atomic(a.out_dir / "report.json", report.dump(2) + "\n");
  fsutil::write_atomic(a.out_dir / "per_sample.jsonl", per_sample);
  for (const auto& [id, r] : rows) {
    if (r.predicted) ++m.processed;
    else m.fail(id, r.call_error ? "CallFailed" : r.parse_error.value_or("Unparsed"), "no parsed label");
  }
  m.outputs = {(a.out_dir / "report.json").string(), (a.out_dir / "per_sample.jsonl").string()};
  // Unparsed replies are scored by policy; they do not make the run partial.
  return finish(std::move(m), a.out_dir, Exit::Clean);
}

// -------------------------------------------------------------------- judge

struct JudgeSystem {
  std::string name;
  fs::path predictions;
};

struct JudgeArgs {
  fs::path corpus_dir;
  std::vector<JudgeSystem> systems;
  std::size_t subset = 100;
  std::uint64_t seed = 0;
  gateway::GatewayConfig gateway;
  fs::path out_dir;
};

// Uniformly shuffled presentation order for m candidates (Fisher-Yates).
inline std::vector<std::size_t> draw_order(std::mt19937_64& rng, std::size_t m) {
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

inline RunResult cmd_judge(const JudgeArgs& a) {
  json sys = json::array();
  for (const auto& s : a.systems) sys.push_back({{"name", s.name}, {"predictions", s.predictions.string()}});
  auto m = start("judge", {{"corpus_dir", a.corpus_dir.string()},
                           {"systems", sys},
                           {"subset", a.subset},
                           {"seed", a.seed},
                           {"gateway", gateway_json(a.gateway)},
                           {"out_dir", a.out_dir.string()}});
  if (a.systems.size() < prompt::kMinJudgeCandidates || a.systems.size() > prompt::kMaxJudgeCandidates) {
    throw Error(Errc::BadArgument, "judge needs between 2 and 9 prediction files");
  }
  m.digest(a.corpus_dir / store::kCorpusFile);
  const auto corpus = store::load_corpus(a.corpus_dir);
  std::vector<std::map<std::string, PredictionRow>> preds;
  for (const auto& s : a.systems) {
    m.digest(s.predictions);
    if (!fs::exists(s.predictions)) throw store::Error(store::Errc::UnreadableFile, s.predictions.string());
    preds.push_back(read_predictions(s.predictions));
  }

  // Candidate pool: ids of the first system, in id order.
  std::vector<std::string> pool;
  for (const auto& [id, r] : preds.front()) pool.push_back(id);
  std::mt19937_64 rng(a.seed);
  const auto k = std::min(a.subset, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng() % (pool.size() - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());

  std::vector<prompt::MessageSequence> seqs;
  std::vector<prompt::JudgeBallot> ballots;
  for (const auto& id : pool) {
    const auto* s = corpus.find(id);
    if (!s) throw Error(Errc::UnknownSample, id);
    std::vector<std::string> cands;
    for (std::size_t j = 0; j < preds.size(); ++j) {
      const auto it = preds[j].find(id);
      if (it == preds[j].end()) throw Error(Errc::CoverageGap, a.systems[j].name + " has no prediction for " + id);
      cands.push_back(it->second.explanation.value_or(it->second.raw_reply.value_or("")));
    }
    prompt::JudgeBallot ballot{draw_order(rng, cands.size())};
    seqs.push_back(prompt::build_judge_prompt(store::with_resolved_image(*s, corpus.image_root), ballot.arrange(cands)));
    ballots.push_back(std::move(ballot));
  }

  gateway::Gateway gw(a.gateway);
  const auto replies = gw.chat_batch(seqs);
  std::vector<std::size_t> tally(a.systems.size(), 0);
  std::string detail;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    json line{{"id", pool[i]}, {"order", ballots[i].order}};
    std::optional<std::size_t> winner;
    if (const auto* r = std::get_if<gateway::ChatReply>(&replies[i])) {
      line["raw_reply"] = r->text;
      if (const auto choice = prompt::parse_judge_choice(r->text, a.systems.size())) {
        winner = ballots[i].original_index(*choice);
      }
      if (!winner) m.fail(pool[i], "UnparsableChoice", r->text);
    } else {
      line["raw_reply"] = nullptr;
      m.fail(pool[i], "CallFailed", std::get<gateway::Error>(replies[i]).what());
    }
    line["winner"] = winner ? json(a.systems[*winner].name) : json(nullptr);
    if (winner) {
      ++tally[*winner];
      ++m.processed;
    }
    detail += line.dump() + "\n";
  }

  json tallies = json::object();
  for (std::size_t j = 0; j < a.systems.size(); ++j) tallies[a.systems[j].name] = tally[j];
  const json summary{{"sampled", pool.size()}, {"judged", m.processed}, {"failures", m.failed}, {"tally", tallies}};
  fsutil::write_atomic(a.out_dir / "judge_tally.json", summary.dump(2) + "\n");
  fsutil::write_atomic(a.out_dir / "judge_votes.jsonl", detail);
  m.outputs = {(a.out_dir / "judge_tally.json").string(), (a.out_dir / "judge_votes.jsonl").string()};
  return finish(std::move(m), a.out_dir, m.failed ? Exit::Partial : Exit::Clean);
}

// ----------------------------------------------------------- validate-conllu

// Checks parse files (e.g. the parser bridge's output). Each file is one
// sample; failures are per file.
inline RunResult cmd_validate_conllu(const std::vector<fs::path>& inputs, const fs::path& runs_dir) {
  json names = json::array();
  for (const auto& p : inputs) names.push_back(p.string());
  auto m = start("validate-conllu", {{"inputs", names}});
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".conllu") files.push_back(e.path());
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto body = encoding::read_file(f);
    if (!body) {
      m.fail(f.string(), "UnreadableFile", "");
      continue;
    }
    try {
      const auto blocks = conllu::parse(*body);
      if (blocks.empty()) {
        m.fail(f.string(), "EmptyDocument", "no sentences");
        continue;
      }
      ++m.processed;
    } catch (const conllu::Error& e) {
      m.fail(f.string(), to_string(e.kind()), e.what());
    }
  }
  return finish(std::move(m), runs_dir, m.failed ? Exit::Partial : Exit::Clean);
}

}  // namespace mabsa::pipeline
