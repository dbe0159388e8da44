#pragma once

// Corpus records on disk: JSON-lines persistence, Twitter-format import,
// explanation augmentation, review sampling and fine-tuning export.
//
// A corpus directory holds corpus.jsonl (one Sample per line) and
// corpus.meta.json (name, image root, provenance notes).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mabsa/encoding.hpp"
#include "mabsa/error.hpp"
#include "mabsa/fsutil.hpp"
#include "mabsa/llm_gateway.hpp"
#include "mabsa/promptkit.hpp"
#include "mabsa/response_codec.hpp"
#include "mabsa/sample.hpp"
#include "mabsa/strings.hpp"
#include "mabsa/textualizer.hpp"

namespace mabsa::store {

enum class Errc {
  BadLabel,
  MissingPlaceholder,
  UnreadableFile,
  MalformedRecord,
  DuplicateId,
  NothingAugmented,
  BadFraction,
  MissingExplanation,
  MissingDepText,
  BadKey,
};

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::BadLabel: return "BadLabel";
    case Errc::MissingPlaceholder: return "MissingPlaceholder";
    case Errc::UnreadableFile: return "UnreadableFile";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::NothingAugmented: return "NothingAugmented";
    case Errc::BadFraction: return "BadFraction";
    case Errc::MissingExplanation: return "MissingExplanation";
    case Errc::MissingDepText: return "MissingDepText";
    case Errc::BadKey: return "BadKey";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

inline constexpr std::string_view kCorpusFile = "corpus.jsonl";
inline constexpr std::string_view kMetaFile = "corpus.meta.json";

// Cache key for a DepText body, e.g. "edge:2:directed:keep" or
// "conllu:inf:undirected:strip".
struct DepTextKey {
  textualize::Format format = textualize::Format::Edge;
  std::optional<std::size_t> depth;  // nullopt = unbounded
  prune::DistanceMode mode = prune::DistanceMode::Directed;
  bool strip_relations = false;

  prune::PruneConfig prune_config() const { return {depth, mode, strip_relations}; }

  std::string str() const {
    return std::string(textualize::to_string(format)) + ":" + (depth ? std::to_string(*depth) : "inf") + ":" +
           prune::to_string(mode) + ":" + (strip_relations ? "strip" : "keep");
  }

  static DepTextKey parse(std::string_view s) {
    const auto f = text::split(s, ':');
    if (f.size() != 4) throw Error(Errc::BadKey, std::string(s));
    DepTextKey k;
    if (f[0] == "edge") k.format = textualize::Format::Edge;
    else if (f[0] == "conllu") k.format = textualize::Format::Conllu;
    else throw Error(Errc::BadKey, std::string(s));
    if (f[1] != "inf") {
      if (f[1].empty() || !std::all_of(f[1].begin(), f[1].end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw Error(Errc::BadKey, std::string(s));
      k.depth = std::stoul(std::string(f[1]));
    }
    if (f[2] == "directed") k.mode = prune::DistanceMode::Directed;
    else if (f[2] == "undirected") k.mode = prune::DistanceMode::Undirected;
    else throw Error(Errc::BadKey, std::string(s));
    if (f[3] != "strip" && f[3] != "keep") throw Error(Errc::BadKey, std::string(s));
    k.strip_relations = f[3] == "strip";
    return k;
  }

  friend bool operator==(const DepTextKey&, const DepTextKey&) = default;
};

// Prompt variant: plain baseline, or syntax-enhanced with a cached DepText.
struct Variant {
  std::optional<DepTextKey> syntax;

  static Variant baseline() { return {}; }
  static Variant with_syntax(DepTextKey k) { return {k}; }
  std::string str() const { return syntax ? "syntax[" + syntax->str() + "]" : "baseline"; }
};

struct Corpus {
  std::string name;
  std::vector<Sample> samples;
  std::vector<std::string> provenance;
  std::filesystem::path image_root;  // image_ref is relative to this

  std::array<std::size_t, 3> split_sizes() const {
    std::array<std::size_t, 3> n{};
    for (const auto& s : samples) ++n[static_cast<std::size_t>(s.split)];
    return n;
  }

  Sample* find(std::string_view id) {
    for (auto& s : samples)
      if (s.id == id) return &s;
    return nullptr;
  }
  const Sample* find(std::string_view id) const { return const_cast<Corpus*>(this)->find(id); }
};

// Copy of the sample whose image_ref points at the actual file.
inline Sample with_resolved_image(const Sample& s, const std::filesystem::path& image_root) {
  Sample out = s;
  if (!s.image_ref.empty() && !image_root.empty()) out.image_ref = (image_root / s.image_ref).string();
  return out;
}

// ---------------------------------------------------------------- JSON-lines

inline nlohmann::json to_json(const Sample& s) {
  nlohmann::json j{{"id", s.id},
                   {"split", to_string(s.split)},
                   {"text", s.text},
                   {"image", s.image_ref},
                   {"aspect", s.aspect},
                   {"aspect_occurrence", s.aspect_occurrence},
                   {"gold_sentiment", to_string(s.gold_sentiment)},
                   {"deptext", s.deptext_cache},
                   {"image_missing", s.image_missing}};
  if (s.gold_explanation) j["gold_explanation"] = *s.gold_explanation;
  return j;
}

inline Sample sample_from_json(const nlohmann::json& j) {
  try {
    Sample s;
    s.id = j.at("id").get<std::string>();
    const auto split = parse_split(j.at("split").get<std::string>());
    const auto label = parse_sentiment(j.at("gold_sentiment").get<std::string>());
    if (!split || !label) throw Error(Errc::MalformedRecord, "bad split or label in " + s.id);
    s.split = *split;
    s.gold_sentiment = *label;
    s.text = j.at("text").get<std::string>();
    s.image_ref = j.at("image").get<std::string>();
    s.aspect = j.at("aspect").get<std::string>();
    s.aspect_occurrence = j.at("aspect_occurrence").get<std::size_t>();
    if (j.contains("gold_explanation")) s.gold_explanation = j["gold_explanation"].get<std::string>();
    if (j.contains("deptext")) s.deptext_cache = j["deptext"].get<std::map<std::string, std::string>>();
    s.image_missing = j.value("image_missing", false);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRecord, e.what());
  }
}

inline std::string serialize_samples(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) out += to_json(s).dump() + "\n";
  return out;
}

inline std::vector<Sample> parse_samples(std::string_view content) {
  std::vector<Sample> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto line : text::lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    }
    auto s = sample_from_json(j);
    if (!seen.insert(s.id).second) throw Error(Errc::DuplicateId, s.id);
    out.push_back(std::move(s));
  }
  return out;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  const auto sizes = c.split_sizes();
  nlohmann::json meta{{"name", c.name},
                      {"image_root", c.image_root.string()},
                      {"provenance", c.provenance},
                      {"split_sizes", {{"train", sizes[0]}, {"dev", sizes[1]}, {"test", sizes[2]}}}};
  fsutil::write_atomic(dir / kCorpusFile, serialize_samples(c.samples));
  fsutil::write_atomic(dir / kMetaFile, meta.dump(2) + "\n");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  const auto body = encoding::read_file(dir / kCorpusFile);
  if (!body) throw Error(Errc::UnreadableFile, (dir / kCorpusFile).string());
  Corpus c;
  c.samples = parse_samples(*body);
  if (const auto meta = encoding::read_file(dir / kMetaFile)) {
    try {
      const auto j = nlohmann::json::parse(*meta);
      c.name = j.value("name", "");
      c.image_root = j.value("image_root", "");
      c.provenance = j.value("provenance", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, std::string(kMetaFile) + ": " + e.what());
    }
  }
  return c;
}

// ---------------------------------------------------------- Twitter import

inline constexpr std::string_view kPlaceholder = "$T$";

struct ImportIssue {
  std::string file;
  std::size_t record = 0;  // 0-based record index within the file
  Errc kind = Errc::MalformedRecord;
  std::string detail;
};

struct ImportResult {
  Corpus corpus;
  std::vector<ImportIssue> issues;
};

// Positions of the four lines of a record: text, aspect, label, image id.
struct RecordLayout {
  std::size_t text = 0, aspect = 1, label = 2, image = 3;
};

namespace detail {

inline bool looks_like_image(std::string_view s) {
  static const std::regex re(R"(.*\.(jpe?g|png|gif|bmp|webp)$)", std::regex::icase);
  return std::regex_match(s.begin(), s.end(), re);
}

inline bool looks_like_integer(std::string_view s) {
  static const std::regex re(R"([-+]?[0-9]+)");
  return std::regex_match(s.begin(), s.end(), re);
}

// Both published layouts keep text before aspect; label and image id move.
inline RecordLayout detect_layout(const std::vector<std::string>& rec) {
  RecordLayout l;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < 4; ++i) {
    if (rec[i].find(kPlaceholder) != std::string::npos) l.text = i;
    else if (looks_like_image(rec[i])) l.image = i;
    else rest.push_back(i);
  }
  if (rest.size() != 2) return RecordLayout{};
  const bool first_int = looks_like_integer(rec[rest[0]]);
  const bool second_int = looks_like_integer(rec[rest[1]]);
  if (first_int && !second_int) {
    l.label = rest[0];
    l.aspect = rest[1];
  } else {
    l.aspect = rest[0];
    l.label = rest[1];
  }
  return l;
}

inline std::optional<Sentiment> twitter_label(std::string_view s) {
  s = text::trim(s);
  if (s == "-1") return Sentiment::Negative;
  if (s == "0") return Sentiment::Neutral;
  if (s == "1") return Sentiment::Positive;
  return std::nullopt;
}

// Number of (possibly overlapping) case-insensitive token-sequence matches
// of `aspect` lying entirely inside `prefix`.
inline std::size_t count_token_matches(std::string_view prefix, std::string_view aspect) {
  const auto hay = text::split_whitespace(prefix);
  const auto needle = text::split_whitespace(aspect);
  if (needle.empty() || needle.size() > hay.size()) return 0;
  std::size_t n = 0;
  for (std::size_t s = 0; s + needle.size() <= hay.size(); ++s) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size() && ok; ++k) ok = text::iequals_ascii(hay[s + k], needle[k]);
    n += ok;
  }
  return n;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace detail

// Reads <dir>/{train,dev,test}.txt (missing splits are skipped). Records are
// four non-empty lines; a trailing partial record is reported as malformed.
// Ids are "<split>-<5-digit 1-based index>".
inline ImportResult import_twitter_format(const std::filesystem::path& dir, const std::filesystem::path& image_dir,
                                          std::string name = "") {
  ImportResult out;
  out.corpus.name = name.empty() ? dir.filename().string() : std::move(name);
  out.corpus.image_root = image_dir;
  bool any_file = false;
  for (const auto split : {Split::Train, Split::Dev, Split::Test}) {
    const auto path = dir / (std::string(to_string(split)) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    any_file = true;
    const auto body = encoding::read_file(path);
    if (!body) throw Error(Errc::UnreadableFile, path.string());

    std::vector<std::string> lines;
    for (const auto l : text::lines(*body)) {
      if (!text::trim(l).empty()) lines.emplace_back(text::trim(l));
    }
    const auto file = path.filename().string();
    if (lines.size() % 4 != 0) {
      out.issues.push_back({file, lines.size() / 4, Errc::MalformedRecord, "trailing partial record"});
    }
    RecordLayout layout;
    if (lines.size() >= 4) layout = detail::detect_layout({lines.begin(), lines.begin() + 4});
    out.corpus.provenance.push_back(file + ": " + std::to_string(lines.size() / 4) + " records");

    std::size_t index = 0;
    for (std::size_t r = 0; r + 4 <= lines.size(); r += 4) {
      const std::size_t rec = r / 4;
      const auto& raw_text = lines[r + layout.text];
      const auto& aspect = lines[r + layout.aspect];
      const auto& label_line = lines[r + layout.label];
      const auto& image = lines[r + layout.image];
      const auto label = detail::twitter_label(label_line);
      if (!label) {
        out.issues.push_back({file, rec, Errc::BadLabel, "label '" + label_line + "'"});
        continue;
      }
      const auto at = raw_text.find(kPlaceholder);
      if (at == std::string::npos) {
        out.issues.push_back({file, rec, Errc::MissingPlaceholder, raw_text});
        continue;
      }
      Sample s;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", to_string(split), ++index);
      s.id = id;
      s.split = split;
      s.gold_sentiment = *label;
      s.aspect = aspect;
      s.image_ref = image;
      s.text = detail::replace_all(raw_text, kPlaceholder, aspect);
      s.aspect_occurrence = detail::count_token_matches(std::string_view(s.text).substr(0, at), aspect);
      s.image_missing = image_dir.empty() || !std::filesystem::is_regular_file(image_dir / image);
      out.corpus.samples.push_back(std::move(s));
    }
  }
  if (!any_file) throw Error(Errc::UnreadableFile, "no train/dev/test .txt files in " + dir.string());
  return out;
}

// ------------------------------------------------------------ augmentation

struct AugmentationRecord {
  std::string sample_id;
  std::string raw_reply;
  bool accepted = false;
  std::optional<std::string> reviewer_note;
};

struct AugmentConfig {
  std::size_t batch_size = 16;
  std::optional<std::size_t> limit;  // stop after this many gateway calls
  std::optional<Split> split;        // restrict to one split
  std::function<void(const Corpus&)> checkpoint;  // called after each batch
};

inline std::vector<AugmentationRecord> augment_explanations(Corpus& corpus, gateway::Gateway& gw,
                                                            const AugmentConfig& cfg = {}) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (s.gold_explanation || (cfg.split && s.split != *cfg.split)) continue;
    todo.push_back(i);
  }
  if (cfg.limit && todo.size() > *cfg.limit) todo.resize(*cfg.limit);

  std::vector<AugmentationRecord> records;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t b = 0; b < todo.size(); b += batch) {
    const auto end = std::min(todo.size(), b + batch);
    std::vector<prompt::MessageSequence> seqs;
    std::vector<std::size_t> sent;
    for (std::size_t k = b; k < end; ++k) {
      auto& s = corpus.samples[todo[k]];
      try {
        seqs.push_back(prompt::build_explain_gen_prompt(with_resolved_image(s, corpus.image_root)));
        sent.push_back(todo[k]);
      } catch (const prompt::Error& e) {
        records.push_back({s.id, "", false, e.what()});
      }
    }
    const auto replies = gw.chat_batch(seqs);
    for (std::size_t k = 0; k < sent.size(); ++k) {
      auto& s = corpus.samples[sent[k]];
      if (const auto* r = std::get_if<gateway::ChatReply>(&replies[k])) {
        s.gold_explanation = r->text;
        records.push_back({s.id, r->text, true, std::nullopt});
      } else {
        records.push_back({s.id, "", false, std::get<gateway::Error>(replies[k]).what()});
      }
    }
    if (cfg.checkpoint) cfg.checkpoint(corpus);
  }
  return records;
}

// ---------------------------------------------------------- review sample

// ceil(fraction * augmented) ids drawn without replacement by a partial
// Fisher-Yates shuffle on mt19937_64. Modulo reduction keeps the draw
// identical across standard libraries.
inline std::vector<std::string> sample_for_review(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::BadFraction, std::to_string(fraction));
  std::vector<std::string> ids;
  for (const auto& s : corpus.samples)
    if (s.gold_explanation) ids.push_back(s.id);
  if (ids.empty()) throw Error(Errc::NothingAugmented, "no sample has an explanation");
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size()) - 1e-9));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < want; ++i) {
    const auto j = i + static_cast<std::size_t>(rng() % (ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(want);
  return ids;
}

inline std::string tsv_field(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (c == '\t') out += "\\t";
    else if (c == '\n') out += "\\n";
    else if (c == '\r') out += "\\r";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

inline std::string review_sheet(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::string out = "id\ttext\taspect\tlabel\texplanation\timage\n";
  for (const auto& id : ids) {
    const auto* s = corpus.find(id);
    if (!s) continue;
    out += tsv_field(s->id) + "\t" + tsv_field(s->text) + "\t" + tsv_field(s->aspect) + "\t" +
           to_string(s->gold_sentiment) + "\t" + tsv_field(s->gold_explanation.value_or("")) + "\t" +
           tsv_field(with_resolved_image(*s, corpus.image_root).image_ref) + "\n";
  }
  return out;
}

// ------------------------------------------------------- fine-tune export

struct FinetuneHyperparameters {
  int lora_rank = 4;
  int lora_scaling = 16;
  double lora_dropout = 0.1;
  int epochs = 10;
  int batch_size = 1;
  std::string optimizer = "AdamW";
  double learning_rate = 1e-5;
};

inline nlohmann::json message_json(const prompt::Message& m) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : m.parts) {
    if (p.kind == prompt::MessagePart::Kind::Text) parts.push_back({{"type", "text"}, {"text", p.content}});
    else parts.push_back({{"type", "image"}, {"image", p.content}});
  }
  return {{"role", prompt::to_string(m.role)}, {"content", std::move(parts)}};
}

// Inference prompt for a sample under a variant; the DepText body comes from
// the sample's cache.
inline prompt::MessageSequence variant_prompt(const Sample& s, const Variant& v) {
  if (!v.syntax) return prompt::build_inference_prompt(s, std::nullopt);
  const auto it = s.deptext_cache.find(v.syntax->str());
  if (it == s.deptext_cache.end()) throw Error(Errc::MissingDepText, s.id + " lacks " + v.syntax->str());
  return prompt::build_inference_prompt(s, it->second);
}

// Writes one conversation record per sample plus <out>.manifest.json.
inline std::size_t export_finetune_data(const Corpus& corpus, const Variant& variant, const std::filesystem::path& out,
                                        std::optional<Split> split = std::nullopt,
                                        const FinetuneHyperparameters& hp = {}) {
  std::string body;
  std::size_t n = 0;
  for (const auto& s : corpus.samples) {
    if (split && s.split != *split) continue;
    if (!s.gold_explanation) throw Error(Errc::MissingExplanation, s.id);
    auto seq = variant_prompt(with_resolved_image(s, corpus.image_root), variant);
    seq.messages.push_back(
        {prompt::Role::Assistant, {prompt::MessagePart::text(codec::render_reply(s.gold_sentiment, *s.gold_explanation))}});
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : seq.messages) msgs.push_back(message_json(m));
    body += nlohmann::json{{"id", s.id}, {"messages", std::move(msgs)}}.dump() + "\n";
    ++n;
  }
  fsutil::write_atomic(out, body);
  nlohmann::json manifest{{"records", n},
                          {"variant", variant.str()},
                          {"template_version", prompt::kTemplateVersion},
                          {"split", split ? to_string(*split) : "all"},
                          {"data_sha256", encoding::sha256_hex(body)},
                          {"hyperparameters",
                           {{"lora_rank", hp.lora_rank},
                            {"lora_scaling", hp.lora_scaling},
                            {"lora_dropout", hp.lora_dropout},
                            {"epochs", hp.epochs},
                            {"batch_size", hp.batch_size},
                            {"optimizer", hp.optimizer},
                            {"learning_rate", hp.learning_rate}}}};
  auto mpath = out;
  mpath += ".manifest.json";
  fsutil::write_atomic(mpath, manifest.dump(2) + "\n");
  return n;
}

}  // namespace mabsa::store
