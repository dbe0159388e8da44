#pragma once

// Prompt templates and role-tagged message sequences.
//
// The system and user templates below are also stored as plain-text assets
// under prompts/v1/ and must stay byte-identical to them. Placeholders are
// substituted in a single left-to-right pass, so interpolated values are
// never rescanned. "<image>" splits the user text into an image part.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mabsa/error.hpp"
#include "mabsa/sample.hpp"
#include "mabsa/textualizer.hpp"

namespace mabsa::prompt {

inline constexpr std::string_view kTemplateVersion = "v1";

inline constexpr std::string_view kExplainGenSystem =
    "Each sample you are given includes an image and a piece of text. Both the image and the text may contain "
    "emotional cues relevant to a sentiment label (negative/neutral/positive).\n"
    "Your task is to explain how this sentiment is classified. Your explanation must analyze both the image and "
    "the text. Do not rely only on the text.\n"
    "Your response must be a single short paragraph of plain text. Do not include any special formatting, "
    "punctuation for lists, markdown symbols, line breaks, or decorative characters. Notice: The explanation "
    "should be as brief but accurate as possible. Try to limit it to 50 words or less.";

inline constexpr std::string_view kExplainGenUser =
    "Image: <image> Text: <text> Aspect term: <aspect>\n"
    "Sentiment: <sentiment>\n"
    "Please explain why this sentiment is identified as <sentiment>.";

inline constexpr std::string_view kInferenceSystem =
    "Each sample you are given includes an image and a piece of text. Both the image and the text may contain "
    "emotional cues relevant to a sentiment (negative/neutral/positive).\n"
    "Your task is to identify the sentiment and explain the sentiment you have identified.\n"
    "Output strictly in the following format: Sentiment: ... Explanation: ... If your output does not follow "
    "this format, it is considered incorrect.";

inline constexpr std::string_view kBaselineUser =
    "Image: <image> Text: <text> Aspect term: <aspect>.\n"
    "What is the sentiment of this aspect term? Explain why it is identified as this sentiment.";

inline constexpr std::string_view kSyntaxUser =
    "Image: <image> Text: <text> Aspect term: <aspect>.\n"
    "Dependency syntax info related to aspect term: <syntax info>\n"
    "What is the sentiment of this aspect term? Explain why it is identified as this sentiment.";

inline constexpr std::string_view kJudgeSystem =
    "You are given an image, a piece of text, an aspect term, and several candidate explanations of the "
    "sentiment expressed toward the aspect term. Pick the explanation that best justifies that sentiment using "
    "both the image and the text.\n"
    "Reply with the number of the best explanation and nothing else.";

inline constexpr std::string_view kJudgeUser =
    "Image: <image> Text: <text> Aspect term: <aspect>.\n"
    "Candidate explanations:\n"
    "<candidates>\n"
    "Which explanation is best? Answer with its number only.";

inline constexpr std::size_t kMinJudgeCandidates = 2;
inline constexpr std::size_t kMaxJudgeCandidates = 9;

enum class Errc { MissingImage, TooFewCandidates, TooManyCandidates };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::MissingImage: return "MissingImage";
    case Errc::TooFewCandidates: return "TooFewCandidates";
    case Errc::TooManyCandidates: return "TooManyCandidates";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

enum class Role { System, User, Assistant };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "unknown";
}

struct MessagePart {
  enum class Kind { Text, ImageRef };
  Kind kind = Kind::Text;
  std::string content;  // text body or image path

  static MessagePart text(std::string s) { return {Kind::Text, std::move(s)}; }
  static MessagePart image(std::string path) { return {Kind::ImageRef, std::move(path)}; }

  friend bool operator==(const MessagePart&, const MessagePart&) = default;
};

struct Message {
  Role role = Role::User;
  std::vector<MessagePart> parts;

  // Concatenated text parts, with image parts rendered as "<image>".
  std::string flat_text() const {
    std::string out;
    for (const auto& p : parts) out += p.kind == MessagePart::Kind::Text ? p.content : "<image>";
    return out;
  }

  friend bool operator==(const Message&, const Message&) = default;
};

enum class TemplateId { ExplainGen, Baseline, Syntax, Judge };

inline const char* to_string(TemplateId t) {
  switch (t) {
    case TemplateId::ExplainGen: return "explain-gen";
    case TemplateId::Baseline: return "baseline";
    case TemplateId::Syntax: return "syntax";
    case TemplateId::Judge: return "judge";
  }
  return "unknown";
}

struct MessageSequence {
  std::vector<Message> messages;
  TemplateId template_id = TemplateId::Baseline;

  friend bool operator==(const MessageSequence&, const MessageSequence&) = default;
};

using Bindings = std::vector<std::pair<std::string_view, std::string>>;

// Substitutes "<name>" placeholders from `bindings` in one pass; "<image>"
// becomes an image part. Unbound "<...>" sequences are copied verbatim.
inline std::vector<MessagePart> render(std::string_view tpl, const Bindings& bindings,
                                       const std::optional<std::string>& image = std::nullopt) {
  std::vector<MessagePart> parts;
  std::string buf;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '<') {
      const auto close = tpl.find('>', i);
      if (close != std::string_view::npos) {
        const auto name = tpl.substr(i + 1, close - i - 1);
        if (name == "image" && image) {
          if (!buf.empty()) parts.push_back(MessagePart::text(std::move(buf)));
          buf.clear();
          parts.push_back(MessagePart::image(*image));
          i = close + 1;
          continue;
        }
        bool bound = false;
        for (const auto& [key, value] : bindings) {
          if (key == name) {
            buf += value;
            bound = true;
            break;
          }
        }
        if (bound) {
          i = close + 1;
          continue;
        }
      }
    }
    buf += tpl[i++];
  }
  if (!buf.empty()) parts.push_back(MessagePart::text(std::move(buf)));
  return parts;
}

namespace detail {

inline void require_image(const Sample& s) {
  if (s.image_ref.empty() || s.image_missing) {
    throw Error(Errc::MissingImage, "sample " + s.id + " has no usable image");
  }
}

inline Message system_message(std::string_view text) {
  return Message{Role::System, {MessagePart::text(std::string(text))}};
}

}  // namespace detail

// Explanation-generation prompt: the gold label is given as a constraint.
inline MessageSequence build_explain_gen_prompt(const Sample& s) {
  detail::require_image(s);
  const std::string label = to_string(s.gold_sentiment);
  MessageSequence seq;
  seq.template_id = TemplateId::ExplainGen;
  seq.messages.push_back(detail::system_message(kExplainGenSystem));
  seq.messages.push_back(Message{
      Role::User, render(kExplainGenUser, {{"text", s.text}, {"aspect", s.aspect}, {"sentiment", label}}, s.image_ref)});
  return seq;
}

// Baseline prompt without `deptext`, syntax prompt with it.
inline MessageSequence build_inference_prompt(const Sample& s, const std::optional<std::string>& deptext) {
  detail::require_image(s);
  MessageSequence seq;
  seq.messages.push_back(detail::system_message(kInferenceSystem));
  if (deptext) {
    seq.template_id = TemplateId::Syntax;
    seq.messages.push_back(Message{
        Role::User, render(kSyntaxUser, {{"text", s.text}, {"aspect", s.aspect}, {"syntax info", *deptext}}, s.image_ref)});
  } else {
    seq.template_id = TemplateId::Baseline;
    seq.messages.push_back(Message{Role::User, render(kBaselineUser, {{"text", s.text}, {"aspect", s.aspect}}, s.image_ref)});
  }
  return seq;
}

inline MessageSequence build_inference_prompt(const Sample& s, const textualize::DepText& deptext) {
  return build_inference_prompt(s, std::optional<std::string>(deptext.body));
}

// Candidates are listed in the given order as "1. ...", "2. ...". Callers
// shuffle beforehand and keep the permutation (see JudgeBallot).
inline MessageSequence build_judge_prompt(const Sample& s, const std::vector<std::string>& candidates) {
  if (candidates.size() < kMinJudgeCandidates) {
    throw Error(Errc::TooFewCandidates, std::to_string(candidates.size()) + " candidate(s), need at least 2");
  }
  if (candidates.size() > kMaxJudgeCandidates) {
    throw Error(Errc::TooManyCandidates, std::to_string(candidates.size()) + " candidates, at most 9 allowed");
  }
  detail::require_image(s);
  std::string listing;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i) listing += '\n';
    listing += std::to_string(i + 1) + ". " + candidates[i];
  }
  MessageSequence seq;
  seq.template_id = TemplateId::Judge;
  seq.messages.push_back(detail::system_message(kJudgeSystem));
  seq.messages.push_back(
      Message{Role::User, render(kJudgeUser, {{"text", s.text}, {"aspect", s.aspect}, {"candidates", listing}}, s.image_ref)});
  return seq;
}

// A shuffled presentation of judge candidates. order[i] is the original
// index of the candidate shown as option i + 1.
struct JudgeBallot {
  std::vector<std::size_t> order;

  template <typename T>
  std::vector<T> arrange(const std::vector<T>& originals) const {
    std::vector<T> shown;
    shown.reserve(order.size());
    for (const auto idx : order) shown.push_back(originals.at(idx));
    return shown;
  }

  // Maps a 1-based option number back to the original candidate index.
  std::optional<std::size_t> original_index(std::size_t option) const {
    if (option < 1 || option > order.size()) return std::nullopt;
    return order[option - 1];
  }
};

// First integer in the reply, if it names a valid option in 1..n.
inline std::optional<std::size_t> parse_judge_choice(std::string_view reply, std::size_t n) {
  std::size_t i = 0;
  while (i < reply.size() && !(reply[i] >= '0' && reply[i] <= '9')) ++i;
  if (i == reply.size()) return std::nullopt;
  std::size_t value = 0;
  while (i < reply.size() && reply[i] >= '0' && reply[i] <= '9') {
    value = value * 10 + static_cast<std::size_t>(reply[i] - '0');
    if (value > n) return std::nullopt;
    ++i;
  }
  if (value < 1) return std::nullopt;
  return value;
}

}  // namespace mabsa::prompt
