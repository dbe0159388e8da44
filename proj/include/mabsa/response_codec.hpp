#pragma once

// Parsing of "Sentiment: <label> Explanation: <text>" model replies.
//
// Markers are matched case-insensitively and may have whitespace before the
// colon. Text before the first "Sentiment:" marker is ignored; everything
// after the first "Explanation:" marker that follows it is the explanation.
// Label text is trimmed of whitespace and surrounding ASCII punctuation
// (so "**Positive.**" reads as positive) and must name one of the three classes.

#include <cctype>
#include <string>
#include <string_view>

#include "mabsa/error.hpp"
#include "mabsa/sample.hpp"
#include "mabsa/strings.hpp"

namespace mabsa::codec {

enum class Errc {
  MissingSentimentMarker,
  MissingExplanationMarker,
  UnknownLabel,
  EmptyExplanation,
  MarkerOrderViolation,
};

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::MissingSentimentMarker: return "MissingSentimentMarker";
    case Errc::MissingExplanationMarker: return "MissingExplanationMarker";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::EmptyExplanation: return "EmptyExplanation";
    case Errc::MarkerOrderViolation: return "MarkerOrderViolation";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

struct ParsedReply {
  Sentiment sentiment = Sentiment::Neutral;
  std::string explanation;

  friend bool operator==(const ParsedReply&, const ParsedReply&) = default;
};

struct MarkerHit {
  std::size_t begin = std::string_view::npos;  // start of the keyword
  std::size_t end = std::string_view::npos;    // one past the colon
  bool found() const { return begin != std::string_view::npos; }
};

// Finds `keyword` followed by optional whitespace and ':' at or after `from`.
inline MarkerHit find_marker(std::string_view s, std::string_view keyword, std::size_t from = 0) {
  for (auto pos = text::ifind(s, keyword, from); pos != std::string_view::npos;
       pos = text::ifind(s, keyword, pos + 1)) {
    std::size_t j = pos + keyword.size();
    while (j < s.size() && text::is_ascii_space(s[j])) ++j;
    if (j < s.size() && s[j] == ':') return {pos, j + 1};
  }
  return {};
}

inline std::string_view strip_label(std::string_view s) {
  const auto junk = [](char c) {
    return text::is_ascii_space(c) || std::ispunct(static_cast<unsigned char>(c)) != 0;
  };
  while (!s.empty() && junk(s.front())) s.remove_prefix(1);
  while (!s.empty() && junk(s.back())) s.remove_suffix(1);
  return s;
}

inline ParsedReply parse_reply(std::string_view reply) {
  constexpr std::string_view kSentiment = "sentiment";
  constexpr std::string_view kExplanation = "explanation";

  const auto sentiment = find_marker(reply, kSentiment);
  if (!sentiment.found()) throw Error(Errc::MissingSentimentMarker, "no 'Sentiment:' marker in reply");

  const auto explanation = find_marker(reply, kExplanation, sentiment.end);
  if (!explanation.found()) {
    if (find_marker(reply.substr(0, sentiment.begin), kExplanation).found()) {
      throw Error(Errc::MarkerOrderViolation, "'Explanation:' appears before 'Sentiment:'");
    }
    throw Error(Errc::MissingExplanationMarker, "no 'Explanation:' marker after 'Sentiment:'");
  }

  const auto raw_label = strip_label(reply.substr(sentiment.end, explanation.begin - sentiment.end));
  const auto label = parse_sentiment(raw_label);
  if (!label) throw Error(Errc::UnknownLabel, "label '" + std::string(raw_label) + "' is not negative/neutral/positive");

  const auto body = text::trim(reply.substr(explanation.end));
  if (body.empty()) throw Error(Errc::EmptyExplanation, "explanation text is empty");
  return ParsedReply{*label, std::string(body)};
}

// The assistant turn in the format the inference prompt demands.
inline std::string render_reply(Sentiment sentiment, std::string_view explanation) {
  return std::string("Sentiment: ") + to_string(sentiment) + " Explanation: " + std::string(explanation);
}

inline std::string render_reply(const ParsedReply& r) { return render_reply(r.sentiment, r.explanation); }

}  // namespace mabsa::codec
