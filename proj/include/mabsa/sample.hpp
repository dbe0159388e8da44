#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mabsa/strings.hpp"

namespace mabsa {

enum class Sentiment { Negative = 0, Neutral = 1, Positive = 2 };

inline constexpr std::array<Sentiment, 3> kSentiments{Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive};

inline const char* to_string(Sentiment s) {
  switch (s) {
    case Sentiment::Negative: return "negative";
    case Sentiment::Neutral: return "neutral";
    case Sentiment::Positive: return "positive";
  }
  return "unknown";
}

inline std::optional<Sentiment> parse_sentiment(std::string_view s) {
  const auto lowered = text::to_lower_ascii(text::trim(s));
  for (const auto label : kSentiments) {
    if (lowered == to_string(label)) return label;
  }
  return std::nullopt;
}

enum class Split { Train, Dev, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

// One corpus record: text, image, aspect, gold label and (after
// augmentation) a gold explanation.
struct Sample {
  std::string id;
  Split split = Split::Train;
  std::string text;  // aspect restored in place
  std::string image_ref;
  std::string aspect;
  std::size_t aspect_occurrence = 0;
  Sentiment gold_sentiment = Sentiment::Neutral;
  std::optional<std::string> gold_explanation;
  std::map<std::string, std::string> deptext_cache;  // DepTextKey string -> body
  bool image_missing = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

}  // namespace mabsa
