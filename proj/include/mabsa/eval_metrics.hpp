#pragma once

// Classification metrics (accuracy, per-class P/R/F1, macro-F1) and
// explanation-overlap metrics (corpus BLEU-4, ROUGE-1/2/L F1).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mabsa/error.hpp"
#include "mabsa/sample.hpp"

namespace mabsa::metrics {

enum class Errc { EmptyInput, LengthMismatch, EmptyCorpus };

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

// ---------------------------------------------------------------------------
// Tokenization shared by every generation metric.
//
//  1. ASCII letters are lowercased; other letters are kept as-is.
//  2. ASCII characters that are not letters or digits separate tokens.
//  3. These non-ASCII code points also separate tokens: U+0085, U+00A0-U+00BF
//     (no-break space and Latin-1 punctuation/symbols), U+00D7, U+00F7,
//     U+1680, U+2000-U+206F (Unicode spaces and general punctuation, including
//     curly quotes and dashes), U+3000-U+303F (CJK spaces and punctuation),
//     U+FEFF.
//  4. Any other code point (and any malformed byte) belongs to the token.
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_separator_code_point(char32_t cp) {
  return cp == 0x85 || (cp >= 0xA0 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) || cp == 0xFEFF;
}

// Length of the UTF-8 sequence starting at s[i] and its code point; malformed
// input yields a 1-byte sequence with a code point that is never a separator.
inline std::pair<std::size_t, char32_t> decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {1, 0x10FFFF + 1};
  }
  if (i + len > s.size()) return {1, 0x10FFFF + 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {1, 0x10FFFF + 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {len, cp};
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      if (c >= 'A' && c <= 'Z') {
        cur += static_cast<char>(c - 'A' + 'a');
      } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
        cur += static_cast<char>(c);
      } else {
        flush();
      }
      ++i;
      continue;
    }
    const auto [len, cp] = detail::decode_utf8(s, i);
    if (detail::is_separator_code_point(cp)) {
      flush();
    } else {
      cur.append(s.substr(i, len));
    }
    i += len;
  }
  flush();
  return tokens;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

// Sum over candidate n-grams of min(candidate count, reference count).
inline std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t total = 0;
  for (const auto& [gram, c] : cand) {
    const auto it = ref.find(gram);
    if (it != ref.end()) total += std::min(c, it->second);
  }
  return total;
}

// ---------------------------------------------------------------------------
// BLEU-4
// ---------------------------------------------------------------------------

struct BleuStats {
  std::array<std::size_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::size_t, 4> totals{};   // candidate n-gram counts
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t k = 0; k < 4; ++k) {
      matches[k] += o.matches[k];
      totals[k] += o.totals[k];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }

  double precision(std::size_t n) const {
    return totals[n - 1] == 0 ? 0.0 : static_cast<double>(matches[n - 1]) / static_cast<double>(totals[n - 1]);
  }

  double brevity_penalty() const {
    if (candidate_length == 0) return 0.0;
    if (candidate_length > reference_length) return 1.0;
    return std::exp(1.0 - static_cast<double>(reference_length) / static_cast<double>(candidate_length));
  }
};

inline BleuStats bleu_stats(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  BleuStats st;
  st.candidate_length = cand.size();
  st.reference_length = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto c = count_ngrams(cand, n);
    st.matches[n - 1] = clipped_overlap(c, count_ngrams(ref, n));
    st.totals[n - 1] = cand.size() >= n ? cand.size() - n + 1 : 0;
  }
  return st;
}

namespace detail {

inline void check_corpus(std::size_t candidates, std::size_t references) {
  if (candidates != references) {
    throw Error(Errc::LengthMismatch, std::to_string(candidates) + " candidates vs " + std::to_string(references) +
                                          " references");
  }
  if (candidates == 0) throw Error(Errc::EmptyCorpus, "no candidate/reference pairs");
}

}  // namespace detail

// Corpus-level BLEU with uniform 1..4-gram weights, clipped counts, the
// standard brevity penalty and no smoothing (any zero precision gives 0).
inline double bleu4(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  detail::check_corpus(candidates.size(), references.size());
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += bleu_stats(tokenize(candidates[i]), tokenize(references[i]));
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const double p = total.precision(n);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  return total.brevity_penalty() * std::exp(log_sum / 4.0);
}

// Single-pair BLEU-4 with add-one smoothing on the 2..4-gram precisions.
inline double sentence_bleu4(std::string_view candidate, std::string_view reference) {
  const auto st = bleu_stats(tokenize(candidate), tokenize(reference));
  if (st.candidate_length == 0 || st.matches[0] == 0) return 0.0;
  double log_sum = std::log(st.precision(1));
  for (std::size_t n = 2; n <= 4; ++n) {
    log_sum += std::log(static_cast<double>(st.matches[n - 1] + 1) / static_cast<double>(st.totals[n - 1] + 1));
  }
  return st.brevity_penalty() * std::exp(log_sum / 4.0);
}

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

inline double f1_from_counts(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  if (overlap == 0 || cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_n_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::size_t n) {
  const auto c = count_ngrams(cand, n);
  const auto r = count_ngrams(ref, n);
  const std::size_t c_total = cand.size() >= n ? cand.size() - n + 1 : 0;
  const std::size_t r_total = ref.size() >= n ? ref.size() - n + 1 : 0;
  return f1_from_counts(clipped_overlap(c, r), c_total, r_total);
}

inline RougeScores rouge_pair(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  return RougeScores{rouge_n_f1(cand, ref, 1), rouge_n_f1(cand, ref, 2),
                     f1_from_counts(lcs_length(cand, ref), cand.size(), ref.size())};
}

// Per-pair F1 (beta = 1), averaged over pairs.
inline RougeScores rouge(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  detail::check_corpus(candidates.size(), references.size());
  RougeScores sum;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto s = rouge_pair(candidates[i], references[i]);
    sum.rouge1 += s.rouge1;
    sum.rouge2 += s.rouge2;
    sum.rougeL += s.rougeL;
  }
  const auto n = static_cast<double>(candidates.size());
  return RougeScores{sum.rouge1 / n, sum.rouge2 / n, sum.rougeL / n};
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

// How replies that could not be parsed are scored.
enum class FailurePolicy { Drop, CountWrong };

inline const char* to_string(FailurePolicy p) { return p == FailurePolicy::Drop ? "drop" : "count-wrong"; }

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count, including unparsed predictions under count-wrong
};

struct ClassificationReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassStats, 3> per_class{};
  // confusion[gold][predicted], indexed by Sentiment value.
  std::array<std::array<std::size_t, 3>, 3> confusion{};
  // Unparsed predictions per gold class; counted only under CountWrong.
  std::array<std::size_t, 3> unparsed{};
  std::size_t evaluated = 0;
  std::size_t dropped = 0;

  const ClassStats& stats(Sentiment s) const { return per_class[static_cast<std::size_t>(s)]; }
};

struct LabelPair {
  std::optional<Sentiment> predicted;  // nullopt: reply failed to parse
  Sentiment gold = Sentiment::Neutral;
};

inline ClassificationReport classification_report(const std::vector<LabelPair>& pairs, FailurePolicy policy) {
  if (pairs.empty()) throw Error(Errc::EmptyInput, "no prediction/gold pairs");
  ClassificationReport rep;
  for (const auto& p : pairs) {
    const auto g = static_cast<std::size_t>(p.gold);
    if (p.predicted) {
      ++rep.confusion[g][static_cast<std::size_t>(*p.predicted)];
    } else if (policy == FailurePolicy::CountWrong) {
      ++rep.unparsed[g];
    } else {
      ++rep.dropped;
    }
  }

  std::size_t correct = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    correct += rep.confusion[k][k];
    std::size_t predicted = 0;
    std::size_t gold = rep.unparsed[k];
    for (std::size_t j = 0; j < 3; ++j) {
      predicted += rep.confusion[j][k];
      gold += rep.confusion[k][j];
    }
    rep.evaluated += gold;
    auto& cs = rep.per_class[k];
    cs.support = gold;
    const auto tp = static_cast<double>(rep.confusion[k][k]);
    cs.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    cs.recall = gold == 0 ? 0.0 : tp / static_cast<double>(gold);
    cs.f1 = cs.precision + cs.recall == 0.0 ? 0.0 : 2.0 * cs.precision * cs.recall / (cs.precision + cs.recall);
  }
  if (rep.evaluated == 0) throw Error(Errc::EmptyInput, "every prediction was dropped as unparsed");
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.evaluated);
  rep.macro_f1 = (rep.per_class[0].f1 + rep.per_class[1].f1 + rep.per_class[2].f1) / 3.0;
  return rep;
}

struct GenerationReport {
  double bleu4 = 0.0;
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  std::size_t pairs = 0;
  std::optional<double> external_semantic_score;
};

inline GenerationReport generation_report(const std::vector<std::string>& candidates,
                                          const std::vector<std::string>& references) {
  const auto r = rouge(candidates, references);
  return GenerationReport{bleu4(candidates, references), r.rouge1, r.rouge2, r.rougeL, candidates.size(), std::nullopt};
}

}  // namespace mabsa::metrics
