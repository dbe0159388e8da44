#pragma once

// CoNLL-U reading and writing.
//
// Only basic trees are supported: every row must be a plain integer-id token
// with a numeric head. Multiword ranges ("3-4") and empty nodes ("5.1") are
// rejected so that rows and tree nodes stay in one-to-one correspondence.
// Columns other than ID/FORM/HEAD/DEPREL are carried verbatim.

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mabsa/error.hpp"
#include "mabsa/strings.hpp"

namespace mabsa::conllu {

enum class Errc {
  ColumnCount,
  BadId,
  BadHead,
  MissingDeprel,
  MultiRoot,
  NoRoot,
  UnsupportedLine,
  InvariantViolation,
};

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::ColumnCount: return "ColumnCount";
    case Errc::BadId: return "BadId";
    case Errc::BadHead: return "BadHead";
    case Errc::MissingDeprel: return "MissingDeprel";
    case Errc::MultiRoot: return "MultiRoot";
    case Errc::NoRoot: return "NoRoot";
    case Errc::UnsupportedLine: return "UnsupportedLine";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

using Error = CategorizedError<Errc>;

struct TokenRow {
  int id = 0;  // 1-based position within the sentence
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;  // 0 marks the sentence root
  std::string deprel;
  std::string deps = "_";
  std::string misc = "_";

  friend bool operator==(const TokenRow&, const TokenRow&) = default;
};

struct SentenceBlock {
  std::vector<TokenRow> tokens;
  std::vector<std::string> comments;  // full lines, including the leading '#'

  // Index into `tokens` of the row with head 0. Valid only on validated blocks.
  std::size_t root_index() const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].head == 0) return i;
    }
    return tokens.size();
  }

  friend bool operator==(const SentenceBlock&, const SentenceBlock&) = default;
};

namespace detail {

inline std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

inline std::string where(std::size_t line_no) {
  return "line " + std::to_string(line_no);
}

}  // namespace detail

// Checks the tree invariants of one block; throws Error on the first violation.
// `context` is prefixed to messages (typically a line number).
inline void validate(const SentenceBlock& block, const std::string& context = "sentence") {
  const auto n = static_cast<int>(block.tokens.size());
  if (n == 0) throw Error(Errc::NoRoot, context + ": sentence has no tokens");

  for (int i = 0; i < n; ++i) {
    const int id = block.tokens[static_cast<std::size_t>(i)].id;
    if (id != i + 1) {
      throw Error(Errc::BadId, context + ": expected token id " + std::to_string(i + 1) + ", found " +
                                   std::to_string(id));
    }
  }

  int roots = 0;
  for (const TokenRow& t : block.tokens) {
    if (t.head < 0 || t.head > n) {
      throw Error(Errc::BadHead, context + ": token " + std::to_string(t.id) + " has head " +
                                     std::to_string(t.head) + " outside 0.." + std::to_string(n));
    }
    if (t.head == t.id) {
      throw Error(Errc::BadHead, context + ": token " + std::to_string(t.id) + " heads itself");
    }
    if (t.deprel.empty()) {
      throw Error(Errc::MissingDeprel, context + ": token " + std::to_string(t.id) + " has no deprel");
    }
    if (t.head == 0) ++roots;
  }
  if (roots == 0) throw Error(Errc::NoRoot, context + ": no token has head 0");
  if (roots > 1) throw Error(Errc::MultiRoot, context + ": " + std::to_string(roots) + " tokens have head 0");

  // With a single root and in-range heads, a cycle is the only way a token can
  // fail to reach the root within n steps.
  for (int i = 1; i <= n; ++i) {
    int cur = i;
    int steps = 0;
    while (cur != 0 && steps <= n) {
      cur = block.tokens[static_cast<std::size_t>(cur - 1)].head;
      ++steps;
    }
    if (cur != 0) {
      throw Error(Errc::BadHead, context + ": head chain from token " + std::to_string(i) + " is cyclic");
    }
  }
}

inline TokenRow parse_row(std::string_view line, std::size_t line_no) {
  const auto cols = text::split(line, '\t');
  if (cols.size() != 10) {
    throw Error(Errc::ColumnCount, detail::where(line_no) + ": expected 10 tab-separated columns, found " +
                                       std::to_string(cols.size()));
  }
  const std::string_view id = cols[0];
  if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) {
    throw Error(Errc::UnsupportedLine,
                detail::where(line_no) + ": multiword or empty-node id '" + std::string(id) + "'");
  }
  const auto parsed_id = detail::parse_int(id);
  if (!parsed_id || *parsed_id < 1) {
    throw Error(Errc::BadId, detail::where(line_no) + ": bad token id '" + std::string(id) + "'");
  }
  const auto head = detail::parse_int(cols[6]);
  if (!head) {
    throw Error(Errc::BadHead, detail::where(line_no) + ": bad head '" + std::string(cols[6]) + "'");
  }

  TokenRow row;
  row.id = *parsed_id;
  row.form = cols[1];
  row.lemma = cols[2];
  row.upos = cols[3];
  row.xpos = cols[4];
  row.feats = cols[5];
  row.head = *head;
  row.deprel = cols[7];
  row.deps = cols[8];
  row.misc = cols[9];
  return row;
}

inline std::vector<SentenceBlock> parse(std::string_view input) {
  std::vector<SentenceBlock> blocks;
  SentenceBlock current;
  bool open = false;
  std::size_t start_line = 0;

  auto flush = [&] {
    if (!open) return;
    validate(current, "sentence starting at " + detail::where(start_line));
    blocks.push_back(std::move(current));
    current = SentenceBlock{};
    open = false;
  };

  std::size_t line_no = 0;
  for (const std::string_view line : text::lines(input)) {
    ++line_no;
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (!open) {
      open = true;
      start_line = line_no;
    }
    if (line.front() == '#') {
      current.comments.emplace_back(line);
    } else {
      current.tokens.push_back(parse_row(line, line_no));
    }
  }
  flush();
  return blocks;
}

inline void append_row(std::string& out, const TokenRow& t) {
  out += std::to_string(t.id);
  for (const std::string* col : {&t.form, &t.lemma, &t.upos, &t.xpos, &t.feats}) {
    out += '\t';
    out += *col;
  }
  out += '\t';
  out += std::to_string(t.head);
  for (const std::string* col : {&t.deprel, &t.deps, &t.misc}) {
    out += '\t';
    out += *col;
  }
  out += '\n';
}

// Each block is written as its comments, its rows, and one blank line.
inline std::string serialize(const std::vector<SentenceBlock>& blocks) {
  std::string out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    try {
      validate(blocks[b], "block " + std::to_string(b));
    } catch (const Error& e) {
      throw Error(Errc::InvariantViolation, e.what());
    }
    for (const auto& c : blocks[b].comments) {
      out += c;
      out += '\n';
    }
    for (const auto& t : blocks[b].tokens) append_row(out, t);
    out += '\n';
  }
  return out;
}

}  // namespace mabsa::conllu
