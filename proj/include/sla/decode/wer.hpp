#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/data/tokenizer.hpp"

namespace sla {

enum class EditOp { kMatch, kSubstitute, kInsert, kDelete };

struct AlignedWord {
  EditOp op;
  std::string ref;  // empty for insertions
  std::string hyp;  // empty for deletions
};

struct WerResult {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;
  std::vector<AlignedWord> alignment;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

/// Minimum-edit-distance alignment of word sequences. Among alignments with
/// the fewest edits the one with the most substitutions is taken, which makes
/// the counts symmetric: swapping ref and hyp swaps insertions and deletions.
inline WerResult wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw ContractError("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  struct Cell {
    std::size_t edits;
    std::size_t subs;
  };
  const auto better = [](Cell a, Cell b) { return a.edits != b.edits ? a.edits < b.edits : a.subs > b.subs; };
  std::vector<Cell> dp((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, 0};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      Cell best{at(i - 1, j - 1).edits + (same ? 0 : 1), at(i - 1, j - 1).subs + (same ? 0 : 1)};
      const Cell del{at(i - 1, j).edits + 1, at(i - 1, j).subs};
      const Cell ins{at(i, j - 1).edits + 1, at(i, j - 1).subs};
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
      at(i, j) = best;
    }
  }
  WerResult r;
  r.ref_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const Cell cur = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      const Cell prev = at(i - 1, j - 1);
      if (prev.edits + (same ? 0 : 1) == cur.edits && prev.subs + (same ? 0 : 1) == cur.subs) {
        r.alignment.push_back({same ? EditOp::kMatch : EditOp::kSubstitute, ref[i - 1], hyp[j - 1]});
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j).edits + 1 == cur.edits && at(i - 1, j).subs == cur.subs) {
      r.alignment.push_back({EditOp::kDelete, ref[i - 1], ""});
      ++r.deletions;
      --i;
      continue;
    }
    r.alignment.push_back({EditOp::kInsert, "", hyp[j - 1]});
    ++r.insertions;
    --j;
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  r.wer = static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

/// WER on raw strings after lowercasing and collapsing whitespace.
inline WerResult wer(std::string_view ref, std::string_view hyp) {
  const auto r = split_words(ref);
  const auto h = split_words(hyp);
  return wer(std::span<const std::string>(r), std::span<const std::string>(h));
}

/// Pools edits over utterances: sum of errors / sum of reference words.
struct CorpusWer {
  std::size_t substitutions = 0, insertions = 0, deletions = 0, ref_words = 0;

  void add(const WerResult& r) {
    substitutions += r.substitutions;
    insertions += r.insertions;
    deletions += r.deletions;
    ref_words += r.ref_words;
  }

  double wer() const {
    return ref_words ? static_cast<double>(substitutions + insertions + deletions) / static_cast<double>(ref_words)
                     : 0.0;
  }
};

/// Three aligned rows (REF, HYP, and an op marker row), padded per column.
inline std::string alignment_text(const WerResult& r) {
  std::string ref_line = "REF:", hyp_line = "HYP:", op_line = "OP: ";
  for (const auto& a : r.alignment) {
    const std::string ref = a.ref.empty() ? "***" : a.ref;
    const std::string hyp = a.hyp.empty() ? "***" : a.hyp;
    const std::size_t width = std::max(ref.size(), hyp.size());
    const char mark = a.op == EditOp::kMatch ? ' ' : a.op == EditOp::kSubstitute ? 'S' : a.op == EditOp::kInsert ? 'I' : 'D';
    ref_line += " " + ref + std::string(width - ref.size(), ' ');
    hyp_line += " " + hyp + std::string(width - hyp.size(), ' ');
    op_line += " " + std::string(1, mark) + std::string(width - 1, ' ');
  }
  return ref_line + "\n" + hyp_line + "\n" + op_line + "\n";
}

}  // namespace sla
