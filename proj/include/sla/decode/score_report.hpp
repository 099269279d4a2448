#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/data/manifest.hpp"
#include "sla/decode/wer.hpp"

namespace sla {

struct HypothesisRecord {
  std::string id;
  std::string hyp;
  double log_prob = 0.0;
  bool truncated = false;
};

/// Decoder output: {"config_hash": ..., "hypotheses": [{id, hyp, log_prob, truncated}]}.
inline nlohmann::json hypotheses_to_json(const std::vector<HypothesisRecord>& hyps, const std::string& config_hash) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& h : hyps) {
    list.push_back({{"id", h.id}, {"hyp", h.hyp}, {"log_prob", h.log_prob}, {"truncated", h.truncated}});
  }
  return {{"config_hash", config_hash}, {"hypotheses", list}};
}

inline std::vector<HypothesisRecord> read_hypotheses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hypotheses " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what(), 0);
  }
  std::vector<HypothesisRecord> out;
  for (const auto& h : j.at("hypotheses")) {
    out.push_back({h.at("id").get<std::string>(), h.at("hyp").get<std::string>(), h.value("log_prob", 0.0),
                   h.value("truncated", false)});
  }
  return out;
}

struct UtteranceScore {
  std::string id;
  std::string ref;
  std::string hyp;
  WerResult result;
};

struct ScoreReport {
  CorpusWer totals;
  std::vector<UtteranceScore> utterances;

  double corpus_wer() const { return totals.wer(); }

  nlohmann::json to_json(const std::string& config_hash = "") const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& u : utterances) {
      per.push_back({{"id", u.id},
                     {"ref", u.ref},
                     {"hyp", u.hyp},
                     {"S", u.result.substitutions},
                     {"I", u.result.insertions},
                     {"D", u.result.deletions}});
    }
    nlohmann::json j{{"corpus_wer", corpus_wer()},
                     {"substitutions", totals.substitutions},
                     {"insertions", totals.insertions},
                     {"deletions", totals.deletions},
                     {"ref_words", totals.ref_words},
                     {"per_utterance", per}};
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    return j;
  }

  std::string alignment_dump() const {
    std::string out;
    for (const auto& u : utterances) {
      out += "id: " + u.id + "\n" + alignment_text(u.result) + "\n";
    }
    return out;
  }
};

/// Scores hypotheses against manifest references in manifest order. The two
/// id sets must be identical.
inline ScoreReport score(const std::vector<UtteranceRecord>& refs, const std::vector<HypothesisRecord>& hyps) {
  std::map<std::string, const HypothesisRecord*> by_id;
  for (const auto& h : hyps) {
    if (!by_id.emplace(h.id, &h).second) throw ContractError("duplicate hypothesis id '" + h.id + "'");
  }
  std::vector<std::string> missing;
  for (const auto& r : refs)
    if (!by_id.contains(r.id)) missing.push_back(r.id);
  if (!missing.empty() || refs.size() != hyps.size()) {
    std::string msg = "reference and hypothesis id sets differ";
    if (!missing.empty()) msg += "; first missing hypothesis: '" + missing.front() + "'";
    if (refs.size() != hyps.size()) {
      msg += "; " + std::to_string(refs.size()) + " references vs " + std::to_string(hyps.size()) + " hypotheses";
    }
    throw ContractError(msg);
  }
  ScoreReport report;
  for (const auto& r : refs) {
    const auto& h = *by_id.at(r.id);
    UtteranceScore u{r.id, normalize_text(r.transcript), normalize_text(h.hyp), wer(r.transcript, h.hyp)};
    report.totals.add(u.result);
    report.utterances.push_back(std::move(u));
  }
  return report;
}

}  // namespace sla
