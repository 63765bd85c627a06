#pragma once

// Perceptual AB/ABX test plans over {Q,S,P} condition triplets, the
// choice+confidence to VSS mapping, and response aggregation.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vqdr/common.hpp"
#include "vqdr/error.hpp"

namespace vqdr {

enum class Origin { L1, L2 };

/// Source of voice quality, segmentals and prosody, written "Q2S1P2".
struct ConditionTriplet {
  Origin q = Origin::L1;
  Origin s = Origin::L1;
  Origin p = Origin::L1;

  bool operator==(const ConditionTriplet&) const = default;

  std::string to_string() const {
    const auto digit = [](Origin o) { return o == Origin::L1 ? '1' : '2'; };
    return std::string{'Q', digit(q), 'S', digit(s), 'P', digit(p)};
  }

  static ConditionTriplet parse(std::string_view text) {
    std::string cleaned;
    for (char c : text) {
      if (c != '{' && c != '}' && c != ',' && c != ' ') cleaned.push_back(static_cast<char>(std::toupper(c)));
    }
    require(cleaned.size() == 6 && cleaned[0] == 'Q' && cleaned[2] == 'S' && cleaned[4] == 'P', ErrorCode::ParseError,
            "condition '" + std::string(text) + "' is not of the form Q?S?P?");
    const auto origin = [&](char c) {
      require(c == '1' || c == '2', ErrorCode::ParseError, "condition index must be 1 or 2 in '" + std::string(text) + "'");
      return c == '1' ? Origin::L1 : Origin::L2;
    };
    return {origin(cleaned[1]), origin(cleaned[3]), origin(cleaned[5])};
  }
};

enum class Design { AB, ABX };
enum class Question { comprehensibility, voice_similarity, prosody_similarity };
enum class Choice { A, B };
enum class Role { baseline, proposed };

inline std::string_view to_string(Design d) { return d == Design::AB ? "AB" : "ABX"; }
inline std::string_view to_string(Choice c) { return c == Choice::A ? "A" : "B"; }

inline std::string_view to_string(Question q) {
  switch (q) {
    case Question::comprehensibility: return "comprehensibility";
    case Question::voice_similarity: return "voice_similarity";
    case Question::prosody_similarity: return "prosody_similarity";
  }
  return "comprehensibility";
}

inline Design parse_design(std::string_view s) {
  if (s == "AB") return Design::AB;
  if (s == "ABX") return Design::ABX;
  fail(ErrorCode::ParseError, "unknown design '" + std::string(s) + "'");
}

inline Question parse_question(std::string_view s) {
  if (s == "comprehensibility") return Question::comprehensibility;
  if (s == "voice_similarity") return Question::voice_similarity;
  if (s == "prosody_similarity") return Question::prosody_similarity;
  fail(ErrorCode::ParseError, "unknown question '" + std::string(s) + "'");
}

inline Choice parse_choice(std::string_view s) {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  fail(ErrorCode::ParseError, "choice must be A or B, got '" + std::string(s) + "'");
}

/// Instructions shown to raters for each question type.
inline std::string question_text(Question q) {
  switch (q) {
    case Question::comprehensibility:
      return "Listen to both recordings, then select the recording that required the least effort to understand. "
             "Focus on the words being uttered by the speaker, and ignore noise or distortions in the audio.";
    case Question::voice_similarity:
      return "Listen to recordings A and B, then to the reference X. Which of A or B is closest to X in terms of "
             "voice/timbre? Focus only on the voice, and ignore noise or distortions in the audio.";
    case Question::prosody_similarity:
      return "Listen to recordings A and B, then to the reference X. Which of A or B is closest to X in its rhythm and "
             "intonation? Focus on the timing and melody of the speech, and ignore noise or distortions in the audio.";
  }
  return {};
}

/// Anchors of the 7-point confidence scale.
inline std::string confidence_label(int confidence) {
  switch (confidence) {
    case 7: return "extremely confident";
    case 5: return "quite a bit confident";
    case 3: return "somewhat confident";
    case 1: return "not confident at all";
    default: return {};
  }
}

struct Stimulus {
  std::string stim_id;
  std::string path;
  ConditionTriplet condition;
  std::string utt_id;
  std::string system_tag;

  bool operator==(const Stimulus&) const = default;
};

/// A compared system pair. system_1 plays the baseline role and system_2 the
/// proposed role in VSS scoring.
struct Pairing {
  std::string system_1;
  std::string system_2;
  std::optional<std::string> reference;
  Question question = Question::comprehensibility;

  bool operator==(const Pairing&) const = default;
};

struct Trial {
  std::size_t trial_index = 0;
  std::string slot_a;
  std::string slot_b;
  std::optional<std::string> reference_x;
  Question question = Question::comprehensibility;
  std::size_t pairing = 0;  // index into TestPlan::pairings

  bool operator==(const Trial&) const = default;
};

struct TestPlan {
  std::string plan_id;
  Design design = Design::AB;
  std::vector<Stimulus> stimuli;
  std::vector<Pairing> pairings;
  std::vector<Trial> trials;
  std::size_t trials_per_listener = 16;
  std::uint64_t seed = 0;

  const Stimulus& stimulus(const std::string& stim_id) const {
    for (const auto& s : stimuli) {
      if (s.stim_id == stim_id) return s;
    }
    fail(ErrorCode::UnknownStimulus, stim_id);
  }

  bool operator==(const TestPlan&) const = default;
};

struct TrialResponse {
  std::string session_id;
  std::size_t trial_index = 0;
  Choice choice = Choice::A;
  int confidence = 1;
  std::string timestamp;

  bool operator==(const TrialResponse&) const = default;
};

// ---------------------------------------------------------------------------
// Plan construction

namespace detail {

using TagPair = std::pair<std::string, std::string>;

inline TagPair unordered(const std::string& a, const std::string& b) { return a < b ? TagPair{a, b} : TagPair{b, a}; }

}  // namespace detail

/// Trials cycle through the pairings; each uses a distinct utterance drawn
/// from a seeded shuffle. Within each unordered system pair, slot A/B
/// assignment comes from a shuffled, exactly balanced vector.
inline TestPlan build_test_plan(const std::vector<Stimulus>& stimuli, Design design, const std::vector<Pairing>& pairings,
                                std::size_t trials_per_listener = 16, std::uint64_t seed = 0,
                                std::string plan_id = "plan") {
  require(!pairings.empty(), ErrorCode::InvalidArgument, "no system pairings");
  require(trials_per_listener > 0, ErrorCode::InvalidArgument, "trials_per_listener must be positive");

  std::map<std::pair<std::string, std::string>, const Stimulus*> by_utt_tag;  // (utt_id, tag)
  std::set<std::string> ids;
  for (const auto& s : stimuli) {
    require(ids.insert(s.stim_id).second, ErrorCode::DuplicateEntry, "stim_id " + s.stim_id);
    require(by_utt_tag.emplace(std::pair{s.utt_id, s.system_tag}, &s).second, ErrorCode::DuplicateEntry,
            "two stimuli for utterance " + s.utt_id + " of system " + s.system_tag);
  }
  const auto utts_of = [&](const std::string& tag) {
    std::set<std::string> out;
    for (const auto& [key, stim] : by_utt_tag) {
      if (key.second == tag) out.insert(key.first);
    }
    return out;
  };

  // Eligible utterances per pairing.
  std::vector<std::set<std::string>> eligible;
  for (const auto& p : pairings) {
    require(p.system_1 != p.system_2, ErrorCode::InvalidArgument, "pairing compares " + p.system_1 + " with itself");
    const auto u1 = utts_of(p.system_1);
    const auto u2 = utts_of(p.system_2);
    require(!u1.empty(), ErrorCode::InsufficientStimuli, "no stimuli for system " + p.system_1);
    require(!u2.empty(), ErrorCode::InsufficientStimuli, "no stimuli for system " + p.system_2);
    for (const auto& u : u1) {
      require(u2.count(u) > 0, ErrorCode::UnpairedUtterance, u + " has " + p.system_1 + " but no " + p.system_2);
    }
    for (const auto& u : u2) {
      require(u1.count(u) > 0, ErrorCode::UnpairedUtterance, u + " has " + p.system_2 + " but no " + p.system_1);
    }
    if (design == Design::ABX) {
      require(p.reference.has_value(), ErrorCode::MissingReference,
              "ABX pairing " + p.system_1 + "/" + p.system_2 + " has no reference system");
      for (const auto& u : u1) {
        require(by_utt_tag.count({u, *p.reference}) > 0, ErrorCode::MissingReference,
                u + " has no " + *p.reference + " stimulus");
      }
    }
    eligible.push_back(u1);
  }

  Rng rng(seed);
  std::set<std::string> all_utts;
  for (const auto& e : eligible) all_utts.insert(e.begin(), e.end());
  std::vector<std::string> order(all_utts.begin(), all_utts.end());
  rng.shuffle(order);

  // Balanced slot vectors per unordered system pair.
  std::map<detail::TagPair, std::size_t> trials_per_pair;
  for (std::size_t t = 0; t < trials_per_listener; ++t) {
    const auto& p = pairings[t % pairings.size()];
    ++trials_per_pair[detail::unordered(p.system_1, p.system_2)];
  }
  std::map<detail::TagPair, std::vector<bool>> first_tag_in_a;  // true: lexicographically first tag in slot A
  for (const auto& [pair, count] : trials_per_pair) {
    std::vector<bool> slots(count);
    for (std::size_t i = 0; i < count; ++i) slots[i] = i < (count + rng.index(2)) / 2;
    std::vector<char> shuffled(slots.begin(), slots.end());
    rng.shuffle(shuffled);
    first_tag_in_a[pair].assign(shuffled.begin(), shuffled.end());
  }
  std::map<detail::TagPair, std::size_t> used_per_pair;

  TestPlan plan;
  plan.plan_id = std::move(plan_id);
  plan.design = design;
  plan.stimuli = stimuli;
  plan.pairings = pairings;
  plan.trials_per_listener = trials_per_listener;
  plan.seed = seed;
  std::set<std::string> used_utts;
  for (std::size_t t = 0; t < trials_per_listener; ++t) {
    const std::size_t pi = t % pairings.size();
    const auto& p = pairings[pi];
    const auto it = std::find_if(order.begin(), order.end(), [&](const std::string& u) {
      return used_utts.count(u) == 0 && eligible[pi].count(u) > 0;
    });
    require(it != order.end(), ErrorCode::InsufficientStimuli,
            "not enough distinct utterances for " + std::to_string(trials_per_listener) + " trials");
    used_utts.insert(*it);

    const auto key = detail::unordered(p.system_1, p.system_2);
    const bool first_in_a = first_tag_in_a[key][used_per_pair[key]++];
    const std::string& tag_a = first_in_a ? key.first : key.second;
    const std::string& tag_b = first_in_a ? key.second : key.first;

    Trial trial;
    trial.trial_index = t;
    trial.slot_a = by_utt_tag.at({*it, tag_a})->stim_id;
    trial.slot_b = by_utt_tag.at({*it, tag_b})->stim_id;
    if (design == Design::ABX) trial.reference_x = by_utt_tag.at({*it, *p.reference})->stim_id;
    trial.question = p.question;
    trial.pairing = pi;
    plan.trials.push_back(std::move(trial));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// VSS

/// Collapses a choice and its 1..7 confidence onto -7..-1 (baseline) and
/// +1..+7 (proposed).
inline int vss(Role chosen, int confidence) {
  require(confidence >= 1 && confidence <= 7, ErrorCode::BadConfidence,
          "confidence " + std::to_string(confidence) + " outside 1..7");
  return chosen == Role::proposed ? confidence : -confidence;
}

// ---------------------------------------------------------------------------
// Aggregation

struct SystemAggregate {
  std::string system_tag;
  Role role = Role::baseline;
  std::size_t chosen = 0;
  double choice_pct = 0.0;
  std::optional<double> mean_confidence;  // over trials where this system was chosen
};

struct ComparisonAggregate {
  std::size_t pairing = 0;
  std::size_t n = 0;  // answered trials
  SystemAggregate baseline;
  SystemAggregate proposed;
  std::optional<double> mean_vss;  // ABX only
};

struct AggregateReport {
  std::vector<ComparisonAggregate> comparisons;
};

inline AggregateReport aggregate(const std::vector<TrialResponse>& responses, const TestPlan& plan) {
  struct Tally {
    std::size_t n = 0;
    std::array<std::size_t, 2> chosen{};
    std::array<double, 2> confidence{};
    double vss_sum = 0.0;
  };
  std::vector<Tally> tallies(plan.pairings.size());
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& r : responses) {
    require(r.trial_index < plan.trials.size(), ErrorCode::UnknownTrial,
            "trial " + std::to_string(r.trial_index) + " not in plan " + plan.plan_id);
    require(seen.emplace(r.session_id, r.trial_index).second, ErrorCode::DuplicateResponse,
            "session " + r.session_id + " answered trial " + std::to_string(r.trial_index) + " twice");
    const Trial& trial = plan.trials[r.trial_index];
    const Pairing& p = plan.pairings[trial.pairing];
    const std::string& chosen_stim = r.choice == Choice::A ? trial.slot_a : trial.slot_b;
    const std::string& chosen_tag = plan.stimulus(chosen_stim).system_tag;
    const Role role = chosen_tag == p.system_2 ? Role::proposed : Role::baseline;
    auto& t = tallies[trial.pairing];
    const int score = vss(role, r.confidence);
    ++t.n;
    ++t.chosen[static_cast<std::size_t>(role)];
    t.confidence[static_cast<std::size_t>(role)] += r.confidence;
    t.vss_sum += score;
  }

  AggregateReport report;
  for (std::size_t i = 0; i < plan.pairings.size(); ++i) {
    const auto& t = tallies[i];
    ComparisonAggregate c;
    c.pairing = i;
    c.n = t.n;
    const auto fill = [&](SystemAggregate& s, const std::string& tag, Role role) {
      const auto idx = static_cast<std::size_t>(role);
      s.system_tag = tag;
      s.role = role;
      s.chosen = t.chosen[idx];
      s.choice_pct = t.n == 0 ? 0.0 : 100.0 * static_cast<double>(t.chosen[idx]) / static_cast<double>(t.n);
      if (t.chosen[idx] > 0) s.mean_confidence = t.confidence[idx] / static_cast<double>(t.chosen[idx]);
    };
    fill(c.baseline, plan.pairings[i].system_1, Role::baseline);
    fill(c.proposed, plan.pairings[i].system_2, Role::proposed);
    if (plan.design == Design::ABX && t.n > 0) c.mean_vss = t.vss_sum / static_cast<double>(t.n);
    report.comparisons.push_back(std::move(c));
  }
  return report;
}

inline void write_aggregate_csv(const AggregateReport& report, std::ostream& out) {
  const auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream s;
    s << std::setprecision(10) << *v;
    return s.str();
  };
  out << "pairing,system_tag,role,n,chosen,choice_pct,mean_confidence,mean_vss\n";
  for (const auto& c : report.comparisons) {
    for (const auto* s : {&c.baseline, &c.proposed}) {
      out << c.pairing << ',' << s->system_tag << ',' << (s->role == Role::proposed ? "proposed" : "baseline") << ','
          << c.n << ',' << s->chosen << ',' << opt(c.n ? std::optional(s->choice_pct) : std::nullopt) << ','
          << opt(s->mean_confidence) << ',' << opt(c.mean_vss) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Plan file: line-oriented, tab-separated records after a version line.
//
//   vqdr-plan<TAB>1
//   plan_id<TAB>...
//   design<TAB>AB|ABX
//   trials_per_listener<TAB>16
//   seed<TAB>7
//   stimulus<TAB>stim_id<TAB>utt_id<TAB>system_tag<TAB>Q?S?P?<TAB>path
//   pairing<TAB>system_1<TAB>system_2<TAB>reference|-<TAB>question
//   trial<TAB>index<TAB>slot_a<TAB>slot_b<TAB>reference_x|-<TAB>question<TAB>pairing

inline constexpr std::string_view kPlanMagic = "vqdr-plan";
inline constexpr int kPlanVersion = 1;

inline void write_plan(const TestPlan& plan, std::ostream& out) {
  out << kPlanMagic << '\t' << kPlanVersion << '\n';
  out << "plan_id\t" << plan.plan_id << '\n';
  out << "design\t" << to_string(plan.design) << '\n';
  out << "trials_per_listener\t" << plan.trials_per_listener << '\n';
  out << "seed\t" << plan.seed << '\n';
  for (const auto& s : plan.stimuli) {
    out << "stimulus\t" << s.stim_id << '\t' << s.utt_id << '\t' << s.system_tag << '\t' << s.condition.to_string()
        << '\t' << s.path << '\n';
  }
  for (const auto& p : plan.pairings) {
    out << "pairing\t" << p.system_1 << '\t' << p.system_2 << '\t' << p.reference.value_or("-") << '\t'
        << to_string(p.question) << '\n';
  }
  for (const auto& t : plan.trials) {
    out << "trial\t" << t.trial_index << '\t' << t.slot_a << '\t' << t.slot_b << '\t' << t.reference_x.value_or("-")
        << '\t' << to_string(t.question) << '\t' << t.pairing << '\n';
  }
}

inline TestPlan read_plan(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "empty plan file");
  const auto head = split(trim(line), '\t');
  require(head.size() == 2 && head[0] == kPlanMagic, ErrorCode::BadMagic, "not a plan file");
  require(head[1] == std::to_string(kPlanVersion), ErrorCode::VersionMismatch, "plan version " + head[1]);

  const auto to_size = [](const std::string& s) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      require(pos == s.size(), ErrorCode::ParseError, "bad number '" + s + "'");
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, "bad number '" + s + "'");
    }
  };
  const auto opt = [](const std::string& s) { return s == "-" ? std::nullopt : std::optional<std::string>(s); };

  TestPlan plan;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    const auto expect = [&](std::size_t n) {
      require(f.size() == n, ErrorCode::ParseError,
              "plan line " + std::to_string(line_no) + ": expected " + std::to_string(n) + " fields");
    };
    if (f[0] == "plan_id") {
      expect(2);
      plan.plan_id = f[1];
    } else if (f[0] == "design") {
      expect(2);
      plan.design = parse_design(f[1]);
    } else if (f[0] == "trials_per_listener") {
      expect(2);
      plan.trials_per_listener = to_size(f[1]);
    } else if (f[0] == "seed") {
      expect(2);
      plan.seed = to_size(f[1]);
    } else if (f[0] == "stimulus") {
      expect(6);
      plan.stimuli.push_back({f[1], f[5], ConditionTriplet::parse(f[4]), f[2], f[3]});
    } else if (f[0] == "pairing") {
      expect(5);
      plan.pairings.push_back({f[1], f[2], opt(f[3]), parse_question(f[4])});
    } else if (f[0] == "trial") {
      expect(7);
      plan.trials.push_back({to_size(f[1]), f[2], f[3], opt(f[4]), parse_question(f[5]), to_size(f[6])});
    } else {
      fail(ErrorCode::ParseError, "plan line " + std::to_string(line_no) + ": unknown record '" + f[0] + "'");
    }
  }
  require(!plan.plan_id.empty(), ErrorCode::ParseError, "plan has no plan_id");
  for (std::size_t i = 0; i < plan.trials.size(); ++i) {
    const Trial& t = plan.trials[i];
    require(t.trial_index == i, ErrorCode::ParseError, "trial records out of order");
    require(t.pairing < plan.pairings.size(), ErrorCode::ParseError, "trial refers to unknown pairing");
    require(t.slot_a != t.slot_b, ErrorCode::ParseError, "trial compares a stimulus with itself");
    require(t.reference_x.has_value() == (plan.design == Design::ABX), ErrorCode::ParseError,
            "reference presence does not match design");
    plan.stimulus(t.slot_a);
    plan.stimulus(t.slot_b);
    if (t.reference_x) plan.stimulus(*t.reference_x);
  }
  return plan;
}

inline void save_plan(const TestPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  write_plan(plan, out);
}

inline TestPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  return read_plan(in);
}

/// Stimulus list TSV: header `stim_id utt_id system_tag condition path`.
inline std::vector<Stimulus> read_stimuli(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "empty stimulus list");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "stim_id\tutt_id\tsystem_tag\tcondition\tpath", ErrorCode::ParseError,
          "bad stimulus header '" + line + "'");
  std::vector<Stimulus> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split(line, '\t');
    require(f.size() == 5, ErrorCode::ParseError, "stimulus line needs 5 fields: '" + line + "'");
    out.push_back({f[0], f[4], ConditionTriplet::parse(f[3]), f[1], f[2]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Responses as JSON lines

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << millis << 'Z';
  return s.str();
}

inline nlohmann::json to_json(const TrialResponse& r) {
  return {{"session_id", r.session_id},
          {"trial_index", r.trial_index},
          {"choice", std::string(to_string(r.choice))},
          {"confidence", r.confidence},
          {"timestamp", r.timestamp}};
}

inline TrialResponse response_from_json(const nlohmann::json& j) {
  try {
    TrialResponse r;
    r.session_id = j.at("session_id").get<std::string>();
    r.trial_index = j.at("trial_index").get<std::size_t>();
    r.choice = parse_choice(j.at("choice").get<std::string>());
    r.confidence = j.at("confidence").get<int>();
    r.timestamp = j.value("timestamp", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad response record: ") + e.what());
  }
}

inline std::vector<TrialResponse> read_responses(std::istream& in) {
  std::vector<TrialResponse> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::ParseError, std::string("bad JSON line: ") + e.what());
    }
    out.push_back(response_from_json(j));
  }
  return out;
}

inline std::vector<TrialResponse> load_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return {};
  return read_responses(in);
}

}  // namespace vqdr
