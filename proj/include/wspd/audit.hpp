#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace wspd {

using json = nlohmann::json;

enum class AuditClass { HighQuality, LowQuality, MultiplePersons, NotAPerson };

inline constexpr std::array<AuditClass, 4> kAuditClasses = {
    AuditClass::HighQuality, AuditClass::LowQuality, AuditClass::MultiplePersons, AuditClass::NotAPerson};

inline const char* to_string(AuditClass c) {
  switch (c) {
    case AuditClass::HighQuality: return "high_quality";
    case AuditClass::LowQuality: return "low_quality";
    case AuditClass::MultiplePersons: return "multiple_persons";
    case AuditClass::NotAPerson: return "not_a_person";
  }
  return "?";
}

inline const char* display_name(AuditClass c) {
  switch (c) {
    case AuditClass::HighQuality: return "(i) High-quality annotation";
    case AuditClass::LowQuality: return "(ii) Low-quality annotation (partial body)";
    case AuditClass::MultiplePersons: return "(iii) Multiple persons in a bbox";
    case AuditClass::NotAPerson: return "(iv) Misclassification (not a person)";
  }
  return "?";
}

// Accepts the canonical names, roman numerals i-iv, or 1-4.
inline std::optional<AuditClass> audit_class_from_string(const std::string& s) {
  static const std::map<std::string, AuditClass> names = {
      {"high_quality", AuditClass::HighQuality},   {"i", AuditClass::HighQuality},   {"1", AuditClass::HighQuality},
      {"low_quality", AuditClass::LowQuality},     {"ii", AuditClass::LowQuality},   {"2", AuditClass::LowQuality},
      {"multiple_persons", AuditClass::MultiplePersons}, {"iii", AuditClass::MultiplePersons},
      {"3", AuditClass::MultiplePersons},
      {"not_a_person", AuditClass::NotAPerson},    {"iv", AuditClass::NotAPerson},   {"4", AuditClass::NotAPerson}};
  auto it = names.find(s);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

inline constexpr std::size_t kDefaultAuditSampleSize = 1000;

struct AuditSession {
  std::string session_id;
  std::string dataset;
  std::vector<std::string> sample;  // presentation order
  std::map<std::string, AuditClass> labels;
  std::uint64_t seed = 0;
  std::string created_at;

  bool in_sample(const std::string& box_id) const {
    return std::find(sample.begin(), sample.end(), box_id) != sample.end();
  }
  // First sampled box without a label.
  std::optional<std::string> next_unlabeled() const {
    for (const auto& id : sample) {
      if (!labels.count(id)) return id;
    }
    return std::nullopt;
  }
  std::size_t remaining() const { return sample.size() - labels.size(); }
};

inline std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Uniform sample without replacement; the draw order is the presentation
// order and depends only on (box_ids, n, seed).
inline AuditSession sample_boxes(std::vector<std::string> box_ids, std::size_t n, std::uint64_t seed,
                                 std::string session_id = {}) {
  if (n > box_ids.size()) {
    throw SampleTooLarge("requested " + std::to_string(n) + " boxes from a dataset of " +
                         std::to_string(box_ids.size()));
  }
  Rng rng(seed);
  partial_shuffle(std::span<std::string>(box_ids), n, rng);
  box_ids.resize(n);
  AuditSession s;
  s.session_id = std::move(session_id);
  s.sample = std::move(box_ids);
  s.seed = seed;
  s.created_at = utc_now_iso8601();
  return s;
}

// Last write wins.
inline void record_label(AuditSession& s, const std::string& box_id, AuditClass c) {
  if (!s.in_sample(box_id)) throw UnknownBox("box '" + box_id + "' is not in session '" + s.session_id + "'");
  s.labels[box_id] = c;
}

struct AuditReport {
  std::size_t labeled = 0;
  std::array<std::size_t, 4> counts{};
  std::array<long, 4> percent_tenths{};  // percentage * 10
  long person_rate_tenths = 0;           // classes (i)-(iii) combined

  double percent(AuditClass c) const { return percent_tenths[static_cast<std::size_t>(c)] / 10.0; }
  double person_rate() const { return person_rate_tenths / 10.0; }

  json to_json() const {
    json classes = json::array();
    for (auto c : kAuditClasses) {
      const auto i = static_cast<std::size_t>(c);
      classes.push_back({{"class", to_string(c)}, {"name", display_name(c)}, {"count", counts[i]},
                         {"percent", percent(c)}});
    }
    return {{"labeled", labeled}, {"classes", classes}, {"person_rate", person_rate()}};
  }
};

// 100 * count / total in tenths of a percent, rounded half away from zero.
// Integer arithmetic keeps ties exact.
inline long percent_tenths(std::size_t count, std::size_t total) {
  return static_cast<long>((2000 * count + total) / (2 * total));
}

inline std::string format_tenths(long tenths) {
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

// Percentages are over labeled boxes only.
inline AuditReport audit_report(const AuditSession& s) {
  if (s.labels.empty()) throw EmptySession("session '" + s.session_id + "' has no labels");
  AuditReport r;
  r.labeled = s.labels.size();
  for (const auto& [id, c] : s.labels) ++r.counts[static_cast<std::size_t>(c)];
  for (std::size_t i = 0; i < 4; ++i) r.percent_tenths[i] = percent_tenths(r.counts[i], r.labeled);
  r.person_rate_tenths = percent_tenths(r.counts[0] + r.counts[1] + r.counts[2], r.labeled);
  return r;
}

inline std::string format_report(const AuditReport& r) {
  std::string out = "Dataset quality (" + std::to_string(r.labeled) + " labeled boxes)\n";
  for (auto c : kAuditClasses) {
    const auto i = static_cast<std::size_t>(c);
    std::string name = display_name(c);
    name.resize(48, ' ');
    out += name + format_tenths(r.percent_tenths[i]) + "%  (" + std::to_string(r.counts[i]) + ")\n";
  }
  out += "Person images (i)+(ii)+(iii)                    " + format_tenths(r.person_rate_tenths) + "%\n";
  return out;
}

// --- persistence -------------------------------------------------------------

inline json session_to_json(const AuditSession& s) {
  json labels = json::object();
  for (const auto& [id, c] : s.labels) labels[id] = to_string(c);
  return {{"session_id", s.session_id}, {"dataset", s.dataset}, {"seed", s.seed},
          {"created_at", s.created_at}, {"sample", s.sample}, {"labels", labels}};
}

inline AuditSession session_from_json(const json& j) {
  AuditSession s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.dataset = j.value("dataset", std::string());
    s.seed = j.value("seed", std::uint64_t{0});
    s.created_at = j.value("created_at", std::string());
    s.sample = j.at("sample").get<std::vector<std::string>>();
    const std::set<std::string> members(s.sample.begin(), s.sample.end());
    if (members.size() != s.sample.size()) throw ParseError(0, "session sample has duplicate box ids");
    for (const auto& [id, v] : j.at("labels").items()) {
      auto c = audit_class_from_string(v.get<std::string>());
      if (!c) throw ParseError(0, "unknown audit class '" + v.get<std::string>() + "'");
      if (!members.count(id)) throw UnknownBox("labeled box '" + id + "' is not in the sample");
      s.labels[id] = *c;
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("bad session file: ") + e.what());
  }
  return s;
}

// Write-temp-then-rename so a crash never leaves a torn session file.
inline void save_session_atomic(const AuditSession& s, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << session_to_json(s).dump(1) << '\n';
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename session file: " + ec.message());
}

inline AuditSession load_session(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open session " + path.string());
  try {
    return session_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("invalid session JSON: ") + e.what());
  }
}

}  // namespace wspd
