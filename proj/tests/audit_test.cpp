#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "wspd/audit.hpp"

using namespace wspd;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("b" + std::to_string(i));
  return v;
}

AuditSession labelled(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  AuditSession s = sample_boxes(ids(a + b + c + d), a + b + c + d, 1, "t");
  std::size_t k = 0;
  for (auto [count, cls] : {std::pair{a, AuditClass::HighQuality}, std::pair{b, AuditClass::LowQuality},
                            std::pair{c, AuditClass::MultiplePersons}, std::pair{d, AuditClass::NotAPerson}}) {
    for (std::size_t i = 0; i < count; ++i) record_label(s, s.sample[k++], cls);
  }
  return s;
}

}  // namespace

TEST(Sample, ExhaustiveIsPermutation) {
  const auto s = sample_boxes(ids(50), 50, 3);
  std::set<std::string> got(s.sample.begin(), s.sample.end());
  EXPECT_EQ(got.size(), 50u);
  EXPECT_NE(s.sample, ids(50));
}

TEST(Sample, SeedDeterminism) {
  EXPECT_EQ(sample_boxes(ids(500), 40, 9).sample, sample_boxes(ids(500), 40, 9).sample);
  EXPECT_NE(sample_boxes(ids(500), 40, 9).sample, sample_boxes(ids(500), 40, 10).sample);
}

TEST(Sample, TooLarge) { EXPECT_THROW(sample_boxes(ids(5), 6, 0), SampleTooLarge); }

TEST(Sample, NoDuplicates) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sample_boxes(ids(300), 120, seed);
    EXPECT_EQ(std::set<std::string>(s.sample.begin(), s.sample.end()).size(), 120u);
  }
}

TEST(Sample, MonteCarloUniformity) {
  // n = 100 of 10,000 boxes, 1,000 seeds: expected inclusion 1%.
  constexpr std::size_t N = 10000, n = 100, reps = 1000;
  const auto all = ids(N);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < N; ++i) pos[all[i]] = i;
  std::vector<double> hits(N, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    for (const auto& id : sample_boxes(all, n, 1000 + r).sample) hits[pos[id]] += 1;
  }
  // Block-averaged frequency over 10 consecutive boxes within 1% +/- 0.5%.
  for (std::size_t b = 0; b < N; b += 10) {
    double sum = 0;
    for (std::size_t i = b; i < b + 10; ++i) sum += hits[i];
    EXPECT_NEAR(sum / 10.0 / reps, 0.01, 0.005) << "block " << b;
  }
  // Chi-square over per-box counts: 9,999 dof, mean 9,999, sd ~141.
  const double expected = static_cast<double>(n * reps) / N;
  double chi2 = 0;
  for (double h : hits) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(chi2, 9999 + 5 * 141.4);
  EXPECT_GT(chi2, 9999 - 5 * 141.4);
}

TEST(Label, ReadBackAndOverwrite) {
  auto s = sample_boxes(ids(10), 5, 2);
  record_label(s, s.sample[0], AuditClass::HighQuality);
  EXPECT_EQ(s.labels.at(s.sample[0]), AuditClass::HighQuality);
  record_label(s, s.sample[0], AuditClass::NotAPerson);
  EXPECT_EQ(s.labels.at(s.sample[0]), AuditClass::NotAPerson);
  EXPECT_EQ(s.labels.size(), 1u);
  EXPECT_EQ(s.remaining(), 4u);
}

TEST(Label, OutsideSample) {
  auto s = sample_boxes(ids(10), 5, 2);
  std::string outside;
  for (const auto& id : ids(10))
    if (!s.in_sample(id)) outside = id;
  EXPECT_THROW(record_label(s, outside, AuditClass::HighQuality), UnknownBox);
}

TEST(Report, QualityTableCounts) {
  const auto r = audit_report(labelled(622, 211, 97, 70));
  EXPECT_EQ(r.labeled, 1000u);
  EXPECT_EQ(r.percent(AuditClass::HighQuality), 62.2);
  EXPECT_EQ(r.percent(AuditClass::LowQuality), 21.1);
  EXPECT_EQ(r.percent(AuditClass::MultiplePersons), 9.7);
  EXPECT_EQ(r.percent(AuditClass::NotAPerson), 7.0);
  EXPECT_EQ(r.person_rate(), 93.0);
  EXPECT_NE(format_report(r).find("93.0%"), std::string::npos);
}

TEST(Report, SingleClass) {
  const auto r = audit_report(labelled(50, 0, 0, 0));
  EXPECT_EQ(r.percent(AuditClass::HighQuality), 100.0);
  EXPECT_EQ(r.percent(AuditClass::NotAPerson), 0.0);
  EXPECT_EQ(r.person_rate(), 100.0);
}

TEST(Report, ThirdsRoundToOneDecimal) {
  const auto r = audit_report(labelled(1, 1, 1, 0));
  EXPECT_EQ(r.percent(AuditClass::HighQuality), 33.3);
  EXPECT_EQ(r.percent(AuditClass::LowQuality), 33.3);
  EXPECT_EQ(r.percent(AuditClass::MultiplePersons), 33.3);
  EXPECT_EQ(r.percent(AuditClass::NotAPerson), 0.0);
}

TEST(Report, HalvesRoundAwayFromZero) {
  EXPECT_EQ(percent_tenths(1, 8), 125);   // 12.5 exactly
  EXPECT_EQ(percent_tenths(1, 16), 63);   // 6.25 -> 6.3
  EXPECT_EQ(percent_tenths(1, 2000), 1);  // 0.05 -> 0.1
  EXPECT_EQ(percent_tenths(2, 3), 667);
}

TEST(Report, Empty) {
  const auto s = sample_boxes(ids(3), 3, 0);
  EXPECT_THROW(audit_report(s), EmptySession);
}

TEST(Report, PartialSessionUsesLabeledDenominator) {
  auto s = sample_boxes(ids(10), 10, 0);
  record_label(s, s.sample[0], AuditClass::HighQuality);
  record_label(s, s.sample[1], AuditClass::NotAPerson);
  const auto r = audit_report(s);
  EXPECT_EQ(r.labeled, 2u);
  EXPECT_EQ(r.percent(AuditClass::HighQuality), 50.0);
}

TEST(Report, SumsToHundredAndOrderInvariant) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    auto base = sample_boxes(ids(n), n, t);
    std::vector<std::pair<std::string, AuditClass>> labels;
    for (const auto& id : base.sample) labels.emplace_back(id, static_cast<AuditClass>(uniform_index(rng, 4)));
    AuditSession a = base, b = base;
    for (const auto& [id, c] : labels) record_label(a, id, c);
    shuffle(std::span(labels), rng);
    for (const auto& [id, c] : labels) record_label(b, id, c);
    const auto ra = audit_report(a), rb = audit_report(b);
    EXPECT_EQ(ra.percent_tenths, rb.percent_tenths);
    long sum = 0;
    for (long v : ra.percent_tenths) sum += v;
    EXPECT_LE(std::abs(sum - 1000), 2);
  }
}

TEST(Persistence, AtomicSaveAndLoad) {
  const auto dir = test_util::scratch_dir("session");
  auto s = sample_boxes(ids(20), 8, 4, "s4");
  s.dataset = "ds.json";
  record_label(s, s.sample[2], AuditClass::MultiplePersons);
  save_session_atomic(s, dir / "s4.json");
  EXPECT_FALSE(std::filesystem::exists(dir / "s4.json.tmp"));
  const auto back = load_session(dir / "s4.json");
  EXPECT_EQ(back.sample, s.sample);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.dataset, "ds.json");
  EXPECT_EQ(back.seed, 4u);
}

TEST(Classes, ParseNames) {
  EXPECT_EQ(audit_class_from_string("iv"), AuditClass::NotAPerson);
  EXPECT_EQ(audit_class_from_string("2"), AuditClass::LowQuality);
  EXPECT_EQ(audit_class_from_string("multiple_persons"), AuditClass::MultiplePersons);
  EXPECT_FALSE(audit_class_from_string("5"));
}
