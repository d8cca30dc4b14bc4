// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "metamf/dataset.hpp"
#include "metamf/rng.hpp"

namespace {

using namespace metamf;

LoadedRatings load_text(const std::string& text, const std::string& format = "tsv") {
  std::istringstream in(text);
  return load_ratings(in, RatingFormat::parse(format));
}

std::vector<RatingRecord> records_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<RatingRecord> out;
  for (std::uint32_t u = 0; u < counts.size(); ++u)
    for (std::uint32_t i = 0; i < counts[u]; ++i) out.push_back({u, i, 3.0});
  return out;
}

TEST(LoadRatings, DensifiesUserIds) {
  auto r = load_text("7\t1\t4\n9\t1\t2\n7\t2\t5\n");
  EXPECT_EQ(r.n_users(), 2u);
  EXPECT_EQ(r.records[0].user, 0u);
  EXPECT_EQ(r.records[1].user, 1u);
  EXPECT_EQ(r.records[2].user, 0u);
  EXPECT_EQ(r.users.raw(1), "9");
  EXPECT_EQ(r.users.find("7"), 0u);
  EXPECT_FALSE(r.users.find("8").has_value());
}

TEST(LoadRatings, KeepsDuplicatePairs) {
  auto r = load_text("1\t1\t4\n1\t1\t2\n");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].rating, 4.0);
  EXPECT_EQ(r.records[1].rating, 2.0);
}

TEST(LoadRatings, DoubleColonDelimiter) {
  auto r = load_text("1::2::5\n", "dat");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0], (RatingRecord{0, 0, 5.0}));
}

TEST(LoadRatings, ReportsLineNumberOfBadLine) {
  try {
    load_text("1\t1\t4\n\n1\t2\tfive\n");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(load_text("1\t2\n"), IngestError);
}

TEST(LoadRatings, EmptyInputIsContractError) {
  EXPECT_THROW(load_text(""), ContractError);
  EXPECT_THROW(load_text("\n\n"), ContractError);
  EXPECT_THROW(load_ratings("/nonexistent/ratings.tsv", RatingFormat{}), IoError);
}

TEST(LoadRatings, CustomColumnsHeaderAndRange) {
  auto r = load_text("item,user,score\nA,u1,-10\nB,u2,10\nA,u2,0\n",
                     "delim=comma;user=1;item=0;rating=2;skip=1;range=-10:10");
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0], (RatingRecord{0, 0, 1.0}));
  EXPECT_EQ(r.records[1], (RatingRecord{1, 1, 5.0}));
  EXPECT_EQ(r.records[2], (RatingRecord{1, 0, 3.0}));
  EXPECT_THROW(RatingFormat::parse("delim=,;bogus=1"), ContractError);
}

TEST(LoadRatings, JesterPresetRescalesAndRejectsOutOfRange) {
  auto r = load_text("1,5,-10\n2,5,10\n", "jester");
  EXPECT_EQ(r.records[0].rating, 1.0);
  EXPECT_EQ(r.records[1].rating, 5.0);
  EXPECT_THROW(load_text("1,5,11\n", "jester"), IngestError);
}

TEST(Rescale, EndpointsMidpointAndIdentity) {
  std::vector<RatingRecord> recs{{0, 0, -10}, {0, 1, 10}, {0, 2, 0}};
  auto out = rescale_ratings(recs, -10, 10);
  EXPECT_EQ(out[0].rating, 1.0);
  EXPECT_EQ(out[1].rating, 5.0);
  EXPECT_EQ(out[2].rating, 3.0);
  std::vector<RatingRecord> five{{0, 0, 1}, {0, 1, 2.5}, {0, 2, 5}};
  EXPECT_EQ(rescale_ratings(five, 1, 5), five);
  EXPECT_THROW(rescale_ratings({{0, 0, 11}}, -10, 10), ContractError);
  EXPECT_THROW(rescale_ratings(five, 5, 1), ContractError);
}

TEST(Rescale, PreservesOrderAndRank) {
  Rng rng(3);
  std::vector<RatingRecord> recs;
  for (std::uint32_t k = 0; k < 200; ++k) recs.push_back({k, k, rng.uniform(-10, 10)});
  auto out = rescale_ratings(recs, -10, 10);
  for (std::size_t a = 0; a < recs.size(); ++a) {
    EXPECT_EQ(out[a].user, recs[a].user);
    EXPECT_GE(out[a].rating, 1.0);
    EXPECT_LE(out[a].rating, 5.0);
    for (std::size_t b = 0; b < recs.size(); ++b)
      if (recs[a].rating < recs[b].rating) {
        EXPECT_LE(out[a].rating, out[b].rating);
      }
  }
}

TEST(Split, TenRecordsGiveEightOneOne) {
  auto recs = records_with_counts({10});
  auto s = split_dataset(recs, 1, 10, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicAndPartitioning) {
  auto recs = records_with_counts(std::vector<std::size_t>(37, 13));
  auto a = split_dataset(recs, 37, 13, 5);
  auto b = split_dataset(recs, 37, 13, 5);
  auto c = split_dataset(recs, 37, 13, 6);
  EXPECT_EQ(a.train_index, b.train_index);
  EXPECT_EQ(a.test_index, b.test_index);
  EXPECT_NE(a.train_index, c.train_index);
  std::vector<std::size_t> all;
  for (const auto* part : {&a.train_index, &a.validation_index, &a.test_index})
    all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < all.size(); ++k) EXPECT_EQ(all[k], k);
  const double n = static_cast<double>(recs.size());
  EXPECT_LE(std::abs(static_cast<double>(a.test.size()) - 0.1 * n), 1.0);
  EXPECT_LE(std::abs(static_cast<double>(a.validation.size()) - 0.1 * n), 1.0);
  EXPECT_LE(std::abs(static_cast<double>(a.train.size()) - 0.8 * n), 1.0);
}

TEST(Split, MovieLensScaleArithmetic) {
  std::vector<RatingRecord> recs(1000209, RatingRecord{0, 0, 3.0});
  auto s = split_dataset(recs, 1, 1, 42);
  EXPECT_LE(std::abs(static_cast<long>(s.test.size()) - 100021L), 1L);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), recs.size());
}

TEST(Split, ContractErrors) {
  auto recs = records_with_counts({10});
  EXPECT_THROW(split_dataset(recs, 1, 10, 1, {0.8, 0.1, 0.2}), ContractError);
  EXPECT_THROW(split_dataset(records_with_counts({9}), 1, 9, 1), ContractError);
}

TEST(Split, ManifestRoundTrip) {
  auto recs = records_with_counts(std::vector<std::size_t>(12, 7));
  auto s = split_dataset(recs, 12, 7, 9);
  std::stringstream ss;
  write_split_manifest(ss, s);
  EXPECT_EQ(ss.str().rfind("split-v1\n", 0), 0u);
  auto back = read_split_manifest(ss, recs);
  EXPECT_EQ(back.train_index, s.train_index);
  EXPECT_EQ(back.validation_index, s.validation_index);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.n_users, 12u);

  std::stringstream again;
  write_split_manifest(again, s);
  auto fewer = recs;
  fewer.pop_back();
  EXPECT_THROW(read_split_manifest(again, fewer), ContractError);
  std::stringstream bad("split-v0\n");
  EXPECT_THROW(read_split_manifest(bad, recs), IoError);
}

TEST(Groups, CountsOneToHundred) {
  std::vector<std::size_t> counts(100);
  for (std::size_t u = 0; u < 100; ++u) counts[u] = u + 1;
  auto g = identify_user_groups(records_with_counts(counts), 100);
  EXPECT_EQ(g.low.user_ids, (std::vector<std::uint32_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(g.high.user_ids, (std::vector<std::uint32_t>{95, 96, 97, 98, 99}));
  // Median count 50.5: counts 50, 51 are tied nearest, then 49, 52, then 48.
  EXPECT_EQ(g.med.user_ids, (std::vector<std::uint32_t>{47, 48, 49, 50, 51}));
}

TEST(Groups, TiesGoToLowerIdsAndGroupsAreDisjoint) {
  auto g = identify_user_groups(records_with_counts(std::vector<std::size_t>(80, 3)), 80);
  EXPECT_EQ(g.low.user_ids, (std::vector<std::uint32_t>{0, 1, 2, 3}));
  EXPECT_EQ(g.high.user_ids, (std::vector<std::uint32_t>{4, 5, 6, 7}));
  EXPECT_EQ(g.med.user_ids, (std::vector<std::uint32_t>{8, 9, 10, 11}));
  EXPECT_EQ(g.label_of(9), GroupLabel::Med);
  EXPECT_FALSE(g.label_of(40).has_value());
}

TEST(Groups, SizeIsFivePercentRounded) {
  for (std::size_t n : {60u, 129u, 150u, 6040u}) {
    std::vector<std::size_t> counts(n);
    Rng rng(n);
    for (auto& c : counts) c = 1 + rng.below(40);
    auto g = identify_user_groups(records_with_counts(counts), n);
    const auto k = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(n)));
    EXPECT_EQ(g.low.user_ids.size(), k);
    EXPECT_EQ(g.med.user_ids.size(), k);
    EXPECT_EQ(g.high.user_ids.size(), k);
    std::set<std::uint32_t> seen;
    for (const auto* grp : {&g.low, &g.med, &g.high})
      for (auto u : grp->user_ids) EXPECT_TRUE(seen.insert(u).second);
    std::size_t low_max = 0, high_min = SIZE_MAX;
    for (auto u : g.low.user_ids) low_max = std::max(low_max, counts[u]);
    for (auto u : g.high.user_ids) high_min = std::min(high_min, counts[u]);
    for (std::size_t u = 0; u < n; ++u) {
      if (!g.low.contains(u)) {
        EXPECT_GE(counts[u], low_max);
      }
      if (!g.high.contains(u)) {
        EXPECT_LE(counts[u], high_min);
      }
    }
  }
  // MovieLens 1M has 6,040 users and Jester 73,421.
  EXPECT_EQ(std::llround(0.05 * 6040), 302);
  EXPECT_EQ(std::llround(0.05 * 73421), 3671);
}

TEST(Groups, TooFewUsers) {
  EXPECT_THROW(identify_user_groups(records_with_counts(std::vector<std::size_t>(59, 2)), 59),
               ContractError);
}

TEST(Groups, UsersWithoutTrainingRatingsAreSkipped) {
  std::vector<std::size_t> counts(100, 4);
  counts[3] = 0;
  auto g = identify_user_groups(records_with_counts(counts), 100);
  EXPECT_FALSE(g.label_of(3).has_value());
  EXPECT_EQ(g.low.user_ids.size(), 5u);  // round(0.05 * 99)
}

TEST(PrivacyBudget, FullBudgetIsIdentity) {
  auto train = records_with_counts({4, 9, 1, 17});
  auto s = sample_privacy_budget(train, 1.0, 3);
  EXPECT_EQ(s.records, train);
}

TEST(PrivacyBudget, SharedCounts) {
  EXPECT_EQ(shared_count(10, 0.3), 3u);
  EXPECT_EQ(shared_count(5, 0.1), 1u);
  EXPECT_EQ(shared_count(1, 0.1), 1u);
  EXPECT_EQ(shared_count(5, 0.5), 3u);  // half rounds up
  auto s = sample_privacy_budget(records_with_counts({10, 5}), 0.3, 8);
  EXPECT_EQ(s.per_user_counts.at(0), 3u);
  EXPECT_EQ(s.per_user_counts.at(1), 2u);
  auto t = sample_privacy_budget(records_with_counts({10, 5}), 0.1, 8);
  EXPECT_EQ(t.per_user_counts.at(1), 1u);
}

TEST(PrivacyBudget, RejectsBadBeta) {
  auto train = records_with_counts({3});
  EXPECT_THROW(sample_privacy_budget(train, 0.0, 1), ContractError);
  EXPECT_THROW(sample_privacy_budget(train, 1.01, 1), ContractError);
  EXPECT_THROW(sample_privacy_budget(train, -0.5, 1), ContractError);
}

TEST(PrivacyBudget, NestedSubsetsAndBounds) {
  Rng rng(17);
  std::vector<std::size_t> counts(50);
  for (auto& c : counts) c = 1 + rng.below(60);
  auto train = records_with_counts(counts);
  const std::vector<double> betas{0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  std::set<std::pair<std::uint32_t, std::uint32_t>> prev;
  std::size_t prev_size = 0;
  for (double beta : betas) {
    auto s = sample_privacy_budget(train, beta, 21);
    std::set<std::pair<std::uint32_t, std::uint32_t>> cur;
    for (const auto& r : s.records) cur.insert({r.user, r.item});
    EXPECT_EQ(cur.size(), s.records.size());
    for (const auto& key : prev) EXPECT_TRUE(cur.count(key)) << "beta " << beta;
    EXPECT_GE(s.records.size(), prev_size);
    std::vector<std::size_t> per(50, 0);
    for (const auto& r : s.records) {
      ++per[r.user];
      EXPECT_LT(r.item, counts[r.user]);
    }
    for (std::size_t u = 0; u < 50; ++u) {
      EXPECT_GE(per[u], 1u);
      EXPECT_LE(per[u], counts[u]);
      EXPECT_EQ(per[u], s.per_user_counts.at(u));
    }
    prev = std::move(cur);
    prev_size = s.records.size();
  }
  EXPECT_EQ(sample_privacy_budget(train, 0.4, 5).records, sample_privacy_budget(train, 0.4, 5).records);
  EXPECT_NE(sample_privacy_budget(train, 0.4, 5).records, sample_privacy_budget(train, 0.4, 6).records);
}

}  // namespace
