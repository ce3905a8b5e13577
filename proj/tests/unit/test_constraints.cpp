/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "a3s/constraints.hpp"
#include "common/oracles.hpp"

using namespace a3s;
using oracle::Step;

namespace {

/// Consistent random sequence: draw hidden labels, then query random pairs.
std::vector<Step> consistent_sequence(std::size_t n, std::size_t len, std::size_t classes, std::mt19937_64& rng) {
  std::vector<int> label(n);
  for (auto& y : label) y = static_cast<int>(rng() % classes);
  std::vector<Step> out;
  while (out.size() < len) {
    const auto s = static_cast<SampleId>(rng() % n), t = static_cast<SampleId>(rng() % n);
    if (s == t) continue;
    out.push_back({s, t, label[s] == label[t] ? Relation::MustLink : Relation::CannotLink});
  }
  return out;
}

}  // namespace

TEST(ConstraintStore, WorkedInferenceExample) {
  ConstraintStore s(4);
  EXPECT_TRUE(s.add_constraint(0, 1, Relation::MustLink).empty());
  const auto second = s.add_constraint(1, 2, Relation::MustLink);
  ASSERT_EQ(second.size(), 1u);
  EXPECT_EQ(second[0].s, 0u);
  EXPECT_EQ(second[0].t, 2u);
  EXPECT_EQ(second[0].value, Relation::MustLink);
  const auto third = s.add_constraint(0, 3, Relation::CannotLink);
  std::set<std::pair<SampleId, SampleId>> cl;
  for (const auto& ch : third) {
    EXPECT_EQ(ch.value, Relation::CannotLink);
    cl.insert({ch.s, ch.t});
  }
  EXPECT_EQ(cl, (std::set<std::pair<SampleId, SampleId>>{{1, 3}, {2, 3}}));
  EXPECT_EQ(s.query_state(0, 2), Relation::MustLink);
  EXPECT_EQ(s.query_state(2, 3), Relation::CannotLink);
  EXPECT_EQ(s.query_state(3, 2), Relation::CannotLink);
}

TEST(ConstraintStore, QueryStateBasics) {
  ConstraintStore s(5);
  EXPECT_EQ(s.query_state(0, 4), Relation::Unknown);
  EXPECT_EQ(s.query_state(2, 2), Relation::MustLink);
  EXPECT_THROW(s.add_constraint(1, 1, Relation::MustLink), ConfigError);
  EXPECT_THROW(s.add_constraint(1, 9, Relation::MustLink), ConfigError);
  EXPECT_THROW(s.add_constraint(1, 2, Relation::Unknown), ConfigError);
}

TEST(ConstraintStore, ContradictionLeavesStoreUntouched) {
  ConstraintStore s(3);
  s.add_constraint(0, 1, Relation::MustLink);
  const auto before = s.state_map();
  try {
    s.add_constraint(0, 1, Relation::CannotLink);
    FAIL() << "expected a contradiction";
  } catch (const ContradictionError& e) {
    EXPECT_EQ(e.first(), 0u);
    EXPECT_EQ(e.second(), 1u);
  }
  EXPECT_EQ(s.state_map(), before);
  // Repeating a known constraint is a no-op.
  EXPECT_TRUE(s.add_constraint(1, 0, Relation::MustLink).empty());
}

TEST(ConstraintStore, InferredContradictionDetected) {
  ConstraintStore s(3);
  s.add_constraint(0, 1, Relation::MustLink);
  s.add_constraint(1, 2, Relation::CannotLink);
  EXPECT_THROW(s.add_constraint(0, 2, Relation::MustLink), ContradictionError);
}

TEST(ConstraintStore, RandomSequencesMatchFixpointClosure) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto steps = consistent_sequence(40, 200, 2 + rng() % 8, rng);
    const auto got = oracle::incremental(40, steps);
    const auto ref = oracle::closure(40, steps);
    ASSERT_TRUE(got && ref);
    ASSERT_EQ(*got, *ref) << "trial " << trial;
  }
}

TEST(ConstraintStore, ContradictoryRandomSequencesRejected) {
  std::mt19937_64 rng(5);
  std::size_t contradictory = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Step> steps;
    for (int k = 0; k < 8; ++k) {
      const auto s = static_cast<SampleId>(rng() % 5), t = static_cast<SampleId>(rng() % 5);
      if (s == t) continue;
      steps.push_back({s, t, rng() % 2 ? Relation::MustLink : Relation::CannotLink});
    }
    const auto ref = oracle::closure(5, steps);
    const auto got = oracle::incremental(5, steps);
    EXPECT_EQ(got.has_value(), ref.has_value());
    if (ref && got) {
      EXPECT_EQ(*got, *ref);
    }
    contradictory += !ref;
  }
  EXPECT_GT(contradictory, 50u);
}

TEST(ConstraintStore, EndpointOrderDoesNotMatter) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto steps = consistent_sequence(25, 60, 4, rng);
    const auto a = oracle::incremental(25, steps);
    for (auto& st : steps) std::swap(st.s, st.t);
    EXPECT_EQ(oracle::incremental(25, steps), a);
  }
}

TEST(ConstraintStore, ClosureIsIdempotent) {
  std::mt19937_64 rng(13);
  const auto steps = consistent_sequence(30, 80, 5, rng);
  ConstraintStore s(30);
  for (const auto& st : steps) s.add_constraint(st.s, st.t, st.value);
  const auto before = s.state_map();
  for (const auto& [key, rel] : before) EXPECT_TRUE(s.add_constraint(key.first, key.second, rel).empty());
  EXPECT_EQ(s.state_map(), before);
}

TEST(ConstraintStore, SerializeRoundTrip) {
  std::mt19937_64 rng(4);
  const auto steps = consistent_sequence(20, 40, 3, rng);
  ConstraintStore s(20);
  for (const auto& st : steps) s.add_constraint(st.s, st.t, st.value);
  std::stringstream ss;
  s.serialize(ss);
  const auto back = ConstraintStore::deserialize(ss);
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.pair_count(), s.pair_count());
  std::stringstream bad("3\n0 7 ML\n");
  EXPECT_THROW(ConstraintStore::deserialize(bad), IoError);
}

TEST(ClusterRelation, Cases) {
  ConstraintStore s(6);
  const std::vector<SampleId> a{0, 1, 2}, b{3, 4, 5};
  EXPECT_EQ(cluster_relation(s, a, b), Relation::Unknown);
  s.add_constraint(1, 4, Relation::CannotLink);
  EXPECT_EQ(cluster_relation(s, a, b), Relation::CannotLink);
  s.add_constraint(2, 5, Relation::MustLink);
  EXPECT_EQ(cluster_relation(s, a, b), Relation::MustLink);

  auto c = Clustering::from_labels(std::vector<int>{0, 0, 0, 1, 1, 1});
  EXPECT_EQ(cluster_relation(s, c, 0, 1), Relation::MustLink);
}

TEST(ClusterRelation, ClusteringOverloadAgreesWithSpanOverload) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 12;
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % 4);
    const auto c = Clustering::from_labels(y);
    ConstraintStore s(n);
    for (const auto& st : consistent_sequence(n, 1 + rng() % 6, 3, rng)) s.add_constraint(st.s, st.t, st.value);
    for (const auto& [i, mi] : c.clusters())
      for (const auto& [j, mj] : c.clusters())
        if (i != j) {
          ASSERT_EQ(cluster_relation(s, c, i, j), cluster_relation(s, mi, mj));
        }
  }
}

TEST(Relation, StringRoundTrip) {
  EXPECT_EQ(relation_from_string(to_string(Relation::MustLink)), Relation::MustLink);
  EXPECT_EQ(relation_from_string(to_string(Relation::CannotLink)), Relation::CannotLink);
  EXPECT_EQ(opposite(Relation::MustLink), Relation::CannotLink);
  EXPECT_THROW(relation_from_string("maybe"), ConfigError);
}
