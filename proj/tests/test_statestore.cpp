// tests/test_statestore.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "seqconf/similarity.hpp"
#include "seqconf/statestore.hpp"

using namespace seqconf;

namespace {

StateMatrix make_states(std::vector<std::vector<float>> rows, int sentence_id,
                        StateSide side = StateSide::kEncoder) {
  StateMatrix m;
  m.side = side;
  m.sentence_id = sentence_id;
  m.rows.resize(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.rows(r, c) = rows[r][c];
  return m;
}

Eigen::VectorXf vec2(float x, float y) {
  Eigen::VectorXf v(2);
  v << x, y;
  return v;
}

// Brute-force oracle, deliberately independent of VectorIndex internals.
NnResult brute_force(const std::vector<StateMatrix>& records, const Eigen::VectorXf& query,
                     IndexGranularity gran) {
  NnResult best;
  double best_d2 = -1;
  for (const auto& rec : records) {
    int n = gran == IndexGranularity::kToken ? rec.length() : 1;
    for (int r = 0; r < n; ++r) {
      Eigen::VectorXf v = gran == IndexGranularity::kToken
                              ? Eigen::VectorXf(rec.rows.row(r).transpose())
                              : Eigen::VectorXf(rec.rows.colwise().mean().transpose());
      double d2 = (v - query).cast<double>().squaredNorm();
      if (best_d2 < 0 || d2 < best_d2 ||
          (d2 == best_d2 &&
           std::pair(rec.sentence_id, r) < std::pair(best.sentence_id, best.position))) {
        best_d2 = d2;
        best.sentence_id = rec.sentence_id;
        best.position = r;
      }
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

}  // namespace

TEST_CASE("token granularity stores every row, sentence granularity the averages") {
  std::vector<StateMatrix> records = {
      make_states({{0, 0}, {1, 1}}, 0),
      make_states({{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}}, 1),
      make_states({{9, 9}}, 2),
  };
  auto tok = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kExact);
  CHECK(tok.size() == 8);
  auto sent = VectorIndex::build(records, IndexGranularity::kSentenceAvg, IndexMode::kExact);
  CHECK(sent.size() == 3);
  // average of a length-1 sentence equals its single row
  auto hit = sent.nn(vec2(9, 9));
  CHECK(hit.distance == 0.0);
  CHECK(hit.sentence_id == 2);
}

TEST_CASE("exact nn matches the 3-4-5 example") {
  std::vector<StateMatrix> records = {make_states({{0, 0}, {3, 4}}, 0)};
  auto index = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kExact);
  CHECK(index.nn(vec2(0, 0)).distance == 0.0);
  CHECK(index.nn(vec2(0, 0)).position == 0);
  // removing the zero point: query against the far vector alone
  std::vector<StateMatrix> far = {make_states({{3, 4}}, 0)};
  auto index2 = VectorIndex::build(far, IndexGranularity::kToken, IndexMode::kExact);
  CHECK(index2.nn(vec2(0, 0)).distance == doctest::Approx(5.0));
}

TEST_CASE("nearest neighbor with payload and tie-breaking") {
  std::vector<StateMatrix> records = {make_states({{1, 0}}, 0), make_states({{0, 2}}, 1)};
  auto index = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kExact);
  auto hit = index.nn(vec2(0, 0));
  CHECK(hit.distance == doctest::Approx(1.0));
  CHECK(hit.sentence_id == 0);

  // exact ties resolve to the lowest (sentence_id, position)
  std::vector<StateMatrix> ties = {make_states({{1, 0}}, 3), make_states({{-1, 0}}, 1)};
  auto tie_index = VectorIndex::build(ties, IndexGranularity::kToken, IndexMode::kExact);
  CHECK(tie_index.nn(vec2(0, 0)).sentence_id == 1);
}

TEST_CASE("empty or mismatched queries are rejected") {
  VectorIndex empty;
  CHECK_THROWS_AS(empty.nn(vec2(0, 0)), std::runtime_error);
  std::vector<StateMatrix> records = {make_states({{1, 0}}, 0)};
  auto index = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kExact);
  Eigen::VectorXf bad(3);
  bad << 1, 2, 3;
  CHECK_THROWS_AS(index.nn(bad), std::runtime_error);

  auto wide = make_states({{1, 0, 0}}, 1);
  std::vector<StateMatrix> mixed = {records[0], wide};
  CHECK_THROWS_AS(VectorIndex::build(mixed, IndexGranularity::kToken, IndexMode::kExact),
                  std::runtime_error);
}

TEST_CASE("exact mode equals brute force and approximate bounds it from above") {
  Rng rng(123);
  const int d = 16;
  std::vector<StateMatrix> records;
  for (int s = 0; s < 250; ++s) {
    StateMatrix m;
    m.sentence_id = s;
    m.rows.resize(4, d);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < d; ++c) m.rows(r, c) = static_cast<float>(rng.normal());
    records.push_back(std::move(m));
  }
  IndexParams params;
  params.tree_count = 16;
  params.leaf_size = 32;
  params.seed = 5;
  auto exact = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kExact);
  auto approx = VectorIndex::build(records, IndexGranularity::kToken, IndexMode::kApprox, params);
  CHECK(exact.size() == 1000);

  int recall = 0;
  const int queries = 1000;
  for (int q = 0; q < queries; ++q) {
    Eigen::VectorXf query(d);
    for (int c = 0; c < d; ++c) query(c) = static_cast<float>(rng.normal());
    auto oracle = brute_force(records, query, IndexGranularity::kToken);
    auto ex = exact.nn(query);
    CHECK(ex.distance == oracle.distance);
    CHECK(ex.sentence_id == oracle.sentence_id);
    CHECK(ex.position == oracle.position);
    auto ap = approx.nn(query);
    CHECK(ap.distance >= ex.distance);
    if (ap.distance == ex.distance) ++recall;
  }
  CHECK(recall >= static_cast<int>(0.9 * queries));
}

TEST_CASE("index round-trips through serialization bit-exactly") {
  Rng rng(9);
  std::vector<StateMatrix> records;
  for (int s = 0; s < 40; ++s) {
    StateMatrix m;
    m.sentence_id = s;
    m.rows.resize(3, 8);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 8; ++c) m.rows(r, c) = static_cast<float>(rng.normal());
    records.push_back(std::move(m));
  }
  IndexParams params;
  params.tree_count = 4;
  params.leaf_size = 8;
  params.seed = 2;
  for (auto mode : {IndexMode::kExact, IndexMode::kApprox}) {
    auto index = VectorIndex::build(records, IndexGranularity::kToken, mode, params);
    auto path = (std::filesystem::temp_directory_path() / "seqconf_index.bin").string();
    index.save(path);
    auto loaded = VectorIndex::load(path);
    CHECK(loaded.mode() == index.mode());
    CHECK(loaded.granularity() == index.granularity());
    CHECK(loaded.size() == index.size());
    for (int q = 0; q < 50; ++q) {
      Eigen::VectorXf query(8);
      for (int c = 0; c < 8; ++c) query(c) = static_cast<float>(rng.normal());
      auto a = index.nn(query);
      auto b = loaded.nn(query);
      CHECK(a.distance == b.distance);
      CHECK(a.sentence_id == b.sentence_id);
      CHECK(a.position == b.position);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("sentence_distance worked examples") {
  std::vector<StateMatrix> train = {make_states({{0, 0}}, 0), make_states({{10, 0}}, 1)};
  auto index = VectorIndex::build(train, IndexGranularity::kSentenceAvg, IndexMode::kExact);

  // test sentence identical to a training sentence
  auto same = sentence_distance(index, make_states({{0, 0}}, 7));
  REQUIRE(same.size() == 1);
  CHECK(same.scores[0] == 0.0);
  CHECK(same.level == ScoreLevel::kSegment);
  CHECK(same.polarity == Polarity::kDistance);
  CHECK(same.sentence_id == 7);

  // averages {(0,0),(10,0)}, test average (1,0)
  auto near = sentence_distance(index, make_states({{1, 0}}, 8));
  CHECK(near.scores[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(
      sentence_distance(VectorIndex::build(train, IndexGranularity::kToken, IndexMode::kExact),
                        make_states({{0, 0}}, 0)),
      std::runtime_error);
}

TEST_CASE("token_distance worked examples and oracle") {
  std::vector<StateMatrix> train = {make_states({{0, 0}, {3, 4}}, 0)};
  auto index = VectorIndex::build(train, IndexGranularity::kToken, IndexMode::kExact);

  // all test rows present in training -> all zeros
  auto zeros = token_distance(index, make_states({{3, 4}, {0, 0}}, 3));
  REQUIRE(zeros.size() == 2);
  CHECK(zeros.scores[0] == 0.0);
  CHECK(zeros.scores[1] == 0.0);
  CHECK(zeros.level == ScoreLevel::kSubword);

  // 1-row test equals nn_distance
  auto one = token_distance(index, make_states({{0, -5}}, 4));
  REQUIRE(one.size() == 1);
  CHECK(one.scores[0] == index.nn(vec2(0, -5)).distance);

  // scores are invariant under reordering of index contents
  std::vector<StateMatrix> shuffled = {make_states({{3, 4}}, 5), make_states({{0, 0}}, 6)};
  auto index2 = VectorIndex::build(shuffled, IndexGranularity::kToken, IndexMode::kExact);
  auto probe = make_states({{1, 1}, {2, 3}}, 0);
  CHECK(token_distance(index, probe).scores == token_distance(index2, probe).scores);
}
