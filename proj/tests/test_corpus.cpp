// tests/test_corpus.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqconf/corpus.hpp"

using namespace seqconf;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CorpusSpec small_spec(Task task) {
  CorpusSpec spec;
  spec.task = task;
  spec.vocab_size = 30;
  spec.len_min = 2;
  spec.len_max = 6;
  spec.seed = 7;
  spec.train_size = 50;
  spec.dev_size = 10;
  spec.test_id_size = 10;
  spec.test_ood_size = 20;
  spec.bigram_count = 20;
  return spec;
}

}  // namespace

TEST_CASE("copy and reverse transforms") {
  auto copy = generate_corpus(small_spec(Task::kCopy));
  for (Split s : kAllSplits)
    for (const auto& pair : copy.split(s)) CHECK(pair.target.words == pair.source.words);

  auto rev = generate_corpus(small_spec(Task::kReverse));
  for (const auto& pair : rev.split(Split::kTrain)) {
    std::vector<std::string> expected(pair.source.words.rbegin(), pair.source.words.rend());
    CHECK(pair.target.words == expected);
  }
}

TEST_CASE("substitution applies the word table everywhere") {
  auto corpus = generate_corpus(small_spec(Task::kSubstitution));
  for (Split s : kAllSplits) {
    for (const auto& pair : corpus.split(s)) {
      REQUIRE(pair.target.words.size() == pair.source.words.size());
      for (std::size_t i = 0; i < pair.source.words.size(); ++i)
        CHECK(pair.target.words[i] == corpus.substitution.at(pair.source.words[i]));
    }
  }
}

TEST_CASE("same spec and seed give byte-identical corpus files") {
  auto spec = small_spec(Task::kSubstitution);
  auto dir1 = std::filesystem::temp_directory_path() / "seqconf_corpus_a";
  auto dir2 = std::filesystem::temp_directory_path() / "seqconf_corpus_b";
  save_corpus(generate_corpus(spec), dir1.string());
  save_corpus(generate_corpus(spec), dir2.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir1)) {
    auto name = entry.path().filename().string();
    CHECK(slurp(entry.path().string()) == slurp((dir2 / name).string()));
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("corpus round-trips through its on-disk form") {
  auto corpus = generate_corpus(small_spec(Task::kSubstitution));
  auto dir = std::filesystem::temp_directory_path() / "seqconf_corpus_rt";
  save_corpus(corpus, dir.string());
  auto loaded = load_corpus(dir.string());
  REQUIRE(loaded.vocab_in == corpus.vocab_in);
  REQUIRE(loaded.vocab_ood == corpus.vocab_ood);
  REQUIRE(loaded.segmentation_table == corpus.segmentation_table);
  for (Split s : kAllSplits) {
    REQUIRE(loaded.split(s).size() == corpus.split(s).size());
    for (std::size_t i = 0; i < corpus.split(s).size(); ++i) {
      CHECK(loaded.split(s)[i].source.words == corpus.split(s)[i].source.words);
      CHECK(loaded.split(s)[i].target.words == corpus.split(s)[i].target.words);
      CHECK(loaded.split(s)[i].has_ood == corpus.split(s)[i].has_ood);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("OOD split carries held-out tokens at the requested rate") {
  auto spec = small_spec(Task::kCopy);
  spec.noise_rate = 0.5;
  auto corpus = generate_corpus(spec);

  std::unordered_set<std::string> train_words;
  for (const auto& pair : corpus.split(Split::kTrain))
    for (const auto& w : pair.source.words) train_words.insert(w);
  for (const auto& w : corpus.vocab_ood) CHECK(train_words.count(w) == 0);

  int with_unseen = 0;
  for (const auto& pair : corpus.split(Split::kTestOod)) {
    bool unseen = false;
    for (const auto& w : pair.source.words)
      if (!train_words.count(w)) unseen = true;
    if (unseen) ++with_unseen;
    CHECK(unseen == pair.has_ood);
  }
  CHECK(with_unseen >=
        static_cast<int>(spec.noise_rate * corpus.split(Split::kTestOod).size()));
}

TEST_CASE("vocab too small for an OOD stratum is rejected") {
  auto spec = small_spec(Task::kCopy);
  spec.vocab_size = 2;
  CHECK_THROWS_WITH_AS(generate_corpus(spec),
                       doctest::Contains("OOD stratum"), std::runtime_error);
}

TEST_CASE("segmentation matches the worked two-piece example") {
  Segmenter seg({"ab", "c"});  // "c" is shorter than 2 chars; only "ab" really matters
  WordSequence s{{"abc"}, 0};
  auto sub = Segmenter({"ab"}).segment(s);
  REQUIRE(sub.units == std::vector<std::string>{"ab@@", "c"});
  REQUIRE(sub.word_map == std::vector<int>{0, 0});
  REQUIRE(sub.continuation == std::vector<char>{1, 0});

  auto single = Segmenter({"ab"}).segment(WordSequence{{"a"}, 1});
  CHECK(single.units == std::vector<std::string>{"a"});
  CHECK(single.word_map == std::vector<int>{0});
}

TEST_CASE("desegment inverts the worked examples") {
  SubwordSequence t;
  t.units = {"ab@@", "c"};
  t.continuation = {1, 0};
  t.word_map = {0, 0};
  CHECK(desegment(t).words == std::vector<std::string>{"abc"});

  SubwordSequence one;
  one.units = {"a"};
  one.continuation = {0};
  one.word_map = {0};
  CHECK(desegment(one).words == std::vector<std::string>{"a"});
}

TEST_CASE("dangling continuation flag is rejected") {
  SubwordSequence t;
  t.units = {"ab@@"};
  t.continuation = {1};
  t.word_map = {0};
  CHECK_THROWS_AS(desegment(t), std::runtime_error);
  CHECK_THROWS_AS(subwords_from_surface({"ab@@"}, 0, /*strict=*/true), std::runtime_error);
  auto lenient = subwords_from_surface({"ab@@"}, 0, /*strict=*/false);
  CHECK(desegment(lenient).words == std::vector<std::string>{"ab"});
}

TEST_CASE("segment/desegment round-trip over 1000 random sentences") {
  auto spec = small_spec(Task::kCopy);
  spec.train_size = 1000;
  auto corpus = generate_corpus(spec);
  Segmenter seg(corpus.segmentation_table);
  for (const auto& pair : corpus.split(Split::kTrain)) {
    auto sub = seg.segment(pair.source);
    // word_map non-decreasing and surjective
    for (std::size_t i = 1; i < sub.word_map.size(); ++i) {
      CHECK(sub.word_map[i] >= sub.word_map[i - 1]);
      CHECK(sub.word_map[i] - sub.word_map[i - 1] <= 1);
    }
    CHECK(sub.word_count() == static_cast<int>(pair.source.words.size()));
    auto back = desegment(sub);
    REQUIRE(back.words == pair.source.words);
    // surface forms alone also recover the structure
    auto resurfaced = subwords_from_surface(sub.units, sub.sentence_id);
    REQUIRE(resurfaced.word_map == sub.word_map);
    REQUIRE(desegment(resurfaced).words == pair.source.words);
  }
}

TEST_CASE("vocab encodes known units and maps OOV to <unk>") {
  auto corpus = generate_corpus(small_spec(Task::kCopy));
  Vocab vocab = Vocab::build(corpus.spec.alphabet_size, corpus.segmentation_table);
  Segmenter seg(corpus.segmentation_table);
  auto sub = seg.segment(corpus.split(Split::kTrain)[0].source);
  auto ids = vocab.encode(sub);
  REQUIRE(ids.size() == sub.units.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CHECK(ids[i] != vocab.unk());
    CHECK(vocab.unit(ids[i]) == sub.units[i]);
  }
  CHECK(vocab.id("zz-not-a-unit") == vocab.unk());

  Vocab rebuilt = Vocab::from_units(vocab.units());
  CHECK(rebuilt.size() == vocab.size());
  CHECK(rebuilt.id(sub.units[0]) == vocab.id(sub.units[0]));
}

TEST_CASE("gold word and subword correspondences") {
  CHECK(gold_target_word(Task::kCopy, 2, 5) == 2);
  CHECK(gold_target_word(Task::kReverse, 0, 5) == 4);
  CHECK(gold_target_word(Task::kSubstitution, 3, 5) == 3);

  auto corpus = generate_corpus(small_spec(Task::kReverse));
  Segmenter seg(corpus.segmentation_table);
  const auto& pair = corpus.split(Split::kTrain)[0];
  auto src = seg.segment(pair.source);
  auto tgt = seg.segment(pair.target);
  auto gold = gold_subword_alignment(Task::kReverse, src, tgt);
  REQUIRE(static_cast<int>(gold.size()) == src.size());
  for (int u = 0; u < src.size(); ++u) {
    // aligned units carry the same surface content (modulo the "@@" marker)
    auto strip = [](std::string x) {
      if (x.size() > 2 && x.compare(x.size() - 2, 2, "@@") == 0) x.resize(x.size() - 2);
      return x;
    };
    CHECK(strip(src.units[u]) == strip(tgt.units[gold[u]]));
    CHECK(gold_target_word(Task::kReverse, src.word_map[u], src.word_count()) ==
          tgt.word_map[gold[u]]);
  }
}
