// seqconf/corpus.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Synthetic parallel corpora with a controllable in-domain / out-of-domain
// vocabulary split, plus the deterministic subword segmentation layer and
// the subword-to-word position mapping used by all downstream scoring.

#ifndef SEQCONF_CORPUS_HPP_
#define SEQCONF_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqconf/common.hpp"

namespace seqconf {

struct WordSequence {
  std::vector<std::string> words;
  int sentence_id = 0;
};

// Subword view of a WordSequence. Non-final units of a word carry a trailing
// "@@" so the segmentation is recoverable from surface forms alone.
struct SubwordSequence {
  std::vector<std::string> units;  // surface forms, "@@"-marked
  std::vector<char> continuation;  // 1 = unit continues into the next one
  std::vector<int> word_map;       // unit index -> parent word index
  int sentence_id = 0;

  int size() const { return static_cast<int>(units.size()); }
  int word_count() const { return word_map.empty() ? 0 : word_map.back() + 1; }
};

enum class Task { kCopy, kReverse, kSubstitution };

Task parse_task(const std::string& name);
std::string task_name(Task task);

enum class Split { kTrain, kDev, kTestId, kTestOod };
constexpr std::array<Split, 4> kAllSplits = {Split::kTrain, Split::kDev, Split::kTestId,
                                             Split::kTestOod};
std::string split_name(Split split);
Split parse_split(const std::string& name);

struct CorpusSpec {
  Task task = Task::kSubstitution;
  int vocab_size = 50;
  int len_min = 3;
  int len_max = 9;
  double noise_rate = 1.0;  // fraction of OOD-split sentences carrying held-out tokens
  std::uint64_t seed = 1;
  int train_size = 3000;
  int dev_size = 500;
  int test_id_size = 600;
  int test_ood_size = 600;
  int alphabet_size = 10;  // last two characters are reserved for the OOD stratum
  int bigram_count = 40;   // size of the multi-character segmentation table

  int split_size(Split s) const;
};

struct ParallelSentence {
  WordSequence source;
  WordSequence target;
  bool has_ood = false;  // any source word from the held-out stratum
};

struct Corpus {
  CorpusSpec spec;
  std::vector<std::string> vocab_in;
  std::vector<std::string> vocab_ood;
  // Word-level translation table; identity except for the substitution task.
  std::unordered_map<std::string, std::string> substitution;
  std::vector<std::string> segmentation_table;  // multi-char units, no "@@"
  std::array<std::vector<ParallelSentence>, 4> splits;

  const std::vector<ParallelSentence>& split(Split s) const {
    return splits[static_cast<int>(s)];
  }
  std::vector<ParallelSentence>& split(Split s) { return splits[static_cast<int>(s)]; }
  bool is_ood_word(const std::string& w) const;
};

// Deterministic for a fixed spec; rejects specs whose vocabulary is too small
// to reserve a held-out OOD stratum.
Corpus generate_corpus(const CorpusSpec& spec);

void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Greedy longest-match segmentation over a fixed table; single characters act
// as an implicit fallback so every word is coverable.
class Segmenter {
 public:
  explicit Segmenter(std::vector<std::string> table);

  std::vector<std::string> segment_word(const std::string& word) const;  // pieces, no "@@"
  SubwordSequence segment(const WordSequence& s) const;

  const std::vector<std::string>& table() const { return table_; }

 private:
  std::vector<std::string> table_;  // sorted by (length desc, lex) for greedy match
  std::unordered_set<std::string> lookup_;
  int max_len_ = 1;
};

// Exact inverse of segment(); errors on a dangling continuation flag.
WordSequence desegment(const SubwordSequence& t);

// Rebuilds a SubwordSequence from surface units alone ("@@" marks
// continuation). strict=false closes a dangling final word instead of
// erroring, for model output that stopped mid-word.
SubwordSequence subwords_from_surface(const std::vector<std::string>& units, int sentence_id,
                                      bool strict = true);

// Shared subword inventory for the model: <unk>, <bos>, <eos>, then every
// base unit (single characters plus table entries) in both plain and "@@"
// surface form, in a fixed deterministic order.
class Vocab {
 public:
  Vocab() = default;
  static Vocab build(int alphabet_size, const std::vector<std::string>& table);

  int unk() const { return 0; }
  int bos() const { return 1; }
  int eos() const { return 2; }
  int size() const { return static_cast<int>(id_to_unit_.size()); }

  int id(const std::string& unit) const;  // unk() for OOV
  const std::string& unit(int id) const;

  std::vector<int> encode(const SubwordSequence& s) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& units() const { return id_to_unit_; }
  static Vocab from_units(std::vector<std::string> units);  // checkpoint restore

 private:
  std::vector<std::string> id_to_unit_;
  std::unordered_map<std::string, int> unit_to_id_;
};

// Position of the target word that the synthetic task derives from source
// word i (0-based): identity for copy/substitution, reversal for reverse.
int gold_target_word(Task task, int source_word, int word_count);

// Per-source-subword gold target subword for copy/reverse, where both sides
// share word segmentations. Not defined for substitution (piece counts of a
// word and its substitute differ); callers use word-level links there.
std::vector<int> gold_subword_alignment(Task task, const SubwordSequence& src,
                                        const SubwordSequence& tgt);

}  // namespace seqconf

#endif  // SEQCONF_CORPUS_HPP_
