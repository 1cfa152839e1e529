// seqconf/statestore.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Vector index over stored hidden states: exact linear scan, or a forest of
// random-hyperplane partition trees whose candidate union makes the reported
// distance an upper bound of the true minimum (never below it).

#ifndef SEQCONF_STATESTORE_HPP_
#define SEQCONF_STATESTORE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "seqconf/types.hpp"

namespace seqconf {

enum class IndexMode { kExact, kApprox };
enum class IndexGranularity { kToken, kSentenceAvg };

std::string index_mode_name(IndexMode m);
IndexMode parse_index_mode(const std::string& name);
std::string index_granularity_name(IndexGranularity g);
IndexGranularity parse_index_granularity(const std::string& name);

struct IndexParams {
  int tree_count = 16;
  int leaf_size = 32;
  std::uint64_t seed = 1;
};

struct NnResult {
  double distance = 0;  // plain (non-squared) Euclidean L2
  int sentence_id = 0;
  int position = 0;
};

class VectorIndex {
 public:
  VectorIndex() = default;

  // Token granularity stores every row; sentence-average granularity stores
  // one mean vector per record. Approximate mode additionally grows the tree
  // forest; params are ignored for exact mode.
  static VectorIndex build(const std::vector<StateMatrix>& records,
                           IndexGranularity granularity, IndexMode mode,
                           const IndexParams& params = {});

  // Nearest stored vector; ties break toward the lowest (sentence_id,
  // position). Exact mode returns the true minimum; approximate mode scans
  // only the candidate union of its trees.
  NnResult nn(const Eigen::VectorXf& query) const;

  void save(const std::string& path) const;
  static VectorIndex load(const std::string& path);

  IndexMode mode() const { return mode_; }
  IndexGranularity granularity() const { return granularity_; }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  long size() const { return static_cast<long>(vectors_.rows()); }

 private:
  struct Node {
    int left = -1;  // < 0 marks a leaf
    int right = -1;
    Eigen::VectorXf normal;
    float threshold = 0;
    std::vector<int> items;  // leaf payload
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  int build_node(Tree& tree, std::vector<int> items, Rng& rng, int leaf_size);
  const std::vector<int>& tree_leaf(const Tree& tree, const Eigen::VectorXf& query) const;
  NnResult scan(const Eigen::VectorXf& query, const std::vector<int>& candidates) const;

  IndexMode mode_ = IndexMode::kExact;
  IndexGranularity granularity_ = IndexGranularity::kToken;
  Eigen::MatrixXf vectors_;                      // N×d
  std::vector<std::pair<int, int>> payloads_;    // (sentence_id, position)
  std::vector<Tree> forest_;
};

}  // namespace seqconf

#endif  // SEQCONF_STATESTORE_HPP_
