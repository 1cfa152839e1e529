// seqconf/statestore.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "seqconf/statestore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace seqconf {

std::string index_mode_name(IndexMode m) {
  return m == IndexMode::kExact ? "exact" : "approx";
}

IndexMode parse_index_mode(const std::string& name) {
  if (name == "exact") return IndexMode::kExact;
  if (name == "approx" || name == "approximate") return IndexMode::kApprox;
  throw std::runtime_error("unknown index mode: " + name);
}

std::string index_granularity_name(IndexGranularity g) {
  return g == IndexGranularity::kToken ? "token" : "sentence";
}

IndexGranularity parse_index_granularity(const std::string& name) {
  if (name == "token") return IndexGranularity::kToken;
  if (name == "sentence" || name == "sentence-average") return IndexGranularity::kSentenceAvg;
  throw std::runtime_error("unknown index granularity: " + name);
}

VectorIndex VectorIndex::build(const std::vector<StateMatrix>& records,
                               IndexGranularity granularity, IndexMode mode,
                               const IndexParams& params) {
  require(!records.empty(), "cannot build an index over zero records");
  int d = records[0].width();
  long count = 0;
  for (const auto& rec : records) {
    require(rec.width() == d, "state dimension mismatch across records");
    count += granularity == IndexGranularity::kToken ? rec.length() : 1;
  }

  VectorIndex index;
  index.mode_ = mode;
  index.granularity_ = granularity;
  index.vectors_.resize(count, d);
  index.payloads_.reserve(count);
  long at = 0;
  for (const auto& rec : records) {
    if (granularity == IndexGranularity::kToken) {
      for (int r = 0; r < rec.length(); ++r) {
        index.vectors_.row(at++) = rec.rows.row(r);
        index.payloads_.emplace_back(rec.sentence_id, r);
      }
    } else {
      index.vectors_.row(at++) = rec.rows.colwise().mean();
      index.payloads_.emplace_back(rec.sentence_id, 0);
    }
  }

  if (mode == IndexMode::kApprox) {
    require(params.tree_count >= 1 && params.leaf_size >= 1, "invalid index parameters");
    index.forest_.resize(params.tree_count);
    std::vector<int> all(count);
    for (long i = 0; i < count; ++i) all[i] = static_cast<int>(i);
    for (int t = 0; t < params.tree_count; ++t) {
      Rng rng(params.seed, "index/tree/" + std::to_string(t));
      index.build_node(index.forest_[t], all, rng, params.leaf_size);
    }
  }
  return index;
}

int VectorIndex::build_node(Tree& tree, std::vector<int> items, Rng& rng, int leaf_size) {
  int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (static_cast<int>(items.size()) <= leaf_size) {
    tree.nodes[id].items = std::move(items);
    return id;
  }
  Eigen::VectorXf normal(vectors_.cols());
  for (Eigen::Index i = 0; i < normal.size(); ++i)
    normal(i) = static_cast<float>(rng.normal());

  std::vector<std::pair<float, int>> proj;
  proj.reserve(items.size());
  for (int item : items)
    proj.emplace_back(static_cast<float>(vectors_.row(item) * normal), item);
  std::sort(proj.begin(), proj.end());
  if (proj.front().first == proj.back().first) {
    // Degenerate direction (e.g. duplicated points): keep as leaf.
    tree.nodes[id].items = std::move(items);
    return id;
  }
  std::size_t mid = proj.size() / 2;
  // Threshold sits on the first right-hand projection; queries strictly below
  // it descend left. Skip over ties so both sides stay non-empty.
  while (mid > 0 && proj[mid].first == proj[mid - 1].first) --mid;
  if (mid == 0) {
    mid = proj.size() / 2;
    while (mid + 1 < proj.size() && proj[mid].first == proj[mid - 1].first) ++mid;
  }
  float threshold = proj[mid].first;
  std::vector<int> left, right;
  left.reserve(mid);
  right.reserve(proj.size() - mid);
  for (std::size_t i = 0; i < proj.size(); ++i)
    (i < mid ? left : right).push_back(proj[i].second);

  tree.nodes[id].normal = std::move(normal);
  tree.nodes[id].threshold = threshold;
  int l = build_node(tree, std::move(left), rng, leaf_size);
  int r = build_node(tree, std::move(right), rng, leaf_size);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

const std::vector<int>& VectorIndex::tree_leaf(const Tree& tree,
                                               const Eigen::VectorXf& query) const {
  int at = 0;
  while (tree.nodes[at].left >= 0) {
    float p = query.dot(tree.nodes[at].normal);
    at = p < tree.nodes[at].threshold ? tree.nodes[at].left : tree.nodes[at].right;
  }
  return tree.nodes[at].items;
}

NnResult VectorIndex::scan(const Eigen::VectorXf& query,
                           const std::vector<int>& candidates) const {
  NnResult best;
  bool first = true;
  for (int item : candidates) {
    double d2 = (vectors_.row(item).transpose() - query).cast<double>().squaredNorm();
    const auto& [sid, pos] = payloads_[item];
    if (first || d2 < best.distance ||
        (d2 == best.distance && std::pair(sid, pos) < std::pair(best.sentence_id, best.position))) {
      best.distance = d2;
      best.sentence_id = sid;
      best.position = pos;
      first = false;
    }
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

NnResult VectorIndex::nn(const Eigen::VectorXf& query) const {
  require(size() > 0, "nearest-neighbor query on an empty index");
  require(query.size() == vectors_.cols(), "query width does not match index width");
  if (mode_ == IndexMode::kExact) {
    std::vector<int> all(size());
    for (long i = 0; i < size(); ++i) all[i] = static_cast<int>(i);
    return scan(query, all);
  }
  std::vector<char> seen(size(), 0);
  std::vector<int> candidates;
  for (const auto& tree : forest_) {
    for (int item : tree_leaf(tree, query)) {
      if (!seen[item]) {
        seen[item] = 1;
        candidates.push_back(item);
      }
    }
  }
  return scan(query, candidates);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "truncated index file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& path) {
  std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void VectorIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write index file: " + path);
  out.write("VIX1", 4);
  put_u32(out, 1);  // version
  put_u32(out, mode_ == IndexMode::kExact ? 0 : 1);
  put_u32(out, granularity_ == IndexGranularity::kToken ? 0 : 1);
  put_u32(out, static_cast<std::uint32_t>(vectors_.cols()));
  put_u32(out, static_cast<std::uint32_t>(vectors_.rows()));
  for (long r = 0; r < size(); ++r)
    for (int c = 0; c < dim(); ++c) put_f32(out, vectors_(r, c));
  for (const auto& [sid, pos] : payloads_) {
    put_u32(out, static_cast<std::uint32_t>(sid));
    put_u32(out, static_cast<std::uint32_t>(pos));
  }
  put_u32(out, static_cast<std::uint32_t>(forest_.size()));
  for (const auto& tree : forest_) {
    put_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      put_u32(out, static_cast<std::uint32_t>(node.left + 1));
      put_u32(out, static_cast<std::uint32_t>(node.right + 1));
      if (node.left >= 0) {
        for (int c = 0; c < dim(); ++c) put_f32(out, node.normal(c));
        put_f32(out, node.threshold);
      } else {
        put_u32(out, static_cast<std::uint32_t>(node.items.size()));
        for (int item : node.items) put_u32(out, static_cast<std::uint32_t>(item));
      }
    }
  }
  require(out.good(), "write failed: " + path);
}

VectorIndex VectorIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read index file: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "VIX1", 4) == 0, "not an index file: " + path);
  require(get_u32(in, path) == 1, "unsupported index version: " + path);
  VectorIndex index;
  index.mode_ = get_u32(in, path) == 0 ? IndexMode::kExact : IndexMode::kApprox;
  index.granularity_ =
      get_u32(in, path) == 0 ? IndexGranularity::kToken : IndexGranularity::kSentenceAvg;
  int d = static_cast<int>(get_u32(in, path));
  long count = static_cast<long>(get_u32(in, path));
  index.vectors_.resize(count, d);
  for (long r = 0; r < count; ++r)
    for (int c = 0; c < d; ++c) index.vectors_(r, c) = get_f32(in, path);
  index.payloads_.reserve(count);
  for (long r = 0; r < count; ++r) {
    int sid = static_cast<int>(get_u32(in, path));
    int pos = static_cast<int>(get_u32(in, path));
    index.payloads_.emplace_back(sid, pos);
  }
  index.forest_.resize(get_u32(in, path));
  for (auto& tree : index.forest_) {
    tree.nodes.resize(get_u32(in, path));
    for (auto& node : tree.nodes) {
      node.left = static_cast<int>(get_u32(in, path)) - 1;
      node.right = static_cast<int>(get_u32(in, path)) - 1;
      if (node.left >= 0) {
        node.normal.resize(d);
        for (int c = 0; c < d; ++c) node.normal(c) = get_f32(in, path);
        node.threshold = get_f32(in, path);
      } else {
        node.items.resize(get_u32(in, path));
        for (auto& item : node.items) item = static_cast<int>(get_u32(in, path));
      }
    }
  }
  return index;
}

}  // namespace seqconf
