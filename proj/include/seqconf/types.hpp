// seqconf/types.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Shared value types: hidden-state matrices and confidence score sequences.

#ifndef SEQCONF_TYPES_HPP_
#define SEQCONF_TYPES_HPP_

#include <string>
#include <vector>

#include "seqconf/common.hpp"

namespace seqconf {

enum class StateSide { kEncoder, kDecoder };

std::string state_side_name(StateSide side);
StateSide parse_state_side(const std::string& name);

// Per-sentence sequence of hidden vectors, one row per subword position.
// States are persisted as float32, so this type is fixed to float; model
// scalars are cast on extraction.
struct StateMatrix {
  StateSide side = StateSide::kEncoder;
  int sentence_id = 0;
  Eigen::MatrixXf rows;  // L×d

  int length() const { return static_cast<int>(rows.rows()); }
  int width() const { return static_cast<int>(rows.cols()); }
};

// Whether a low value (probability) or a high value (distance) signals low
// confidence; every aggregation and ranking consults this.
enum class Polarity { kDistance, kProbability };

std::string polarity_name(Polarity p);
Polarity parse_polarity(const std::string& name);

enum class TextSide { kSource, kTarget };

enum class ScoreLevel { kSubword, kWord, kSegment };

// Worst-confidence sentinels for unaligned positions under score projection.
constexpr double kWorstDistance = 1e30;
constexpr double kWorstProbability = 0.0;

struct ScoreSequence {
  std::vector<double> scores;
  Polarity polarity = Polarity::kDistance;
  TextSide side = TextSide::kSource;
  ScoreLevel level = ScoreLevel::kSubword;
  std::string method;
  int sentence_id = 0;
  // Positions that received the worst-confidence sentinel because no
  // alignment link reached them; empty when not applicable.
  std::vector<char> unlinked;

  int size() const { return static_cast<int>(scores.size()); }
};

// True when `a` expresses strictly worse confidence than `b` under the
// polarity (higher distance, or lower probability).
inline bool worse_confidence(double a, double b, Polarity polarity) {
  return polarity == Polarity::kDistance ? a > b : a < b;
}

inline double worst_confidence_sentinel(Polarity polarity) {
  return polarity == Polarity::kDistance ? kWorstDistance : kWorstProbability;
}

}  // namespace seqconf

#endif  // SEQCONF_TYPES_HPP_
