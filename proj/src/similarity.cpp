// seqconf/similarity.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "seqconf/similarity.hpp"

namespace seqconf {

ScoreSequence sentence_distance(const VectorIndex& index, const StateMatrix& test_states) {
  require(index.granularity() == IndexGranularity::kSentenceAvg,
          "sentence_distance needs a sentence-average index");
  require(test_states.length() >= 1, "empty state matrix");
  Eigen::VectorXf query = test_states.rows.colwise().mean();
  ScoreSequence out;
  out.scores = {index.nn(query).distance};
  out.polarity = Polarity::kDistance;
  out.side = TextSide::kSource;
  out.level = ScoreLevel::kSegment;
  out.method = "enc-sent-dist";
  out.sentence_id = test_states.sentence_id;
  return out;
}

ScoreSequence token_distance(const VectorIndex& index, const StateMatrix& test_states) {
  require(index.granularity() == IndexGranularity::kToken,
          "token_distance needs a token-granularity index");
  require(test_states.length() >= 1, "empty state matrix");
  ScoreSequence out;
  out.scores.reserve(test_states.length());
  for (int r = 0; r < test_states.length(); ++r)
    out.scores.push_back(index.nn(test_states.rows.row(r).transpose()).distance);
  out.polarity = Polarity::kDistance;
  out.side = TextSide::kSource;
  out.level = ScoreLevel::kSubword;
  out.method = "enc-dist";
  out.sentence_id = test_states.sentence_id;
  return out;
}

}  // namespace seqconf
