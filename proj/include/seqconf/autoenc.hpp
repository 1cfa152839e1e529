// seqconf/autoenc.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// State autoencoders: bottlenecked reconstruction of individual hidden
// states, reconstruction distance as a confidence score, and posteriors
// recomputed from reconstructed states (decoder-side row substitution, or a
// decoder re-run over reconstructed encoder states).

#ifndef SEQCONF_AUTOENC_HPP_
#define SEQCONF_AUTOENC_HPP_

#include <functional>
#include <string>
#include <vector>

#include "seqconf/hsd.hpp"
#include "seqconf/model.hpp"
#include "seqconf/shallow_net.hpp"
#include "seqconf/types.hpp"

namespace seqconf {

inline NetTag side_tag(StateSide side) {
  return side == StateSide::kEncoder ? NetTag::kEncoderStates : NetTag::kDecoderStates;
}

// Trains a bottleneck autoencoder on individual state rows (never sentence
// averages). Deterministic per config seed; epoch losses returned alongside.
template <typename S>
ShallowTrainResult<S> train_autoencoder(const std::vector<StateMatrix>& records,
                                        int bottleneck, const ShallowTrainConfig& cfg) {
  require(bottleneck >= 1, "bottleneck must be >= 1");
  StackedStates stacked = stack_states(records);
  Mat<S> data = stacked.rows.cast<S>();
  ShallowTrainResult<S> result;
  result.net = init_shallow_net<S>(static_cast<int>(data.cols()), bottleneck,
                                   static_cast<int>(data.cols()),
                                   side_tag(records[0].side), cfg.seed);
  Rng order_rng(cfg.seed, "autoenc/batches");
  result.epoch_losses = train_shallow(result.net, data, data, cfg, order_rng);
  return result;
}

// Auto(v): the autoencoder reconstruction of one state vector.
template <typename S>
Vec<S> reconstruct(const ShallowNet<S>& net, const Vec<S>& v) {
  require(net.output_width() == net.input_width(), "not an autoencoder (widths differ)");
  return shallow_forward(net, v);
}

// Per-position L2 between each row and its reconstruction. Encoder states
// yield source-token confidence, decoder states target-token confidence.
template <typename S>
ScoreSequence recon_distance(const ShallowNet<S>& net, const StateMatrix& states) {
  require(net.tag == side_tag(states.side),
          "autoencoder was trained on " + net_tag_name(net.tag) +
              " but the input matrix holds " +
              (states.side == StateSide::kEncoder ? "encoder" : "decoder") + " states");
  require(states.width() == net.input_width(), "state width does not match autoencoder");
  Mat<S> x = states.rows.cast<S>();
  Mat<S> recon = shallow_forward_rows(net, x);
  ScoreSequence out;
  out.scores.reserve(states.length());
  for (int r = 0; r < states.length(); ++r)
    out.scores.push_back(
        (recon.row(r) - x.row(r)).template cast<double>().norm());
  out.polarity = Polarity::kDistance;
  out.side = states.side == StateSide::kEncoder ? TextSide::kSource : TextSide::kTarget;
  out.level = ScoreLevel::kSubword;
  out.method = states.side == StateSide::kEncoder ? "enc-auto" : "dec-auto";
  out.sentence_id = states.sentence_id;
  return out;
}

// Posteriors with each teacher-forced decoder state replaced by
// transform(states) before the output projection. The identity transform
// reproduces the plain posteriors bit-exactly.
template <typename S>
ScoreSequence combined_posterior_dec_with(const ModelParams<S>& model, const Mat<S>& E,
                                          const std::vector<int>& tgt_ids, int sentence_id,
                                          const std::function<Mat<S>(const Mat<S>&)>& transform) {
  ForcedDecode<S> fd = decode_forced(model, E, tgt_ids);
  Mat<S> substituted = transform(fd.states);
  require(substituted.rows() == fd.states.rows() && substituted.cols() == fd.states.cols(),
          "state transform changed the matrix shape");
  Mat<S> softmax;
  std::vector<double> probs;
  posteriors_from_states(model, substituted, tgt_ids, softmax, probs);
  ScoreSequence out;
  out.scores = probs;
  out.polarity = Polarity::kProbability;
  out.side = TextSide::kTarget;
  out.level = ScoreLevel::kSubword;
  out.method = "dec-auto+prob";
  out.sentence_id = sentence_id;
  return out;
}

template <typename S>
ScoreSequence combined_posterior_dec(const ModelParams<S>& model, const ShallowNet<S>& ae,
                                     const Mat<S>& E, const std::vector<int>& tgt_ids,
                                     int sentence_id) {
  require(ae.tag == NetTag::kDecoderStates,
          "combined decoder posterior needs a decoder-state autoencoder");
  require(ae.input_width() == model.config.d, "autoencoder width does not match the model");
  return combined_posterior_dec_with<S>(
      model, E, tgt_ids, sentence_id,
      [&ae](const Mat<S>& states) { return shallow_forward_rows(ae, states); });
}

// Encoder-side combination: reconstruct E row-wise, re-run the teacher-forced
// decoder on the reconstruction, read posteriors. Target-token confidence
// only; there is no source-side score in this method.
template <typename S>
ScoreSequence combined_posterior_enc_with(const ModelParams<S>& model,
                                          const std::vector<int>& src_ids,
                                          const std::vector<int>& tgt_ids, int sentence_id,
                                          const std::function<Mat<S>(const Mat<S>&)>& transform) {
  Mat<S> E = encode(model, src_ids);
  Mat<S> substituted = transform(E);
  require(substituted.rows() == E.rows() && substituted.cols() == E.cols(),
          "state transform changed the matrix shape");
  ForcedDecode<S> fd = decode_forced(model, substituted, tgt_ids);
  ScoreSequence out;
  out.scores = fd.probs;
  out.polarity = Polarity::kProbability;
  out.side = TextSide::kTarget;
  out.level = ScoreLevel::kSubword;
  out.method = "enc-auto+prob";
  out.sentence_id = sentence_id;
  return out;
}

template <typename S>
ScoreSequence combined_posterior_enc(const ModelParams<S>& model, const ShallowNet<S>& ae,
                                     const std::vector<int>& src_ids,
                                     const std::vector<int>& tgt_ids, int sentence_id) {
  require(ae.tag == NetTag::kEncoderStates,
          "combined encoder posterior needs an encoder-state autoencoder");
  require(ae.input_width() == model.config.d, "autoencoder width does not match the model");
  return combined_posterior_enc_with<S>(
      model, src_ids, tgt_ids, sentence_id,
      [&ae](const Mat<S>& states) { return shallow_forward_rows(ae, states); });
}

}  // namespace seqconf

#endif  // SEQCONF_AUTOENC_HPP_
