// tests/test_model.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "seqconf/corpus.hpp"
#include "seqconf/hsd.hpp"
#include "seqconf/model.hpp"
#include "seqconf/model_io.hpp"

using namespace seqconf;

namespace {

ModelConfig micro_config(int vocab) {
  ModelConfig cfg;
  cfg.vocab = vocab;
  cfg.d = 16;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 2;
  cfg.d_ff = 24;
  cfg.max_len = 32;
  return cfg;
}

std::vector<int> random_ids(Rng& rng, int vocab, int len) {
  std::vector<int> ids;
  for (int i = 0; i < len; ++i) ids.push_back(rng.uniform_int(3, vocab - 1));
  return ids;
}

bool params_equal(ModelParams<float>& a, ModelParams<float>& b) {
  std::vector<TensorView<float>> va, vb;
  collect_tensors(a, va);
  collect_tensors(b, vb);
  if (va.size() != vb.size()) return false;
  for (std::size_t t = 0; t < va.size(); ++t) {
    if (va[t].size != vb[t].size) return false;
    for (std::ptrdiff_t i = 0; i < va[t].size; ++i)
      if (va[t].data[i] != vb[t].data[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encoder shape and purity") {
  auto params = init_model<double>(micro_config(12), 5);
  std::vector<int> ids = {3, 4, 5};
  auto E = encode(params, ids);
  CHECK(E.rows() == 3);
  CHECK(E.cols() == 16);
  CHECK((encode(params, ids) - E).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(encode(params, {}), std::runtime_error);
}

TEST_CASE("permuting two distinct tokens changes at least one row") {
  auto params = init_model<double>(micro_config(12), 5);
  auto a = encode(params, {3, 4, 5});
  auto b = encode(params, {4, 3, 5});
  CHECK((a - b).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("uniform output projection gives uniform posteriors") {
  auto params = init_model<double>(micro_config(8), 3);
  params.out_proj.setZero();
  params.out_bias.setZero();
  auto E = encode(params, {3, 4});
  auto fd = decode_forced(params, E, {5, 6, 7});
  for (double p : fd.probs) CHECK(p == doctest::Approx(1.0 / 8).epsilon(1e-12));
}

TEST_CASE("posterior rows sum to one") {
  auto params = init_model<double>(micro_config(12), 11);
  auto E = encode(params, {3, 4, 5, 6});
  auto fd = decode_forced(params, E, {7, 8, 9});
  for (Eigen::Index i = 0; i < fd.softmax.rows(); ++i)
    CHECK(fd.softmax.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fd.states.rows() == 3);
  CHECK(fd.probs.size() == 3);
}

TEST_CASE("untrained model posteriors are near uniform") {
  Rng rng(99);
  auto corpus_spec = CorpusSpec{};
  corpus_spec.task = Task::kCopy;
  corpus_spec.vocab_size = 20;
  corpus_spec.train_size = 20;
  corpus_spec.dev_size = 5;
  corpus_spec.test_id_size = 5;
  corpus_spec.test_ood_size = 5;
  corpus_spec.seed = 3;
  auto corpus = generate_corpus(corpus_spec);
  Segmenter seg(corpus.segmentation_table);
  Vocab vocab = Vocab::build(corpus_spec.alphabet_size, corpus.segmentation_table);

  std::vector<IdPair> train;
  for (const auto& pair : corpus.split(Split::kTrain))
    train.push_back({vocab.encode(seg.segment(pair.source)), vocab.encode(seg.segment(pair.target))});

  ModelConfig mcfg = micro_config(vocab.size());
  TrainConfig tcfg;
  tcfg.steps = 0;
  tcfg.seed = 17;
  auto result = train_model<double>(train, {}, mcfg, tcfg);

  double uniform = 1.0 / vocab.size();
  auto E = encode(result.params, train[0].first);
  auto fd = decode_forced(result.params, E, train[0].second);
  for (double p : fd.probs) CHECK(std::abs(p - uniform) < 0.1 * uniform);
}

TEST_CASE("training gradients match finite differences") {
  const int vocab = 12;
  auto params = init_model<double>(micro_config(vocab), 21);
  Rng rng(77);
  std::vector<IdPair> batch = {
      {random_ids(rng, vocab, 4), random_ids(rng, vocab, 3)},
      {random_ids(rng, vocab, 2), random_ids(rng, vocab, 5)},
  };

  auto grads = zeros_like(params);
  batch_loss_and_grad(params, batch, grads);

  std::vector<TensorView<double>> pviews, gviews;
  collect_tensors(params, pviews);
  collect_tensors(grads, gviews);

  int checked = 0;
  const double h = 1e-5;
  for (int trial = 0; trial < 40; ++trial) {
    int t = rng.uniform_int(0, static_cast<int>(pviews.size()) - 1);
    if (pviews[t].size == 0) continue;
    std::ptrdiff_t i = rng.uniform_int(0, static_cast<int>(pviews[t].size) - 1);
    double saved = pviews[t].data[i];
    pviews[t].data[i] = saved + h;
    double up = batch_loss(params, batch);
    pviews[t].data[i] = saved - h;
    double down = batch_loss(params, batch);
    pviews[t].data[i] = saved;
    double fd = (up - down) / (2 * h);
    double an = gviews[t].data[i];
    double denom = std::max(std::abs(fd), std::abs(an));
    if (denom < 1e-10) continue;  // both effectively zero
    INFO(pviews[t].name, "[", i, "] analytic=", an, " fd=", fd);
    CHECK(std::abs(fd - an) / denom < 1e-3);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("forced decode reproduces greedy per-step probabilities exactly") {
  const int vocab = 12;
  auto params = init_model<double>(micro_config(vocab), 31);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto src = random_ids(rng, vocab, rng.uniform_int(1, 6));
    auto hyp = greedy_decode(params, src);
    REQUIRE(!hyp.token_ids.empty());
    if (!hyp.reached_eos) continue;
    std::vector<int> tokens(hyp.token_ids.begin(), hyp.token_ids.end() - 1);
    if (tokens.empty()) continue;  // immediate <eos>
    auto E = encode(params, src);
    auto fd = decode_forced(params, E, tokens);
    REQUIRE(fd.probs.size() + 1 == hyp.step_probs.size());
    for (std::size_t i = 0; i < fd.probs.size(); ++i) CHECK(fd.probs[i] == hyp.step_probs[i]);
    CHECK(fd.eos_prob == hyp.step_probs.back());
    CHECK(fd.total_log_prob == doctest::Approx(hyp.model_score).epsilon(1e-12));
  }
}

TEST_CASE("beam width 1 equals greedy on 200 random inputs") {
  const int vocab = 10;
  auto params = init_model<float>(micro_config(vocab), 41);
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto src = random_ids(rng, vocab, rng.uniform_int(1, 6));
    auto g = greedy_decode(params, src);
    auto b = beam_decode(params, src, 1);
    CHECK(b.token_ids == g.token_ids);
    CHECK(b.model_score == g.model_score);
  }
}

TEST_CASE("beam search score is never below greedy") {
  const int vocab = 10;
  auto params = init_model<float>(micro_config(vocab), 43);
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto src = random_ids(rng, vocab, rng.uniform_int(1, 6));
    auto g = greedy_decode(params, src);
    auto b = beam_decode(params, src, 8);
    CHECK(b.model_score >= g.model_score);
  }
}

TEST_CASE("same seed twice gives identical parameters") {
  const int vocab = 12;
  Rng rng(8);
  std::vector<IdPair> train;
  for (int i = 0; i < 8; ++i)
    train.push_back({random_ids(rng, vocab, 3), random_ids(rng, vocab, 3)});
  ModelConfig mcfg = micro_config(vocab);
  TrainConfig tcfg;
  tcfg.steps = 10;
  tcfg.batch_size = 4;
  tcfg.lr = 0.1;
  tcfg.seed = 99;
  auto a = train_model<float>(train, {}, mcfg, tcfg);
  auto b = train_model<float>(train, {}, mcfg, tcfg);
  CHECK(params_equal(a.params, b.params));
}

TEST_CASE("divergence aborts with a diagnostic") {
  const int vocab = 12;
  Rng rng(9);
  std::vector<IdPair> train;
  for (int i = 0; i < 8; ++i)
    train.push_back({random_ids(rng, vocab, 3), random_ids(rng, vocab, 3)});
  ModelConfig mcfg = micro_config(vocab);
  TrainConfig tcfg;
  tcfg.steps = 200;
  tcfg.batch_size = 4;
  tcfg.lr = 1e9;
  tcfg.clip = 1.0;
  tcfg.seed = 1;
  CHECK_THROWS_WITH_AS(train_model<float>(train, {}, mcfg, tcfg),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("state dumps round-trip through HSD files") {
  auto params = init_model<float>(micro_config(12), 51);
  std::vector<StateMatrix> records;
  std::vector<std::vector<int>> inputs = {{3, 4}, {5, 6, 7, 8, 9}, {10}};
  for (std::size_t i = 0; i < inputs.size(); ++i)
    records.push_back(
        to_state_matrix(encode(params, inputs[i]), StateSide::kEncoder, static_cast<int>(i)));

  auto path = (std::filesystem::temp_directory_path() / "seqconf_states.hsd").string();
  write_hsd(path, records);
  auto loaded = read_hsd(path, StateSide::kEncoder);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].length() == 2);
  CHECK(loaded[1].length() == 5);
  CHECK(loaded[2].length() == 1);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].sentence_id == static_cast<int>(i));
    CHECK((loaded[i].rows - records[i].rows).cwiseAbs().maxCoeff() == 0.0f);
  }
  std::filesystem::remove(path);
}

TEST_CASE("model checkpoint round-trips bit-exactly") {
  auto corpus = generate_corpus([] {
    CorpusSpec s;
    s.vocab_size = 20;
    s.train_size = 5;
    s.dev_size = 5;
    s.test_id_size = 5;
    s.test_ood_size = 5;
    return s;
  }());
  Vocab vocab = Vocab::build(corpus.spec.alphabet_size, corpus.segmentation_table);
  auto params = init_model<float>(micro_config(vocab.size()), 61);
  auto path = (std::filesystem::temp_directory_path() / "seqconf_model.bin").string();
  save_model(params, vocab, path);
  auto loaded = load_model<float>(path);
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(params_equal(params, loaded.params));
  CHECK_THROWS_AS(load_model<double>(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("copy task trains to high exact match at tiny scale") {
  CorpusSpec spec;
  spec.task = Task::kCopy;
  spec.vocab_size = 12;
  spec.len_min = 2;
  spec.len_max = 4;
  spec.seed = 11;
  spec.train_size = 256;
  spec.dev_size = 40;
  spec.test_id_size = 10;
  spec.test_ood_size = 10;
  spec.bigram_count = 12;
  auto corpus = generate_corpus(spec);
  Segmenter seg(corpus.segmentation_table);
  Vocab vocab = Vocab::build(spec.alphabet_size, corpus.segmentation_table);

  auto to_pairs = [&](Split s) {
    std::vector<IdPair> pairs;
    for (const auto& pair : corpus.split(s))
      pairs.push_back(
          {vocab.encode(seg.segment(pair.source)), vocab.encode(seg.segment(pair.target))});
    return pairs;
  };
  auto train = to_pairs(Split::kTrain);
  auto dev = to_pairs(Split::kDev);

  ModelConfig mcfg;
  mcfg.vocab = vocab.size();
  mcfg.d = 32;
  mcfg.enc_layers = 1;
  mcfg.dec_layers = 1;
  mcfg.heads = 4;
  mcfg.d_ff = 64;
  mcfg.max_len = 32;
  TrainConfig tcfg;
  tcfg.steps = 700;
  tcfg.batch_size = 16;
  tcfg.lr = 0.3;
  tcfg.clip = 1.0;
  tcfg.seed = 19;
  auto result = train_model<float>(train, dev, mcfg, tcfg);
  CHECK(result.final_dev_ce < 0.25);

  int exact = 0;
  for (const auto& [src, tgt] : dev) {
    auto hyp = greedy_decode(result.params, src);
    std::vector<int> out(hyp.token_ids.begin(),
                         hyp.token_ids.end() - (hyp.reached_eos ? 1 : 0));
    if (out == tgt) ++exact;
  }
  CHECK(exact >= static_cast<int>(0.9 * dev.size()));
}
